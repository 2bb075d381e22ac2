//! Calibration cycles and the calibration driver.
//!
//! A calibration cycle is a closed walk over candidate allocation indices whose
//! consecutive pairs contain every ordered transition `(a, b)` exactly once, so
//! one pass gives every transition model one training pair. The walk is an
//! Eulerian circuit of the complete directed graph with self-loops.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learner::{LearnerError, ModelBank, RateSample};

/// Failure reported by an [`Environment`].
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct EnvError(pub String);

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("environment failed at slot {slot}: {source}")]
    Environment {
        slot: usize,
        #[source]
        source: EnvError,
    },
    #[error("cycle covers {cycle} allocations, bank has {bank}")]
    SizeMismatch { cycle: usize, bank: usize },
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("writing calibration log: {0}")]
    Io(#[from] std::io::Error),
}

/// What the controller can measure after a slot: achieved per-station rates
/// and the system throughput.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub rates: RateSample,
    pub throughput: f64,
}

/// Something that enforces allocations and reports what happened.
pub trait Environment {
    /// Enforces candidate allocation `alloc` for the next slot.
    fn enforce(&mut self, alloc: usize) -> Result<(), EnvError>;
    /// Runs one slot under the enforced allocation.
    fn step(&mut self) -> Result<Observation, EnvError>;
}

/// Sequence of 0-based allocation indices covering every transition once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationCycle {
    sequence: Vec<usize>,
    n_allocs: usize,
}

impl CalibrationCycle {
    /// Wraps an existing sequence, checking coverage.
    pub fn from_sequence(sequence: Vec<usize>, n_allocs: usize) -> Option<Self> {
        is_covering_cycle(&sequence, n_allocs).then_some(Self { sequence, n_allocs })
    }

    /// Same as [`CalibrationCycle::from_sequence`] with 1-based indices.
    pub fn from_one_based(sequence: &[usize], n_allocs: usize) -> Option<Self> {
        if sequence.contains(&0) {
            return None;
        }
        Self::from_sequence(sequence.iter().map(|i| i - 1).collect(), n_allocs)
    }

    pub fn sequence(&self) -> &[usize] {
        &self.sequence
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.sequence.iter().map(|i| i + 1).collect()
    }

    pub fn n_allocs(&self) -> usize {
        self.n_allocs
    }

    /// Consecutive pairs of the cycle.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.sequence.windows(2).map(|w| (w[0], w[1]))
    }

    /// `n_cycles` passes chained end to start. The shared endpoint appears
    /// once, so every transition occurs exactly `n_cycles` times.
    pub fn repeated(&self, n_cycles: usize) -> Vec<usize> {
        if n_cycles == 0 {
            return Vec::new();
        }
        let mut seq = self.sequence.clone();
        for _ in 1..n_cycles {
            seq.extend_from_slice(&self.sequence[1..]);
        }
        seq
    }
}

/// True when `seq` has `n² + 1` entries, is closed, and its consecutive pairs
/// are exactly the `n²` ordered pairs over `0..n`.
pub fn is_covering_cycle(seq: &[usize], n_allocs: usize) -> bool {
    if n_allocs == 0 || seq.len() != n_allocs * n_allocs + 1 {
        return false;
    }
    if seq.iter().any(|&a| a >= n_allocs) || seq.first() != seq.last() {
        return false;
    }
    let mut seen = vec![false; n_allocs * n_allocs];
    for w in seq.windows(2) {
        let k = w[0] * n_allocs + w[1];
        if seen[k] {
            return false;
        }
        seen[k] = true;
    }
    seen.into_iter().all(|s| s)
}

/// Eulerian circuit over the complete digraph with self-loops on `n_allocs`
/// vertices, starting at 0. Out-edges are taken self-loop first, then in
/// ascending target order (Hierholzer).
pub fn build_cycle(n_allocs: usize) -> CalibrationCycle {
    assert!(n_allocs >= 1, "need at least one allocation");
    let order: Vec<Vec<usize>> = (0..n_allocs)
        .map(|v| {
            std::iter::once(v)
                .chain((0..n_allocs).filter(|&t| t != v))
                .collect()
        })
        .collect();
    let mut next_edge = vec![0usize; n_allocs];
    let mut stack = vec![0usize];
    let mut circuit = Vec::with_capacity(n_allocs * n_allocs + 1);
    while let Some(&v) = stack.last() {
        if next_edge[v] < n_allocs {
            let t = order[v][next_edge[v]];
            next_edge[v] += 1;
            stack.push(t);
        } else {
            circuit.push(stack.pop().expect("non-empty"));
        }
    }
    circuit.reverse();
    CalibrationCycle {
        sequence: circuit,
        n_allocs,
    }
}

/// One enforced slot during calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub slot: usize,
    pub enforced_alloc: usize,
    /// Allocation under which the rates used as features were observed.
    /// `None` for the first slot.
    pub observed_alloc: Option<usize>,
    pub throughput_mbps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOutcome {
    pub log: Vec<CalibrationEntry>,
    /// Allocation enforced in the final slot and the rates it produced.
    pub last: Option<(usize, RateSample)>,
}

/// Loops the cycle `n_cycles` times, adding one training pair per transition
/// model per pass. Consumes `n_cycles · |A|² + 1` environment steps.
pub fn run_calibration<E: Environment + ?Sized>(
    bank: &mut ModelBank,
    cycle: &CalibrationCycle,
    n_cycles: usize,
    env: &mut E,
) -> Result<CalibrationOutcome, CalibrationError> {
    if cycle.n_allocs() != bank.n_allocs() {
        return Err(CalibrationError::SizeMismatch {
            cycle: cycle.n_allocs(),
            bank: bank.n_allocs(),
        });
    }
    let schedule = cycle.repeated(n_cycles);
    if schedule.is_empty() {
        return Ok(CalibrationOutcome {
            log: Vec::new(),
            last: None,
        });
    }
    bank.set_calibration_cycles(n_cycles);

    let mut log = Vec::with_capacity(schedule.len());
    let mut prev: Option<(usize, RateSample)> = None;
    for (slot, &alloc) in schedule.iter().enumerate() {
        let env_err = |source| CalibrationError::Environment { slot, source };
        env.enforce(alloc).map_err(env_err)?;
        let obs = env.step().map_err(env_err)?;
        if let Some((from, rates)) = prev.take() {
            bank.push_sample(from, alloc, rates, obs.throughput)?;
        }
        log.push(CalibrationEntry {
            slot,
            enforced_alloc: alloc,
            observed_alloc: log.last().map(|e: &CalibrationEntry| e.enforced_alloc),
            throughput_mbps: obs.throughput,
        });
        prev = Some((alloc, obs.rates));
    }
    bank.refit_all()?;
    Ok(CalibrationOutcome { log, last: prev })
}

/// Writes `slot,enforced_alloc,observed_alloc,throughput_mbps`.
pub fn write_log_csv<W: Write>(log: &[CalibrationEntry], out: W) -> Result<(), CalibrationError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "slot",
        "enforced_alloc",
        "observed_alloc",
        "throughput_mbps",
    ])
    .map_err(csv_io)?;
    for e in log {
        w.write_record([
            e.slot.to_string(),
            e.enforced_alloc.to_string(),
            e.observed_alloc.map(|a| a.to_string()).unwrap_or_default(),
            e.throughput_mbps.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::MemoryCap;

    #[test]
    fn small_cycles() {
        assert_eq!(build_cycle(1).sequence(), &[0, 0]);
        let two = build_cycle(2);
        assert_eq!(two.one_based(), vec![1, 1, 2, 2, 1]);
        let three = build_cycle(3);
        assert_eq!(three.sequence().len(), 10);
        assert!(is_covering_cycle(three.sequence(), 3));
    }

    #[test]
    fn covers_every_transition_brute_force() {
        for n in 1..=8 {
            let c = build_cycle(n);
            assert_eq!(c.sequence().len(), n * n + 1);
            assert_eq!(c.sequence()[0], 0);
            assert_eq!(c.sequence().first(), c.sequence().last());
            let mut pairs: Vec<_> = c.transitions().collect();
            pairs.sort_unstable();
            let all: Vec<_> = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).collect();
            assert_eq!(pairs, all, "n = {n}");
        }
    }

    #[test]
    fn validator_accepts_reference_cycles() {
        assert!(CalibrationCycle::from_one_based(&[1, 1, 2, 1, 3, 2, 2, 3, 3, 1], 3).is_some());
        assert!(CalibrationCycle::from_one_based(&[1, 1, 2, 2, 1], 2).is_some());
        assert!(CalibrationCycle::from_one_based(&[1, 2, 2, 1, 1], 2).is_some());
        assert!(CalibrationCycle::from_one_based(&[1, 1, 2, 2, 2], 2).is_none());
        assert!(CalibrationCycle::from_one_based(&[1, 1, 2, 1], 2).is_none());
        assert!(CalibrationCycle::from_one_based(&[0, 0], 1).is_none());
    }

    #[test]
    fn repeated_chains_without_duplicates() {
        let c = build_cycle(2);
        let seq = c.repeated(3);
        assert_eq!(seq.len(), 3 * 4 + 1);
        let mut counts = [0; 4];
        for w in seq.windows(2) {
            counts[w[0] * 2 + w[1]] += 1;
        }
        assert_eq!(counts, [3; 4]);
        assert!(c.repeated(0).is_empty());
    }

    /// Reports the enforced allocation index as the throughput.
    struct CountingEnv {
        enforced: usize,
        steps: usize,
        fail_at: Option<usize>,
    }

    impl Environment for CountingEnv {
        fn enforce(&mut self, alloc: usize) -> Result<(), EnvError> {
            self.enforced = alloc;
            Ok(())
        }

        fn step(&mut self) -> Result<Observation, EnvError> {
            if Some(self.steps) == self.fail_at {
                return Err(EnvError("link down".into()));
            }
            self.steps += 1;
            Ok(Observation {
                rates: RateSample::new(vec![self.steps as f64, 1.0], vec![0.0, 0.5]).unwrap(),
                throughput: 10.0 + self.enforced as f64,
            })
        }
    }

    fn env() -> CountingEnv {
        CountingEnv {
            enforced: 0,
            steps: 0,
            fail_at: None,
        }
    }

    fn bank(n: usize) -> ModelBank {
        ModelBank::new(
            n,
            vec!["a".into(), "b".into()],
            "test",
            MemoryCap::FromCalibration,
        )
        .unwrap()
    }

    #[test]
    fn one_pass_trains_each_model_once() {
        for (n, steps) in [(3usize, 10usize), (2, 5)] {
            let mut b = bank(n);
            let mut e = env();
            let out = run_calibration(&mut b, &build_cycle(n), 1, &mut e).unwrap();
            assert_eq!(e.steps, steps);
            assert_eq!(out.log.len(), steps);
            assert_eq!(b.models().len(), n * n);
            assert!(b
                .models()
                .iter()
                .all(|m| m.memory().len() == 1 && m.is_fitted()));
        }
    }

    #[test]
    fn memory_equals_cycle_count() {
        let mut b = bank(3);
        let mut e = env();
        run_calibration(&mut b, &build_cycle(3), 4, &mut e).unwrap();
        assert_eq!(e.steps, 4 * 9 + 1);
        assert!(b.models().iter().all(|m| m.memory().len() == 4));
        assert_eq!(b.effective_cap(), Some(4));
        // Responses land on the target model.
        for m in b.models() {
            assert!(m
                .memory()
                .iter()
                .all(|s| s.response == 10.0 + m.target_alloc() as f64));
        }
    }

    #[test]
    fn zero_cycles_is_noop() {
        let mut b = bank(2);
        let before = b.clone();
        let out = run_calibration(&mut b, &build_cycle(2), 0, &mut env()).unwrap();
        assert!(out.log.is_empty());
        assert_eq!(b, before);
    }

    #[test]
    fn environment_failure_names_slot() {
        let mut b = bank(2);
        let mut e = env();
        e.fail_at = Some(3);
        match run_calibration(&mut b, &build_cycle(2), 1, &mut e) {
            Err(CalibrationError::Environment { slot: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn log_csv_format() {
        let mut b = bank(2);
        let out = run_calibration(&mut b, &build_cycle(2), 1, &mut env()).unwrap();
        let mut buf = Vec::new();
        write_log_csv(&out.log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(
            lines[0],
            "slot,enforced_alloc,observed_alloc,throughput_mbps"
        );
        assert_eq!(lines[1], "0,0,,10");
        assert_eq!(lines[3], "2,1,0,11");
        assert_eq!(lines.len(), 6);
    }
}
