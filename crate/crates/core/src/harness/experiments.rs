//! The three replay protocols: offline train/test split, online calibration,
//! and the opportunity comparison between candidate-set sizes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{ResultTable, SeriesRecord};
use super::{
    improvement, mean, run_baseline, run_learned, ExperimentConfig, HarnessError, OutcomeTable,
    Policy, PolicyResult, TraceEnvironment,
};
use crate::calibration::{build_cycle, run_calibration};
use crate::learner::{MemoryCap, ModelBank};
use crate::trace::WorkloadTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTestRow {
    pub fraction: f64,
    pub train_slots: usize,
    pub test_slots: usize,
    pub sinr_mean: f64,
    pub optimal_mean: f64,
    pub static_best_mean: f64,
    pub random_mean: f64,
    pub learned_mean: f64,
    pub optimal_impr: f64,
    pub random_impr: f64,
    pub learned_impr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTestTable {
    pub rows: Vec<TrainTestRow>,
    pub series: Vec<SeriesRecord>,
}

impl TrainTestTable {
    /// Improvement over SINR: rows Optimal, Random, LR; one column per fraction.
    pub fn improvement_table(&self) -> ResultTable {
        let mut t = ResultTable::new(
            "Improvement over SINR association",
            self.rows
                .iter()
                .map(|r| fraction_label(r.fraction))
                .collect(),
        );
        t.push(
            "Optimal",
            self.rows.iter().map(|r| r.optimal_impr).collect(),
        );
        t.push("Random", self.rows.iter().map(|r| r.random_impr).collect());
        t.push("LR", self.rows.iter().map(|r| r.learned_impr).collect());
        t
    }

    /// Mean test-window throughput (Mbps) per policy.
    pub fn means_table(&self) -> ResultTable {
        let mut t = ResultTable::new(
            "Mean throughput over the test window (Mbps)",
            self.rows
                .iter()
                .map(|r| fraction_label(r.fraction))
                .collect(),
        );
        t.push("SINR", self.rows.iter().map(|r| r.sinr_mean).collect());
        t.push(
            "Optimal",
            self.rows.iter().map(|r| r.optimal_mean).collect(),
        );
        t.push(
            "StaticBest",
            self.rows.iter().map(|r| r.static_best_mean).collect(),
        );
        t.push("Random", self.rows.iter().map(|r| r.random_mean).collect());
        t.push("LR", self.rows.iter().map(|r| r.learned_mean).collect());
        t
    }
}

fn fraction_label(p: f64) -> String {
    format!("{}%", super::report::format_percent_label(p))
}

/// Trains every transition model on the first `round(p·T)` slots and replays the
/// rest with frozen models, for each fraction `p`.
pub fn train_test_experiment(
    trace: &WorkloadTrace,
    config: &ExperimentConfig,
    fractions: &[f64],
) -> Result<TrainTestTable, HarnessError> {
    for &p in fractions {
        if !(p > 0.0 && p < 1.0) {
            return Err(HarnessError::BadFraction(p));
        }
    }
    let table = OutcomeTable::build(trace, config)?;
    let n_slots = trace.len();
    for &p in fractions {
        let train_end = (p * n_slots as f64).round() as usize;
        if train_end < 2 {
            return Err(HarnessError::TooFewTrainingSlots {
                train_slots: train_end,
            });
        }
        if train_end >= n_slots {
            return Err(HarnessError::EmptyTestWindow {
                fraction: p,
                slots: n_slots,
            });
        }
    }

    let results = fractions
        .par_iter()
        .map(|&p| train_test_one(trace, config, &table, p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(results.len());
    let mut series = Vec::new();
    for (row, runs) in results {
        let tag = fraction_label(row.fraction);
        for (name, run) in runs {
            series.extend(SeriesRecord::from_result(&format!("{name}@{tag}"), &run));
        }
        rows.push(row);
    }
    Ok(TrainTestTable { rows, series })
}

type NamedRuns = Vec<(&'static str, PolicyResult)>;

fn train_test_one(
    trace: &WorkloadTrace,
    config: &ExperimentConfig,
    table: &OutcomeTable,
    p: f64,
) -> Result<(TrainTestRow, NamedRuns), HarnessError> {
    let n_slots = trace.len();
    let train_end = (p * n_slots as f64).round() as usize;
    let n = config.n_allocs();
    let mut bank = ModelBank::new(
        n,
        trace.stations().to_vec(),
        config.candidates.digest(),
        MemoryCap::Fixed(train_end - 1),
    )?;
    for t in 0..train_end - 1 {
        for a in 0..n {
            for b in 0..n {
                bank.push_sample(a, b, table.rates(t, a).clone(), table.total(t + 1, b))?;
            }
        }
    }
    bank.refit_all()?;

    let test = train_end..n_slots;
    let sinr = run_baseline(
        table,
        config,
        &Policy::Fixed(config.sinr_index),
        test.clone(),
    )?;
    let optimal = run_baseline(table, config, &Policy::OptimalPerSlot, test.clone())?;
    let static_best = run_baseline(table, config, &Policy::StaticBest, test.clone())?;
    let random = run_baseline(table, config, &Policy::RoundRobin, test.clone())?;
    let learned = run_learned(
        trace,
        config,
        table,
        test.clone(),
        &mut bank,
        config.sinr_index,
        false,
    )?;

    let row = TrainTestRow {
        fraction: p,
        train_slots: train_end,
        test_slots: test.len(),
        sinr_mean: sinr.mean,
        optimal_mean: optimal.mean,
        static_best_mean: static_best.mean,
        random_mean: random.mean,
        learned_mean: learned.mean,
        optimal_impr: improvement(optimal.mean, sinr.mean)?,
        random_impr: improvement(random.mean, sinr.mean)?,
        learned_impr: improvement(learned.mean, sinr.mean)?,
    };
    let runs = vec![
        ("sinr", sinr),
        ("optimal", optimal),
        ("static_best", static_best),
        ("random", random),
        ("learned", learned),
    ];
    Ok((row, runs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub cycles: usize,
    pub calibration_slots: usize,
    pub optimal_mean: f64,
    pub random_mean: f64,
    /// Calibration slots followed by learned slots, whole trace.
    pub overall_mean: f64,
    pub after_training_mean: f64,
    /// Optimal over the post-calibration window only.
    pub optimal_after_mean: f64,
    pub random_ratio: f64,
    pub overall_ratio: f64,
    pub after_training_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    pub rows: Vec<CalibrationRow>,
    pub series: Vec<SeriesRecord>,
}

impl CalibrationTable {
    /// Ratios to optimal: rows Random, Overall Learned, Learned after
    /// Training; one column per cycle count.
    pub fn ratio_table(&self) -> ResultTable {
        let mut t = ResultTable::new(
            "Throughput as a ratio of optimal",
            self.rows.iter().map(|r| r.cycles.to_string()).collect(),
        );
        t.push("Random", self.rows.iter().map(|r| r.random_ratio).collect());
        t.push(
            "Overall Learned",
            self.rows.iter().map(|r| r.overall_ratio).collect(),
        );
        t.push(
            "Learned after Training",
            self.rows.iter().map(|r| r.after_training_ratio).collect(),
        );
        t
    }
}

/// Calibrates from the start of the trace for `c` cycles, then lets the
/// learned policy run for the remainder with continuous updates.
pub fn calibration_experiment(
    trace: &WorkloadTrace,
    config: &ExperimentConfig,
    cycle_counts: &[usize],
) -> Result<CalibrationTable, HarnessError> {
    let n = config.n_allocs();
    for &c in cycle_counts {
        if c == 0 {
            return Err(HarnessError::ZeroCycles);
        }
        let needed = c * n * n + 1;
        if needed >= trace.len() {
            return Err(HarnessError::CalibrationTooLong {
                cycles: c,
                needed,
                slots: trace.len(),
            });
        }
    }
    let table = OutcomeTable::build(trace, config)?;
    let whole = 0..trace.len();
    let optimal = run_baseline(&table, config, &Policy::OptimalPerSlot, whole.clone())?;
    let random = run_baseline(&table, config, &Policy::RoundRobin, whole.clone())?;

    let results = cycle_counts
        .par_iter()
        .map(|&c| calibration_one(trace, config, &table, &optimal, &random, c))
        .collect::<Result<Vec<_>, _>>()?;
    let mut series = Vec::new();
    series.extend(SeriesRecord::from_result("optimal", &optimal));
    series.extend(SeriesRecord::from_result("random", &random));
    let mut rows = Vec::with_capacity(results.len());
    for (row, run) in results {
        series.extend(SeriesRecord::from_result(
            &format!("learned@{}", row.cycles),
            &run,
        ));
        rows.push(row);
    }
    Ok(CalibrationTable { rows, series })
}

fn calibration_one(
    trace: &WorkloadTrace,
    config: &ExperimentConfig,
    table: &OutcomeTable,
    optimal: &PolicyResult,
    random: &PolicyResult,
    cycles: usize,
) -> Result<(CalibrationRow, PolicyResult), HarnessError> {
    let n = config.n_allocs();
    let mut bank = ModelBank::new(
        n,
        trace.stations().to_vec(),
        config.candidates.digest(),
        MemoryCap::FromCalibration,
    )?;
    let cycle = build_cycle(n);
    let mut env = TraceEnvironment::new(trace, config, 0);
    let outcome = run_calibration(&mut bank, &cycle, cycles, &mut env)?;
    let cal_slots = outcome.log.len();
    let (state, _) = outcome.last.expect("at least one calibration slot");

    // run_learned reseeds the first decision with the previous slot's rates
    // under `state`, which are exactly the last calibration observation.
    let after = run_learned(
        trace,
        config,
        table,
        cal_slots..trace.len(),
        &mut bank,
        state,
        true,
    )?;

    let mut allocs: Vec<usize> = outcome.log.iter().map(|e| e.enforced_alloc).collect();
    let mut series: Vec<f64> = outcome.log.iter().map(|e| e.throughput_mbps).collect();
    allocs.extend(&after.allocs);
    series.extend(&after.series);
    let overall = PolicyResult::new(0, allocs, series);

    let optimal_after = mean(&optimal.series[cal_slots..]);
    let row = CalibrationRow {
        cycles,
        calibration_slots: cal_slots,
        optimal_mean: optimal.mean,
        random_mean: random.mean,
        overall_mean: overall.mean,
        after_training_mean: after.mean,
        optimal_after_mean: optimal_after,
        random_ratio: random.mean / optimal.mean,
        overall_ratio: overall.mean / optimal.mean,
        after_training_ratio: after.mean / optimal_after,
    };
    Ok((row, overall))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpportunityRow {
    pub label: String,
    pub n_allocs: usize,
    pub optimal_mean: f64,
    pub static_best_mean: f64,
    pub random_mean: f64,
    /// Improvement of optimal over the best static allocation.
    pub best: f64,
    /// Improvement of optimal over round-robin.
    pub rand: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpportunityTable {
    pub rows: Vec<OpportunityRow>,
    pub series: Vec<SeriesRecord>,
}

impl OpportunityTable {
    /// Rows per candidate set; columns BEST and RAND.
    pub fn summary_table(&self) -> ResultTable {
        let mut t = ResultTable::new(
            "Throughput improvement of per-slot optimal",
            vec!["BEST".into(), "RAND".into()],
        );
        for r in &self.rows {
            t.push(&r.label, vec![r.best, r.rand]);
        }
        t
    }
}

/// BEST and RAND for a small and a large candidate set on the same trace.
pub fn opportunity_report(
    trace: &WorkloadTrace,
    config_small: &ExperimentConfig,
    config_large: &ExperimentConfig,
) -> Result<OpportunityTable, HarnessError> {
    if config_small.scenario.aps != config_large.scenario.aps {
        return Err(HarnessError::ConfigMismatch("AP profiles"));
    }
    let configs = [(config_small, "SIM"), (config_large, "SIM")];
    let results = configs
        .par_iter()
        .map(|&(cfg, base)| opportunity_one(trace, cfg, base))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for (row, runs) in results {
        for (name, run) in runs {
            series.extend(SeriesRecord::from_result(
                &format!("{name}@{}", row.label),
                &run,
            ));
        }
        rows.push(row);
    }
    Ok(OpportunityTable { rows, series })
}

fn opportunity_one(
    trace: &WorkloadTrace,
    config: &ExperimentConfig,
    base: &str,
) -> Result<(OpportunityRow, NamedRuns), HarnessError> {
    let table = OutcomeTable::build(trace, config)?;
    let whole = 0..trace.len();
    let optimal = run_baseline(&table, config, &Policy::OptimalPerSlot, whole.clone())?;
    let static_best = run_baseline(&table, config, &Policy::StaticBest, whole.clone())?;
    let random = run_baseline(&table, config, &Policy::RoundRobin, whole)?;
    let row = OpportunityRow {
        label: format!("{base}{}", config.n_allocs()),
        n_allocs: config.n_allocs(),
        optimal_mean: optimal.mean,
        static_best_mean: static_best.mean,
        random_mean: random.mean,
        best: improvement(optimal.mean, static_best.mean)?,
        rand: improvement(optimal.mean, random.mean)?,
    };
    Ok((
        row,
        vec![
            ("optimal", optimal),
            ("static_best", static_best),
            ("random", random),
        ],
    ))
}
