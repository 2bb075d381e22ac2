//! Trace replay under competing association policies.
//!
//! Every policy is measured by the capacity simulator on the true demand of
//! each slot. The learned policy only ever sees achieved rates and system
//! throughput, through the same [`Environment`] interface a live controller
//! would use.

mod experiments;
mod report;

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alloc_space::AllocationSet;
use crate::calibration::{CalibrationError, EnvError, Environment, Observation};
use crate::learner::{LearnerError, ModelBank, RateSample};
use crate::netsim::{simulate_slot, ApProfile, NetsimError};
use crate::scenario::{Scenario, ScenarioError};
use crate::trace::WorkloadTrace;

pub use experiments::{
    calibration_experiment, opportunity_report, train_test_experiment, CalibrationRow,
    CalibrationTable, OpportunityRow, OpportunityTable, TrainTestRow, TrainTestTable,
};
pub use report::{
    read_series_csv, round_half_up_percent, summarize_series, write_series_csv, CellUnit,
    ResultTable, SeriesRecord,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("baseline throughput must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("optimal improvement must be positive, got {0}")]
    NonPositiveOptimal(f64),
    #[error("SINR index {index} outside candidate set of {len}")]
    SinrOutOfRange { index: usize, len: usize },
    #[error("candidate set is empty")]
    NoCandidates,
    #[error("trace has {trace} stations, candidates cover {candidates}")]
    StationMismatch { trace: usize, candidates: usize },
    #[error("allocation index {index} outside candidate set of {len}")]
    UnknownAllocation { index: usize, len: usize },
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("training on {train_slots} slots gives no samples per model; need at least 2 slots")]
    TooFewTrainingSlots { train_slots: usize },
    #[error("fraction {fraction} leaves no slots for testing ({slots} slots in trace)")]
    EmptyTestWindow { fraction: f64, slots: usize },
    #[error("{cycles} calibration cycles need {needed} slots; trace has {slots}")]
    CalibrationTooLong {
        cycles: usize,
        needed: usize,
        slots: usize,
    },
    #[error("cycle count must be at least 1")]
    ZeroCycles,
    #[error("configs differ in {0}")]
    ConfigMismatch(&'static str),
    #[error("empty replay window")]
    EmptyWindow,
    #[error("learned policy: {0}")]
    Learner(#[from] LearnerError),
    #[error("calibration: {0}")]
    Calibration(#[from] CalibrationError),
    #[error("simulation: {0}")]
    Netsim(#[from] NetsimError),
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("environment: {0}")]
    Environment(#[from] EnvError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Scenario, candidate set and replay options for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub candidates: AllocationSet,
    /// Index of the nearest-AP baseline inside `candidates`.
    pub sinr_index: usize,
    pub master_seed: u64,
    /// Decide only through models whose observed state is the SINR
    /// allocation, fed with the rates that allocation would have produced.
    pub restrict_observed_state: bool,
}

impl ExperimentConfig {
    /// The scenario's named allocations as candidates.
    pub fn from_scenario(scenario: Scenario, master_seed: u64) -> Result<Self, HarnessError> {
        let candidates = scenario.candidate_set()?;
        let sinr = scenario.sinr_allocation()?;
        let sinr_index = candidates
            .index_of(&sinr)
            .expect("sinr is a named allocation");
        Self::new(scenario, candidates, sinr_index, master_seed)
    }

    pub fn new(
        scenario: Scenario,
        candidates: AllocationSet,
        sinr_index: usize,
        master_seed: u64,
    ) -> Result<Self, HarnessError> {
        let cfg = Self {
            scenario,
            candidates,
            sinr_index,
            master_seed,
            restrict_observed_state: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.candidates.is_empty() {
            return Err(HarnessError::NoCandidates);
        }
        if self.sinr_index >= self.candidates.len() {
            return Err(HarnessError::SinrOutOfRange {
                index: self.sinr_index,
                len: self.candidates.len(),
            });
        }
        Ok(())
    }

    pub fn profiles(&self) -> &[ApProfile] {
        &self.scenario.aps
    }

    pub fn n_allocs(&self) -> usize {
        self.candidates.len()
    }

    /// Display name of a candidate: its scenario name, or its assignment.
    pub fn label(&self, index: usize) -> String {
        let a = &self.candidates.members()[index];
        self.scenario
            .name_of(a)
            .map(str::to_string)
            .unwrap_or_else(|| a.to_string())
    }

    fn check_trace(&self, trace: &WorkloadTrace) -> Result<(), HarnessError> {
        let n = self.candidates.members()[0].n_stas();
        if trace.n_stas() != n {
            return Err(HarnessError::StationMismatch {
                trace: trace.n_stas(),
                candidates: n,
            });
        }
        Ok(())
    }
}

/// Simulated outcome of every candidate allocation on every slot.
#[derive(Debug, Clone)]
pub struct OutcomeTable {
    totals: Vec<Vec<f64>>,
    rates: Vec<Vec<RateSample>>,
}

impl OutcomeTable {
    pub fn build(trace: &WorkloadTrace, config: &ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        config.check_trace(trace)?;
        let per_slot: Vec<(Vec<f64>, Vec<RateSample>)> = trace
            .slots()
            .par_iter()
            .map(|demand| {
                let mut totals = Vec::with_capacity(config.n_allocs());
                let mut rates = Vec::with_capacity(config.n_allocs());
                for a in config.candidates.iter() {
                    let r = simulate_slot(a, demand, config.profiles())?;
                    totals.push(r.system_total);
                    rates.push(r.rates());
                }
                Ok((totals, rates))
            })
            .collect::<Result<_, NetsimError>>()?;
        let (totals, rates) = per_slot.into_iter().unzip();
        Ok(Self { totals, rates })
    }

    pub fn n_slots(&self) -> usize {
        self.totals.len()
    }

    pub fn total(&self, slot: usize, alloc: usize) -> f64 {
        self.totals[slot][alloc]
    }

    pub fn rates(&self, slot: usize, alloc: usize) -> &RateSample {
        &self.rates[slot][alloc]
    }

    /// Lowest-index allocation with the highest throughput in `slot`.
    pub fn best(&self, slot: usize) -> usize {
        argmax(&self.totals[slot])
    }

    /// Lowest-index allocation with the highest total over `window`.
    pub fn static_best(&self, window: Range<usize>) -> usize {
        let n = self.totals.first().map_or(0, Vec::len);
        let sums: Vec<f64> = (0..n)
            .map(|a| window.clone().map(|t| self.totals[t][a]).sum())
            .collect();
        argmax(&sums)
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Replays a trace through the simulator one slot per step.
pub struct TraceEnvironment<'a> {
    trace: &'a WorkloadTrace,
    config: &'a ExperimentConfig,
    cursor: usize,
    enforced: Option<usize>,
}

impl<'a> TraceEnvironment<'a> {
    pub fn new(trace: &'a WorkloadTrace, config: &'a ExperimentConfig, start_slot: usize) -> Self {
        Self {
            trace,
            config,
            cursor: start_slot,
            enforced: None,
        }
    }

    /// Next slot to be played.
    pub fn cursor(&self) -> usize {
        self.cursor
    }
}

impl Environment for TraceEnvironment<'_> {
    fn enforce(&mut self, alloc: usize) -> Result<(), EnvError> {
        if alloc >= self.config.n_allocs() {
            return Err(EnvError(format!("no candidate allocation {alloc}")));
        }
        self.enforced = Some(alloc);
        Ok(())
    }

    fn step(&mut self) -> Result<Observation, EnvError> {
        let alloc = self
            .enforced
            .ok_or_else(|| EnvError("no allocation enforced".into()))?;
        let demand = self
            .trace
            .slots()
            .get(self.cursor)
            .ok_or_else(|| EnvError(format!("trace ended at slot {}", self.cursor)))?;
        let report = simulate_slot(
            &self.config.candidates.members()[alloc],
            demand,
            self.config.profiles(),
        )
        .map_err(|e| EnvError(e.to_string()))?;
        self.cursor += 1;
        Ok(Observation {
            rates: report.rates(),
            throughput: report.system_total,
        })
    }
}

/// Replays previously recorded observations, whatever is enforced.
pub struct RecordedEnvironment {
    log: std::vec::IntoIter<Observation>,
}

impl RecordedEnvironment {
    pub fn new(log: Vec<Observation>) -> Self {
        Self {
            log: log.into_iter(),
        }
    }
}

impl Environment for RecordedEnvironment {
    fn enforce(&mut self, _alloc: usize) -> Result<(), EnvError> {
        Ok(())
    }

    fn step(&mut self) -> Result<Observation, EnvError> {
        self.log
            .next()
            .ok_or_else(|| EnvError("recording exhausted".into()))
    }
}

/// Online controller: enforce the best-scoring successor of the current state.
pub struct LearnedController<'a> {
    bank: &'a mut ModelBank,
    state: usize,
    last_rates: Option<RateSample>,
    update: bool,
}

impl<'a> LearnedController<'a> {
    /// `state` is the allocation currently enforced and `last_rates` what it
    /// produced in the previous slot, if known.
    pub fn new(
        bank: &'a mut ModelBank,
        state: usize,
        last_rates: Option<RateSample>,
        update: bool,
    ) -> Self {
        Self {
            bank,
            state,
            last_rates,
            update,
        }
    }

    pub fn decide(&self) -> Result<usize, LearnerError> {
        match &self.last_rates {
            Some(rates) => self.bank.select_next(self.state, rates),
            None => Ok(self.state),
        }
    }

    pub fn feedback(&mut self, enforced: usize, obs: Observation) -> Result<(), LearnerError> {
        if self.update {
            if let Some(rates) = self.last_rates.take() {
                self.bank
                    .observe(self.state, enforced, rates, obs.throughput)?;
            }
        }
        self.state = enforced;
        self.last_rates = Some(obs.rates);
        Ok(())
    }

    /// Runs `n_slots` decide/enforce/step/feedback rounds. Returns the
    /// enforced allocations and the observations.
    pub fn drive<E: Environment + ?Sized>(
        &mut self,
        env: &mut E,
        n_slots: usize,
    ) -> Result<(Vec<usize>, Vec<Observation>), HarnessError> {
        let mut allocs = Vec::with_capacity(n_slots);
        let mut observed = Vec::with_capacity(n_slots);
        for _ in 0..n_slots {
            let choice = self.decide()?;
            env.enforce(choice)?;
            let obs = env.step()?;
            allocs.push(choice);
            observed.push(obs.clone());
            self.feedback(choice, obs)?;
        }
        Ok((allocs, observed))
    }

    pub fn state(&self) -> usize {
        self.state
    }
}

/// Association policy under test.
#[derive(Debug, Clone)]
pub enum Policy {
    Fixed(usize),
    /// Slot index modulo the number of candidates.
    RoundRobin,
    OptimalPerSlot,
    /// Best single allocation over the replayed window, chosen in hindsight.
    StaticBest,
    Learned(LearnedPolicy),
}

#[derive(Debug, Clone)]
pub struct LearnedPolicy {
    pub bank: ModelBank,
    /// Keep training on observed outcomes while replaying.
    pub update: bool,
    pub start_alloc: usize,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Fixed(_) => "fixed",
            Policy::RoundRobin => "round_robin",
            Policy::OptimalPerSlot => "optimal",
            Policy::StaticBest => "static_best",
            Policy::Learned(_) => "learned",
        }
    }
}

/// Per-slot outcome of one policy over a window of the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResult {
    pub first_slot: usize,
    pub allocs: Vec<usize>,
    pub series: Vec<f64>,
    pub mean: f64,
}

impl PolicyResult {
    fn new(first_slot: usize, allocs: Vec<usize>, series: Vec<f64>) -> Self {
        let mean = mean(&series);
        Self {
            first_slot,
            allocs,
            series,
            mean,
        }
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Replays the whole trace under `policy`.
pub fn run_policy(
    trace: &WorkloadTrace,
    config: &ExperimentConfig,
    policy: &Policy,
) -> Result<PolicyResult, HarnessError> {
    let table = OutcomeTable::build(trace, config)?;
    match policy {
        Policy::Learned(lp) => {
            let mut bank = lp.bank.clone();
            run_learned(
                trace,
                config,
                &table,
                0..trace.len(),
                &mut bank,
                lp.start_alloc,
                lp.update,
            )
        }
        other => run_baseline(&table, config, other, 0..trace.len()),
    }
}

/// Non-learning policies over `window`, read from a prebuilt table.
pub fn run_baseline(
    table: &OutcomeTable,
    config: &ExperimentConfig,
    policy: &Policy,
    window: Range<usize>,
) -> Result<PolicyResult, HarnessError> {
    if window.is_empty() {
        return Err(HarnessError::EmptyWindow);
    }
    let n = config.n_allocs();
    let fixed_static = match policy {
        Policy::StaticBest => Some(table.static_best(window.clone())),
        Policy::Fixed(i) if *i >= n => {
            return Err(HarnessError::UnknownAllocation { index: *i, len: n })
        }
        Policy::Fixed(i) => Some(*i),
        _ => None,
    };
    let allocs: Vec<usize> = window
        .clone()
        .map(|t| match (policy, fixed_static) {
            (_, Some(a)) => a,
            (Policy::RoundRobin, _) => t % n,
            (Policy::OptimalPerSlot, _) => table.best(t),
            _ => unreachable!("learned policies are replayed by run_learned"),
        })
        .collect();
    let series = window
        .clone()
        .zip(&allocs)
        .map(|(t, &a)| table.total(t, a))
        .collect();
    Ok(PolicyResult::new(window.start, allocs, series))
}

/// Learned policy over `window`, starting in `start_alloc`. When the window
/// does not begin at slot 0, the previous slot's achieved rates under
/// `start_alloc` seed the first decision.
pub fn run_learned(
    trace: &WorkloadTrace,
    config: &ExperimentConfig,
    table: &OutcomeTable,
    window: Range<usize>,
    bank: &mut ModelBank,
    start_alloc: usize,
    update: bool,
) -> Result<PolicyResult, HarnessError> {
    if window.is_empty() {
        return Err(HarnessError::EmptyWindow);
    }
    if start_alloc >= config.n_allocs() {
        return Err(HarnessError::UnknownAllocation {
            index: start_alloc,
            len: config.n_allocs(),
        });
    }
    if config.restrict_observed_state {
        return run_learned_from_sinr(config, table, window, bank, update);
    }
    let last_rates = window
        .start
        .checked_sub(1)
        .map(|t| table.rates(t, start_alloc).clone());
    let mut controller = LearnedController::new(bank, start_alloc, last_rates, update);
    let mut env = TraceEnvironment::new(trace, config, window.start);
    let (allocs, obs) = controller.drive(&mut env, window.len())?;
    let series = obs.iter().map(|o| o.throughput).collect();
    Ok(PolicyResult::new(window.start, allocs, series))
}

/// Decisions use only models leaving the SINR state, fed with the rates the
/// SINR allocation produced in the previous slot.
fn run_learned_from_sinr(
    config: &ExperimentConfig,
    table: &OutcomeTable,
    window: Range<usize>,
    bank: &mut ModelBank,
    update: bool,
) -> Result<PolicyResult, HarnessError> {
    let sinr = config.sinr_index;
    let mut allocs = Vec::with_capacity(window.len());
    let mut series = Vec::with_capacity(window.len());
    for t in window.clone() {
        let Some(prev) = t.checked_sub(1) else {
            allocs.push(sinr);
            series.push(table.total(t, sinr));
            continue;
        };
        let rates = table.rates(prev, sinr);
        let choice = bank.select_next(sinr, rates)?;
        let achieved = table.total(t, choice);
        if update {
            bank.observe(sinr, choice, rates.clone(), achieved)?;
        }
        allocs.push(choice);
        series.push(achieved);
    }
    Ok(PolicyResult::new(window.start, allocs, series))
}

/// `(v - m) / m`.
pub fn improvement(v: f64, m: f64) -> Result<f64, HarnessError> {
    if !(m > 0.0) {
        return Err(HarnessError::NonPositiveBaseline(m));
    }
    Ok((v - m) / m)
}

/// Share of the optimal policy's improvement captured by the learned one.
pub fn percent_of_optimal(learned_impr: f64, optimal_impr: f64) -> Result<f64, HarnessError> {
    if !(optimal_impr > 0.0) {
        return Err(HarnessError::NonPositiveOptimal(optimal_impr));
    }
    Ok(learned_impr / optimal_impr)
}
