//! Per-transition linear throughput models.
//!
//! For every ordered pair of candidate allocations `(observed, target)` the bank
//! keeps one [`TransitionModel`]. A model maps the per-station rates measured
//! while `observed` was enforced to the system throughput measured in the next
//! slot with `target` enforced:
//!
//! ```text
//! score = intercept + Σ_s down_coef[s]·down[s] + up_coef[s]·up[s]
//! ```
//!
//! The next allocation is the target with the highest score among the models
//! leaving the current state.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version tag written into serialized banks.
pub const BANK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnerError {
    #[error("model ({observed}, {target}) has no training samples")]
    EmptyMemory { observed: usize, target: usize },
    #[error("rate vector has {got} stations, roster has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("rates must be finite and non-negative")]
    InvalidRates,
    #[error("achieved throughput must be finite and non-negative, got {0}")]
    InvalidResponse(f64),
    #[error("unfitted transition models: {}", format_pairs(.0))]
    Unfitted(Vec<(usize, usize)>),
    #[error("allocation index {index} out of range for {n_allocs} candidates")]
    UnknownAllocation { index: usize, n_allocs: usize },
    #[error("station {0:?} is already in the roster")]
    DuplicateStation(String),
    #[error("station {0:?} is not in the roster")]
    UnknownStation(String),
    #[error("removing {0:?} would leave an empty roster")]
    EmptyRoster(String),
    #[error("a model bank needs at least one candidate allocation and one station")]
    EmptyBank,
    #[error("unsupported bank format version {0}")]
    UnsupportedVersion(u32),
    #[error("bank document is inconsistent: {0}")]
    Corrupt(String),
    #[error("bank serialization failed: {0}")]
    Serde(String),
}

fn format_pairs(pairs: &[(usize, usize)]) -> String {
    pairs
        .iter()
        .map(|(a, b)| format!("({a},{b})"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Per-station download and upload rates in Mbps, in roster order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSample {
    down: Vec<f64>,
    up: Vec<f64>,
}

impl RateSample {
    pub fn new(down: Vec<f64>, up: Vec<f64>) -> Result<Self, LearnerError> {
        if down.len() != up.len() {
            return Err(LearnerError::DimensionMismatch {
                expected: down.len(),
                got: up.len(),
            });
        }
        if down.iter().chain(&up).any(|r| !r.is_finite() || *r < 0.0) {
            return Err(LearnerError::InvalidRates);
        }
        Ok(Self { down, up })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            down: vec![0.0; n],
            up: vec![0.0; n],
        }
    }

    pub fn down(&self) -> &[f64] {
        &self.down
    }

    pub fn up(&self) -> &[f64] {
        &self.up
    }

    pub fn len(&self) -> usize {
        self.down.len()
    }

    pub fn is_empty(&self) -> bool {
        self.down.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.down.iter().sum::<f64>() + self.up.iter().sum::<f64>()
    }

    /// Multiplies every rate by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            down: self.down.iter().map(|r| r * factor).collect(),
            up: self.up.iter().map(|r| r * factor).collect(),
        }
    }

    fn insert_zero(&mut self, pos: usize) {
        self.down.insert(pos, 0.0);
        self.up.insert(pos, 0.0);
    }

    fn remove(&mut self, pos: usize) {
        self.down.remove(pos);
        self.up.remove(pos);
    }
}

/// One (rates, next-slot throughput) training pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub rates: RateSample,
    pub response: f64,
}

/// Linear predictor of next-slot system throughput for one allocation transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    observed_alloc: usize,
    target_alloc: usize,
    intercept: f64,
    down_coefs: Vec<f64>,
    up_coefs: Vec<f64>,
    memory: VecDeque<Sample>,
    fitted: bool,
}

impl TransitionModel {
    pub fn new(observed_alloc: usize, target_alloc: usize, n_stas: usize) -> Self {
        Self {
            observed_alloc,
            target_alloc,
            intercept: 0.0,
            down_coefs: vec![0.0; n_stas],
            up_coefs: vec![0.0; n_stas],
            memory: VecDeque::new(),
            fitted: false,
        }
    }

    /// Builds a model with fixed coefficients and no memory.
    pub fn with_coefficients(
        observed_alloc: usize,
        target_alloc: usize,
        intercept: f64,
        down_coefs: Vec<f64>,
        up_coefs: Vec<f64>,
    ) -> Result<Self, LearnerError> {
        if down_coefs.len() != up_coefs.len() {
            return Err(LearnerError::DimensionMismatch {
                expected: down_coefs.len(),
                got: up_coefs.len(),
            });
        }
        Ok(Self {
            observed_alloc,
            target_alloc,
            intercept,
            down_coefs,
            up_coefs,
            memory: VecDeque::new(),
            fitted: true,
        })
    }

    pub fn observed_alloc(&self) -> usize {
        self.observed_alloc
    }

    pub fn target_alloc(&self) -> usize {
        self.target_alloc
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn down_coefs(&self) -> &[f64] {
        &self.down_coefs
    }

    pub fn up_coefs(&self) -> &[f64] {
        &self.up_coefs
    }

    pub fn memory(&self) -> &VecDeque<Sample> {
        &self.memory
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    fn n_stas(&self) -> usize {
        self.down_coefs.len()
    }

    /// Appends a sample, evicting the oldest ones beyond `cap`. Does not refit.
    pub fn push(&mut self, sample: Sample, cap: Option<usize>) -> Result<(), LearnerError> {
        if sample.rates.len() != self.n_stas() {
            return Err(LearnerError::DimensionMismatch {
                expected: self.n_stas(),
                got: sample.rates.len(),
            });
        }
        self.memory.push_back(sample);
        if let Some(cap) = cap {
            while self.memory.len() > cap {
                self.memory.pop_front();
            }
        }
        Ok(())
    }

    /// Minimum-norm least-squares fit over the memory. Features are the
    /// download rates, then the upload rates, then a constant 1.
    pub fn fit(&mut self) -> Result<(), LearnerError> {
        if self.memory.is_empty() {
            return Err(LearnerError::EmptyMemory {
                observed: self.observed_alloc,
                target: self.target_alloc,
            });
        }
        let n = self.n_stas();
        let cols = 2 * n + 1;
        let x = DMatrix::from_fn(self.memory.len(), cols, |i, j| {
            let r = &self.memory[i].rates;
            if j < n {
                r.down[j]
            } else if j < 2 * n {
                r.up[j - n]
            } else {
                1.0
            }
        });
        let y = DVector::from_iterator(self.memory.len(), self.memory.iter().map(|s| s.response));
        let w = min_norm_lstsq(x, &y);
        self.down_coefs = w.rows(0, n).iter().copied().collect();
        self.up_coefs = w.rows(n, n).iter().copied().collect();
        self.intercept = w[2 * n];
        self.fitted = true;
        Ok(())
    }

    /// Predicted next-slot system throughput. Not clamped.
    pub fn predict(&self, rates: &RateSample) -> Result<f64, LearnerError> {
        if rates.len() != self.n_stas() {
            return Err(LearnerError::DimensionMismatch {
                expected: self.n_stas(),
                got: rates.len(),
            });
        }
        let down: f64 = self
            .down_coefs
            .iter()
            .zip(&rates.down)
            .map(|(w, r)| w * r)
            .sum();
        let up: f64 = self
            .up_coefs
            .iter()
            .zip(&rates.up)
            .map(|(w, r)| w * r)
            .sum();
        Ok(self.intercept + down + up)
    }

    fn insert_station(&mut self, pos: usize) {
        self.down_coefs.insert(pos, 0.0);
        self.up_coefs.insert(pos, 0.0);
        for s in &mut self.memory {
            s.rates.insert_zero(pos);
        }
    }

    fn remove_station(&mut self, pos: usize) {
        self.down_coefs.remove(pos);
        self.up_coefs.remove(pos);
        for s in &mut self.memory {
            s.rates.remove(pos);
        }
    }

    fn refit_if_trained(&mut self) -> Result<(), LearnerError> {
        if self.memory.is_empty() {
            Ok(())
        } else {
            self.fit()
        }
    }
}

/// Minimum-norm solution of `min ||x w - y||` via the SVD pseudo-inverse.
fn min_norm_lstsq(x: DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let (rows, cols) = x.shape();
    let svd = x.svd(true, true);
    let max_sv = svd.singular_values.max();
    if max_sv == 0.0 {
        return DVector::zeros(cols);
    }
    let tol = max_sv * rows.max(cols) as f64 * f64::EPSILON;
    let u = svd.u.as_ref().expect("u computed");
    let v_t = svd.v_t.as_ref().expect("v_t computed");
    let mut w = DVector::zeros(cols);
    for (k, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma > tol {
            let coef = u.column(k).dot(y) / sigma;
            w += v_t.row(k).transpose() * coef;
        }
    }
    w
}

/// How many samples each model retains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemoryCap {
    /// The number of calibration cycles last run on the bank. Unbounded
    /// before calibration.
    FromCalibration,
    /// Explicit cap. Eviction starts only once a model holds this many samples.
    Fixed(usize),
}

/// Bank of `|A|²` transition models over a shared station roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBank {
    version: u32,
    n_allocs: usize,
    candidate_digest: String,
    roster: Vec<String>,
    memory_cap: MemoryCap,
    calibration_cycles: Option<usize>,
    models: Vec<TransitionModel>,
}

impl ModelBank {
    pub fn new(
        n_allocs: usize,
        roster: Vec<String>,
        candidate_digest: impl Into<String>,
        memory_cap: MemoryCap,
    ) -> Result<Self, LearnerError> {
        if n_allocs == 0 || roster.is_empty() {
            return Err(LearnerError::EmptyBank);
        }
        for (i, id) in roster.iter().enumerate() {
            if roster[..i].contains(id) {
                return Err(LearnerError::DuplicateStation(id.clone()));
            }
        }
        let n = roster.len();
        let models = (0..n_allocs)
            .flat_map(|a| (0..n_allocs).map(move |b| TransitionModel::new(a, b, n)))
            .collect();
        Ok(Self {
            version: BANK_FORMAT_VERSION,
            n_allocs,
            candidate_digest: candidate_digest.into(),
            roster,
            memory_cap,
            calibration_cycles: None,
            models,
        })
    }

    pub fn n_allocs(&self) -> usize {
        self.n_allocs
    }

    pub fn roster(&self) -> &[String] {
        &self.roster
    }

    pub fn candidate_digest(&self) -> &str {
        &self.candidate_digest
    }

    pub fn memory_cap(&self) -> MemoryCap {
        self.memory_cap
    }

    /// The cap currently applied on insertion, if any.
    pub fn effective_cap(&self) -> Option<usize> {
        match self.memory_cap {
            MemoryCap::Fixed(n) => Some(n),
            MemoryCap::FromCalibration => self.calibration_cycles,
        }
    }

    /// Records the calibration length. With [`MemoryCap::FromCalibration`]
    /// this becomes the per-model memory cap.
    pub fn set_calibration_cycles(&mut self, cycles: usize) {
        self.calibration_cycles = Some(cycles);
    }

    pub fn models(&self) -> &[TransitionModel] {
        &self.models
    }

    fn check_alloc(&self, index: usize) -> Result<(), LearnerError> {
        if index < self.n_allocs {
            Ok(())
        } else {
            Err(LearnerError::UnknownAllocation {
                index,
                n_allocs: self.n_allocs,
            })
        }
    }

    pub fn model(&self, observed: usize, target: usize) -> Result<&TransitionModel, LearnerError> {
        self.check_alloc(observed)?;
        self.check_alloc(target)?;
        Ok(&self.models[observed * self.n_allocs + target])
    }

    pub fn model_mut(
        &mut self,
        observed: usize,
        target: usize,
    ) -> Result<&mut TransitionModel, LearnerError> {
        self.check_alloc(observed)?;
        self.check_alloc(target)?;
        Ok(&mut self.models[observed * self.n_allocs + target])
    }

    /// Predicted throughput of every target allocation from `current`.
    pub fn scores(&self, current: usize, rates: &RateSample) -> Result<Vec<f64>, LearnerError> {
        self.check_alloc(current)?;
        let row = &self.models[current * self.n_allocs..(current + 1) * self.n_allocs];
        let missing: Vec<_> = row
            .iter()
            .filter(|m| !m.fitted)
            .map(|m| (m.observed_alloc, m.target_alloc))
            .collect();
        if !missing.is_empty() {
            return Err(LearnerError::Unfitted(missing));
        }
        row.iter().map(|m| m.predict(rates)).collect()
    }

    /// Target allocation with the highest predicted throughput; ties go to
    /// the lowest index.
    pub fn select_next(&self, current: usize, rates: &RateSample) -> Result<usize, LearnerError> {
        let scores = self.scores(current, rates)?;
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Adds one training pair to model `(from, to)` and refits that model.
    pub fn observe(
        &mut self,
        from: usize,
        to: usize,
        rates: RateSample,
        achieved: f64,
    ) -> Result<(), LearnerError> {
        if !achieved.is_finite() || achieved < 0.0 {
            return Err(LearnerError::InvalidResponse(achieved));
        }
        let cap = self.effective_cap();
        let model = self.model_mut(from, to)?;
        model.push(
            Sample {
                rates,
                response: achieved,
            },
            cap,
        )?;
        model.fit()
    }

    /// Adds a sample without refitting. Call [`ModelBank::refit_all`] afterwards.
    pub fn push_sample(
        &mut self,
        from: usize,
        to: usize,
        rates: RateSample,
        achieved: f64,
    ) -> Result<(), LearnerError> {
        if !achieved.is_finite() || achieved < 0.0 {
            return Err(LearnerError::InvalidResponse(achieved));
        }
        let cap = self.effective_cap();
        self.model_mut(from, to)?.push(
            Sample {
                rates,
                response: achieved,
            },
            cap,
        )
    }

    /// Refits every model that holds at least one sample.
    pub fn refit_all(&mut self) -> Result<(), LearnerError> {
        self.models
            .iter_mut()
            .try_for_each(TransitionModel::refit_if_trained)
    }

    /// Appends a station whose historical rates are all zero.
    pub fn add_sta(&mut self, sta: impl Into<String>) -> Result<(), LearnerError> {
        let sta = sta.into();
        if self.roster.contains(&sta) {
            return Err(LearnerError::DuplicateStation(sta));
        }
        let pos = self.roster.len();
        self.roster.push(sta);
        for m in &mut self.models {
            m.insert_station(pos);
        }
        self.refit_all()
    }

    /// Drops a station's columns from every model and refits.
    pub fn remove_sta(&mut self, sta: &str) -> Result<(), LearnerError> {
        let pos = self
            .roster
            .iter()
            .position(|s| s == sta)
            .ok_or_else(|| LearnerError::UnknownStation(sta.to_string()))?;
        if self.roster.len() == 1 {
            return Err(LearnerError::EmptyRoster(sta.to_string()));
        }
        self.roster.remove(pos);
        for m in &mut self.models {
            m.remove_station(pos);
        }
        self.refit_all()
    }

    pub fn to_json(&self) -> Result<String, LearnerError> {
        serde_json::to_string_pretty(self).map_err(|e| LearnerError::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, LearnerError> {
        let bank: ModelBank =
            serde_json::from_str(text).map_err(|e| LearnerError::Serde(e.to_string()))?;
        if bank.version != BANK_FORMAT_VERSION {
            return Err(LearnerError::UnsupportedVersion(bank.version));
        }
        if bank.models.len() != bank.n_allocs * bank.n_allocs {
            return Err(LearnerError::Corrupt(format!(
                "{} models for {} allocations",
                bank.models.len(),
                bank.n_allocs
            )));
        }
        let n = bank.roster.len();
        for (i, m) in bank.models.iter().enumerate() {
            if m.observed_alloc != i / bank.n_allocs || m.target_alloc != i % bank.n_allocs {
                return Err(LearnerError::Corrupt(format!("model {i} is out of order")));
            }
            if m.n_stas() != n
                || m.up_coefs.len() != n
                || m.memory.iter().any(|s| s.rates.len() != n)
            {
                return Err(LearnerError::Corrupt(format!(
                    "model {i} does not match the roster"
                )));
            }
        }
        Ok(bank)
    }
}
