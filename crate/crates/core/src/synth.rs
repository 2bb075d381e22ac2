//! Synthetic per-minute workloads.
//!
//! Each station alternates between active and idle periods with geometric
//! dwell times. An active period draws its level from a truncated Pareto
//! distribution; inside the period the rate fluctuates around that level with
//! a multiplicative AR(1) process. The AR coefficient is tuned by bisection so
//! the pooled lag-1 autocorrelation of the result lands on the target.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::netsim::DemandSlot;
use crate::trace::{series_autocorrelation, TraceError, WorkloadTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    pub pareto_shape: f64,
    /// Smallest active-period level, Mbps.
    pub pareto_scale_mbps: f64,
    /// Truncation point of the level distribution, Mbps.
    pub pareto_max_mbps: f64,
    pub mean_active_slots: f64,
    pub mean_idle_slots: f64,
    /// Standard deviation of the relative within-period fluctuation.
    pub within_noise: f64,
    pub target_acf: f64,
    /// Share of stations whose dominant direction is upload.
    pub upload_heavy_fraction: f64,
    /// Secondary-direction rate as a fraction of the dominant one.
    pub minor_direction_ratio: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            pareto_shape: 1.5,
            pareto_scale_mbps: 4.0,
            pareto_max_mbps: 200.0,
            mean_active_slots: 20.0,
            mean_idle_slots: 40.0,
            within_noise: 0.6,
            target_acf: 0.84,
            upload_heavy_fraction: 0.25,
            minor_direction_ratio: 0.1,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |m: String| Err(TraceError::InvalidParam(m));
        if !(self.pareto_shape > 0.0) {
            return bad(format!(
                "pareto_shape {} must be positive",
                self.pareto_shape
            ));
        }
        if !(self.pareto_scale_mbps > 0.0 && self.pareto_max_mbps > self.pareto_scale_mbps) {
            return bad("need 0 < pareto_scale_mbps < pareto_max_mbps".into());
        }
        if !(self.mean_active_slots >= 1.0 && self.mean_idle_slots >= 1.0) {
            return bad("mean dwell times must be at least one slot".into());
        }
        if !(self.within_noise >= 0.0 && self.within_noise.is_finite()) {
            return bad(format!("within_noise {} must be >= 0", self.within_noise));
        }
        if !(self.target_acf > -1.0 && self.target_acf < 1.0) {
            return bad(format!(
                "target_acf {} must lie in (-1, 1)",
                self.target_acf
            ));
        }
        if !(0.0..=1.0).contains(&self.upload_heavy_fraction) {
            return bad("upload_heavy_fraction must lie in [0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.minor_direction_ratio) {
            return bad("minor_direction_ratio must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// Random draws for one station, fixed before the AR coefficient is chosen.
struct StationDraws {
    /// Active-period level per slot, 0 when idle.
    level: Vec<f64>,
    shocks: Vec<f64>,
    upload_heavy: bool,
}

const PHI_MAX: f64 = 0.995;

pub fn generate_synthetic(
    n_stas: usize,
    n_slots: usize,
    seed: u64,
    params: &SyntheticParams,
) -> Result<WorkloadTrace, TraceError> {
    if n_stas == 0 {
        return Err(TraceError::InvalidParam("need at least one station".into()));
    }
    if n_slots < 2 {
        return Err(TraceError::InvalidParam("need at least two slots".into()));
    }
    params.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_up = (params.upload_heavy_fraction * n_stas as f64).round() as usize;
    let mut upload_heavy = vec![false; n_stas];
    for s in index::sample(&mut rng, n_stas, n_up) {
        upload_heavy[s] = true;
    }
    let draws: Vec<StationDraws> = upload_heavy
        .into_iter()
        .map(|up| draw_station(&mut rng, n_slots, params, up))
        .collect();

    let phi = tune_phi(&draws, params);
    let series: Vec<Vec<f64>> = draws
        .iter()
        .map(|d| render(d, phi, params.within_noise))
        .collect();

    let slots = (0..n_slots)
        .map(|t| {
            let mut slot = DemandSlot::zeros(n_stas);
            for (s, d) in draws.iter().enumerate() {
                let major = series[s][t];
                let minor = major * params.minor_direction_ratio;
                if d.upload_heavy {
                    slot.up[s] = major;
                    slot.down[s] = minor;
                } else {
                    slot.down[s] = major;
                    slot.up[s] = minor;
                }
            }
            slot
        })
        .collect();

    let width = (n_stas - 1).to_string().len().max(2);
    let mut trace = WorkloadTrace::new(
        (0..n_stas).map(|i| format!("sta{i:0width$}")).collect(),
        slots,
    )?;
    trace.origin.seed = Some(seed);
    trace
        .origin
        .transforms
        .push(format!("synthetic(phi={phi:.4})"));
    Ok(trace)
}

fn draw_station(
    rng: &mut ChaCha8Rng,
    n_slots: usize,
    p: &SyntheticParams,
    upload_heavy: bool,
) -> StationDraws {
    let active_share = p.mean_active_slots / (p.mean_active_slots + p.mean_idle_slots);
    let mut active = rng.random::<f64>() < active_share;
    let mut level = Vec::with_capacity(n_slots);
    while level.len() < n_slots {
        let mean = if active {
            p.mean_active_slots
        } else {
            p.mean_idle_slots
        };
        let dwell = geometric(rng, 1.0 / mean);
        let value = if active {
            truncated_pareto(rng, p)
        } else {
            0.0
        };
        let take = dwell.min(n_slots - level.len());
        level.extend(std::iter::repeat_n(value, take));
        active = !active;
    }
    let shocks = (0..n_slots).map(|_| rng.sample(StandardNormal)).collect();
    StationDraws {
        level,
        shocks,
        upload_heavy,
    }
}

/// Number of trials up to and including the first success; mean `1/p`.
fn geometric(rng: &mut ChaCha8Rng, p: f64) -> usize {
    if p >= 1.0 {
        return 1;
    }
    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    1 + (u.ln() / (1.0 - p).ln()).floor() as usize
}

/// Inverse-CDF draw from a Pareto distribution truncated to `[scale, max]`.
fn truncated_pareto(rng: &mut ChaCha8Rng, p: &SyntheticParams) -> f64 {
    let tail = (p.pareto_scale_mbps / p.pareto_max_mbps).powf(p.pareto_shape);
    let u: f64 = rng.random();
    p.pareto_scale_mbps / (1.0 - u * (1.0 - tail)).powf(1.0 / p.pareto_shape)
}

fn render(d: &StationDraws, phi: f64, noise: f64) -> Vec<f64> {
    let innovation = noise * (1.0 - phi * phi).sqrt();
    let mut u = noise * d.shocks[0];
    d.level
        .iter()
        .zip(&d.shocks)
        .enumerate()
        .map(|(t, (&level, &z))| {
            if t > 0 {
                u = phi * u + innovation * z;
            }
            level * (1.0 + u).max(0.0)
        })
        .collect()
}

fn pooled_acf(draws: &[StationDraws], phi: f64, noise: f64) -> Option<f64> {
    let series: Vec<Vec<f64>> = draws.iter().map(|d| render(d, phi, noise)).collect();
    series_autocorrelation(&series, 1).ok()
}

/// Bisection on the AR coefficient in `[0, PHI_MAX]`; clamps when the target
/// lies outside the reachable range.
fn tune_phi(draws: &[StationDraws], p: &SyntheticParams) -> f64 {
    let acf = |phi| pooled_acf(draws, phi, p.within_noise);
    let (Some(lo_acf), Some(hi_acf)) = (acf(0.0), acf(PHI_MAX)) else {
        return 0.0;
    };
    if p.target_acf <= lo_acf {
        return 0.0;
    }
    if p.target_acf >= hi_acf {
        return PHI_MAX;
    }
    let (mut lo, mut hi) = (0.0, PHI_MAX);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        match acf(mid) {
            Some(r) if r < p.target_acf => lo = mid,
            _ => hi = mid,
        }
    }
    0.5 * (lo + hi)
}

/// Download-only demand hovering around fixed per-station levels. Each
/// station's relative deviation follows a stationary AR(1) process with
/// coefficient `phi` and standard deviation `rel_noise`; rates never go
/// negative.
pub fn persistent_demand(
    base_down: &[f64],
    rel_noise: f64,
    phi: f64,
    n_slots: usize,
    seed: u64,
) -> Result<WorkloadTrace, TraceError> {
    if base_down.is_empty() || n_slots == 0 {
        return Err(TraceError::InvalidParam("need stations and slots".into()));
    }
    if base_down.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(TraceError::InvalidParam(
            "base rates must be finite and >= 0".into(),
        ));
    }
    if !(rel_noise >= 0.0 && rel_noise.is_finite()) || !(0.0..1.0).contains(&phi) {
        return Err(TraceError::InvalidParam(
            "need rel_noise >= 0 and 0 <= phi < 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let innovation = rel_noise * (1.0 - phi * phi).sqrt();
    let mut dev: Vec<f64> = base_down
        .iter()
        .map(|_| rel_noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let n = base_down.len();
    let mut slots = Vec::with_capacity(n_slots);
    for t in 0..n_slots {
        if t > 0 {
            for u in dev.iter_mut() {
                *u = phi * *u + innovation * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let mut slot = DemandSlot::zeros(n);
        for s in 0..n {
            slot.down[s] = (base_down[s] * (1.0 + dev[s])).max(0.0);
        }
        slots.push(slot);
    }
    let mut trace = WorkloadTrace::new((1..=n).map(|i| format!("s{i}")).collect(), slots)?;
    trace.origin.seed = Some(seed);
    trace
        .origin
        .transforms
        .push(format!("persistent(noise={rel_noise},phi={phi})"));
    Ok(trace)
}
