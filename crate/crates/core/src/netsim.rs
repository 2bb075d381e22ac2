//! One-slot capacity model.
//!
//! Each AP has independent upload and download backhaul caps and an optional
//! shared airtime cap. Demand that exceeds a cap is rationed proportionally to
//! what each station asked for. Backhaul rationing runs first, then airtime
//! rationing over everything the AP carries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alloc_space::{Allocation, AllocationSet};
use crate::learner::RateSample;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetsimError {
    #[error("allocation spans {alloc} APs but {profiles} profiles were given")]
    ApCountMismatch { alloc: usize, profiles: usize },
    #[error("allocation covers {alloc} stations but demand has {demand}")]
    StationCountMismatch { alloc: usize, demand: usize },
    #[error("invalid AP profile: {0}")]
    InvalidProfile(String),
    #[error("invalid demand: {0}")]
    InvalidDemand(String),
}

/// Capacity constraints of one access point, in Mbps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApProfile {
    pub up_cap: f64,
    pub down_cap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub airtime_cap: Option<f64>,
    /// Fraction of a cap that is usable once the AP is saturated.
    #[serde(default = "default_efficiency")]
    pub saturation_efficiency: f64,
}

fn default_efficiency() -> f64 {
    1.0
}

impl ApProfile {
    pub fn backhaul(up_cap: f64, down_cap: f64) -> Self {
        Self {
            up_cap,
            down_cap,
            airtime_cap: None,
            saturation_efficiency: 1.0,
        }
    }

    /// Only the shared airtime cap binds; backhaul caps are set to the same value.
    pub fn airtime(cap: f64) -> Self {
        Self {
            up_cap: cap,
            down_cap: cap,
            airtime_cap: Some(cap),
            saturation_efficiency: 1.0,
        }
    }

    pub fn with_efficiency(mut self, efficiency: f64) -> Self {
        self.saturation_efficiency = efficiency;
        self
    }

    pub fn validate(&self) -> Result<(), NetsimError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.up_cap) || !positive(self.down_cap) {
            return Err(NetsimError::InvalidProfile(format!(
                "caps must be positive (up {}, down {})",
                self.up_cap, self.down_cap
            )));
        }
        if let Some(air) = self.airtime_cap {
            if !positive(air) {
                return Err(NetsimError::InvalidProfile(format!(
                    "airtime cap {air} must be positive"
                )));
            }
        }
        let e = self.saturation_efficiency;
        if !(e > 0.0 && e <= 1.0) {
            return Err(NetsimError::InvalidProfile(format!(
                "efficiency {e} not in (0, 1]"
            )));
        }
        Ok(())
    }
}

/// Offered per-station rates for one slot, in Mbps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSlot {
    pub down: Vec<f64>,
    pub up: Vec<f64>,
}

impl DemandSlot {
    pub fn new(down: Vec<f64>, up: Vec<f64>) -> Result<Self, NetsimError> {
        let slot = Self { down, up };
        slot.validate()?;
        Ok(slot)
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            down: vec![0.0; n],
            up: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.down.len()
    }

    pub fn is_empty(&self) -> bool {
        self.down.is_empty()
    }

    pub fn validate(&self) -> Result<(), NetsimError> {
        if self.down.len() != self.up.len() {
            return Err(NetsimError::InvalidDemand(format!(
                "{} download entries vs {} upload entries",
                self.down.len(),
                self.up.len()
            )));
        }
        if self
            .down
            .iter()
            .chain(&self.up)
            .any(|r| !r.is_finite() || *r < 0.0)
        {
            return Err(NetsimError::InvalidDemand(
                "rates must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Achieved throughput for one simulated slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub down: Vec<f64>,
    pub up: Vec<f64>,
    pub ap_down: Vec<f64>,
    pub ap_up: Vec<f64>,
    pub system_total: f64,
}

impl ThroughputReport {
    /// Achieved rates as a learner observation.
    pub fn rates(&self) -> RateSample {
        RateSample::new(self.down.clone(), self.up.clone()).expect("achieved rates are valid")
    }

    pub fn ap_total(&self, ap: usize) -> f64 {
        self.ap_down[ap] + self.ap_up[ap]
    }
}

/// Multiplier applied to each station's demand when `offered` competes for `cap`.
fn ration(offered: f64, cap: f64, efficiency: f64) -> f64 {
    let usable = cap * efficiency;
    if offered > usable {
        usable / offered
    } else {
        1.0
    }
}

pub fn simulate_slot(
    alloc: &Allocation,
    demand: &DemandSlot,
    profiles: &[ApProfile],
) -> Result<ThroughputReport, NetsimError> {
    if alloc.n_aps() != profiles.len() {
        return Err(NetsimError::ApCountMismatch {
            alloc: alloc.n_aps(),
            profiles: profiles.len(),
        });
    }
    if alloc.n_stas() != demand.len() || demand.up.len() != demand.down.len() {
        return Err(NetsimError::StationCountMismatch {
            alloc: alloc.n_stas(),
            demand: demand.len(),
        });
    }

    let n_aps = profiles.len();
    let mut offered_down = vec![0.0; n_aps];
    let mut offered_up = vec![0.0; n_aps];
    for (s, &ap) in alloc.assignment().iter().enumerate() {
        offered_down[ap] += demand.down[s];
        offered_up[ap] += demand.up[s];
    }

    let mut scale_down = vec![1.0; n_aps];
    let mut scale_up = vec![1.0; n_aps];
    for (ap, p) in profiles.iter().enumerate() {
        let e = p.saturation_efficiency;
        scale_down[ap] = ration(offered_down[ap], p.down_cap, e);
        scale_up[ap] = ration(offered_up[ap], p.up_cap, e);
        if let Some(air) = p.airtime_cap {
            let carried = offered_down[ap] * scale_down[ap] + offered_up[ap] * scale_up[ap];
            let f = ration(carried, air, e);
            scale_down[ap] *= f;
            scale_up[ap] *= f;
        }
    }

    let mut report = ThroughputReport {
        down: vec![0.0; alloc.n_stas()],
        up: vec![0.0; alloc.n_stas()],
        ap_down: vec![0.0; n_aps],
        ap_up: vec![0.0; n_aps],
        system_total: 0.0,
    };
    for (s, &ap) in alloc.assignment().iter().enumerate() {
        let d = demand.down[s] * scale_down[ap];
        let u = demand.up[s] * scale_up[ap];
        report.down[s] = d;
        report.up[s] = u;
        report.ap_down[ap] += d;
        report.ap_up[ap] += u;
    }
    report.system_total = report.ap_down.iter().sum::<f64>() + report.ap_up.iter().sum::<f64>();
    Ok(report)
}

/// System throughput of every member of `allocs`, in set order.
pub fn evaluate_allocations(
    allocs: &AllocationSet,
    demand: &DemandSlot,
    profiles: &[ApProfile],
) -> Result<Vec<f64>, NetsimError> {
    allocs
        .members()
        .par_iter()
        .map(|a| simulate_slot(a, demand, profiles).map(|r| r.system_total))
        .collect()
}
