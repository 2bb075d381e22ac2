//! Network scenarios: AP profiles, station roster and named allocations.
//!
//! Two built-in scenarios carry the sample workloads used for the golden
//! tables: a backhaul-constrained one with four APs and an airtime-constrained
//! one with two.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alloc_space::{AllocError, Allocation, AllocationSet};
use crate::netsim::{ApProfile, DemandSlot, NetsimError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown built-in scenario {0:?} (expected backhaul or airtime)")]
    UnknownBuiltin(String),
    #[error("scenario has no allocation named {0:?}")]
    UnknownAllocation(String),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Netsim(#[from] NetsimError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Backhaul,
    Airtime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedAllocation {
    pub name: String,
    pub assignment: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    pub stations: Vec<String>,
    pub aps: Vec<ApProfile>,
    /// Named allocations; the default candidate set.
    pub allocations: Vec<NamedAllocation>,
    /// Name of the baseline (nearest-AP) allocation.
    pub sinr: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_demand: Option<DemandSlot>,
}

fn ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("sta{i}")).collect()
}

fn named(name: &str, assignment: &[usize]) -> NamedAllocation {
    NamedAllocation {
        name: name.to_string(),
        assignment: assignment.to_vec(),
    }
}

impl Scenario {
    /// Four APs, two upload-heavy (70/1 Mbps) and two download-heavy (1/70),
    /// with two stations each of high/low upload/download demand.
    pub fn backhaul_sample() -> Self {
        // Stations: 1 HU, 2 HD, 3 HD, 4 LU, 5 LU, 6 HU, 7 LD, 8 LD.
        let up = vec![50.0, 0.0, 0.0, 0.3, 0.3, 50.0, 0.0, 0.0];
        let down = vec![0.0, 50.0, 50.0, 0.0, 0.0, 0.0, 0.3, 0.3];
        Self {
            name: "backhaul".into(),
            mode: Mode::Backhaul,
            stations: ids(8),
            aps: vec![
                ApProfile::backhaul(70.0, 1.0),
                ApProfile::backhaul(1.0, 70.0),
                ApProfile::backhaul(1.0, 70.0),
                ApProfile::backhaul(70.0, 1.0),
            ],
            allocations: vec![
                // HU+HD on each upload AP, LU+LD on each download AP.
                named("HUHD", &[0, 0, 3, 1, 2, 3, 1, 2]),
                // High and low of the same type together, on the matching AP.
                named("HULU", &[0, 1, 2, 0, 3, 3, 1, 2]),
                // HU+HU, HD+HD, LD+LD, LU+LU.
                named("HUHU", &[0, 1, 1, 3, 3, 0, 2, 2]),
            ],
            sinr: "HUHD".into(),
            sample_demand: Some(DemandSlot { down, up }),
        }
    }

    /// Two APs with 48 and 144 Mbps of shared airtime; four stations at 36
    /// Mbps and four at 12 Mbps, download only.
    pub fn airtime_sample() -> Self {
        // Stations: 1 H, 2 L, 3 H, 4 H, 5 L, 6 L, 7 H, 8 L.
        let down = vec![36.0, 12.0, 36.0, 36.0, 12.0, 12.0, 36.0, 12.0];
        Self {
            name: "airtime".into(),
            mode: Mode::Airtime,
            stations: ids(8),
            aps: vec![ApProfile::airtime(48.0), ApProfile::airtime(144.0)],
            allocations: vec![
                named("SNR", &[0, 1, 0, 0, 1, 1, 0, 1]),
                named("BENCH01", &[1, 0, 1, 1, 0, 0, 1, 0]),
                named("BENCH02", &[0, 0, 0, 1, 0, 1, 1, 1]),
            ],
            sinr: "SNR".into(),
            sample_demand: Some(DemandSlot {
                down,
                up: vec![0.0; 8],
            }),
        }
    }

    pub fn builtin(name: &str) -> Result<Self, ScenarioError> {
        match name {
            "backhaul" => Ok(Self::backhaul_sample()),
            "airtime" => Ok(Self::airtime_sample()),
            other => Err(ScenarioError::UnknownBuiltin(other.to_string())),
        }
    }

    /// A built-in name, or a path to a scenario JSON file.
    pub fn resolve(name_or_path: &str) -> Result<Self, ScenarioError> {
        match Self::builtin(name_or_path) {
            Ok(s) => Ok(s),
            Err(ScenarioError::UnknownBuiltin(_)) if Path::new(name_or_path).exists() => {
                Self::load(name_or_path)
            }
            Err(e) => Err(e),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let sc: Scenario = serde_json::from_str(&text)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.aps.is_empty() || self.stations.is_empty() {
            return Err(ScenarioError::Invalid(
                "scenario needs APs and stations".into(),
            ));
        }
        for p in &self.aps {
            p.validate()?;
        }
        for a in &self.allocations {
            if a.assignment.len() != self.stations.len() {
                return Err(ScenarioError::Invalid(format!(
                    "allocation {} covers {} stations, scenario has {}",
                    a.name,
                    a.assignment.len(),
                    self.stations.len()
                )));
            }
            Allocation::new(a.assignment.clone(), self.aps.len())?;
        }
        if !self.allocations.iter().any(|a| a.name == self.sinr) {
            return Err(ScenarioError::UnknownAllocation(self.sinr.clone()));
        }
        if let Some(d) = &self.sample_demand {
            d.validate()?;
            if d.len() != self.stations.len() {
                return Err(ScenarioError::Invalid(
                    "sample demand arity differs from roster".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn allocation(&self, name: &str) -> Result<Allocation, ScenarioError> {
        let a = self
            .allocations
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| ScenarioError::UnknownAllocation(name.to_string()))?;
        Ok(Allocation::new(a.assignment.clone(), self.aps.len())?)
    }

    pub fn sinr_allocation(&self) -> Result<Allocation, ScenarioError> {
        self.allocation(&self.sinr)
    }

    /// The named allocations as a canonical (sorted) candidate set.
    pub fn candidate_set(&self) -> Result<AllocationSet, ScenarioError> {
        let members = self
            .allocations
            .iter()
            .map(|a| Allocation::new(a.assignment.clone(), self.aps.len()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(AllocationSet::from_allocations(members)?)
    }

    /// Name of an allocation, if it is one of the scenario's named ones.
    pub fn name_of(&self, alloc: &Allocation) -> Option<&str> {
        self.allocations
            .iter()
            .find(|a| a.assignment == alloc.assignment())
            .map(|a| a.name.as_str())
    }
}
