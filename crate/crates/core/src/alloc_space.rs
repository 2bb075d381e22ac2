//! Feasible STA→AP allocation sets.
//!
//! An [`Allocation`] maps every station to the access point serving it. Sets of
//! allocations are always kept in lexicographic order of their assignment
//! vectors, so an allocation index means the same thing across runs.

use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Default ceiling on `n_aps^n_stas` for [`enumerate_all`].
pub const DEFAULT_ENUMERATION_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AllocError {
    #[error("enumeration of {n_aps}^{n_stas} = {count} allocations exceeds the limit of {limit}")]
    LimitExceeded {
        n_aps: usize,
        n_stas: usize,
        count: u128,
        limit: u64,
    },
    #[error("need at least one access point and one station (got {n_aps} APs, {n_stas} stations)")]
    Empty { n_aps: usize, n_stas: usize },
    #[error("station {station} assigned to AP {ap}, but only {n_aps} APs exist")]
    ApOutOfRange {
        station: usize,
        ap: usize,
        n_aps: usize,
    },
    #[error("allocation has {got} stations, set expects {expected}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("sample size must be at least 1")]
    ZeroSample,
}

/// A total mapping from stations to access points.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Allocation {
    assignment: Vec<usize>,
    n_aps: usize,
}

impl Allocation {
    pub fn new(assignment: Vec<usize>, n_aps: usize) -> Result<Self, AllocError> {
        if n_aps == 0 || assignment.is_empty() {
            return Err(AllocError::Empty {
                n_aps,
                n_stas: assignment.len(),
            });
        }
        if let Some((station, &ap)) = assignment.iter().enumerate().find(|(_, &ap)| ap >= n_aps) {
            return Err(AllocError::ApOutOfRange { station, ap, n_aps });
        }
        Ok(Self { assignment, n_aps })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn n_aps(&self) -> usize {
        self.n_aps
    }

    pub fn n_stas(&self) -> usize {
        self.assignment.len()
    }

    /// AP serving `station`.
    pub fn ap_of(&self, station: usize) -> usize {
        self.assignment[station]
    }

    /// Number of stations on each AP.
    pub fn load(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_aps];
        for &ap in &self.assignment {
            counts[ap] += 1;
        }
        counts
    }

    /// Per-AP station counts differ by at most one.
    pub fn is_balanced(&self) -> bool {
        let load = self.load();
        let max = load.iter().copied().max().unwrap_or(0);
        let min = load.iter().copied().min().unwrap_or(0);
        max - min <= 1
    }

    /// Canonical representative under AP relabeling: APs are renumbered in
    /// order of first use, which yields the lexicographically smallest
    /// assignment in the equivalence class.
    pub fn canonical(&self) -> Allocation {
        let mut relabel = vec![usize::MAX; self.n_aps];
        let mut next = 0;
        let assignment = self
            .assignment
            .iter()
            .map(|&ap| {
                if relabel[ap] == usize::MAX {
                    relabel[ap] = next;
                    next += 1;
                }
                relabel[ap]
            })
            .collect();
        Allocation {
            assignment,
            n_aps: self.n_aps,
        }
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, ap) in self.assignment.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{ap}")?;
        }
        write!(f, "]")
    }
}

/// How a set was derived. Purely informational.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub balanced: bool,
    pub reflections_removed: bool,
    pub sampled: bool,
    pub station_filtered: bool,
}

/// Ordered, duplicate-free set of allocations over the same stations and APs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationSet {
    members: Vec<Allocation>,
    provenance: Provenance,
}

impl AllocationSet {
    /// Builds a set from arbitrary allocations; sorts and removes duplicates.
    pub fn from_allocations(mut members: Vec<Allocation>) -> Result<Self, AllocError> {
        if let Some(first) = members.first() {
            let (n, a) = (first.n_stas(), first.n_aps());
            for m in &members {
                if m.n_stas() != n {
                    return Err(AllocError::ArityMismatch {
                        expected: n,
                        got: m.n_stas(),
                    });
                }
                if m.n_aps() != a {
                    return Err(AllocError::ApOutOfRange {
                        station: 0,
                        ap: m.n_aps(),
                        n_aps: a,
                    });
                }
            }
        }
        members.sort();
        members.dedup();
        Ok(Self {
            members,
            provenance: Provenance::default(),
        })
    }

    pub fn members(&self) -> &[Allocation] {
        &self.members
    }

    pub fn get(&self, index: usize) -> Option<&Allocation> {
        self.members.get(index)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn index_of(&self, alloc: &Allocation) -> Option<usize> {
        self.members.binary_search(alloc).ok()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Allocation> {
        self.members.iter()
    }

    /// SHA-256 over the canonical text form of every member, in order.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for m in &self.members {
            hasher.update(format!("{}/{}\n", m, m.n_aps()).as_bytes());
        }
        hex::encode(hasher.finalize())
    }

    fn retain(&self, keep: impl Fn(&Allocation) -> bool, provenance: Provenance) -> Self {
        Self {
            members: self.members.iter().filter(|m| keep(m)).cloned().collect(),
            provenance,
        }
    }
}

impl<'a> IntoIterator for &'a AllocationSet {
    type Item = &'a Allocation;
    type IntoIter = std::slice::Iter<'a, Allocation>;

    fn into_iter(self) -> Self::IntoIter {
        self.members.iter()
    }
}

/// All `n_aps^n_stas` allocations in lexicographic order, subject to
/// [`DEFAULT_ENUMERATION_LIMIT`].
pub fn enumerate_all(n_aps: usize, n_stas: usize) -> Result<AllocationSet, AllocError> {
    enumerate_all_with_limit(n_aps, n_stas, DEFAULT_ENUMERATION_LIMIT)
}

pub fn enumerate_all_with_limit(
    n_aps: usize,
    n_stas: usize,
    limit: u64,
) -> Result<AllocationSet, AllocError> {
    if n_aps == 0 || n_stas == 0 {
        return Err(AllocError::Empty { n_aps, n_stas });
    }
    let count = (n_aps as u128)
        .checked_pow(n_stas as u32)
        .unwrap_or(u128::MAX);
    if count > limit as u128 {
        return Err(AllocError::LimitExceeded {
            n_aps,
            n_stas,
            count,
            limit,
        });
    }
    // Odometer with the last station varying fastest gives lexicographic order.
    let mut members = Vec::with_capacity(count as usize);
    let mut digits = vec![0usize; n_stas];
    loop {
        members.push(Allocation {
            assignment: digits.clone(),
            n_aps,
        });
        let mut pos = n_stas;
        loop {
            if pos == 0 {
                return Ok(AllocationSet {
                    members,
                    provenance: Provenance::default(),
                });
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < n_aps {
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Keeps allocations whose per-AP station counts differ by at most one.
pub fn filter_balanced(set: &AllocationSet) -> AllocationSet {
    let provenance = Provenance {
        balanced: true,
        ..set.provenance
    };
    set.retain(Allocation::is_balanced, provenance)
}

/// Keeps one member per AP-relabeling class: the lexicographically smallest
/// one present in the set.
pub fn filter_reflections(set: &AllocationSet) -> AllocationSet {
    let mut seen = std::collections::BTreeSet::new();
    let members = set
        .members
        .iter()
        .filter(|m| seen.insert(m.canonical()))
        .cloned()
        .collect();
    AllocationSet {
        members,
        provenance: Provenance {
            reflections_removed: true,
            ..set.provenance
        },
    }
}

/// Draws `k` distinct members without replacement. Returns the set unchanged
/// when `k >= |set|`.
pub fn sample_candidates(
    set: &AllocationSet,
    k: usize,
    seed: u64,
) -> Result<AllocationSet, AllocError> {
    if k == 0 {
        return Err(AllocError::ZeroSample);
    }
    if k >= set.len() {
        return Ok(set.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, set.len(), k).into_vec();
    picked.sort_unstable();
    Ok(AllocationSet {
        members: picked.into_iter().map(|i| set.members[i].clone()).collect(),
        provenance: Provenance {
            sampled: true,
            ..set.provenance
        },
    })
}

/// Restricts which stations may be moved. Stations rejected by `admit` must
/// sit on the AP they have in `home`; all other stations are free.
///
/// Use this to apply a traffic-volume or signal-quality threshold.
pub fn filter_stations(
    set: &AllocationSet,
    home: &Allocation,
    admit: impl Fn(usize) -> bool,
) -> AllocationSet {
    let pinned: Vec<usize> = (0..home.n_stas()).filter(|&s| !admit(s)).collect();
    set.retain(
        |m| pinned.iter().all(|&s| m.ap_of(s) == home.ap_of(s)),
        Provenance {
            station_filtered: true,
            ..set.provenance
        },
    )
}
