//! Per-minute workload traces and the transforms applied before replay.
//!
//! CSV layout: header `slot,sta,down_mbps,up_mbps`, one row per station and
//! minute. `slot` is a 0-based minute index and rows must be ordered by slot.
//! Missing (slot, station) rows read as zero demand.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::DemandSlot;

/// Rate assigned to idle station-slots by [`preprocess_dominant`], in Mbps.
pub const NOISE_FLOOR_MBPS: f64 = 0.1;

pub const CSV_HEADER: [&str; 4] = ["slot", "sta", "down_mbps", "up_mbps"];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: u64, message: String },
    #[error("line {line}: slot {slot} follows slot {previous}")]
    NonMonotonic { line: u64, slot: u64, previous: u64 },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("autocorrelation undefined: every station series is constant")]
    Degenerate,
    #[error("trace has {slots} slots, lag {lag} needs more")]
    TooShort { slots: usize, lag: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl std::str::FromStr for Direction {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "up" => Ok(Direction::Up),
            "down" => Ok(Direction::Down),
            other => Err(TraceError::InvalidParam(format!(
                "direction {other:?} (expected up or down)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Origin {
    pub source: Option<String>,
    pub seed: Option<u64>,
    pub transforms: Vec<String>,
}

/// Per-station demand, one [`DemandSlot`] per minute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadTrace {
    stations: Vec<String>,
    first_slot: u64,
    slots: Vec<DemandSlot>,
    pub origin: Origin,
}

impl WorkloadTrace {
    pub fn new(stations: Vec<String>, slots: Vec<DemandSlot>) -> Result<Self, TraceError> {
        Self::with_first_slot(stations, 0, slots)
    }

    pub fn with_first_slot(
        stations: Vec<String>,
        first_slot: u64,
        slots: Vec<DemandSlot>,
    ) -> Result<Self, TraceError> {
        let n = stations.len();
        if n == 0 {
            return Err(TraceError::InvalidParam(
                "trace needs at least one station".into(),
            ));
        }
        let unique: BTreeSet<_> = stations.iter().collect();
        if unique.len() != n {
            return Err(TraceError::InvalidParam("duplicate station id".into()));
        }
        for (i, s) in slots.iter().enumerate() {
            if s.down.len() != n || s.up.len() != n {
                return Err(TraceError::InvalidParam(format!(
                    "slot {i} has the wrong arity"
                )));
            }
            s.validate()
                .map_err(|e| TraceError::InvalidParam(format!("slot {i}: {e}")))?;
        }
        Ok(Self {
            stations,
            first_slot,
            slots,
            origin: Origin::default(),
        })
    }

    pub fn stations(&self) -> &[String] {
        &self.stations
    }

    pub fn n_stas(&self) -> usize {
        self.stations.len()
    }

    pub fn slots(&self) -> &[DemandSlot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Minute index of `slots()[0]`.
    pub fn first_slot(&self) -> u64 {
        self.first_slot
    }

    /// Number of (station, slot, direction) rate values.
    pub fn rate_count(&self) -> usize {
        self.len() * self.n_stas()
    }

    /// Total demanded volume per station, both directions.
    pub fn station_volumes(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n_stas()];
        for slot in &self.slots {
            for (s, acc) in v.iter_mut().enumerate() {
                *acc += slot.down[s] + slot.up[s];
            }
        }
        v
    }

    /// Per-station series of the larger of the two directions.
    pub fn dominant_series(&self) -> Vec<Vec<f64>> {
        (0..self.n_stas())
            .map(|s| self.slots.iter().map(|d| d.down[s].max(d.up[s])).collect())
            .collect()
    }

    fn map_rates(mut self, note: String, mut f: impl FnMut(usize, &mut f64, &mut f64)) -> Self {
        for slot in &mut self.slots {
            for s in 0..slot.down.len() {
                let (d, u) = (&mut slot.down[s], &mut slot.up[s]);
                f(s, d, u);
            }
        }
        self.origin.transforms.push(note);
        self
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TraceError> {
        let mut order: Vec<usize> = (0..self.n_stas()).collect();
        order.sort_by(|&a, &b| self.stations[a].cmp(&self.stations[b]));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for (i, slot) in self.slots.iter().enumerate() {
            let idx = (self.first_slot + i as u64).to_string();
            for &s in &order {
                w.write_record([
                    idx.as_str(),
                    self.stations[s].as_str(),
                    &slot.down[s].to_string(),
                    &slot.up[s].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|source| TraceError::Io {
            path: "<writer>".into(),
            source,
        })?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| TraceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Reads a trace CSV. Stations are ordered by id; slots span the first to the
/// last minute present, with gaps filled by zero demand.
pub fn read_csv<R: Read>(input: R) -> Result<WorkloadTrace, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(TraceError::Schema {
            line: 1,
            message: format!(
                "expected header {:?}, found {:?}",
                CSV_HEADER.join(","),
                header
            ),
        });
    }

    let mut rows: BTreeMap<(u64, String), (f64, f64)> = BTreeMap::new();
    let mut stations = BTreeSet::new();
    let mut previous: Option<u64> = None;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let schema = |message: String| TraceError::Schema { line, message };
        if record.len() != 4 {
            return Err(schema(format!("expected 4 fields, found {}", record.len())));
        }
        let slot: u64 = record[0].parse().map_err(|_| {
            schema(format!(
                "slot {:?} is not a non-negative integer",
                &record[0]
            ))
        })?;
        let sta = record[1].to_string();
        if sta.is_empty() {
            return Err(schema("empty station id".into()));
        }
        let rate = |field: &str, name: &str| -> Result<f64, TraceError> {
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
                _ => Err(TraceError::Schema {
                    line,
                    message: format!("{name} {field:?} is not a non-negative number"),
                }),
            }
        };
        let down = rate(&record[2], "down_mbps")?;
        let up = rate(&record[3], "up_mbps")?;
        if let Some(prev) = previous {
            if slot < prev {
                return Err(TraceError::NonMonotonic {
                    line,
                    slot,
                    previous: prev,
                });
            }
        }
        previous = Some(slot);
        stations.insert(sta.clone());
        if rows.insert((slot, sta.clone()), (down, up)).is_some() {
            return Err(schema(format!(
                "duplicate row for slot {slot}, station {sta}"
            )));
        }
    }

    let stations: Vec<String> = stations.into_iter().collect();
    let (Some(first), Some(last)) = (rows.keys().next().map(|k| k.0), previous) else {
        return Err(TraceError::Schema {
            line: 1,
            message: "trace has no rows".into(),
        });
    };
    let n = stations.len();
    let mut slots = vec![DemandSlot::zeros(n); (last - first + 1) as usize];
    for ((slot, sta), (down, up)) in rows {
        let s = stations.binary_search(&sta).expect("collected above");
        let d = &mut slots[(slot - first) as usize];
        d.down[s] = down;
        d.up[s] = up;
    }
    WorkloadTrace::with_first_slot(stations, first, slots)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<WorkloadTrace, TraceError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut trace = read_csv(std::io::BufReader::new(file))?;
    trace.origin.source = Some(path.display().to_string());
    Ok(trace)
}

/// Keeps the `k` stations with the largest total volume over the whole trace,
/// in their original order.
pub fn select_top_by_volume(trace: &WorkloadTrace, k: usize) -> Result<WorkloadTrace, TraceError> {
    if k == 0 || k > trace.n_stas() {
        return Err(TraceError::InvalidParam(format!(
            "cannot keep {k} of {} stations",
            trace.n_stas()
        )));
    }
    let mut keep = volume_rank(trace);
    keep.truncate(k);
    keep.sort_unstable();
    let slots = trace
        .slots
        .iter()
        .map(|d| DemandSlot {
            down: keep.iter().map(|&s| d.down[s]).collect(),
            up: keep.iter().map(|&s| d.up[s]).collect(),
        })
        .collect();
    let mut out = WorkloadTrace {
        stations: keep.iter().map(|&s| trace.stations[s].clone()).collect(),
        first_slot: trace.first_slot,
        slots,
        origin: trace.origin.clone(),
    };
    out.origin.transforms.push(format!("top{k}"));
    Ok(out)
}

/// Station indices by descending total volume, ties by index.
fn volume_rank(trace: &WorkloadTrace) -> Vec<usize> {
    let vol = trace.station_volumes();
    let mut idx: Vec<usize> = (0..trace.n_stas()).collect();
    idx.sort_by(|&a, &b| vol[b].total_cmp(&vol[a]).then(a.cmp(&b)));
    idx
}

/// Keeps only the larger direction in each station-slot; idle station-slots
/// get [`NOISE_FLOOR_MBPS`] of download.
pub fn preprocess_dominant(trace: &WorkloadTrace) -> WorkloadTrace {
    preprocess_dominant_with(trace, None)
}

/// As [`preprocess_dominant`]; with a seed the noise floor is jittered by up
/// to ±20%.
pub fn preprocess_dominant_with(trace: &WorkloadTrace, jitter_seed: Option<u64>) -> WorkloadTrace {
    let mut rng = jitter_seed.map(ChaCha8Rng::seed_from_u64);
    let note = match jitter_seed {
        Some(seed) => format!("dominant(jitter={seed})"),
        None => "dominant".to_string(),
    };
    trace.clone().map_rates(note, |_, down, up| {
        if *down == 0.0 && *up == 0.0 {
            let factor = rng.as_mut().map_or(1.0, |r| r.random_range(0.8..=1.2));
            *down = NOISE_FLOOR_MBPS * factor;
        } else if *down >= *up {
            *up = 0.0;
        } else {
            *down = 0.0;
        }
    })
}

/// Merges stations into `k` streams: stations ranked by descending volume are
/// dealt round-robin, rank `i` to stream `i mod k`.
pub fn aggregate_streams(trace: &WorkloadTrace, k: usize) -> Result<WorkloadTrace, TraceError> {
    if k == 0 || k > trace.n_stas() {
        return Err(TraceError::InvalidParam(format!(
            "cannot aggregate {} stations into {k} streams",
            trace.n_stas()
        )));
    }
    let mut stream_of = vec![0; trace.n_stas()];
    for (rank, s) in volume_rank(trace).into_iter().enumerate() {
        stream_of[s] = rank % k;
    }
    let slots = trace
        .slots
        .iter()
        .map(|d| {
            let mut out = DemandSlot::zeros(k);
            for (s, &g) in stream_of.iter().enumerate() {
                out.down[g] += d.down[s];
                out.up[g] += d.up[s];
            }
            out
        })
        .collect();
    let width = (k - 1).to_string().len().max(2);
    let mut out = WorkloadTrace {
        stations: (0..k).map(|i| format!("stream{i:0width$}")).collect(),
        first_slot: trace.first_slot,
        slots,
        origin: trace.origin.clone(),
    };
    out.origin.transforms.push(format!("aggregate{k}"));
    Ok(out)
}

pub fn scale_volume(trace: &WorkloadTrace, factor: f64) -> Result<WorkloadTrace, TraceError> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(TraceError::InvalidParam(format!(
            "scale factor {factor} must be positive"
        )));
    }
    Ok(trace
        .clone()
        .map_rates(format!("scale{factor}"), |_, d, u| {
            *d *= factor;
            *u *= factor;
        }))
}

pub fn drop_direction(trace: &WorkloadTrace, direction: Direction) -> WorkloadTrace {
    let note = match direction {
        Direction::Up => "drop-up",
        Direction::Down => "drop-down",
    };
    trace
        .clone()
        .map_rates(note.into(), |_, d, u| match direction {
            Direction::Up => *u = 0.0,
            Direction::Down => *d = 0.0,
        })
}

/// Lag-`lag` Pearson correlation of each station's dominant-rate series,
/// averaged over stations whose series is not constant.
pub fn lag_autocorrelation(trace: &WorkloadTrace, lag: usize) -> Result<f64, TraceError> {
    series_autocorrelation(&trace.dominant_series(), lag)
}

pub fn series_autocorrelation(series: &[Vec<f64>], lag: usize) -> Result<f64, TraceError> {
    let mut sum = 0.0;
    let mut used = 0usize;
    for x in series {
        if x.len() <= lag + 1 {
            return Err(TraceError::TooShort {
                slots: x.len(),
                lag,
            });
        }
        if let Some(r) = pearson(&x[..x.len() - lag], &x[lag..]) {
            sum += r;
            used += 1;
        }
    }
    if used == 0 {
        return Err(TraceError::Degenerate);
    }
    Ok((sum / used as f64).clamp(-1.0, 1.0))
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let denom = (saa * sbb).sqrt();
    // Relative threshold: a constant series leaves only rounding noise.
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    if denom <= (scale * scale * n) * 1e-24 || denom == 0.0 {
        None
    } else {
        Some(sab / denom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(rows: &[(&[f64], &[f64])]) -> WorkloadTrace {
        let n = rows[0].0.len();
        WorkloadTrace::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            rows.iter()
                .map(|(d, u)| DemandSlot::new(d.to_vec(), u.to_vec()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn reads_small_file() {
        let text = "slot,sta,down_mbps,up_mbps\n0,a,1,0\n0,b,2,0.5\n1,a,3,0\n1,b,4,0\n2,a,0,0\n2,b,1.5,2\n";
        let t = read_csv(text.as_bytes()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.n_stas(), 2);
        assert_eq!(t.slots()[2].down, vec![0.0, 1.5]);
        assert_eq!(t.slots()[0].up, vec![0.0, 0.5]);
    }

    #[test]
    fn missing_rows_read_as_zero() {
        let text = "slot,sta,down_mbps,up_mbps\n0,a,1,1\n0,b,2,2\n1,a,3,3\n2,a,1,0\n2,b,5,0\n";
        let t = read_csv(text.as_bytes()).unwrap();
        assert_eq!(t.slots()[1].down, vec![3.0, 0.0]);
        assert_eq!(t.slots()[1].up, vec![3.0, 0.0]);
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let bad_header = "minute,sta,down,up\n0,a,1,1\n";
        assert!(matches!(
            read_csv(bad_header.as_bytes()),
            Err(TraceError::Schema { line: 1, .. })
        ));
        let bad_rate = "slot,sta,down_mbps,up_mbps\n0,a,1,1\n0,b,-2,0\n";
        assert!(matches!(
            read_csv(bad_rate.as_bytes()),
            Err(TraceError::Schema { line: 3, .. })
        ));
        let backwards = "slot,sta,down_mbps,up_mbps\n1,a,1,1\n0,a,1,1\n";
        assert!(matches!(
            read_csv(backwards.as_bytes()),
            Err(TraceError::NonMonotonic {
                line: 3,
                slot: 0,
                previous: 1
            })
        ));
        let dup = "slot,sta,down_mbps,up_mbps\n0,a,1,1\n0,a,1,1\n";
        assert!(matches!(
            read_csv(dup.as_bytes()),
            Err(TraceError::Schema { line: 3, .. })
        ));
        assert!(read_csv("slot,sta,down_mbps,up_mbps\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let t = trace(&[(&[1.25, 0.0], &[0.0, 3.5]), (&[0.1, 7.0], &[2.0, 0.0])]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.slots(), t.slots());
        assert_eq!(back.stations(), t.stations());
    }

    #[test]
    fn dominant_rules() {
        let t = trace(&[(&[5.0, 0.0, 0.0, 2.0], &[3.0, 0.0, 7.0, 2.0])]);
        let p = preprocess_dominant(&t);
        let s = &p.slots()[0];
        assert_eq!((s.down[0], s.up[0]), (5.0, 0.0));
        assert_eq!((s.down[1], s.up[1]), (0.1, 0.0));
        assert_eq!((s.down[2], s.up[2]), (0.0, 7.0));
        assert_eq!((s.down[3], s.up[3]), (2.0, 0.0));
        assert_eq!(preprocess_dominant(&p).slots(), p.slots());
    }

    #[test]
    fn dominant_jitter_bounds() {
        let t = trace(&[(&[0.0; 50], &[0.0; 50])]);
        let p = preprocess_dominant_with(&t, Some(4));
        assert!(p.slots()[0]
            .down
            .iter()
            .all(|&d| (0.08..=0.12).contains(&d)));
        assert_eq!(p, preprocess_dominant_with(&t, Some(4)));
        assert_eq!(preprocess_dominant(&p).slots(), p.slots());
    }

    #[test]
    fn aggregation() {
        let t = trace(&[
            (&[1.0, 2.0, 3.0], &[0.0, 1.0, 0.0]),
            (&[4.0, 0.0, 0.0], &[1.0, 0.0, 0.0]),
        ]);
        let same = aggregate_streams(&t, 3).unwrap();
        // Volumes: s0 = 6, s1 = 3, s2 = 3 -> ranks s0, s1, s2.
        assert_eq!(same.slots()[0].down, vec![1.0, 2.0, 3.0]);
        let one = aggregate_streams(&t, 1).unwrap();
        assert_eq!(one.slots()[0].down, vec![6.0]);
        assert_eq!(one.slots()[1].up, vec![1.0]);
        assert!(aggregate_streams(&t, 4).is_err());
    }

    #[test]
    fn aggregation_21_into_8() {
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..5)
            .map(|t| {
                (
                    (0..21).map(|s| ((s * 7 + t * 3) % 11) as f64).collect(),
                    (0..21).map(|s| ((s + t) % 4) as f64 * 0.5).collect(),
                )
            })
            .collect();
        let t = WorkloadTrace::new(
            (0..21).map(|i| format!("m{i:02}")).collect(),
            rows.iter()
                .map(|(d, u)| DemandSlot::new(d.clone(), u.clone()).unwrap())
                .collect(),
        )
        .unwrap();
        let a = aggregate_streams(&t, 8).unwrap();
        assert_eq!(a.n_stas(), 8);
        for (x, y) in t.slots().iter().zip(a.slots()) {
            assert!((x.down.iter().sum::<f64>() - y.down.iter().sum::<f64>()).abs() < 1e-9);
            assert!((x.up.iter().sum::<f64>() - y.up.iter().sum::<f64>()).abs() < 1e-9);
        }
    }

    #[test]
    fn scaling_and_dropping() {
        let t = trace(&[(&[10.0], &[3.0])]);
        assert_eq!(scale_volume(&t, 5.0).unwrap().slots()[0].down, vec![50.0]);
        assert_eq!(scale_volume(&t, 1.0).unwrap().slots(), t.slots());
        assert_eq!(scale_volume(&t, 0.5).unwrap().slots()[0].down, vec![5.0]);
        assert!(scale_volume(&t, 0.0).is_err());
        let d = drop_direction(&t, Direction::Up);
        assert_eq!((d.slots()[0].down[0], d.slots()[0].up[0]), (10.0, 0.0));
        assert_eq!(drop_direction(&d, Direction::Up).slots(), d.slots());
        let none = drop_direction(&d, Direction::Down);
        assert_eq!(none.slots()[0], DemandSlot::zeros(1));
    }

    #[test]
    fn top_by_volume() {
        let t = trace(&[(&[1.0, 9.0, 5.0], &[0.0, 0.0, 0.0])]);
        let top = select_top_by_volume(&t, 2).unwrap();
        assert_eq!(top.stations(), &["s1".to_string(), "s2".to_string()]);
        assert_eq!(top.slots()[0].down, vec![9.0, 5.0]);
    }

    #[test]
    fn acf_alternating_is_minus_one() {
        let x: Vec<f64> = (0..200)
            .map(|t| 5.0 + if t % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let r = series_autocorrelation(&[x], 1).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn acf_trend_is_near_one() {
        let x: Vec<f64> = (0..100).map(|t| t as f64).collect();
        assert!(series_autocorrelation(&[x], 1).unwrap() >= 0.9);
    }

    #[test]
    fn acf_white_noise_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let r = series_autocorrelation(&[x], 1).unwrap();
        assert!(r.abs() < 0.05, "{r}");
    }

    #[test]
    fn acf_degenerate() {
        assert!(matches!(
            series_autocorrelation(&[vec![2.0; 10]], 1),
            Err(TraceError::Degenerate)
        ));
        assert!(matches!(
            series_autocorrelation(&[vec![1.0, 2.0]], 1),
            Err(TraceError::TooShort { .. })
        ));
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn any_trace() -> impl Strategy<Value = WorkloadTrace> {
            (1usize..6, 1usize..8).prop_flat_map(|(n, t)| {
                prop::collection::vec(
                    (
                        prop::collection::vec(0.0..50.0f64, n),
                        prop::collection::vec(0.0..50.0f64, n),
                    ),
                    t,
                )
                .prop_map(move |rows| {
                    WorkloadTrace::new(
                        (0..n).map(|i| format!("s{i}")).collect(),
                        rows.into_iter()
                            .map(|(d, u)| DemandSlot { down: d, up: u })
                            .collect(),
                    )
                    .unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn aggregation_conserves_volume(t in any_trace(), k in 1usize..6) {
                let k = k.min(t.n_stas());
                let a = aggregate_streams(&t, k).unwrap();
                for (x, y) in t.slots().iter().zip(a.slots()) {
                    prop_assert!((x.down.iter().sum::<f64>() - y.down.iter().sum::<f64>()).abs() < 1e-9);
                    prop_assert!((x.up.iter().sum::<f64>() - y.up.iter().sum::<f64>()).abs() < 1e-9);
                }
            }

            #[test]
            fn dominant_is_idempotent(t in any_trace()) {
                let once = preprocess_dominant(&t);
                let twice = preprocess_dominant(&once);
                prop_assert_eq!(twice.slots(), once.slots());
            }

            #[test]
            fn scaling_composes(t in any_trace(), a in 0.1..10.0f64, b in 0.1..10.0f64) {
                let two = scale_volume(&scale_volume(&t, a).unwrap(), b).unwrap();
                let one = scale_volume(&t, a * b).unwrap();
                for (x, y) in two.slots().iter().zip(one.slots()) {
                    for (p, q) in x.down.iter().chain(&x.up).zip(y.down.iter().chain(&y.up)) {
                        prop_assert!((p - q).abs() <= 1e-9 * (1.0 + q.abs()));
                    }
                }
            }
        }
    }
}
