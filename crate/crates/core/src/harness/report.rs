//! Result tables and per-slot series, as CSV and as aligned text.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{HarnessError, PolicyResult};

/// How table cells are rendered as text. CSV always carries full precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellUnit {
    /// A fraction shown as an integer percentage.
    Fraction,
    Mbps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub title: String,
    pub unit: CellUnit,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl ResultTable {
    pub fn new(title: impl Into<String>, columns: Vec<String>) -> Self {
        Self {
            title: title.into(),
            unit: CellUnit::Fraction,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn with_unit(mut self, unit: CellUnit) -> Self {
        self.unit = unit;
        self
    }

    pub fn push(&mut self, label: &str, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push((label.to_string(), values));
    }

    pub fn row(&self, label: &str) -> Option<&[f64]> {
        self.rows
            .iter()
            .find(|r| r.0 == label)
            .map(|r| r.1.as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["row".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (label, values) in &self.rows {
            let mut rec = vec![label.clone()];
            rec.extend(values.iter().map(f64::to_string));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }

    pub fn render_text(&self) -> String {
        let cell = |v: f64| match self.unit {
            CellUnit::Fraction => format!("{}%", round_half_up_percent(v)),
            CellUnit::Mbps => format!("{v:.1}"),
        };
        let body: Vec<(String, Vec<String>)> = self
            .rows
            .iter()
            .map(|(l, vs)| (l.clone(), vs.iter().map(|&v| cell(v)).collect()))
            .collect();
        let label_w = body.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let widths: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| {
                body.iter()
                    .map(|r| r.1[i].len())
                    .chain([c.len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();

        let mut out = format!("{}\n", self.title);
        out.push_str(&format!("{:label_w$}", ""));
        for (c, w) in self.columns.iter().zip(&widths) {
            out.push_str(&format!("  {c:>w$}"));
        }
        out.push('\n');
        for (label, cells) in &body {
            out.push_str(&format!("{label:label_w$}"));
            for (c, w) in cells.iter().zip(&widths) {
                out.push_str(&format!("  {c:>w$}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Percentage rounded half-up to an integer.
pub fn round_half_up_percent(fraction: f64) -> i64 {
    (fraction * 100.0 + 0.5 + 1e-9).floor() as i64
}

/// `0.1` → `"10"`, `0.125` → `"12.5"`.
pub(crate) fn format_percent_label(p: f64) -> String {
    let s = format!("{:.6}", p * 100.0);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// One row of a per-slot series file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub slot: usize,
    pub policy: String,
    pub alloc_index: usize,
    pub throughput_mbps: f64,
}

impl SeriesRecord {
    pub fn from_result(policy: &str, r: &PolicyResult) -> Vec<SeriesRecord> {
        r.allocs
            .iter()
            .zip(&r.series)
            .enumerate()
            .map(|(i, (&a, &v))| SeriesRecord {
                slot: r.first_slot + i,
                policy: policy.to_string(),
                alloc_index: a,
                throughput_mbps: v,
            })
            .collect()
    }
}

/// Writes `slot,policy,alloc_index,throughput_mbps`.
pub fn write_series_csv<W: Write>(records: &[SeriesRecord], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series_csv<R: Read>(input: R) -> Result<Vec<SeriesRecord>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Per-policy slot count and mean throughput, in order of first appearance.
pub fn summarize_series(records: &[SeriesRecord]) -> ResultTable {
    let mut order: Vec<&str> = Vec::new();
    let mut acc: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(&r.policy).or_insert_with(|| {
            order.push(&r.policy);
            (0, 0.0)
        });
        e.0 += 1;
        e.1 += r.throughput_mbps;
    }
    let mut t = ResultTable::new(
        "Mean throughput per policy (Mbps)",
        vec!["slots".into(), "mean".into()],
    )
    .with_unit(CellUnit::Mbps);
    for p in order {
        let (n, sum) = acc[p];
        t.push(p, vec![n as f64, sum / n as f64]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_half_up_percent(0.912_621), 91);
        assert_eq!(round_half_up_percent(0.789_474), 79);
        assert_eq!(round_half_up_percent(0.125), 13);
        assert_eq!(round_half_up_percent(0.705), 71);
        assert_eq!(round_half_up_percent(0.0), 0);
        assert_eq!(round_half_up_percent(-0.05), -5);
    }

    #[test]
    fn percent_labels() {
        assert_eq!(format_percent_label(0.1), "10");
        assert_eq!(format_percent_label(0.9), "90");
        assert_eq!(format_percent_label(0.125), "12.5");
    }

    #[test]
    fn csv_and_text() {
        let mut t = ResultTable::new("T", vec!["10%".into(), "30%".into()]);
        t.push("Optimal", vec![0.27, 0.3]);
        t.push("LR", vec![0.19, 0.2]);
        assert_eq!(t.to_csv(), "row,10%,30%\nOptimal,0.27,0.3\nLR,0.19,0.2\n");
        let text = t.render_text();
        assert!(text.contains("Optimal  27%  30%"), "{text}");
        assert_eq!(t.row("LR"), Some(&[0.19, 0.2][..]));
    }

    #[test]
    fn series_round_trip_and_summary() {
        let r = PolicyResult::new(5, vec![0, 1], vec![10.0, 20.0]);
        let mut recs = SeriesRecord::from_result("optimal", &r);
        recs.extend(SeriesRecord::from_result(
            "fixed",
            &PolicyResult::new(5, vec![2], vec![4.0]),
        ));
        let mut buf = Vec::new();
        write_series_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("slot,policy,alloc_index,throughput_mbps\n5,optimal,0,10.0\n"));
        let back = read_series_csv(&buf[..]).unwrap();
        assert_eq!(back, recs);
        let s = summarize_series(&back);
        assert_eq!(s.row("optimal"), Some(&[2.0, 15.0][..]));
        assert_eq!(s.rows[1].0, "fixed");
    }
}
