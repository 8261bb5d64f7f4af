use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Serialize, Serializer};

/// Relative improvement in whole percent; undefined for a zero baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relative {
    Percent(i64),
    NotApplicable,
}

impl fmt::Display for Relative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relative::Percent(p) => write!(f, "{p:+}%"),
            Relative::NotApplicable => f.write_str("n/a"),
        }
    }
}

impl Serialize for Relative {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Relative::Percent(p) => s.serialize_i64(*p),
            Relative::NotApplicable => s.serialize_str("n/a"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Improvement {
    /// Percentage points, two decimals.
    pub absolute: f64,
    pub relative: Relative,
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}

/// `summary - code` in points (2 decimals) and relative to `code` in whole percent.
pub fn improvement(code: f64, summary: f64) -> Improvement {
    let diff = summary - code;
    let relative = if code == 0.0 {
        Relative::NotApplicable
    } else {
        Relative::Percent((diff / code * 100.0).round() as i64)
    };
    Improvement {
        absolute: round_to(diff, 2),
        relative,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollectionMetrics {
    pub pass_at: BTreeMap<usize, f64>,
    /// Coverage at the report's headline cutoff.
    pub coverage: f64,
    /// NDCG at the report's headline cutoff.
    pub ndcg: f64,
    pub coverage_at: BTreeMap<usize, f64>,
    pub ndcg_at: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub queries: usize,
    pub functions: usize,
    pub ks: Vec<usize>,
    /// Cutoff used for the headline coverage and NDCG values.
    pub headline_k: usize,
    pub code: CollectionMetrics,
    pub summary: CollectionMetrics,
    pub improvements: BTreeMap<usize, Improvement>,
}

impl MetricsReport {
    /// Lists every violated metric invariant; empty means the report is sound.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for (label, m) in [("code", &self.code), ("summary", &self.summary)] {
            let mut prev_pass = 0.0;
            let mut prev_cov = 0.0;
            for k in &self.ks {
                let p = m.pass_at[k];
                let c = m.coverage_at[k];
                let n = m.ndcg_at[k];
                if p < prev_pass {
                    problems.push(format!("{label}: Pass@{k} = {p} decreases"));
                }
                if c < prev_cov {
                    problems.push(format!("{label}: Coverage@{k} = {c} decreases"));
                }
                for (name, v) in [("Pass", p), ("Coverage", c)] {
                    if !(0.0..=100.0).contains(&v) {
                        problems.push(format!("{label}: {name}@{k} = {v} outside [0, 100]"));
                    }
                }
                if !(0.0..=1.0 + 1e-12).contains(&n) {
                    problems.push(format!("{label}: NDCG@{k} = {n} outside [0, 1]"));
                }
                prev_pass = p;
                prev_cov = c;
            }
        }
        problems
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report serializes");
        out.push(b'\n');
        out
    }

    /// Aligned text: absolute scores per collection, then improvement rows.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "queries: {}  functions: {}  coverage/ndcg cutoff: k={}",
            self.queries, self.functions, self.headline_k
        );
        let _ = writeln!(out);

        let mut header = format!("{:<10}", "");
        for k in &self.ks {
            let _ = write!(header, " {:>17}", format!("Pass@{k}"));
        }
        let _ = write!(header, " {:>17} {:>17}", "Coverage", "NDCG");
        let _ = writeln!(out, "{}", header.trim_end());

        let mut sub = format!("{:<10}", "");
        for _ in 0..self.ks.len() + 2 {
            let _ = write!(sub, " {:>8} {:>8}", "Code", "Summary");
        }
        let _ = writeln!(out, "{}", sub.trim_end());

        let mut row = format!("{:<10}", "absolute");
        for k in &self.ks {
            let _ = write!(row, " {:>8.2} {:>8.2}", self.code.pass_at[k], self.summary.pass_at[k]);
        }
        let _ = write!(row, " {:>8.2} {:>8.2}", self.code.coverage, self.summary.coverage);
        let _ = write!(row, " {:>8.4} {:>8.4}", self.code.ndcg, self.summary.ndcg);
        let _ = writeln!(out, "{row}");
        let _ = writeln!(out);

        let mut header = format!("{:<10}", "");
        for k in &self.ks {
            let _ = write!(header, " {:>17}", format!("Pass@{k}"));
        }
        let _ = writeln!(out, "{}", header.trim_end());
        let mut sub = format!("{:<10}", "");
        for _ in &self.ks {
            let _ = write!(sub, " {:>8} {:>8}", "Abs.Imp", "Rel.Imp");
        }
        let _ = writeln!(out, "{}", sub.trim_end());
        let mut row = format!("{:<10}", "improve");
        for k in &self.ks {
            let imp = &self.improvements[k];
            let _ = write!(row, " {:>+8.2} {:>8}", imp.absolute, imp.relative.to_string());
        }
        let _ = writeln!(out, "{row}");
        out
    }
}
