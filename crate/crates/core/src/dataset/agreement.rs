use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Items × categories rating counts with a fixed number of raters per item.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsMatrix {
    counts: Vec<Vec<u32>>,
    raters: u32,
}

impl RatingsMatrix {
    pub fn new(counts: Vec<Vec<u32>>) -> Result<Self> {
        let first = counts.first().ok_or_else(|| Error::Validation("ratings matrix has no items".into()))?;
        let width = first.len();
        if width == 0 {
            return Err(Error::Validation("ratings matrix has no categories".into()));
        }
        let raters: u32 = first.iter().sum();
        for (i, row) in counts.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Validation(format!("item {i} has {} categories, expected {width}", row.len())));
            }
            let n: u32 = row.iter().sum();
            if n != raters {
                return Err(Error::Validation(format!("item {i} has {n} ratings, expected {raters}")));
            }
        }
        if raters < 2 {
            return Err(Error::Validation(format!("need at least 2 raters per item, got {raters}")));
        }
        Ok(RatingsMatrix { counts, raters })
    }

    pub fn items(&self) -> usize {
        self.counts.len()
    }

    pub fn categories(&self) -> usize {
        self.counts[0].len()
    }

    pub fn raters(&self) -> u32 {
        self.raters
    }

    pub fn counts(&self) -> &[Vec<u32>] {
        &self.counts
    }
}

/// Fleiss' kappa. Returns exactly 1 when every item is unanimous, unless a
/// single category received every rating: chance agreement is then 1 and
/// kappa is 0/0, reported as [`Error::DegenerateAgreement`].
pub fn fleiss_kappa(m: &RatingsMatrix) -> Result<f64> {
    let n = m.raters as f64;
    let items = m.items() as f64;
    let used = (0..m.categories()).filter(|&j| m.counts.iter().any(|row| row[j] > 0)).count();
    if used == 1 {
        return Err(Error::DegenerateAgreement { observed: 1.0 });
    }
    if m.counts.iter().all(|row| row.contains(&m.raters)) {
        return Ok(1.0);
    }
    let p_bar = m
        .counts
        .iter()
        .map(|row| {
            let sq: f64 = row.iter().map(|&c| (c as f64) * (c as f64)).sum();
            (sq - n) / (n * (n - 1.0))
        })
        .sum::<f64>()
        / items;
    let p_e: f64 = (0..m.categories())
        .map(|j| {
            let col: f64 = m.counts.iter().map(|row| row[j] as f64).sum();
            let p = col / (items * n);
            p * p
        })
        .sum();
    if p_e >= 1.0 {
        return Err(Error::DegenerateAgreement { observed: p_bar });
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Peer-review ratings for one annotator: accuracy and consistency on a
/// 1–5 scale, plus their agreement kappa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorScores {
    pub accuracy: f64,
    pub consistency: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatorSummary {
    pub rows: Vec<AnnotatorScores>,
    pub average: AnnotatorScores,
}

pub fn annotator_summary(scores: &[AnnotatorScores]) -> Result<AnnotatorSummary> {
    if scores.is_empty() {
        return Err(Error::Validation("no annotator scores".into()));
    }
    for (i, s) in scores.iter().enumerate() {
        for (what, v) in [("accuracy", s.accuracy), ("consistency", s.consistency)] {
            if !(1.0..=5.0).contains(&v) {
                return Err(Error::Validation(format!("annotator {}: {what} {v} outside [1, 5]", i + 1)));
            }
        }
        if !(-1.0..=1.0).contains(&s.kappa) {
            return Err(Error::Validation(format!("annotator {}: kappa {} outside [-1, 1]", i + 1, s.kappa)));
        }
    }
    let k = scores.len() as f64;
    let mean = |f: fn(&AnnotatorScores) -> f64| scores.iter().map(f).sum::<f64>() / k;
    Ok(AnnotatorSummary {
        rows: scores.to_vec(),
        average: AnnotatorScores {
            accuracy: mean(|s| s.accuracy),
            consistency: mean(|s| s.consistency),
            kappa: mean(|s| s.kappa),
        },
    })
}

impl AnnotatorSummary {
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<10} {:>8} {:>11} {:>6}\n", "Annotator", "Accuracy", "Consistency", "Kappa");
        let line = |name: String, s: &AnnotatorScores| {
            format!("{:<10} {:>8.1} {:>11.1} {:>6.2}\n", name, s.accuracy, s.consistency, s.kappa)
        };
        for (i, s) in self.rows.iter().enumerate() {
            out.push_str(&line(format!("A{}", i + 1), s));
        }
        out.push_str(&line("Average".into(), &self.average));
        out
    }
}
