use std::fmt::Write as _;

use crate::evalharness::round_half_up;
use crate::heads::Category;

use super::{MemeRecord, TextKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoryStats {
    pub count: usize,
    pub different: usize,
    pub same: usize,
    pub image: usize,
    /// `count / total`, rounded half-up to two decimals.
    pub proportion: f64,
}

/// Per-category counts for the categories present, in category order.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub rows: Vec<(Category, CategoryStats)>,
    pub total: CategoryStats,
}

pub fn compute_stats(records: &[MemeRecord]) -> DatasetStats {
    let mut counts = [[0usize; 3]; Category::COUNT];
    for r in records {
        let slot = match r.text_kind {
            TextKind::Different => 0,
            TextKind::Same => 1,
            TextKind::Image => 2,
        };
        counts[r.category.code()][slot] += 1;
    }
    let total_n = records.len();
    let make = |c: [usize; 3]| {
        let count = c.iter().sum::<usize>();
        let proportion = if total_n == 0 { 0.0 } else { round_half_up(count as f64 / total_n as f64, 2) };
        CategoryStats { count, different: c[0], same: c[1], image: c[2], proportion }
    };
    let rows = Category::ALL
        .into_iter()
        .filter(|c| counts[c.code()].iter().sum::<usize>() > 0)
        .map(|c| (c, make(counts[c.code()])))
        .collect();
    let mut sum = [0usize; 3];
    for c in &counts {
        for k in 0..3 {
            sum[k] += c[k];
        }
    }
    DatasetStats { rows, total: make(sum) }
}

impl DatasetStats {
    fn labelled_rows(&self) -> impl Iterator<Item = (&str, &CategoryStats)> {
        self.rows.iter().map(|(c, s)| (c.name(), s)).chain(std::iter::once(("Total", &self.total)))
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<12} {:>6} {:>20} {:>10}", "Category", "Count", "(Diff, Same, Image)", "Proportion").unwrap();
        for (name, s) in self.labelled_rows() {
            let triple = format!("({}, {}, {})", s.different, s.same, s.image);
            writeln!(out, "{:<12} {:>6} {:>20} {:>10.2}", name, s.count, triple, s.proportion).unwrap();
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,count,different,same,image,proportion\n");
        for (name, s) in self.labelled_rows() {
            writeln!(out, "{name},{},{},{},{},{:.2}", s.count, s.different, s.same, s.image, s.proportion).unwrap();
        }
        out
    }
}
