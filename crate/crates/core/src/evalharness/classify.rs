use crate::error::{Error, Result};
use crate::heads::Category;

/// Binary confusion counts for one positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Confusion::default();
        for (pred, gold) in pairs {
            match (pred, gold) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `2PR / (P + R)`, or 0 when precision and recall are both 0 or undefined.
    pub fn f1(&self) -> f64 {
        let precision = if self.tp + self.fp == 0 { 0.0 } else { self.tp as f64 / (self.tp + self.fp) as f64 };
        let recall = if self.tp + self.fn_ == 0 { 0.0 } else { self.tp as f64 / (self.tp + self.fn_) as f64 };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Argument(format!("{a} predictions but {b} gold labels")));
    }
    if a == 0 {
        return Err(Error::Argument("no items to evaluate".into()));
    }
    Ok(())
}

/// F1 on the positive (misogynous) class.
pub fn f1(preds: &[bool], golds: &[bool]) -> Result<f64> {
    check_lengths(preds.len(), golds.len())?;
    Ok(Confusion::from_pairs(preds.iter().copied().zip(golds.iter().copied())).f1())
}

/// One-vs-rest F1 for each category, in category order.
pub fn per_class_f1(preds: &[Category], golds: &[Category]) -> Result<[f64; Category::COUNT]> {
    check_lengths(preds.len(), golds.len())?;
    Ok(Category::ALL.map(|c| Confusion::from_pairs(preds.iter().zip(golds).map(|(p, g)| (*p == c, *g == c))).f1()))
}

/// Unweighted mean of the five per-class F1 scores; absent classes count as 0.
pub fn macro_f1(preds: &[Category], golds: &[Category]) -> Result<f64> {
    Ok(per_class_f1(preds, golds)?.iter().sum::<f64>() / Category::COUNT as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Category::*;

    #[test]
    fn hand_case() {
        let f = f1(&[true, true, false], &[true, false, false]).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_perfect() {
        assert_eq!(f1(&[false, false], &[false, false]).unwrap(), 0.0);
        assert_eq!(f1(&[true, false], &[true, false]).unwrap(), 1.0);
        assert!(matches!(f1(&[true], &[]), Err(Error::Argument(_))));
        assert!(matches!(f1(&[], &[]), Err(Error::Argument(_))));
    }

    #[test]
    fn macro_rules() {
        assert_eq!(macro_f1(&Category::ALL, &Category::ALL).unwrap(), 1.0);
        assert!((macro_f1(&[Kitchen, Kitchen], &[Kitchen, Kitchen]).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(macro_f1(&[Kitchen], &[]), Err(Error::Argument(_))));
    }

    #[test]
    fn six_item_brute_force() {
        let preds = [Kitchen, Leadership, Kitchen, Shopping, Working, Working];
        let golds = [Kitchen, Kitchen, Kitchen, Shopping, Leadership, Working];
        // Kitchen: tp 2, fp 0, fn 1 -> P 1, R 2/3 -> 0.8
        // Leadership: tp 0 -> 0; Working: tp 1, fp 1, fn 0 -> 2/3
        // Shopping: 1; Other: absent -> 0
        let expected = [0.8, 0.0, 2.0 / 3.0, 1.0, 0.0];
        let per = per_class_f1(&preds, &golds).unwrap();
        for (a, b) in per.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let m = macro_f1(&preds, &golds).unwrap();
        assert!((m - expected.iter().sum::<f64>() / 5.0).abs() < 1e-12);
    }
}
