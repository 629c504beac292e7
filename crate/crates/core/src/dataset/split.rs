use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::heads::Category;

use super::MemeRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    /// Categories with fewer than two items; their items all went to train.
    pub unstratified: Vec<Category>,
}

/// Seeded stratified split. Each category with at least two items is
/// shuffled and contributes within one item of `n · train_fraction` to
/// train. Both halves keep input order.
pub fn split<T: Clone>(
    items: &[T],
    category: impl Fn(&T) -> Category,
    seed: u64,
    train_fraction: f64,
) -> Result<Split<T>> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Argument(format!("train fraction {train_fraction} must lie in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; items.len()];
    let mut unstratified = Vec::new();
    let mut strata: Vec<Vec<usize>> = Vec::new();
    for c in Category::ALL {
        let mut idx: Vec<usize> = (0..items.len()).filter(|&i| category(&items[i]) == c).collect();
        match idx.len() {
            0 => {}
            1 => {
                log::warn!("category {c} has a single record; it goes to train unstratified");
                unstratified.push(c);
                in_train[idx[0]] = true;
            }
            _ => {
                idx.shuffle(&mut rng);
                strata.push(idx);
            }
        }
    }
    for (stratum, n_train) in strata.iter().zip(allocate(&strata, train_fraction)) {
        for &i in &stratum[..n_train] {
            in_train[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (item, t) in items.iter().zip(in_train) {
        if t { train.push(item.clone()) } else { test.push(item.clone()) }
    }
    Ok(Split { train, test, unstratified })
}

/// Largest-remainder allocation: the overall train size is
/// `round(N · train_fraction)` and each stratum gets the floor of its share
/// or one more. Ties in the remainder go to earlier strata.
fn allocate(strata: &[Vec<usize>], train_fraction: f64) -> Vec<usize> {
    let total: usize = strata.iter().map(Vec::len).sum();
    let target = (total as f64 * train_fraction).round() as usize;
    let shares: Vec<f64> = strata.iter().map(|s| s.len() as f64 * train_fraction).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut order: Vec<usize> = (0..strata.len()).collect();
    order.sort_by(|&a, &b| (shares[b] - shares[b].floor()).total_cmp(&(shares[a] - shares[a].floor())).then(a.cmp(&b)));
    let missing = target.saturating_sub(counts.iter().sum());
    for &k in order.iter().take(missing) {
        counts[k] += 1;
    }
    counts
}

pub fn split_records(records: &[MemeRecord], seed: u64, train_fraction: f64) -> Result<Split<MemeRecord>> {
    split(records, |r| r.category, seed, train_fraction)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn items() -> Vec<(usize, Category)> {
        (0..10).map(|i| (i, if i < 5 { Category::Kitchen } else { Category::Working })).collect()
    }

    #[test]
    fn half_split_is_stratified() {
        let s = split(&items(), |x| x.1, 4, 0.5).unwrap();
        assert_eq!(s.train.len(), 5);
        assert_eq!(s.test.len(), 5);
        let kitchen = s.train.iter().filter(|x| x.1 == Category::Kitchen).count();
        assert!(kitchen == 2 || kitchen == 3, "{kitchen}");
    }

    #[test]
    fn deterministic_partition() {
        let a = split(&items(), |x| x.1, 9, 0.7).unwrap();
        assert_eq!(a, split(&items(), |x| x.1, 9, 0.7).unwrap());
        let mut all: Vec<usize> = a.train.iter().chain(&a.test).map(|x| x.0).collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn singleton_category_goes_to_train() {
        let mut v = items();
        v.push((10, Category::Other));
        let s = split(&v, |x| x.1, 1, 0.5).unwrap();
        assert_eq!(s.unstratified, vec![Category::Other]);
        assert!(s.train.iter().any(|x| x.0 == 10));
    }

    #[test]
    fn fraction_bounds() {
        assert!(matches!(split(&items(), |x| x.1, 0, 1.0), Err(Error::Argument(_))));
        assert!(matches!(split(&items(), |x| x.1, 0, 0.0), Err(Error::Argument(_))));
    }
}
