use super::Dataset;
use crate::error::{invalid, Error, Result};
use crate::rng::Rng;

pub const DEFAULT_VAL_FRACTION: f64 = 0.2;

/// Train/validation partition as sorted record indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Stratified split: each class sends `round(val_fraction · n)` records to validation.
pub fn split(ds: &Dataset, val_fraction: f64, seed: u64) -> Result<Split> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(invalid(format!("validation fraction {val_fraction} must lie in (0, 1)")));
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (class, members) in ds.by_class().into_iter().enumerate() {
        let n = members.len();
        let n_val = (val_fraction * n as f64).round() as usize;
        if n_val == 0 || n_val == n {
            return Err(Error::Data(format!(
                "validation fraction {val_fraction} leaves class '{}' ({n} images) with an empty side",
                ds.labels().label(class)
            )));
        }
        let order = Rng::derive(seed, &[0x5917, class as u64]).permutation(n);
        for (pos, &o) in order.iter().enumerate() {
            if pos < n_val {
                val.push(members[o]);
            } else {
                train.push(members[o]);
            }
        }
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok(Split { train, val })
}

/// Stratified k-fold partition; fold `i` validates on its share of every class.
pub fn kfold(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<Split>> {
    if k < 2 {
        return Err(invalid(format!("k-fold needs k ≥ 2, got {k}")));
    }
    let mut fold_of = vec![0usize; ds.len()];
    for (class, members) in ds.by_class().into_iter().enumerate() {
        if members.len() < k {
            return Err(Error::Data(format!(
                "class '{}' has {} images, fewer than {k} folds",
                ds.labels().label(class),
                members.len()
            )));
        }
        let order = Rng::derive(seed, &[0xF01D, class as u64]).permutation(members.len());
        for (pos, &o) in order.iter().enumerate() {
            fold_of[members[o]] = pos % k;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (val, train): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| fold_of[i] == f);
            Split { train, val }
        })
        .collect())
}
