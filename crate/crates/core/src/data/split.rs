use super::{DataError, Dataset};
use crate::rng::{streams, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self, DataError> {
        let f = Self { train, val, test };
        let positive = [train, val, test].iter().all(|x| *x > 0.0 && x.is_finite());
        if !positive || (train + val + test - 1.0).abs() > 1e-9 {
            return Err(DataError::BadFractions { train, val, test });
        }
        Ok(f)
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

// floor with a small tolerance so 100 * 0.29 counts as 29, not 28
fn portion(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction + 1e-9).floor() as usize
}

/// Stratified split. For each class in ascending order, that class's sample
/// indices are shuffled with one shared seeded stream, then cut into
/// `[train | val | test]` with `floor(n * val)` and `floor(n * test)` samples for
/// validation and test; the rounding remainder stays in train.
pub fn split_dataset(
    ds: &Dataset,
    fractions: SplitFractions,
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset), DataError> {
    let fractions = SplitFractions::new(fractions.train, fractions.val, fractions.test)?;
    if ds.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let mut rng = SplitMix64::for_stream(seed, streams::SPLIT);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for mut idx in ds.indices_by_class() {
        rng.shuffle(&mut idx);
        let n = idx.len();
        let n_val = portion(n, fractions.val);
        let n_test = portion(n, fractions.test);
        let n_train = n - n_val - n_test;
        train.extend_from_slice(&idx[..n_train]);
        val.extend_from_slice(&idx[n_train..n_train + n_val]);
        test.extend_from_slice(&idx[n_train + n_val..]);
    }
    Ok((ds.subset(&train), ds.subset(&val), ds.subset(&test)))
}
