use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use super::MultiViewDataset;
use crate::error::{shape_err, Error, Result};
use crate::seed;

/// `N x V` availability indicator; `true` means the sample is observed in
/// that view. Every row has at least one available view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvailabilityMask {
    entries: Array2<bool>,
}

impl AvailabilityMask {
    pub fn new(entries: Array2<bool>) -> Result<Self> {
        if let Some(i) = entries.rows().into_iter().position(|r| !r.iter().any(|&a| a)) {
            return Err(Error::InvalidArgument(format!("sample {i} has no available view")));
        }
        Ok(Self { entries })
    }

    pub fn full(n: usize, v: usize) -> Self {
        Self {
            entries: Array2::from_elem((n, v), true),
        }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_views(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &Array2<bool> {
        &self.entries
    }

    #[inline]
    pub fn available(&self, i: usize, v: usize) -> bool {
        self.entries[[i, v]]
    }

    pub fn is_complete(&self, i: usize) -> bool {
        self.entries.row(i).iter().all(|&a| a)
    }

    /// Indices of samples observed in view `v`.
    pub fn rows_with(&self, v: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.entries[[i, v]]).collect()
    }

    pub fn incomplete_count(&self) -> usize {
        (0..self.n()).filter(|&i| !self.is_complete(i)).count()
    }

    pub fn is_all_available(&self) -> bool {
        self.entries.iter().all(|&a| a)
    }

    /// Errors unless the mask is `N x V` for this dataset.
    pub fn check_matches(&self, ds: &MultiViewDataset) -> Result<()> {
        if self.entries.dim() != (ds.n(), ds.n_views()) {
            return Err(shape_err("availability mask", (ds.n(), ds.n_views()), self.entries.dim()));
        }
        Ok(())
    }
}

/// Marks exactly `round(missing_rate * n)` samples incomplete.
///
/// With two views an incomplete sample loses one uniformly chosen view;
/// with more it loses a uniformly random nonempty proper subset.
pub fn generate_mask(n: usize, v: usize, missing_rate: f64, seed: u64) -> Result<AvailabilityMask> {
    if v < 2 {
        return Err(Error::InvalidArgument(format!("masking needs at least 2 views, got {v}")));
    }
    if v >= 64 {
        return Err(Error::InvalidArgument(format!("at most 63 views supported, got {v}")));
    }
    if !(0.0..1.0).contains(&missing_rate) {
        return Err(Error::InvalidArgument(format!(
            "missing rate must be in [0, 1), got {missing_rate}"
        )));
    }
    let incomplete = (missing_rate * n as f64).round() as usize;
    let mut rng = seed::rng(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut entries = Array2::from_elem((n, v), true);
    // Bitmasks 1..=2^v-2 are exactly the nonempty proper subsets.
    let subsets = (1u64 << v) - 2;
    for &i in &order[..incomplete] {
        let removed = rng.random_range(1..=subsets);
        for view in 0..v {
            if removed & (1 << view) != 0 {
                entries[[i, view]] = false;
            }
        }
    }
    AvailabilityMask::new(entries)
}
