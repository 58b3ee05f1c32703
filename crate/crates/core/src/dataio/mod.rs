//! Multi-view datasets, availability masks and their on-disk CSV formats.
//!
//! A dataset directory holds `view_<v>.csv` (no header, one sample per
//! row), an optional `labels.csv` (one non-negative integer per line) and
//! an optional `mask.csv` (`N` rows of `V` comma-separated 0/1 flags).

mod io;
mod mask;
mod synth;

pub use io::{load_dataset, load_mask, read_matrix_csv, save_dataset, save_mask, write_matrix_csv};
pub use mask::{generate_mask, AvailabilityMask};
pub use synth::{synth_gaussian, SynthParams};

use ndarray::{Array2, ArrayView2};

use crate::error::{shape_err, Error, Result};

/// `V` feature matrices over the same `N` samples, plus optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    views: Vec<Array2<f64>>,
    labels: Option<Vec<usize>>,
}

impl MultiViewDataset {
    pub fn new(views: Vec<Array2<f64>>, labels: Option<Vec<usize>>) -> Result<Self> {
        let first = views
            .first()
            .ok_or_else(|| Error::InvalidArgument("dataset needs at least one view".into()))?;
        let n = first.nrows();
        for (v, x) in views.iter().enumerate() {
            if x.nrows() != n {
                return Err(Error::RowCountMismatch {
                    view: v,
                    expected: n,
                    actual: x.nrows(),
                });
            }
            if x.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite(format!("view {v}")));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(shape_err("labels", n, l.len()));
            }
        }
        Ok(Self { views, labels })
    }

    pub fn n(&self) -> usize {
        self.views[0].nrows()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(|x| x.ncols()).collect()
    }

    pub fn view(&self, v: usize) -> ArrayView2<'_, f64> {
        self.views[v].view()
    }

    pub fn views(&self) -> &[Array2<f64>] {
        &self.views
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of distinct label values, if labels are present.
    pub fn n_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| {
            let mut s = l.clone();
            s.sort_unstable();
            s.dedup();
            s.len()
        })
    }
}

/// Per-feature min-max scaling to `[0, 1]`.
///
/// Ranges are taken over available entries only when a mask is given.
/// Constant columns map to 0. Unavailable entries are rescaled with the
/// same affine map (and may leave `[0, 1]`); they are never read by a loss.
pub fn normalize_views(ds: &MultiViewDataset, mask: Option<&AvailabilityMask>) -> Result<MultiViewDataset> {
    if let Some(m) = mask {
        m.check_matches(ds)?;
    }
    let views = ds
        .views
        .iter()
        .enumerate()
        .map(|(v, x)| {
            let rows: Vec<usize> = match mask {
                Some(m) => m.rows_with(v),
                None => (0..x.nrows()).collect(),
            };
            let mut out = x.clone();
            for (col_idx, mut col) in out.columns_mut().into_iter().enumerate() {
                let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let c = x[[i, col_idx]];
                    (lo.min(c), hi.max(c))
                });
                let range = hi - lo;
                if rows.is_empty() || range <= 0.0 {
                    col.fill(0.0);
                } else {
                    col.mapv_inplace(|c| (c - lo) / range);
                }
            }
            out
        })
        .collect();
    MultiViewDataset::new(views, ds.labels.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_row_mismatch_and_nan() {
        let a = Array2::zeros((4, 2));
        let b = Array2::zeros((5, 2));
        assert!(matches!(
            MultiViewDataset::new(vec![a.clone(), b], None),
            Err(Error::RowCountMismatch { view: 1, .. })
        ));
        let mut c = Array2::zeros((4, 2));
        c[[1, 1]] = f64::NAN;
        assert!(MultiViewDataset::new(vec![a.clone(), c], None).is_err());
        assert!(MultiViewDataset::new(vec![a], Some(vec![0, 1])).is_err());
    }

    #[test]
    fn min_max_examples() {
        let x = array![[0.0, 3.0, 0.2], [5.0, 3.0, 0.0], [10.0, 3.0, 1.0]];
        let ds = MultiViewDataset::new(vec![x.clone()], None).unwrap();
        let out = normalize_views(&ds, None).unwrap();
        assert_eq!(out.view(0).column(0).to_vec(), vec![0.0, 0.5, 1.0]);
        assert_eq!(out.view(0).column(1).to_vec(), vec![0.0, 0.0, 0.0]);
        assert_eq!(out.view(0).column(2), x.column(2));
    }

    #[test]
    fn masked_rows_do_not_set_the_range() {
        let x1 = array![[0.0], [10.0], [100.0]];
        let x2 = array![[1.0], [2.0], [3.0]];
        let ds = MultiViewDataset::new(vec![x1, x2], None).unwrap();
        let mask = AvailabilityMask::new(array![[true, true], [true, true], [false, true]]).unwrap();
        let out = normalize_views(&ds, Some(&mask)).unwrap();
        assert_eq!(out.view(0)[[1, 0]], 1.0);
        assert_eq!(out.view(0)[[2, 0]], 10.0);
    }

    #[test]
    fn class_count() {
        let ds = MultiViewDataset::new(vec![Array2::zeros((4, 1))], Some(vec![3, 1, 3, 0])).unwrap();
        assert_eq!(ds.n_classes(), Some(3));
    }
}
