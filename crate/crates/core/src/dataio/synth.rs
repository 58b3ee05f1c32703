use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::MultiViewDataset;
use crate::error::{Error, Result};
use crate::seed;

/// Gaussian blobs sharing one labelling across all views.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n: usize,
    pub k: usize,
    pub dims: Vec<usize>,
    /// Minimum pairwise distance between cluster centers in every view.
    pub sep: f64,
    /// Standard deviation of the isotropic noise.
    pub noise: f64,
    pub seed: u64,
}

pub fn synth_gaussian(p: &SynthParams) -> Result<MultiViewDataset> {
    if p.k < 2 || p.n < p.k {
        return Err(Error::InvalidArgument(format!(
            "need n >= k >= 2, got n={} k={}",
            p.n, p.k
        )));
    }
    if p.dims.is_empty() || p.dims.contains(&0) {
        return Err(Error::InvalidArgument(format!("invalid view dims {:?}", p.dims)));
    }
    if !(p.sep.is_finite() && p.sep > 0.0) || !(p.noise.is_finite() && p.noise >= 0.0) {
        return Err(Error::InvalidArgument("sep must be positive and noise non-negative".into()));
    }

    let mut rng = seed::rng(p.seed);
    let mut labels: Vec<usize> = (0..p.n).map(|i| i % p.k).collect();
    labels.shuffle(&mut rng);

    let noise = Normal::new(0.0, p.noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let views = p
        .dims
        .iter()
        .enumerate()
        .map(|(v, &d)| {
            let mut vrng = seed::rng(seed::derive(p.seed, 100 + v as u64));
            let centers = place_centers(p.k, d, p.sep, &mut vrng);
            let mut x = Array2::zeros((p.n, d));
            for (i, &c) in labels.iter().enumerate() {
                for j in 0..d {
                    let jitter = if p.noise > 0.0 { noise.sample(&mut vrng) } else { 0.0 };
                    x[[i, j]] = centers[[c, j]] + jitter;
                }
            }
            x
        })
        .collect();
    MultiViewDataset::new(views, Some(labels))
}

/// Centers at pairwise distance at least `sep`: signed, scaled axis vectors
/// when `d >= k`, otherwise Gaussian directions rescaled so the closest
/// pair sits exactly at `sep`.
fn place_centers<R: Rng>(k: usize, d: usize, sep: f64, rng: &mut R) -> Array2<f64> {
    let mut centers = Array2::zeros((k, d));
    if d >= k {
        let mut axes: Vec<usize> = (0..d).collect();
        axes.shuffle(rng);
        let radius = sep / std::f64::consts::SQRT_2;
        for (c, &axis) in axes.iter().take(k).enumerate() {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            centers[[c, axis]] = sign * radius;
        }
        return centers;
    }
    loop {
        centers.mapv_inplace(|_| StandardNormal.sample(rng));
        let mut closest = f64::INFINITY;
        for a in 0..k {
            for b in a + 1..k {
                let d2: f64 = (&centers.row(a) - &centers.row(b)).mapv(|v| v * v).sum();
                closest = closest.min(d2.sqrt());
            }
        }
        if closest > 1e-9 {
            centers *= sep / closest;
            return centers;
        }
    }
}
