use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
    /// Lloyd iterations stop once no center moves farther than this.
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: 50,
            max_iter: 300,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
    /// Within-cluster sum of squared distances to the cluster means.
    pub inertia: f64,
    pub iterations: usize,
    /// Index of the restart that produced this result.
    pub restart: usize,
}

pub fn kmeans(x: ArrayView2<f64>, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    kmeans_with(
        x,
        k,
        &KMeansOptions {
            restarts,
            ..KMeansOptions::default()
        },
        seed,
    )
}

/// Best-of-`restarts` Lloyd's algorithm with k-means++ seeding. Ties in
/// inertia go to the lowest restart index.
pub fn kmeans_with(x: ArrayView2<f64>, k: usize, opts: &KMeansOptions, seed: u64) -> Result<KMeansResult> {
    let n = x.nrows();
    if k == 0 || n < k {
        return Err(Error::InvalidArgument(format!("k-means needs n >= k >= 1, got n={n} k={k}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means input".into()));
    }
    let mut best: Option<KMeansResult> = None;
    for restart in 0..opts.restarts.max(1) {
        let mut rng = seed::rng(seed::derive(seed, restart as u64));
        let mut run = lloyd(x, k, opts, &mut rng);
        run.restart = restart;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[inline]
fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn plus_plus<R: Rng>(x: ArrayView2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = x.nrows();
    let mut centers = Array2::zeros((k, x.ncols()));
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&x.row(first));
    chosen[first] = true;
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // Every point coincides with a center already; take an unused one.
            let unused: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            unused[rng.random_range(0..unused.len())]
        };
        chosen[pick] = true;
        centers.row_mut(c).assign(&x.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centers
}

fn assign(x: ArrayView2<f64>, centers: &Array2<f64>, labels: &mut [usize], dists: &mut [f64]) {
    for (i, row) in x.rows().into_iter().enumerate() {
        let mut best = (0, f64::INFINITY);
        for (c, center) in centers.rows().into_iter().enumerate() {
            let d = sq_dist(row, center);
            if d < best.1 {
                best = (c, d);
            }
        }
        labels[i] = best.0;
        dists[i] = best.1;
    }
}

/// Cluster means; `None` for empty clusters.
fn means(x: ArrayView2<f64>, labels: &[usize], k: usize) -> (Array2<f64>, Vec<usize>) {
    let mut sums = Array2::zeros((k, x.ncols()));
    let mut counts = vec![0usize; k];
    for (row, &l) in x.rows().into_iter().zip(labels) {
        let mut s = sums.row_mut(l);
        s += &row;
        counts[l] += 1;
    }
    for (mut s, &c) in sums.rows_mut().into_iter().zip(&counts) {
        if c > 0 {
            s /= c as f64;
        }
    }
    (sums, counts)
}

fn lloyd<R: Rng>(x: ArrayView2<f64>, k: usize, opts: &KMeansOptions, rng: &mut R) -> KMeansResult {
    let n = x.nrows();
    let mut centers = plus_plus(x, k, rng);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        assign(x, &centers, &mut labels, &mut dists);
        let (mut next, counts) = means(x, &labels, k);

        let mut taken = vec![false; n];
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..n)
                .filter(|&i| !taken[i])
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                .expect("n >= k");
            taken[far] = true;
            dists[far] = 0.0;
            next.row_mut(c).assign(&x.row(far));
        }

        let shift = centers
            .rows()
            .into_iter()
            .zip(next.rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = next;
        if shift < opts.tol {
            break;
        }
    }

    assign(x, &centers, &mut labels, &mut dists);
    let (final_means, counts) = means(x, &labels, k);
    for c in (0..k).filter(|&c| counts[c] > 0) {
        centers.row_mut(c).assign(&final_means.row(c));
    }
    let inertia = within_cluster_ssq(x, &labels, k);
    KMeansResult {
        labels,
        centers,
        inertia,
        iterations,
        restart: 0,
    }
}

/// Sum of squared distances of each point to the mean of its cluster.
pub fn within_cluster_ssq(x: ArrayView2<f64>, labels: &[usize], k: usize) -> f64 {
    let (m, _) = means(x, labels, k);
    x.rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &l)| sq_dist(row, m.row(l)))
        .sum()
}

/// Per-column means of `x`, handy for the single-cluster case.
pub fn column_means(x: ArrayView2<f64>) -> Array1<f64> {
    x.mean_axis(ndarray::Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()))
}
