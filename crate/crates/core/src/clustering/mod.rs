//! k-means on the completed, concatenated latent representations and the
//! external clustering metrics.

mod kmeans;
mod metrics;

pub use kmeans::{column_means, kmeans, kmeans_with, within_cluster_ssq, KMeansOptions, KMeansResult};
pub use metrics::{ari, clustering_accuracy, nmi, Contingency};

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::completion::{complete_latents, infer_all};
use crate::dataio::{AvailabilityMask, MultiViewDataset};
use crate::error::{shape_err, Result};
use crate::real::Real;
use crate::seed;
use crate::trainer::{cluster_count, HsaccModel, Metrics, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringReport {
    pub predicted: Vec<usize>,
    pub k: usize,
    pub inertia: f64,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
    pub seed: u64,
}

impl ClusteringReport {
    pub fn metrics(&self) -> Option<Metrics> {
        Some(Metrics {
            acc: self.acc?,
            nmi: self.nmi?,
            ari: self.ari?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: ClusteringReport,
    /// `N x (V D)` concatenation of the completed latents, views ascending.
    pub embeddings: Array2<f64>,
    pub completed: Vec<Array2<f64>>,
}

/// Concatenates per-view latents column-wise in view order.
pub fn concat_views(latents: &[Array2<f64>]) -> Result<Array2<f64>> {
    let views: Vec<ArrayView2<f64>> = latents.iter().map(|z| z.view()).collect();
    concatenate(Axis(1), &views).map_err(|_| {
        shape_err(
            "latent concatenation",
            latents.first().map(|z| z.nrows()).unwrap_or(0),
            latents.iter().map(|z| z.nrows()).collect::<Vec<_>>(),
        )
    })
}

/// Runs k-means on `x` and scores it against `truth` when given.
pub fn cluster_and_score(
    x: ArrayView2<f64>,
    k: usize,
    restarts: usize,
    seed: u64,
    truth: Option<&[usize]>,
) -> Result<ClusteringReport> {
    let km = kmeans(x, k, restarts, seed)?;
    let (acc, nmi_v, ari_v) = match truth {
        Some(t) => (
            Some(clustering_accuracy(&km.labels, t)?),
            Some(nmi(&km.labels, t)?),
            Some(ari(&km.labels, t)?),
        ),
        None => (None, None, None),
    };
    Ok(ClusteringReport {
        predicted: km.labels,
        k,
        inertia: km.inertia,
        acc,
        nmi: nmi_v,
        ari: ari_v,
        seed,
    })
}

/// Encodes the available views, completes the missing latents with the
/// inference heads and clusters their concatenation.
pub fn evaluate<F: Real>(
    model: &HsaccModel<F>,
    ds: &MultiViewDataset,
    mask: &AvailabilityMask,
    config: &TrainConfig,
) -> Result<Evaluation> {
    let k = cluster_count(config, ds)?;
    let latents = model.encode_available(ds, mask)?;
    let outputs = infer_all(&model.heads, &latents, mask)?;
    let completed: Vec<Array2<f64>> = complete_latents(&latents, &outputs, mask)?
        .into_iter()
        .map(|z| z.mapv(|v| v.to_f64().unwrap_or(f64::NAN)))
        .collect();
    let embeddings = concat_views(&completed)?;
    let report = cluster_and_score(
        embeddings.view(),
        k,
        config.restarts,
        seed::derive(config.seed, seed::KMEANS),
        ds.labels(),
    )?;
    Ok(Evaluation {
        report,
        embeddings,
        completed,
    })
}
