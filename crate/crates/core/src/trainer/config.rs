use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alignment::Kernel;
use crate::error::{Error, Result};

/// Floating-point width used for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "f32" | "single" => Ok(Precision::F32),
            "f64" | "double" => Ok(Precision::F64),
            other => Err(Error::InvalidArgument(format!("unknown precision {other:?}"))),
        }
    }
}

/// Trade-off weights of the four loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lambdas {
    pub rec: f64,
    pub inf: f64,
    pub mmi: f64,
    pub mmd: f64,
}

impl Default for Lambdas {
    fn default() -> Self {
        Self {
            rec: 0.1,
            inf: 0.1,
            mmi: 10.0,
            mmd: 1.0,
        }
    }
}

impl Lambdas {
    /// In objective order: rec, inf, mmi, mmd.
    pub fn as_array(&self) -> [f64; 4] {
        [self.rec, self.inf, self.mmi, self.mmd]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            rec: a[0],
            inf: a[1],
            mmi: a[2],
            mmd: a[3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambdas: Lambdas,
    pub epochs: usize,
    /// Zero-based epoch index from which the inference loss is active.
    pub warmup: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub latent_dim: usize,
    /// Encoder hidden widths; decoders mirror them.
    pub encoder_hidden: Vec<usize>,
    pub inference_hidden: Vec<usize>,
    pub kernel: Kernel,
    pub seed: u64,
    /// Cluster count; defaults to the number of label classes.
    pub k: Option<usize>,
    pub clip_norm: f64,
    /// Evaluate clustering metrics every this many epochs (0 = never).
    pub eval_every: usize,
    pub restarts: usize,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambdas: Lambdas::default(),
            epochs: 500,
            warmup: 100,
            lr: 1e-4,
            batch_size: 256,
            latent_dim: 128,
            encoder_hidden: vec![1024, 1024, 1024],
            inference_hidden: vec![256, 128, 256],
            kernel: Kernel::Linear,
            seed: 0,
            k: None,
            clip_norm: 5.0,
            eval_every: 10,
            restarts: 50,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.warmup > self.epochs {
            return bad(format!("warmup {} exceeds epochs {}", self.warmup, self.epochs));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        for (name, l) in ["lambda1", "lambda2", "lambda3", "lambda4"]
            .iter()
            .zip(self.lambdas.as_array())
        {
            if !(l.is_finite() && l >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {l}"));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        if self.latent_dim == 0 || self.encoder_hidden.contains(&0) || self.inference_hidden.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if self.k == Some(0) {
            return bad("k must be positive".into());
        }
        if self.restarts == 0 {
            return bad("restarts must be positive".into());
        }
        Ok(())
    }
}

/// Per-term loss values and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub rec: f64,
    pub inf: f64,
    pub mmi: f64,
    pub mmd: f64,
    pub total: f64,
}

impl LossTerms {
    /// Fills in `total` from the components.
    pub fn weighted(rec: f64, inf: f64, mmi: f64, mmd: f64, lambdas: &Lambdas) -> Result<Self> {
        let mut t = Self {
            rec,
            inf,
            mmi,
            mmd,
            total: 0.0,
        };
        t.total = total_loss(&t, lambdas)?;
        Ok(t)
    }
}

/// `lambda1 rec + lambda2 inf + lambda3 mmi + lambda4 mmd`.
pub fn total_loss(terms: &LossTerms, lambdas: &Lambdas) -> Result<f64> {
    let parts = [terms.rec, terms.inf, terms.mmi, terms.mmd];
    if let Some(i) = parts.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinite(["rec", "inf", "mmi", "mmd"][i].into()));
    }
    Ok(parts.iter().zip(lambdas.as_array()).map(|(t, l)| t * l).sum())
}
