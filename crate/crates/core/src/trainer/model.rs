use ndarray::{Array2, Axis};

use super::config::TrainConfig;
use crate::completion::InferenceHead;
use crate::dataio::{AvailabilityMask, MultiViewDataset};
use crate::error::{shape_err, Error, Result};
use crate::network::{Checkpoint, MlpParams};
use crate::real::Real;
use crate::seed;

/// View-specific autoencoders plus one inference head per ordered view pair.
#[derive(Debug, Clone, PartialEq)]
pub struct HsaccModel<F> {
    pub encoders: Vec<MlpParams<F>>,
    pub decoders: Vec<MlpParams<F>>,
    pub heads: Vec<InferenceHead<F>>,
}

impl<F: Real> HsaccModel<F> {
    pub fn init(view_dims: &[usize], config: &TrainConfig) -> Result<Self> {
        if view_dims.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 views, got {}",
                view_dims.len()
            )));
        }
        let init_seed = seed::derive(config.seed, seed::INIT);
        let d = config.latent_dim;
        let mut net = 0u64;
        let mut next_seed = || {
            net += 1;
            seed::derive(init_seed, net)
        };
        let mut encoders = Vec::new();
        let mut decoders = Vec::new();
        for &dv in view_dims {
            let mut enc = vec![dv];
            enc.extend(&config.encoder_hidden);
            enc.push(d);
            let dec: Vec<usize> = enc.iter().rev().copied().collect();
            encoders.push(MlpParams::init(&enc, next_seed())?);
            decoders.push(MlpParams::init(&dec, next_seed())?);
        }
        let mut head_dims = vec![d];
        head_dims.extend(&config.inference_hidden);
        head_dims.push(d);
        let v = view_dims.len();
        let mut heads = Vec::new();
        for source in 0..v {
            for target in (0..v).filter(|&t| t != source) {
                heads.push(InferenceHead {
                    source,
                    target,
                    params: MlpParams::init(&head_dims, next_seed())?,
                });
            }
        }
        Ok(Self {
            encoders,
            decoders,
            heads,
        })
    }

    pub fn n_views(&self) -> usize {
        self.encoders.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoders[0].out_dim()
    }

    /// Encodes the available rows of every view. Rows of unavailable
    /// samples are zero.
    pub fn encode_available(&self, ds: &MultiViewDataset, mask: &AvailabilityMask) -> Result<Vec<Array2<F>>> {
        if ds.n_views() != self.n_views() {
            return Err(shape_err("model views", self.n_views(), ds.n_views()));
        }
        mask.check_matches(ds)?;
        (0..self.n_views())
            .map(|v| {
                let rows = mask.rows_with(v);
                let mut z = Array2::zeros((ds.n(), self.latent_dim()));
                for chunk in rows.chunks(1024) {
                    let x = ds.view(v).select(Axis(0), chunk).mapv(F::lit);
                    let enc = self.encoders[v].forward(x.view())?;
                    for (r, &i) in chunk.iter().enumerate() {
                        z.row_mut(i).assign(&enc.row(r));
                    }
                }
                Ok(z)
            })
            .collect()
    }

    fn names(&self) -> Vec<String> {
        let v = self.n_views();
        let mut names: Vec<String> = (0..v).map(|i| format!("encoder.{i}")).collect();
        names.extend((0..v).map(|i| format!("decoder.{i}")));
        names.extend(self.heads.iter().map(|h| format!("head.{}->{}", h.source, h.target)));
        names
    }

    pub fn to_checkpoint(&self, meta: String) -> Checkpoint<F> {
        let nets = self
            .encoders
            .iter()
            .chain(&self.decoders)
            .chain(self.heads.iter().map(|h| &h.params))
            .cloned();
        Checkpoint {
            meta,
            networks: self.names().into_iter().zip(nets).collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint<F>) -> Result<Self> {
        let mut encoders = Vec::new();
        let mut decoders = Vec::new();
        let mut heads = Vec::new();
        for (name, params) in &ck.networks {
            let bad = || Error::Checkpoint(format!("unexpected network name {name:?}"));
            if let Some(i) = name.strip_prefix("encoder.") {
                let i: usize = i.parse().map_err(|_| bad())?;
                if i != encoders.len() {
                    return Err(bad());
                }
                encoders.push(params.clone());
            } else if let Some(i) = name.strip_prefix("decoder.") {
                let i: usize = i.parse().map_err(|_| bad())?;
                if i != decoders.len() {
                    return Err(bad());
                }
                decoders.push(params.clone());
            } else if let Some(pair) = name.strip_prefix("head.") {
                let (s, t) = pair.split_once("->").ok_or_else(bad)?;
                heads.push(InferenceHead {
                    source: s.parse().map_err(|_| bad())?,
                    target: t.parse().map_err(|_| bad())?,
                    params: params.clone(),
                });
            } else {
                return Err(bad());
            }
        }
        if encoders.len() < 2 || encoders.len() != decoders.len() {
            return Err(Error::Checkpoint("encoder/decoder counts do not match".into()));
        }
        Ok(Self {
            encoders,
            decoders,
            heads,
        })
    }
}
