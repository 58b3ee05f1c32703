use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::LossTerms;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

/// Per-epoch means of the loss terms and fusion weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// One-based epoch number.
    pub epoch: usize,
    pub terms: LossTerms,
    /// Mean batch fusion weights; `None` when no batch had a complete sample.
    pub weights: Option<Vec<f64>>,
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub n_views: usize,
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// `epoch,rec,inf,mmi,mmd,total,w_0..w_{V-1},acc,nmi,ari`; missing
    /// values are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,rec,inf,mmi,mmd,total");
        for v in 0..self.n_views {
            let _ = write!(out, ",w_{v}");
        }
        out.push_str(",acc,nmi,ari\n");
        for r in &self.epochs {
            let t = &r.terms;
            let _ = write!(out, "{},{:?},{:?},{:?},{:?},{:?}", r.epoch, t.rec, t.inf, t.mmi, t.mmd, t.total);
            for v in 0..self.n_views {
                match &r.weights {
                    Some(w) => {
                        let _ = write!(out, ",{:?}", w[v]);
                    }
                    None => out.push(','),
                }
            }
            match &r.metrics {
                Some(m) => {
                    let _ = write!(out, ",{:?},{:?},{:?}", m.acc, m.nmi, m.ari);
                }
                None => out.push_str(",,,"),
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}
