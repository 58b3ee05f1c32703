use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{Lambdas, TrainConfig};
use super::history::Metrics;
use crate::clustering::evaluate;
use crate::dataio::{AvailabilityMask, MultiViewDataset};
use crate::error::{Error, Result};
use crate::real::Real;

/// Values tried for each trade-off weight in a sensitivity sweep.
pub const LAMBDA_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

const TERM_NAMES: [&str; 4] = ["REC", "INF", "MMI", "MMD"];

/// Which loss terms take part in the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LossSet {
    pub rec: bool,
    pub inf: bool,
    pub mmi: bool,
    pub mmd: bool,
}

impl LossSet {
    pub const FULL: LossSet = LossSet {
        rec: true,
        inf: true,
        mmi: true,
        mmd: true,
    };

    pub const fn new(rec: bool, inf: bool, mmi: bool, mmd: bool) -> Self {
        Self { rec, inf, mmi, mmd }
    }

    /// The fifteen non-empty combinations, numbered M-1 to M-15.
    pub fn ablation_grid() -> [LossSet; 15] {
        let s = LossSet::new;
        [
            s(true, false, false, false),
            s(false, false, true, false),
            s(false, false, false, true),
            s(false, true, false, false),
            s(false, true, false, true),
            s(true, false, false, true),
            s(true, true, false, false),
            s(false, false, true, true),
            s(true, false, true, false),
            s(false, true, true, false),
            s(true, true, false, true),
            s(true, false, true, true),
            s(false, true, true, true),
            s(true, true, true, false),
            LossSet::FULL,
        ]
    }

    fn flags(&self) -> [bool; 4] {
        [self.rec, self.inf, self.mmi, self.mmd]
    }

    pub fn is_empty(&self) -> bool {
        !self.flags().contains(&true)
    }

    /// Zeroes the weights of excluded terms.
    pub fn apply(&self, lambdas: &Lambdas) -> Lambdas {
        let mut a = lambdas.as_array();
        for (l, on) in a.iter_mut().zip(self.flags()) {
            if !on {
                *l = 0.0;
            }
        }
        Lambdas::from_array(a)
    }
}

impl fmt::Display for LossSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = TERM_NAMES
            .iter()
            .zip(self.flags())
            .filter(|(_, on)| *on)
            .map(|(n, _)| *n)
            .collect();
        if names.is_empty() {
            f.write_str("NONE")
        } else {
            f.write_str(&names.join("+"))
        }
    }
}

impl FromStr for LossSet {
    type Err = Error;

    /// Parses `rec+mmi`-style names (case-insensitive), `all`, or `M-<i>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") || s.eq_ignore_ascii_case("full") {
            return Ok(LossSet::FULL);
        }
        if let Some(i) = s.strip_prefix("M-").or_else(|| s.strip_prefix("m-")) {
            let i: usize = i
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad variant {s:?}")))?;
            return LossSet::ablation_grid()
                .get(i.wrapping_sub(1))
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("variant {s:?} out of range")));
        }
        let mut flags = [false; 4];
        for part in s.split('+') {
            let idx = TERM_NAMES
                .iter()
                .position(|n| n.eq_ignore_ascii_case(part.trim()))
                .ok_or_else(|| Error::InvalidArgument(format!("unknown loss term {part:?}")))?;
            flags[idx] = true;
        }
        Ok(LossSet::new(flags[0], flags[1], flags[2], flags[3]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: LossSet,
    pub seed: u64,
    pub result: std::result::Result<Metrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// Index into rec, inf, mmi, mmd.
    pub term: usize,
    pub value: f64,
    pub seed: u64,
    pub result: std::result::Result<Metrics, String>,
}

fn run_once<F: Real>(config: &TrainConfig, ds: &MultiViewDataset, mask: &AvailabilityMask) -> Result<Metrics> {
    let outcome = super::train::<F>(config, ds, mask)?;
    let eval = evaluate(&outcome.model, ds, mask, config)?;
    eval.report
        .metrics()
        .ok_or_else(|| Error::InvalidArgument("metrics need ground-truth labels".into()))
}

/// Trains and evaluates every variant for every seed. Failed cells carry
/// their error message instead of metrics.
pub fn run_ablation<F: Real>(
    config: &TrainConfig,
    ds: &MultiViewDataset,
    mask: &AvailabilityMask,
    variants: &[LossSet],
    seeds: &[u64],
    mut on_row: impl FnMut(&AblationRow),
) -> Vec<AblationRow> {
    let mut rows = Vec::new();
    for &variant in variants {
        for &seed in seeds {
            let result = if variant.is_empty() {
                Err("empty loss set".to_string())
            } else {
                let cfg = TrainConfig {
                    lambdas: variant.apply(&config.lambdas),
                    seed,
                    ..config.clone()
                };
                run_once::<F>(&cfg, ds, mask).map_err(|e| e.to_string())
            };
            let row = AblationRow { variant, seed, result };
            on_row(&row);
            rows.push(row);
        }
    }
    rows
}

/// Varies one trade-off weight over `values`, keeping the others at their
/// configured values.
pub fn run_lambda_sweep<F: Real>(
    config: &TrainConfig,
    ds: &MultiViewDataset,
    mask: &AvailabilityMask,
    term: usize,
    values: &[f64],
    seeds: &[u64],
    mut on_row: impl FnMut(&SweepRow),
) -> Result<Vec<SweepRow>> {
    if term >= 4 {
        return Err(Error::InvalidArgument(format!("lambda index {term} out of range 0..4")));
    }
    let mut rows = Vec::new();
    for &value in values {
        for &seed in seeds {
            let mut lambdas = config.lambdas.as_array();
            lambdas[term] = value;
            let cfg = TrainConfig {
                lambdas: Lambdas::from_array(lambdas),
                seed,
                ..config.clone()
            };
            let result = run_once::<F>(&cfg, ds, mask).map_err(|e| e.to_string());
            let row = SweepRow {
                term,
                value,
                seed,
                result,
            };
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_order_and_labels() {
        let labels: Vec<String> = LossSet::ablation_grid().iter().map(|s| s.to_string()).collect();
        assert_eq!(
            labels,
            [
                "REC",
                "MMI",
                "MMD",
                "INF",
                "INF+MMD",
                "REC+MMD",
                "REC+INF",
                "MMI+MMD",
                "REC+MMI",
                "INF+MMI",
                "REC+INF+MMD",
                "REC+MMI+MMD",
                "INF+MMI+MMD",
                "REC+INF+MMI",
                "REC+INF+MMI+MMD",
            ]
        );
        let unique: std::collections::HashSet<_> = LossSet::ablation_grid().into_iter().collect();
        assert_eq!(unique.len(), 15);
    }

    #[test]
    fn parse_round_trip() {
        for s in LossSet::ablation_grid() {
            assert_eq!(s.to_string().parse::<LossSet>().unwrap(), s);
        }
        assert_eq!("mmd+rec".parse::<LossSet>().unwrap(), LossSet::new(true, false, false, true));
        assert_eq!("M-15".parse::<LossSet>().unwrap(), LossSet::FULL);
        assert!("M-16".parse::<LossSet>().is_err());
        assert!("rec+foo".parse::<LossSet>().is_err());
    }

    #[test]
    fn apply_zeroes_excluded() {
        let l = LossSet::new(true, false, true, false).apply(&Lambdas::default());
        assert_eq!(l.as_array(), [0.1, 0.0, 10.0, 0.0]);
    }
}
