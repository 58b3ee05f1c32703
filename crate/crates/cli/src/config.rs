//! Sectioned `key = value` configuration with per-key provenance.
//!
//! Resolution order, later wins: built-in defaults, checkpoint metadata
//! (evaluate only), the `--config` file, `--set` overrides, then the
//! dedicated `--data`, `--mask` and `--seed` flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hsacc::trainer::{Lambdas, LossSet, Precision, TrainConfig};

use crate::error::CliError;

/// Every recognised key, by section.
pub const KEYS: &[(&str, &[&str])] = &[
    ("data", &["dir", "mask", "normalize"]),
    ("model", &["latent_dim", "encoder_hidden", "inference_hidden", "kernel"]),
    (
        "train",
        &[
            "epochs", "warmup", "lr", "batch_size", "lambda1", "lambda2", "lambda3", "lambda4", "seed", "clip_norm",
            "precision",
        ],
    ),
    ("eval", &["k", "restarts", "eval_every"]),
    ("ablate", &["variants", "seeds"]),
    ("sweep", &["lambdas", "values", "seeds"]),
];

/// Where a resolved value came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Default,
    Checkpoint,
    File { path: PathBuf, line: usize },
    Set,
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => f.write_str("default"),
            Origin::Checkpoint => f.write_str("checkpoint metadata"),
            Origin::File { path, line } => write!(f, "{} line {line}", path.display()),
            Origin::Set => f.write_str("--set"),
            Origin::Flag => f.write_str("command-line flag"),
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    origin: Origin,
}

/// Fully qualified `section.key` to value, with provenance.
#[derive(Debug, Clone)]
pub struct Resolved {
    entries: BTreeMap<String, Entry>,
}

fn join(list: &[usize]) -> String {
    list.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl Default for Resolved {
    fn default() -> Self {
        let c = TrainConfig::default();
        let l = c.lambdas;
        let pairs = [
            ("data.dir", String::new()),
            ("data.mask", String::new()),
            ("data.normalize", "true".into()),
            ("model.latent_dim", c.latent_dim.to_string()),
            ("model.encoder_hidden", join(&c.encoder_hidden)),
            ("model.inference_hidden", join(&c.inference_hidden)),
            ("model.kernel", c.kernel.to_string()),
            ("train.epochs", c.epochs.to_string()),
            ("train.warmup", c.warmup.to_string()),
            ("train.lr", c.lr.to_string()),
            ("train.batch_size", c.batch_size.to_string()),
            ("train.lambda1", l.rec.to_string()),
            ("train.lambda2", l.inf.to_string()),
            ("train.lambda3", l.mmi.to_string()),
            ("train.lambda4", l.mmd.to_string()),
            ("train.seed", c.seed.to_string()),
            ("train.clip_norm", c.clip_norm.to_string()),
            ("train.precision", c.precision.to_string()),
            ("eval.k", String::new()),
            ("eval.restarts", c.restarts.to_string()),
            ("eval.eval_every", c.eval_every.to_string()),
            ("ablate.variants", "grid".into()),
            ("ablate.seeds", String::new()),
            ("sweep.lambdas", "lambda1,lambda2,lambda3,lambda4".into()),
            ("sweep.values", "0.01,0.1,1,10,100".into()),
            ("sweep.seeds", String::new()),
        ];
        let entries = pairs
            .into_iter()
            .map(|(k, v)| {
                (
                    k.to_string(),
                    Entry {
                        value: v,
                        origin: Origin::Default,
                    },
                )
            })
            .collect();
        Self { entries }
    }
}

/// Turns `key` or `section.key` into the qualified name.
pub fn qualify(name: &str) -> Result<String, String> {
    let name = name.trim();
    if let Some((section, key)) = name.split_once('.') {
        return match KEYS.iter().find(|(s, _)| *s == section) {
            Some((_, keys)) if keys.contains(&key) => Ok(name.to_string()),
            Some(_) => Err(format!("unknown key {key:?} in section [{section}]")),
            None => Err(format!("unknown section [{section}]")),
        };
    }
    let hits: Vec<&str> = KEYS
        .iter()
        .filter(|(_, keys)| keys.contains(&name))
        .map(|(s, _)| *s)
        .collect();
    match hits.as_slice() {
        [section] => Ok(format!("{section}.{name}")),
        [] => Err(format!("unknown key {name:?}")),
        many => Err(format!(
            "key {name:?} is ambiguous; qualify it as one of {}",
            many.iter().map(|s| format!("{s}.{name}")).collect::<Vec<_>>().join(", ")
        )),
    }
}

impl Resolved {
    pub fn set(&mut self, qualified: &str, value: &str, origin: Origin) {
        self.entries.insert(
            qualified.to_string(),
            Entry {
                value: value.trim().to_string(),
                origin,
            },
        );
    }

    pub fn get(&self, qualified: &str) -> &str {
        &self.entries[qualified].value
    }

    /// Reads a config file; unknown sections and keys are errors.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, path)
    }

    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<(), CliError> {
        let mut section: Option<&str> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |m: String| CliError::Usage(format!("{} line {line}: {m}", path.display()));
            let content = raw.split(['#', ';']).next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("unterminated section header {content:?}")))?
                    .trim();
                let known = KEYS
                    .iter()
                    .find(|(s, _)| *s == name)
                    .ok_or_else(|| err(format!("unknown section [{name}]")))?;
                section = Some(known.0);
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, found {content:?}")))?;
            let key = key.trim();
            let section = section.ok_or_else(|| err(format!("key {key:?} appears before any section")))?;
            let qualified = format!("{section}.{key}");
            qualify(&qualified).map_err(|m| err(format!("key {key:?}: {m}")))?;
            self.set(
                &qualified,
                value,
                Origin::File {
                    path: path.to_path_buf(),
                    line,
                },
            );
        }
        Ok(())
    }

    /// Applies one `--set key=value`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {assignment:?}")))?;
        let qualified = qualify(key).map_err(|m| CliError::Usage(format!("--set {assignment:?}: {m}")))?;
        self.set(&qualified, value, Origin::Set);
        Ok(())
    }

    /// Seeds the table from a previous snapshot, ignoring unknown keys.
    pub fn apply_snapshot(&mut self, snapshot: &BTreeMap<String, String>) {
        for (k, v) in snapshot {
            if self.entries.contains_key(k) {
                self.set(k, v, Origin::Checkpoint);
            }
        }
    }

    pub fn snapshot(&self) -> BTreeMap<String, String> {
        self.entries.iter().map(|(k, e)| (k.clone(), e.value.clone())).collect()
    }

    fn parse<T: FromStr>(&self, qualified: &str) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        let e = &self.entries[qualified];
        e.value.parse().map_err(|err| self.invalid(qualified, err))
    }

    fn invalid(&self, qualified: &str, why: impl fmt::Display) -> CliError {
        let e = &self.entries[qualified];
        CliError::Usage(format!("{}: key {qualified} = {:?}: {why}", e.origin, e.value))
    }

    fn optional<T: FromStr>(&self, qualified: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        if self.get(qualified).is_empty() {
            Ok(None)
        } else {
            self.parse(qualified).map(Some)
        }
    }

    fn list<T: FromStr>(&self, qualified: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        self.get(qualified)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|err| self.invalid(qualified, err)))
            .collect()
    }

    fn path(&self, qualified: &str) -> Option<PathBuf> {
        let v = self.get(qualified);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    fn bool(&self, qualified: &str) -> Result<bool, CliError> {
        match self.get(qualified).to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" | "on" => Ok(true),
            "false" | "no" | "0" | "off" => Ok(false),
            _ => Err(self.invalid(qualified, "expected a boolean")),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let config = TrainConfig {
            lambdas: Lambdas {
                rec: self.parse("train.lambda1")?,
                inf: self.parse("train.lambda2")?,
                mmi: self.parse("train.lambda3")?,
                mmd: self.parse("train.lambda4")?,
            },
            epochs: self.parse("train.epochs")?,
            warmup: self.parse("train.warmup")?,
            lr: self.parse("train.lr")?,
            batch_size: self.parse("train.batch_size")?,
            latent_dim: self.parse("model.latent_dim")?,
            encoder_hidden: self.list("model.encoder_hidden")?,
            inference_hidden: self.list("model.inference_hidden")?,
            kernel: self.parse("model.kernel")?,
            seed: self.parse("train.seed")?,
            k: self.optional("eval.k")?,
            clip_norm: self.parse("train.clip_norm")?,
            eval_every: self.parse("eval.eval_every")?,
            restarts: self.parse("eval.restarts")?,
            precision: self.parse::<Precision>("train.precision")?,
        };
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }

    pub fn data(&self) -> Result<DataSettings, CliError> {
        Ok(DataSettings {
            dir: self.path("data.dir"),
            mask: self.path("data.mask"),
            normalize: self.bool("data.normalize")?,
        })
    }

    /// Loss-term subsets; `grid` expands to the fifteen nonempty subsets.
    pub fn ablate_variants(&self) -> Result<Vec<LossSet>, CliError> {
        let key = "ablate.variants";
        let mut out = Vec::new();
        for part in self.get(key).split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if part.eq_ignore_ascii_case("grid") {
                out.extend(LossSet::ablation_grid());
            } else {
                out.push(part.parse::<LossSet>().map_err(|e| self.invalid(key, e))?);
            }
        }
        if out.is_empty() {
            return Err(self.invalid(key, "no variants"));
        }
        Ok(out)
    }

    /// Grid seeds, defaulting to the training seed.
    pub fn seeds(&self, section: &str) -> Result<Vec<u64>, CliError> {
        let seeds: Vec<u64> = self.list(&format!("{section}.seeds"))?;
        if seeds.is_empty() {
            Ok(vec![self.parse("train.seed")?])
        } else {
            Ok(seeds)
        }
    }

    /// Swept lambda indices (0-based, rec inf mmi mmd) and grid values.
    pub fn sweep_grid(&self) -> Result<(Vec<usize>, Vec<f64>), CliError> {
        let key = "sweep.lambdas";
        let mut terms = Vec::new();
        for part in self.get(key).split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let idx = match part {
                "lambda1" | "rec" => 0,
                "lambda2" | "inf" => 1,
                "lambda3" | "mmi" => 2,
                "lambda4" | "mmd" => 3,
                other => return Err(self.invalid(key, format!("unknown lambda {other:?}"))),
            };
            terms.push(idx);
        }
        let values: Vec<f64> = self.list("sweep.values")?;
        if terms.is_empty() {
            return Err(self.invalid(key, "empty grid"));
        }
        if values.is_empty() {
            return Err(self.invalid("sweep.values", "empty grid"));
        }
        Ok((terms, values))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSettings {
    pub dir: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub normalize: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_text(text: &str) -> Result<Resolved, CliError> {
        let mut r = Resolved::default();
        r.apply_text(text, Path::new("run.ini"))?;
        Ok(r)
    }

    #[test]
    fn defaults_match_library_defaults() {
        let r = Resolved::default();
        assert_eq!(r.train_config().unwrap(), TrainConfig::default());
        assert_eq!(r.ablate_variants().unwrap().len(), 15);
        assert_eq!(r.seeds("ablate").unwrap(), vec![0]);
        assert_eq!(r.sweep_grid().unwrap(), (vec![0, 1, 2, 3], vec![0.01, 0.1, 1.0, 10.0, 100.0]));
    }

    #[test]
    fn file_then_set_precedence() {
        let mut r = from_text("# comment\n[train]\nlambda3 = 5 ; inline\nepochs=20\nwarmup = 2\n[model]\nencoder_hidden = 8, 8\n").unwrap();
        assert_eq!(r.train_config().unwrap().lambdas.mmi, 5.0);
        r.apply_override("lambda3=10").unwrap();
        let c = r.train_config().unwrap();
        assert_eq!(c.lambdas.mmi, 10.0);
        assert_eq!(c.encoder_hidden, vec![8, 8]);
        assert_eq!((c.epochs, c.warmup), (20, 2));
    }

    #[test]
    fn parse_errors_name_key_and_line() {
        let err = from_text("[train]\n\nepochs = 3\nlr = fast\n").unwrap().train_config().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 4") && msg.contains("train.lr"), "{msg}");

        let msg = from_text("[train]\nepoch = 3\n").unwrap_err().to_string();
        assert!(msg.contains("line 2") && msg.contains("epoch"), "{msg}");
        assert!(from_text("lr = 1\n").is_err());
        assert!(from_text("[nope]\n").is_err());
        assert!(from_text("[train]\njunk\n").is_err());
    }

    #[test]
    fn override_keys_resolve() {
        assert_eq!(qualify("lambda3").unwrap(), "train.lambda3");
        assert_eq!(qualify("sweep.seeds").unwrap(), "sweep.seeds");
        assert!(qualify("seeds").unwrap_err().contains("ambiguous"));
        assert!(qualify("train.nope").is_err());
        let mut r = Resolved::default();
        assert!(r.apply_override("lambda3").is_err());
        r.apply_override("k=3").unwrap();
        assert_eq!(r.train_config().unwrap().k, Some(3));
        r.apply_override("warmup=9999").unwrap();
        assert!(r.train_config().is_err());
    }

    #[test]
    fn ablation_variants_parse() {
        let mut r = Resolved::default();
        r.apply_override("variants=REC, M-15").unwrap();
        let v = r.ablate_variants().unwrap();
        assert_eq!(v, vec![LossSet::new(true, false, false, false), LossSet::FULL]);
        r.apply_override("variants=REC+XYZ").unwrap();
        assert!(r.ablate_variants().is_err());
    }
}
