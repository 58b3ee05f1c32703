use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hsacc::clustering::{self, Evaluation};
use hsacc::dataio::{
    generate_mask, load_dataset, load_mask, normalize_views, save_dataset, save_mask, synth_gaussian,
    write_matrix_csv, AvailabilityMask, MultiViewDataset, SynthParams,
};
use hsacc::network::Checkpoint;
use hsacc::trainer::{
    run_ablation, run_lambda_sweep, train_with, AblationRow, HsaccModel, LossSet, Metrics, Precision, SweepRow,
    TrainConfig,
};
use hsacc::Real;
use serde::Serialize;

use crate::config::{Origin, Resolved};
use crate::error::CliError;
use crate::manifest::{config_hash, dataset_hash, file_hash, HashedFile, RunInputs, RunManifest};
use crate::{EvaluateArgs, MaskArgs, RunArgs, SynthArgs};

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let ds = synth_gaussian(&SynthParams {
        n: a.n,
        k: a.k,
        dims: a.dims.clone(),
        sep: a.sep,
        noise: a.noise,
        seed: a.seed,
    })?;
    save_dataset(&ds, &a.out)?;
    log::info!("wrote {} samples in {} views to {}", ds.n(), ds.n_views(), a.out.display());
    Ok(())
}

pub fn mask(a: &MaskArgs) -> Result<(), CliError> {
    let from_data = match &a.data {
        Some(dir) => {
            let ds = load_dataset(dir)?;
            Some((ds.n(), ds.n_views()))
        }
        None => None,
    };
    let n = a
        .n
        .or(from_data.map(|d| d.0))
        .ok_or_else(|| CliError::Usage("mask needs --n or --data".into()))?;
    let views = a.views.or(from_data.map(|d| d.1)).unwrap_or(2);
    let mask = generate_mask(n, views, a.rate, a.seed)?;
    fs::create_dir_all(&a.out)?;
    save_mask(&mask, &a.out.join("mask.csv"))?;
    log::info!("{} of {n} samples incomplete", mask.incomplete_count());
    Ok(())
}

/// Settings, inputs and their hashes shared by the training commands.
struct Run {
    resolved: Resolved,
    config: TrainConfig,
    ds: MultiViewDataset,
    mask: AvailabilityMask,
    inputs: RunInputs,
    started: Instant,
}

fn resolve(a: &RunArgs, base: Option<&Resolved>) -> Result<Resolved, CliError> {
    let mut r = base.cloned().unwrap_or_default();
    if let Some(path) = &a.config {
        r.apply_file(path)?;
    }
    for assignment in &a.sets {
        r.apply_override(assignment)?;
    }
    if let Some(d) = &a.data {
        r.set("data.dir", &d.to_string_lossy(), Origin::Flag);
    }
    if let Some(m) = &a.mask {
        r.set("data.mask", &m.to_string_lossy(), Origin::Flag);
    }
    if let Some(s) = a.seed {
        r.set("train.seed", &s.to_string(), Origin::Flag);
    }
    Ok(r)
}

fn prepare(command: &str, a: &RunArgs, base: Option<&Resolved>) -> Result<Run, CliError> {
    let started = Instant::now();
    let resolved = resolve(a, base)?;
    let config = resolved.train_config()?;
    let data = resolved.data()?;
    let dir = data
        .dir
        .ok_or_else(|| CliError::Usage("no dataset: pass --data or set data.dir".into()))?;
    let ds = load_dataset(&dir)?;
    let (mask, mask_file) = match &data.mask {
        Some(path) => (
            load_mask(path)?,
            Some(HashedFile {
                path: path.clone(),
                sha256: file_hash(path)?,
            }),
        ),
        None => (AvailabilityMask::full(ds.n(), ds.n_views()), None),
    };
    mask.check_matches(&ds).map_err(|e| CliError::Usage(e.to_string()))?;
    let ds = if data.normalize {
        normalize_views(&ds, Some(&mask))?
    } else {
        ds
    };
    let config_file = match &a.config {
        Some(p) => Some(HashedFile {
            path: p.clone(),
            sha256: file_hash(p)?,
        }),
        None => None,
    };
    let inputs = RunInputs {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        args: std::env::args().skip(1).collect(),
        config_file,
        config: resolved.snapshot(),
        dataset: Some(HashedFile {
            sha256: dataset_hash(&dir)?,
            path: dir,
        }),
        mask: mask_file,
        checkpoint: None,
        seed: config.seed,
    };
    fs::create_dir_all(&a.out)?;
    Ok(Run {
        resolved,
        config,
        ds,
        mask,
        inputs,
        started,
    })
}

impl Run {
    fn finish(self, out: &Path) -> Result<(), CliError> {
        let secs = self.started.elapsed().as_secs_f64();
        RunManifest::new(self.inputs, secs).write(&out.join("manifest.json"))
    }
}

#[derive(Debug, Serialize)]
struct Report {
    acc: Option<f64>,
    nmi: Option<f64>,
    ari: Option<f64>,
    k: usize,
    inertia: f64,
    seed: u64,
    config_hash: String,
}

fn write_evaluation(out: &Path, eval: &Evaluation, run: &Run) -> Result<(), CliError> {
    let r = &eval.report;
    let report = Report {
        acc: r.acc,
        nmi: r.nmi,
        ari: r.ari,
        k: r.k,
        inertia: r.inertia,
        seed: run.config.seed,
        config_hash: config_hash(&run.inputs.config),
    };
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    write_matrix_csv(&out.join("embeddings.csv"), &eval.embeddings)?;
    for (v, z) in eval.completed.iter().enumerate() {
        write_matrix_csv(&out.join(format!("completed_latents_view{v}.csv")), z)?;
    }
    let labels: String = r.predicted.iter().map(|l| format!("{l}\n")).collect();
    fs::write(out.join("assignments.csv"), labels)?;
    match (r.acc, r.nmi, r.ari) {
        (Some(acc), Some(nmi), Some(ari)) => log::info!("acc {acc:.4} nmi {nmi:.4} ari {ari:.4}"),
        _ => log::info!("clustered into {} groups (no labels to score against)", r.k),
    }
    Ok(())
}

fn train_as<F: Real>(run: &Run, out: &Path) -> Result<(), CliError> {
    let outcome = train_with::<F>(&run.config, &run.ds, &run.mask, |r, _| {
        let t = &r.terms;
        log::info!(
            "epoch {} rec {:.5} inf {:.5} mmi {:.5} mmd {:.5} total {:.5}",
            r.epoch,
            t.rec,
            t.inf,
            t.mmi,
            t.mmd,
            t.total
        );
        if let Some(m) = &r.metrics {
            log::info!("epoch {} acc {:.4} nmi {:.4} ari {:.4}", r.epoch, m.acc, m.nmi, m.ari);
        }
        Ok(())
    })?;
    outcome.history.write_csv(&out.join("history.csv"))?;
    let meta = serde_json::to_string(&run.inputs.config)?;
    outcome.model.to_checkpoint(meta).write(&out.join("model.ckpt"))?;
    let eval = clustering::evaluate(&outcome.model, &run.ds, &run.mask, &run.config)?;
    write_evaluation(out, &eval, run)
}

pub fn train(a: &RunArgs) -> Result<(), CliError> {
    let run = prepare("train", a, None)?;
    match run.config.precision {
        Precision::F32 => train_as::<f32>(&run, &a.out)?,
        Precision::F64 => train_as::<f64>(&run, &a.out)?,
    }
    run.finish(&a.out)
}

/// Float width stored in a checkpoint header.
fn checkpoint_precision(path: &Path) -> Result<Precision, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    match bytes.get(8) {
        Some(4) => Ok(Precision::F32),
        Some(8) => Ok(Precision::F64),
        _ => Err(CliError::Usage(format!("{} is not a checkpoint", path.display()))),
    }
}

fn evaluate_as<F: Real>(run: &Run, path: &Path, out: &Path) -> Result<(), CliError> {
    let ck = Checkpoint::<F>::read(path)?;
    let model = HsaccModel::from_checkpoint(&ck)?;
    if model.n_views() != run.ds.n_views() {
        return Err(CliError::Usage(format!(
            "checkpoint has {} views, dataset has {}",
            model.n_views(),
            run.ds.n_views()
        )));
    }
    let eval = clustering::evaluate(&model, &run.ds, &run.mask, &run.config)?;
    write_evaluation(out, &eval, run)
}

pub fn evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let precision = checkpoint_precision(&a.checkpoint)?;
    // The training settings stored with the checkpoint are the baseline.
    let mut base = Resolved::default();
    let meta = match precision {
        Precision::F32 => Checkpoint::<f32>::read(&a.checkpoint)?.meta,
        Precision::F64 => Checkpoint::<f64>::read(&a.checkpoint)?.meta,
    };
    if let Ok(snapshot) = serde_json::from_str(&meta) {
        base.apply_snapshot(&snapshot);
    }
    let mut run = prepare("evaluate", &a.run, Some(&base))?;
    run.inputs.checkpoint = Some(HashedFile {
        path: a.checkpoint.clone(),
        sha256: file_hash(&a.checkpoint)?,
    });
    match precision {
        Precision::F32 => evaluate_as::<f32>(&run, &a.checkpoint, &a.run.out)?,
        Precision::F64 => evaluate_as::<f64>(&run, &a.checkpoint, &a.run.out)?,
    }
    run.finish(&a.run.out)
}

fn metric_cells(result: &Result<Metrics, String>) -> [String; 4] {
    match result {
        Ok(m) => [format!("{:?}", m.acc), format!("{:?}", m.nmi), format!("{:?}", m.ari), String::new()],
        Err(e) => [String::new(), String::new(), String::new(), e.clone()],
    }
}

fn variant_label(set: &LossSet) -> String {
    LossSet::ablation_grid()
        .iter()
        .position(|s| s == set)
        .map(|i| format!("M-{}", i + 1))
        .unwrap_or_default()
}

fn grid_outcome(failed: usize, total: usize, path: &Path) -> Result<(), CliError> {
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "{failed} of {total} cells failed; see the error column of {}",
            path.display()
        )))
    }
}

fn ablate_as<F: Real>(run: &Run, out: &Path) -> Result<PathBuf, CliError> {
    let variants = run.resolved.ablate_variants()?;
    let seeds = run.resolved.seeds("ablate")?;
    let path = out.join("ablation.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["variant", "terms", "seed", "acc", "nmi", "ari", "error"])?;
    let mut io_err = None;
    let rows = run_ablation::<F>(&run.config, &run.ds, &run.mask, &variants, &seeds, |row: &AblationRow| {
        log::info!("{} seed {}: {:?}", row.variant, row.seed, row.result);
        let [acc, nmi, ari, err] = metric_cells(&row.result);
        let record = [variant_label(&row.variant), row.variant.to_string(), row.seed.to_string(), acc, nmi, ari, err];
        if let Err(e) = w.write_record(&record).and_then(|_| w.flush().map_err(Into::into)) {
            io_err.get_or_insert(e);
        }
    });
    if let Some(e) = io_err {
        return Err(e.into());
    }
    let failed = rows.iter().filter(|r| r.result.is_err()).count();
    grid_outcome(failed, rows.len(), &path).map(|_| path)
}

pub fn ablate(a: &RunArgs) -> Result<(), CliError> {
    let run = prepare("ablate", a, None)?;
    let result = match run.config.precision {
        Precision::F32 => ablate_as::<f32>(&run, &a.out),
        Precision::F64 => ablate_as::<f64>(&run, &a.out),
    };
    run.finish(&a.out)?;
    result.map(|_| ())
}

const LAMBDA_NAMES: [&str; 4] = ["lambda1", "lambda2", "lambda3", "lambda4"];

fn sweep_as<F: Real>(run: &Run, out: &Path) -> Result<(), CliError> {
    let (terms, values) = run.resolved.sweep_grid()?;
    let seeds = run.resolved.seeds("sweep")?;
    let path = out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["swept", "value"];
    header.extend(LAMBDA_NAMES);
    header.extend(["seed", "acc", "nmi", "ari", "error"]);
    w.write_record(&header)?;
    let mut io_err = None;
    let mut failed = 0;
    let mut total = 0;
    for term in terms {
        let rows = run_lambda_sweep::<F>(&run.config, &run.ds, &run.mask, term, &values, &seeds, |row: &SweepRow| {
            log::info!("{}={} seed {}: {:?}", LAMBDA_NAMES[row.term], row.value, row.seed, row.result);
            let mut lambdas = run.config.lambdas.as_array();
            lambdas[row.term] = row.value;
            let mut record = vec![LAMBDA_NAMES[row.term].to_string(), format!("{:?}", row.value)];
            record.extend(lambdas.iter().map(|l| format!("{l:?}")));
            record.push(row.seed.to_string());
            record.extend(metric_cells(&row.result));
            if let Err(e) = w.write_record(&record).and_then(|_| w.flush().map_err(Into::into)) {
                io_err.get_or_insert(e);
            }
        })?;
        failed += rows.iter().filter(|r| r.result.is_err()).count();
        total += rows.len();
    }
    if let Some(e) = io_err {
        return Err(e.into());
    }
    grid_outcome(failed, total, &path)
}

pub fn sweep(a: &RunArgs) -> Result<(), CliError> {
    let run = prepare("sweep", a, None)?;
    let result = match run.config.precision {
        Precision::F32 => sweep_as::<f32>(&run, &a.out),
        Precision::F64 => sweep_as::<f64>(&run, &a.out),
    };
    run.finish(&a.out)?;
    result
}
