//! The five batch entry points: simulate, train, eval, scale-curve, ablate.
//! Every command is a pure function of its configuration and seeds; identical
//! inputs produce byte-identical outputs.

use crate::config::RunConfig;
use crate::error::CliError;
use crate::metrics::{evaluate, write_metrics_csv, write_metrics_json, MetricsReport};
use crate::svg::{line_chart, Series};
use crate::train::{train_head, write_loss_log};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};
use ustar_core::data::{split_by_subject, Corpus, Manifest, ManifestEntry, SplitSpec};
use ustar_core::encoders::ScanId;
use ustar_core::models::{load_head, save_head, HeadKind};
use ustar_core::rng::derive_seed;
use ustar_core::sim::{generate_anatomy, generate_trajectory, scan_io};
use ustar_core::tensor::{Precision, Scalar};

const SIM_STREAM: u64 = 0x51;
const SEED_STREAM: u64 = 0xab1a;

pub struct SimulateOutput {
    pub manifest_path: PathBuf,
    pub scan_count: usize,
}

/// Generate the synthetic corpus: `subjects x scans_per_subject` scan files
/// plus a manifest, all deterministic from the seed.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateOutput, CliError> {
    cfg.validate()?;
    let sim = cfg.sim_config();
    std::fs::create_dir_all(&cfg.corpus)
        .map_err(|e| CliError::validation(format!("cannot create {:?}: {e}", cfg.corpus)))?;
    let mut entries = Vec::new();
    let mut count = 0usize;
    for subject in 0..sim.subjects {
        let anatomy = generate_anatomy(cfg.seed, subject, &sim)?;
        for k in 0..sim.scans_per_subject {
            let scan_id = ScanId((subject * sim.scans_per_subject + k) as u64);
            let scan_seed = derive_seed(&[cfg.seed, SIM_STREAM, subject as u64, k as u64]);
            let traj = generate_trajectory(&anatomy, &sim, scan_seed, scan_id)?;
            let file = format!("scan_{subject:03}_{k:02}.jsonl");
            scan_io::write_scan(&traj, &cfg.corpus.join(&file))?;
            entries.push(ManifestEntry {
                path: file,
                subject,
            });
            count += 1;
        }
    }
    let manifest_path = cfg.corpus.join("manifest.json");
    ustar_core::data::write_manifest(&Manifest::new(entries), &manifest_path)?;
    Ok(SimulateOutput {
        manifest_path,
        scan_count: count,
    })
}

/// Hex digest of the corpus manifest file.
pub fn corpus_digest(manifest_path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(manifest_path)
        .map_err(|e| CliError::validation(format!("cannot read {manifest_path:?}: {e}")))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn load_corpus(cfg: &RunConfig) -> Result<Corpus, CliError> {
    let manifest = cfg.corpus.join("manifest.json");
    Corpus::load(&manifest).map_err(CliError::from)
}

pub fn compute_split(cfg: &RunConfig, corpus: &Corpus) -> Result<SplitSpec, CliError> {
    split_by_subject(&corpus.manifest, cfg.val_fraction, cfg.seed).map_err(CliError::from)
}

pub struct TrainOutput {
    pub checkpoint_path: PathBuf,
    pub loss_log_path: PathBuf,
    pub split_path: PathBuf,
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub sample_count: usize,
}

/// Train the configured head on the train-side subjects and write the
/// checkpoint, loss log, and split file.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutput, CliError> {
    cfg.validate()?;
    match cfg.precision()? {
        Precision::F32 => train_with::<f32>(cfg),
        Precision::F64 => train_with::<f64>(cfg),
    }
}

fn train_with<T: Scalar>(cfg: &RunConfig) -> Result<TrainOutput, CliError> {
    let corpus = load_corpus(cfg)?;
    let split = compute_split(cfg, &corpus)?;
    let result = train_head::<T>(cfg, &corpus, &split.train)?;
    std::fs::create_dir_all(&cfg.out)?;
    let checkpoint_path = cfg.out.join("checkpoint.ustar");
    let loss_log_path = cfg.out.join("loss_log.csv");
    let split_path = cfg.out.join("split.json");
    save_head(&checkpoint_path, result.head.as_ref(), &cfg.digest())?;
    write_loss_log(&result.log, &loss_log_path)?;
    split.write(&split_path)?;
    Ok(TrainOutput {
        checkpoint_path,
        loss_log_path,
        split_path,
        epoch_losses: result.epoch_losses,
        steps: result.log.len(),
        sample_count: result.sample_count,
    })
}

/// Evaluate a checkpoint on the configured split side and write
/// metrics.csv / metrics.json.
pub fn cmd_eval(cfg: &RunConfig) -> Result<MetricsReport, CliError> {
    cfg.validate()?;
    let checkpoint = cfg
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.out.join("checkpoint.ustar"));
    if !checkpoint.exists() {
        return Err(CliError::validation(format!(
            "checkpoint {checkpoint:?} does not exist"
        )));
    }
    let raw = ustar_core::tensor::checkpoint::load(&checkpoint)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    match raw.dtype {
        1 => eval_with::<f32>(cfg, &checkpoint),
        2 => eval_with::<f64>(cfg, &checkpoint),
        other => Err(CliError::runtime(format!("unknown checkpoint dtype {other}"))),
    }
}

fn eval_with<T: Scalar>(cfg: &RunConfig, checkpoint: &Path) -> Result<MetricsReport, CliError> {
    let corpus = load_corpus(cfg)?;
    let (head, ckpt_digest) = load_head::<T>(checkpoint)?;
    if head.config().feature_dim != ustar_core::encoders::FeatureProvider::dim(&corpus) {
        return Err(CliError::validation(format!(
            "checkpoint feature dimension {} does not match corpus dimension {}",
            head.config().feature_dim,
            ustar_core::encoders::FeatureProvider::dim(&corpus)
        )));
    }
    let split = compute_split(cfg, &corpus)?;
    let subjects = if cfg.eval_split == "train" {
        &split.train
    } else {
        &split.val
    };
    let corpus_dig = corpus_digest(&cfg.corpus.join("manifest.json"))?;
    let ckpt_hex: String = ckpt_digest.iter().map(|b| format!("{b:02x}")).collect();
    let report = evaluate(
        head.as_ref(),
        &corpus,
        subjects,
        cfg,
        (&cfg.digest_hex(), &corpus_dig, &ckpt_hex),
    )?;
    std::fs::create_dir_all(&cfg.out)?;
    write_metrics_csv(&report, &cfg.out.join("metrics.csv"))?;
    write_metrics_json(&report, &cfg.out.join("metrics.json"))?;
    Ok(report)
}

/// Per-sweep seeds derived from the base seed.
pub fn sweep_seeds(cfg: &RunConfig) -> Vec<u64> {
    (0..cfg.ablate_seeds as u64)
        .map(|i| derive_seed(&[cfg.seed, SEED_STREAM, i]))
        .collect()
}

/// Train + eval one configuration into `out_dir`; returns the overall MAE.
pub fn run_cell(cfg: &RunConfig, out_dir: &Path) -> Result<MetricsReport, CliError> {
    let mut cell_cfg = cfg.clone();
    cell_cfg.out = out_dir.to_path_buf();
    cell_cfg.checkpoint = None;
    cmd_train(&cell_cfg)?;
    cmd_eval(&cell_cfg)
}

#[derive(Debug, Clone)]
pub struct CurveRow {
    pub graph_size: usize,
    pub trans_mm: f64,
    pub rot_deg: f64,
}

/// Train and evaluate the configured model per graph size (seed-averaged),
/// emitting curve.csv and curve.svg. A failed sub-run aborts but preserves
/// the rows already written.
pub fn cmd_scale_curve(cfg: &RunConfig, l_values: &[usize]) -> Result<Vec<CurveRow>, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out)?;
    let csv_path = cfg.out.join("curve.csv");
    let seeds = sweep_seeds(cfg);
    let mut rows: Vec<CurveRow> = Vec::new();
    write_curve_csv(&rows, &csv_path)?;
    for &l in l_values {
        let mut trans_sum = 0.0;
        let mut rot_sum = 0.0;
        for (i, &seed) in seeds.iter().enumerate() {
            let mut sub = cfg.clone();
            sub.graph_size = l;
            sub.seed = seed;
            let dir = cfg.out.join(format!("scale/L{l:02}_s{i}"));
            std::fs::create_dir_all(&dir)?;
            let report = run_cell(&sub, &dir)?;
            trans_sum += report.overall.trans_mm;
            rot_sum += report.overall.rot_deg;
        }
        rows.push(CurveRow {
            graph_size: l,
            trans_mm: trans_sum / seeds.len() as f64,
            rot_deg: rot_sum / seeds.len() as f64,
        });
        write_curve_csv(&rows, &csv_path)?;
    }
    let svg = line_chart(
        "Validation MAE vs input graph size",
        "graph size L",
        "MAE",
        &[
            Series {
                label: "translation (mm)",
                points: rows.iter().map(|r| (r.graph_size as f64, r.trans_mm)).collect(),
            },
            Series {
                label: "rotation (deg)",
                points: rows.iter().map(|r| (r.graph_size as f64, r.rot_deg)).collect(),
            },
        ],
    );
    std::fs::write(cfg.out.join("curve.svg"), svg)?;
    Ok(rows)
}

fn write_curve_csv(rows: &[CurveRow], path: &Path) -> Result<(), CliError> {
    let mut out = String::from("L,trans_mae_mm,rot_mae_deg\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.graph_size, r.trans_mm, r.rot_deg));
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AblateCell {
    pub model: String,
    pub sampler: String,
    pub per_seed: Vec<(f64, f64)>,
    pub trans_mean: f64,
    pub trans_spread: f64,
    pub rot_mean: f64,
    pub rot_spread: f64,
}

/// Full grid over model x sampler x seeds; per-cell mean and spread
/// (population standard deviation over seeds) land in ablate.csv, per-run
/// values in ablate_runs.csv. Partial results survive a failed sub-run.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<Vec<AblateCell>, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out)?;
    let seeds = sweep_seeds(cfg);
    let cells_path = cfg.out.join("ablate.csv");
    let runs_path = cfg.out.join("ablate_runs.csv");
    let mut cells: Vec<AblateCell> = Vec::new();
    let mut runs: Vec<(String, String, usize, f64, f64)> = Vec::new();
    write_ablate_files(&cells, &runs, &cells_path, &runs_path)?;
    for kind in HeadKind::all() {
        for sampler in ["segmental", "semantic"] {
            let mut per_seed = Vec::with_capacity(seeds.len());
            for (i, &seed) in seeds.iter().enumerate() {
                let mut sub = cfg.clone();
                sub.model_kind = kind.name().to_string();
                sub.sampler_strategy = sampler.to_string();
                sub.seed = seed;
                let dir = cfg
                    .out
                    .join(format!("ablate/{}_{}_s{i}", kind.name(), sampler));
                std::fs::create_dir_all(&dir)?;
                let report = run_cell(&sub, &dir)?;
                per_seed.push((report.overall.trans_mm, report.overall.rot_deg));
                runs.push((
                    kind.name().to_string(),
                    sampler.to_string(),
                    i,
                    report.overall.trans_mm,
                    report.overall.rot_deg,
                ));
            }
            let (trans_mean, trans_spread) = mean_spread(per_seed.iter().map(|p| p.0));
            let (rot_mean, rot_spread) = mean_spread(per_seed.iter().map(|p| p.1));
            cells.push(AblateCell {
                model: kind.name().to_string(),
                sampler: sampler.to_string(),
                per_seed: per_seed.clone(),
                trans_mean,
                trans_spread,
                rot_mean,
                rot_spread,
            });
            write_ablate_files(&cells, &runs, &cells_path, &runs_path)?;
        }
    }
    Ok(cells)
}

fn mean_spread(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let values: Vec<f64> = values.collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn write_ablate_files(
    cells: &[AblateCell],
    runs: &[(String, String, usize, f64, f64)],
    cells_path: &Path,
    runs_path: &Path,
) -> Result<(), CliError> {
    let mut out = String::from("model,sampler,trans_mean_mm,trans_spread_mm,rot_mean_deg,rot_spread_deg,seeds\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.model, c.sampler, c.trans_mean, c.trans_spread, c.rot_mean, c.rot_spread,
            c.per_seed.len()
        ));
    }
    std::fs::write(cells_path, out)?;
    let mut out = String::from("model,sampler,seed_index,trans_mae_mm,rot_mae_deg\n");
    for (model, sampler, i, trans, rot) in runs {
        out.push_str(&format!("{model},{sampler},{i},{trans},{rot}\n"));
    }
    std::fs::write(runs_path, out)?;
    Ok(())
}
