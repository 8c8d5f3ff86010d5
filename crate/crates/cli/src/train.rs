//! Training loop: frozen features, AdamW with cosine decay, deterministic
//! batching, per-step loss logging.

use crate::config::RunConfig;
use crate::error::CliError;
use std::io::Write;
use std::path::Path;
use ustar_core::data::{batch_iter, build_head_input, build_samples, BuildConfig, Corpus, Sample};
use ustar_core::models::{build_head, multi_view_loss, Head};
use ustar_core::rng::derive_seed;
use ustar_core::sampling::build_sampler;
use ustar_core::tensor::{cosine_lr, AdamW, Graph, ParamId, Scalar};

/// One row of the loss log.
#[derive(Debug, Clone)]
pub struct LossRow {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

pub struct TrainResult<T: Scalar> {
    pub head: Box<dyn Head<T>>,
    pub log: Vec<LossRow>,
    /// Mean loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub sample_count: usize,
}

pub fn training_build_config(cfg: &RunConfig) -> BuildConfig {
    BuildConfig {
        graph_size: cfg.graph_size,
        min_history: cfg.min_history,
        frame_stride: cfg.train_frame_stride,
        exclude_trans_mm: cfg.exclude_trans_mm,
        exclude_rot_deg: cfg.exclude_rot_deg,
    }
}

pub fn eval_build_config(cfg: &RunConfig) -> BuildConfig {
    BuildConfig {
        frame_stride: cfg.eval_frame_stride,
        ..training_build_config(cfg)
    }
}

/// Build supervised samples for the given subjects' scans.
pub fn collect_samples(
    corpus: &Corpus,
    subjects: &[u32],
    build: &BuildConfig,
    sampler_strategy: &str,
    sampler_k: usize,
    seed: u64,
) -> Result<Vec<Sample>, CliError> {
    let sampler = build_sampler(sampler_strategy, sampler_k)?;
    let mut samples = Vec::new();
    for scan in corpus.scans_of_subjects(subjects) {
        samples.extend(build_samples(scan, build, sampler.as_ref(), seed));
    }
    Ok(samples)
}

/// Train the configured head on the train-side subjects.
pub fn train_head<T: Scalar>(
    cfg: &RunConfig,
    corpus: &Corpus,
    train_subjects: &[u32],
) -> Result<TrainResult<T>, CliError> {
    let kind = cfg.head_kind()?;
    if cfg.feature_dim != ustar_core::encoders::FeatureProvider::dim(corpus) {
        return Err(CliError::validation(format!(
            "model.c = {} but corpus features have dimension {}",
            cfg.feature_dim,
            ustar_core::encoders::FeatureProvider::dim(corpus)
        )));
    }
    let mut head = build_head::<T>(kind, &cfg.head_config(), cfg.seed)?;
    let samples = collect_samples(
        corpus,
        train_subjects,
        &training_build_config(cfg),
        &cfg.sampler_strategy,
        cfg.sampler_k,
        cfg.seed,
    )?;
    if samples.is_empty() {
        return Err(CliError::runtime("no training samples were built"));
    }

    let steps_per_epoch = samples.len().div_ceil(cfg.batch_size) as u64;
    let total_steps = steps_per_epoch * cfg.epochs as u64;
    let optimizer = AdamW::with_weight_decay(cfg.weight_decay);
    let mut log = Vec::with_capacity(total_steps as usize);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;

    // Gradient accumulator, one dense buffer per parameter tensor.
    let shapes: Vec<usize> = head
        .params()
        .iter()
        .map(|(_, e)| e.value.len())
        .collect();

    for epoch in 0..cfg.epochs {
        let batches = batch_iter(
            samples.len(),
            cfg.batch_size,
            derive_seed(&[cfg.seed, 0xe9_0c, epoch as u64]),
        );
        let mut epoch_loss_sum = 0.0;
        let mut epoch_batches = 0usize;
        for batch in batches {
            let mut acc: Vec<Vec<T>> = shapes.iter().map(|&n| vec![T::ZERO; n]).collect();
            let inv_batch = T::from_f64(1.0 / batch.len() as f64);
            let mut batch_loss = 0.0f64;
            for &sample_idx in &batch {
                let sample = &samples[sample_idx];
                let scan = corpus.scan(sample.scan)?;
                let input = build_head_input(scan, sample, corpus)?;
                let mut g = Graph::new();
                let preds = head.forward(&mut g, &input)?;
                let loss = multi_view_loss(&mut g, &preds, &sample.labels, &sample.mask)?;
                batch_loss += g.scalar(loss).to_f64();
                let scaled = g.scale(loss, inv_batch);
                g.backward(scaled);
                for (pid, grad) in g.param_grads() {
                    let buf = &mut acc[pid.index()];
                    for (a, b) in buf.iter_mut().zip(&grad) {
                        *a += *b;
                    }
                }
            }
            let lr = cosine_lr(step, total_steps, cfg.learning_rate)
                .map_err(|e| CliError::runtime(e.to_string()))?;
            let grads: Vec<(ParamId, Vec<T>)> = acc
                .into_iter()
                .enumerate()
                .map(|(i, g)| (ParamId::from_index(i), g))
                .collect();
            optimizer
                .step(head.params_mut(), &grads, lr, step + 1)
                .map_err(|e| CliError::runtime(e.to_string()))?;
            let mean_loss = batch_loss / batch.len() as f64;
            log.push(LossRow {
                step,
                lr,
                loss: mean_loss,
            });
            epoch_loss_sum += mean_loss;
            epoch_batches += 1;
            step += 1;
        }
        epoch_losses.push(epoch_loss_sum / epoch_batches.max(1) as f64);
    }

    Ok(TrainResult {
        head,
        log,
        epoch_losses,
        sample_count: samples.len(),
    })
}

pub fn write_loss_log(log: &[LossRow], path: &Path) -> Result<(), CliError> {
    let mut out = String::from("step,lr,loss\n");
    for row in log {
        out.push_str(&format!("{},{},{}\n", row.step, row.lr, row.loss));
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}
