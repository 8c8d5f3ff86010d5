//! Evaluation: per-view MAE over validation samples, grouped into the
//! parasternal (views 0-5) and apical (views 6-9) windows, with report
//! emission as CSV and JSON.

use crate::config::RunConfig;
use crate::error::CliError;
use crate::train::{collect_samples, eval_build_config};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use ustar_core::data::{build_head_input, Corpus};
use ustar_core::models::{predictions_to_actions, Head};
use ustar_core::pose::{action_mae, Action6};
use ustar_core::sampling::VIEW_COUNT;
use ustar_core::tensor::{Graph, Scalar};

pub const PARASTERNAL_VIEWS: std::ops::Range<usize> = 0..6;
pub const APICAL_VIEWS: std::ops::Range<usize> = 6..10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaePair {
    pub trans_mm: f64,
    pub rot_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewMae {
    pub view: usize,
    pub trans_mm: f64,
    pub rot_deg: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_view: Vec<ViewMae>,
    pub parasternal: MaePair,
    pub apical: MaePair,
    pub overall: MaePair,
    pub samples: usize,
    pub config_digest: String,
    pub corpus_digest: String,
    pub checkpoint_digest: String,
}

fn group_mean(per_view: &[ViewMae], range: std::ops::Range<usize>) -> MaePair {
    let views = &per_view[range];
    let n = views.len() as f64;
    MaePair {
        trans_mm: views.iter().map(|v| v.trans_mm).sum::<f64>() / n,
        rot_deg: views.iter().map(|v| v.rot_deg).sum::<f64>() / n,
    }
}

/// MAE of the head over the given subjects' scans, anchors drawn with the
/// eval-side sampler stream (fixed seed, independent of training).
pub fn evaluate<T: Scalar>(
    head: &dyn Head<T>,
    corpus: &Corpus,
    subjects: &[u32],
    cfg: &RunConfig,
    digests: (&str, &str, &str),
) -> Result<MetricsReport, CliError> {
    let samples = collect_samples(
        corpus,
        subjects,
        &eval_build_config(cfg),
        &cfg.sampler_strategy,
        cfg.sampler_k,
        cfg.eval_seed,
    )?;
    if samples.is_empty() {
        return Err(CliError::runtime("no evaluation samples were built"));
    }
    let mut preds_per_view: Vec<Vec<Action6>> = vec![Vec::new(); VIEW_COUNT];
    let mut labels_per_view: Vec<Vec<Action6>> = vec![Vec::new(); VIEW_COUNT];
    for sample in &samples {
        let scan = corpus.scan(sample.scan)?;
        let input = build_head_input(scan, sample, corpus)?;
        let mut g = Graph::new();
        let pred_nodes = head.forward(&mut g, &input)?;
        let actions = predictions_to_actions(&g, &pred_nodes);
        for view in 0..VIEW_COUNT {
            if sample.mask[view] {
                preds_per_view[view].push(actions[view]);
                labels_per_view[view].push(sample.labels[view]);
            }
        }
    }
    let mut per_view = Vec::with_capacity(VIEW_COUNT);
    for view in 0..VIEW_COUNT {
        let (trans, rot) = action_mae(&preds_per_view[view], &labels_per_view[view])
            .map_err(|e| CliError::runtime(e.to_string()))?;
        per_view.push(ViewMae {
            view,
            trans_mm: trans,
            rot_deg: rot,
            samples: preds_per_view[view].len(),
        });
    }
    let (config_digest, corpus_digest, checkpoint_digest) = digests;
    Ok(MetricsReport {
        parasternal: group_mean(&per_view, PARASTERNAL_VIEWS),
        apical: group_mean(&per_view, APICAL_VIEWS),
        overall: group_mean(&per_view, 0..VIEW_COUNT),
        samples: samples.len(),
        per_view,
        config_digest: config_digest.to_string(),
        corpus_digest: corpus_digest.to_string(),
        checkpoint_digest: checkpoint_digest.to_string(),
    })
}

pub fn write_metrics_csv(report: &MetricsReport, path: &Path) -> Result<(), CliError> {
    let mut out = String::from("view,trans_mae_mm,rot_mae_deg,samples\n");
    for v in &report.per_view {
        out.push_str(&format!("{},{},{},{}\n", v.view, v.trans_mm, v.rot_deg, v.samples));
    }
    out.push_str(&format!(
        "parasternal,{},{},{}\n",
        report.parasternal.trans_mm, report.parasternal.rot_deg, report.samples
    ));
    out.push_str(&format!(
        "apical,{},{},{}\n",
        report.apical.trans_mm, report.apical.rot_deg, report.samples
    ));
    out.push_str(&format!(
        "overall,{},{},{}\n",
        report.overall.trans_mm, report.overall.rot_deg, report.samples
    ));
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

pub fn write_metrics_json(report: &MetricsReport, path: &Path) -> Result<(), CliError> {
    let body = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, body + "\n")?;
    Ok(())
}

pub fn read_metrics_json(path: &Path) -> Result<MetricsReport, CliError> {
    let body = std::fs::read_to_string(path)?;
    serde_json::from_str(&body).map_err(|e| CliError::runtime(format!("bad metrics json: {e}")))
}
