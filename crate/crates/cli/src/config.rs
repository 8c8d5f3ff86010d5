//! Run configuration: defaults, TOML config files with dotted keys, and
//! generic `--set key=value` overrides with flag-over-file precedence.
//!
//! Every semantic key participates in the config digest embedded in reports
//! and checkpoints; output paths do not, so artifacts stay comparable across
//! directories.

use crate::error::CliError;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use ustar_core::models::{ActionScaleMeta, HeadConfig, HeadKind};
use ustar_core::sim::SimConfig;
use ustar_core::tensor::Precision;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus: PathBuf,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,

    pub model_kind: String,
    pub feature_dim: usize,
    pub heads: usize,
    pub attn_depth: usize,
    pub prenorm: bool,
    pub standardize_actions: bool,
    pub action_scale_mm: f64,
    pub action_scale_deg: f64,
    pub graph_size: usize,

    pub sampler_strategy: String,
    pub sampler_k: usize,
    pub exclude_trans_mm: f64,
    pub exclude_rot_deg: f64,

    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub precision: String,
    pub train_frame_stride: usize,
    pub min_history: usize,

    pub eval_frame_stride: usize,
    pub eval_seed: u64,
    /// Which split side to evaluate: "val" (default) or "train".
    pub eval_split: String,

    pub val_fraction: f64,

    pub sim: SimConfig,

    pub scale_l_values: Vec<usize>,
    pub ablate_seeds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            corpus: PathBuf::from("corpus"),
            out: PathBuf::from("out"),
            checkpoint: None,
            model_kind: "star".into(),
            feature_dim: 64,
            heads: 4,
            attn_depth: 2,
            prenorm: false,
            standardize_actions: false,
            action_scale_mm: 50.0,
            action_scale_deg: 60.0,
            graph_size: 8,
            sampler_strategy: "semantic".into(),
            sampler_k: 128,
            exclude_trans_mm: 5.0,
            exclude_rot_deg: 5.0,
            batch_size: 128,
            learning_rate: 1e-4,
            epochs: 5,
            weight_decay: 0.01,
            precision: "f32".into(),
            train_frame_stride: 5,
            min_history: 8,
            eval_frame_stride: 5,
            eval_seed: 777,
            eval_split: "val".into(),
            val_fraction: 0.23,
            sim: SimConfig::default(),
            scale_l_values: vec![2, 4, 6, 8, 12, 16],
            ablate_seeds: 3,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::validation(format!("cannot parse {key} = {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, CliError> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse::<usize>(key, s))
        .collect()
}

impl RunConfig {
    /// Apply one dotted key. Unknown keys are validation errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "paths.corpus" => self.corpus = PathBuf::from(value),
            "paths.out" => self.out = PathBuf::from(value),
            "paths.checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "model.kind" => self.model_kind = value.trim().to_string(),
            "model.c" => self.feature_dim = parse(key, value)?,
            "model.heads" => self.heads = parse(key, value)?,
            "model.depth" => self.attn_depth = parse(key, value)?,
            "model.prenorm" => self.prenorm = parse(key, value)?,
            "model.standardize_actions" => self.standardize_actions = parse(key, value)?,
            "model.action_scale_mm" => self.action_scale_mm = parse(key, value)?,
            "model.action_scale_deg" => self.action_scale_deg = parse(key, value)?,
            "graph.l" => self.graph_size = parse(key, value)?,
            "sampler.strategy" => self.sampler_strategy = value.trim().to_string(),
            "sampler.k" => self.sampler_k = parse(key, value)?,
            "sampler.exclude.trans_mm" => self.exclude_trans_mm = parse(key, value)?,
            "sampler.exclude.rot_deg" => self.exclude_rot_deg = parse(key, value)?,
            "train.batch_size" => self.batch_size = parse(key, value)?,
            "train.lr" => self.learning_rate = parse(key, value)?,
            "train.epochs" => self.epochs = parse(key, value)?,
            "train.weight_decay" => self.weight_decay = parse(key, value)?,
            "train.precision" => self.precision = value.trim().to_string(),
            "train.frame_stride" => self.train_frame_stride = parse(key, value)?,
            "train.min_history" => self.min_history = parse(key, value)?,
            "eval.frame_stride" => self.eval_frame_stride = parse(key, value)?,
            "eval.seed" => self.eval_seed = parse(key, value)?,
            "eval.split" => self.eval_split = value.trim().to_string(),
            "data.val_fraction" => self.val_fraction = parse(key, value)?,
            "sim.frames" => self.sim.frames_per_scan = parse(key, value)?,
            "sim.subjects" => self.sim.subjects = parse(key, value)?,
            "sim.scans_per_subject" => self.sim.scans_per_subject = parse(key, value)?,
            "sim.fourier_dim" => self.sim.fourier_dim = parse(key, value)?,
            "sim.approach_frac" => self.sim.approach_frac = parse(key, value)?,
            "sim.step_mm" => self.sim.step_mm = parse(key, value)?,
            "sim.step_deg" => self.sim.step_deg = parse(key, value)?,
            "sim.noise_mm" => self.sim.noise_mm = parse(key, value)?,
            "sim.noise_deg" => self.sim.noise_deg = parse(key, value)?,
            "sim.backtrack_prob" => self.sim.backtrack_prob = parse(key, value)?,
            "sim.capture_mm" => self.sim.capture_mm = parse(key, value)?,
            "sim.capture_deg" => self.sim.capture_deg = parse(key, value)?,
            "sim.feature_noise" => self.sim.feature_noise = parse(key, value)?,
            "sim.tau" => self.sim.tau = parse(key, value)?,
            "sim.pos_sigma" => self.sim.pos_sigma = parse(key, value)?,
            "sim.rot_sigma" => self.sim.rot_sigma = parse(key, value)?,
            "sim.fourier_bandwidth" => self.sim.fourier_bandwidth = parse(key, value)?,
            "sim.feature_scale" => self.sim.feature_scale = parse(key, value)?,
            "sim.min_sep_mm" => self.sim.min_separation_mm = parse(key, value)?,
            "sim.min_sep_deg" => self.sim.min_separation_deg = parse(key, value)?,
            "sim.target_jitter_mm" => self.sim.target_jitter_mm = parse(key, value)?,
            "sim.target_jitter_deg" => self.sim.target_jitter_deg = parse(key, value)?,
            "sim.base_pos_range" => self.sim.base_pos_range = parse(key, value)?,
            "sim.base_rot_range" => self.sim.base_rot_range = parse(key, value)?,
            "sim.layout_pos_range" => self.sim.layout_pos_range = parse(key, value)?,
            "sim.layout_rot_range" => self.sim.layout_rot_range = parse(key, value)?,
            "sim.max_retries" => self.sim.max_retries = parse(key, value)?,
            "scale.l_values" => self.scale_l_values = parse_list(key, value)?,
            "ablate.seeds" => self.ablate_seeds = parse(key, value)?,
            other => {
                return Err(CliError::validation(format!("unknown config key {other:?}")))
            }
        }
        Ok(())
    }

    /// Every semantic key as `key = value`, sorted; the digest input.
    /// Output paths are intentionally absent.
    pub fn lines(&self) -> Vec<String> {
        let l_values: Vec<String> = self.scale_l_values.iter().map(usize::to_string).collect();
        let mut lines = vec![
            format!("ablate.seeds = {}", self.ablate_seeds),
            format!("data.val_fraction = {}", self.val_fraction),
            format!("eval.frame_stride = {}", self.eval_frame_stride),
            format!("eval.seed = {}", self.eval_seed),
            format!("eval.split = {}", self.eval_split),
            format!("graph.l = {}", self.graph_size),
            format!("model.action_scale_deg = {}", self.action_scale_deg),
            format!("model.action_scale_mm = {}", self.action_scale_mm),
            format!("model.c = {}", self.feature_dim),
            format!("model.depth = {}", self.attn_depth),
            format!("model.heads = {}", self.heads),
            format!("model.kind = {}", self.model_kind),
            format!("model.prenorm = {}", self.prenorm),
            format!("model.standardize_actions = {}", self.standardize_actions),
            format!("sampler.exclude.rot_deg = {}", self.exclude_rot_deg),
            format!("sampler.exclude.trans_mm = {}", self.exclude_trans_mm),
            format!("sampler.k = {}", self.sampler_k),
            format!("sampler.strategy = {}", self.sampler_strategy),
            format!("scale.l_values = {}", l_values.join(",")),
            format!("seed = {}", self.seed),
            format!("sim.approach_frac = {}", self.sim.approach_frac),
            format!("sim.backtrack_prob = {}", self.sim.backtrack_prob),
            format!("sim.base_pos_range = {}", self.sim.base_pos_range),
            format!("sim.base_rot_range = {}", self.sim.base_rot_range),
            format!("sim.capture_deg = {}", self.sim.capture_deg),
            format!("sim.capture_mm = {}", self.sim.capture_mm),
            format!("sim.feature_noise = {}", self.sim.feature_noise),
            format!("sim.feature_scale = {}", self.sim.feature_scale),
            format!("sim.fourier_bandwidth = {}", self.sim.fourier_bandwidth),
            format!("sim.fourier_dim = {}", self.sim.fourier_dim),
            format!("sim.frames = {}", self.sim.frames_per_scan),
            format!("sim.layout_pos_range = {}", self.sim.layout_pos_range),
            format!("sim.layout_rot_range = {}", self.sim.layout_rot_range),
            format!("sim.max_retries = {}", self.sim.max_retries),
            format!("sim.min_sep_deg = {}", self.sim.min_separation_deg),
            format!("sim.min_sep_mm = {}", self.sim.min_separation_mm),
            format!("sim.noise_deg = {}", self.sim.noise_deg),
            format!("sim.noise_mm = {}", self.sim.noise_mm),
            format!("sim.pos_sigma = {}", self.sim.pos_sigma),
            format!("sim.rot_sigma = {}", self.sim.rot_sigma),
            format!("sim.scans_per_subject = {}", self.sim.scans_per_subject),
            format!("sim.step_deg = {}", self.sim.step_deg),
            format!("sim.step_mm = {}", self.sim.step_mm),
            format!("sim.subjects = {}", self.sim.subjects),
            format!("sim.target_jitter_deg = {}", self.sim.target_jitter_deg),
            format!("sim.target_jitter_mm = {}", self.sim.target_jitter_mm),
            format!("sim.tau = {}", self.sim.tau),
            format!("train.batch_size = {}", self.batch_size),
            format!("train.epochs = {}", self.epochs),
            format!("train.frame_stride = {}", self.train_frame_stride),
            format!("train.lr = {}", self.learning_rate),
            format!("train.min_history = {}", self.min_history),
            format!("train.precision = {}", self.precision),
            format!("train.weight_decay = {}", self.weight_decay),
        ];
        lines.sort();
        lines
    }

    pub fn digest(&self) -> Vec<u8> {
        let mut hasher = Sha256::new();
        hasher.update(self.lines().join("\n").as_bytes());
        hasher.finalize().to_vec()
    }

    pub fn digest_hex(&self) -> String {
        self.digest().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Merge a TOML config file (file < flags precedence handled by caller).
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read config {path:?}: {e}")))?;
        let value: toml::Value = body
            .parse()
            .map_err(|e| CliError::validation(format!("bad TOML in {path:?}: {e}")))?;
        let mut pairs = Vec::new();
        flatten_toml("", &value, &mut pairs)?;
        for (key, val) in pairs {
            self.set(&key, &val)?;
        }
        Ok(())
    }

    pub fn head_kind(&self) -> Result<HeadKind, CliError> {
        HeadKind::from_name(&self.model_kind).map_err(|e| CliError::validation(e.to_string()))
    }

    pub fn head_config(&self) -> HeadConfig {
        HeadConfig {
            feature_dim: self.feature_dim,
            heads: self.heads,
            attn_depth: self.attn_depth,
            prenorm: self.prenorm,
            action_scale: self.standardize_actions.then_some(ActionScaleMeta {
                pos_mm: self.action_scale_mm,
                rot_deg: self.action_scale_deg,
            }),
        }
    }

    pub fn precision(&self) -> Result<Precision, CliError> {
        match self.precision.as_str() {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(CliError::validation(format!(
                "train.precision must be f32 or f64, got {other:?}"
            ))),
        }
    }

    /// Simulator config with the feature dimension tied to model.c.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            feature_dim: self.feature_dim,
            seed: self.seed,
            ..self.sim.clone()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.graph_size < 1 {
            return Err(CliError::validation("graph.l must be >= 1"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(CliError::validation("train.batch_size and train.epochs must be positive"));
        }
        if self.learning_rate <= 0.0 {
            return Err(CliError::validation("train.lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) || self.val_fraction == 0.0 {
            return Err(CliError::validation("data.val_fraction must lie in (0, 1)"));
        }
        if self.feature_dim % self.heads != 0 || (2 * self.feature_dim) % self.heads != 0 {
            return Err(CliError::validation(format!(
                "model.c = {} must be divisible by model.heads = {}",
                self.feature_dim, self.heads
            )));
        }
        self.head_kind()?;
        self.precision()?;
        ustar_core::sampling::build_sampler(&self.sampler_strategy, self.sampler_k)?;
        if !matches!(self.eval_split.as_str(), "val" | "train") {
            return Err(CliError::validation("eval.split must be val or train"));
        }
        Ok(())
    }
}

fn flatten_toml(
    prefix: &str,
    value: &toml::Value,
    out: &mut Vec<(String, String)>,
) -> Result<(), CliError> {
    match value {
        toml::Value::Table(table) => {
            for (k, v) in table {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_toml(&key, v, out)?;
            }
        }
        toml::Value::Array(items) => {
            let parts: Result<Vec<String>, CliError> = items
                .iter()
                .map(|v| scalar_to_string(prefix, v))
                .collect();
            out.push((prefix.to_string(), parts?.join(",")));
        }
        scalar => out.push((prefix.to_string(), scalar_to_string(prefix, scalar)?)),
    }
    Ok(())
}

fn scalar_to_string(key: &str, value: &toml::Value) -> Result<String, CliError> {
    match value {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        other => Err(CliError::validation(format!(
            "config key {key}: unsupported TOML value {other:?}"
        ))),
    }
}
