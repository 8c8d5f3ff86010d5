//! Navigation heads: interchangeable models mapping the current frame plus
//! sampled history to ten per-view probe actions.
//!
//! Every head implements [`Head`] and is registered by name: `star` (anchors
//! attend among themselves, then the current view cross-attends into the
//! refined map), `chain` (time-ordered tokens with consecutive inter-frame
//! actions and sinusoidal positions), `fc` (all tokens, history and current,
//! attend to each other), and `single` (decoders on the current feature
//! alone). Heads own their parameters; forward passes build a fresh autodiff
//! graph, so immutable snapshots are safe to share across threads.

pub mod chain;
pub mod fc;
pub mod loss;
pub mod single;
pub mod star;

pub use chain::ChainHead;
pub use fc::FcHead;
pub use loss::{multi_view_loss, SMOOTH_L1_BETA};
pub use single::SingleFrameHead;
pub use star::StarHead;

use crate::encoders::{ActionScale, ScanId};
use crate::pose::Action6;
use crate::sampling::VIEW_COUNT;
use crate::tensor::{checkpoint, Graph, Parameters, Scalar, TensorError, TensorId};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("anchor set is empty; use the single-frame head for history-free prediction")]
    EmptyAnchors,
    #[error("feature dimension mismatch: model expects {expected}, input has {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("chain actions length {got} must be anchor count + 1 = {want}")]
    ChainLength { got: usize, want: usize },
    #[error("loss mask selects no views")]
    EmptyMask,
    #[error("unknown head kind {0:?} (expected one of {:?})", head_names())]
    UnknownKind(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] checkpoint::CheckpointError),
    #[error("checkpoint meta: {0}")]
    Meta(String),
}

/// The model taxonomy row a head realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeadKind {
    Star,
    Chain,
    FullyConnected,
    SingleFrame,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Star => "star",
            HeadKind::Chain => "chain",
            HeadKind::FullyConnected => "fc",
            HeadKind::SingleFrame => "single",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, ModelError> {
        match name {
            "star" => Ok(HeadKind::Star),
            "chain" => Ok(HeadKind::Chain),
            "fc" => Ok(HeadKind::FullyConnected),
            "single" => Ok(HeadKind::SingleFrame),
            other => Err(ModelError::UnknownKind(other.to_string())),
        }
    }

    pub fn all() -> [HeadKind; 4] {
        [
            HeadKind::Star,
            HeadKind::Chain,
            HeadKind::FullyConnected,
            HeadKind::SingleFrame,
        ]
    }
}

pub fn head_names() -> &'static [&'static str] {
    &["star", "chain", "fc", "single"]
}

/// Serializable mirror of [`ActionScale`] for checkpoint headers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionScaleMeta {
    pub pos_mm: f64,
    pub rot_deg: f64,
}

impl From<ActionScaleMeta> for ActionScale {
    fn from(m: ActionScaleMeta) -> Self {
        ActionScale {
            pos_mm: m.pos_mm,
            rot_deg: m.rot_deg,
        }
    }
}

/// Architecture hyperparameters shared by all heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    /// Feature dimension C; the action encoder maps into the same space.
    pub feature_dim: usize,
    pub heads: usize,
    /// Self-attention blocks in the refinement stack.
    pub attn_depth: usize,
    /// Optional pre-norm inside attention blocks; off by default.
    pub prenorm: bool,
    /// Optional action standardization; off by default (native mm/deg).
    pub action_scale: Option<ActionScaleMeta>,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            feature_dim: 64,
            heads: 4,
            attn_depth: 2,
            prenorm: false,
            action_scale: None,
        }
    }
}

impl HeadConfig {
    pub fn action_scale(&self) -> Option<ActionScale> {
        self.action_scale.map(ActionScale::from)
    }
}

/// One spatial anchor: a historical keyframe's visual feature plus the
/// relative action from the current view to that keyframe.
#[derive(Debug, Clone)]
pub struct Anchor {
    pub index: u32,
    pub feature: Vec<f64>,
    pub action: Action6,
}

/// The star-graph input: anchors plus the current-view feature.
#[derive(Debug, Clone)]
pub struct AnchorSet {
    pub scan: ScanId,
    pub current_index: u32,
    pub current_feature: Vec<f64>,
    pub anchors: Vec<Anchor>,
}

/// Full model input; `chain_actions[i]` is the incoming consecutive action of
/// token i in temporal order (anchors ascending, current last), with the
/// first token receiving the zero action.
#[derive(Debug, Clone)]
pub struct HeadInput {
    pub set: AnchorSet,
    pub chain_actions: Vec<Action6>,
}

impl HeadInput {
    /// History-free input (single-frame mode).
    pub fn current_only(scan: ScanId, current_index: u32, current_feature: Vec<f64>) -> Self {
        HeadInput {
            set: AnchorSet {
                scan,
                current_index,
                current_feature,
                anchors: Vec::new(),
            },
            chain_actions: vec![Action6::zero()],
        }
    }
}

/// A navigation model behind the runtime registry.
pub trait Head<T: Scalar>: Send + Sync {
    fn kind(&self) -> HeadKind;
    fn config(&self) -> &HeadConfig;
    fn params(&self) -> &Parameters<T>;
    fn params_mut(&mut self) -> &mut Parameters<T>;
    /// Ten prediction nodes in view order 0..9, each of shape [1, 6].
    fn forward(&self, g: &mut Graph<T>, input: &HeadInput) -> Result<Vec<TensorId>, ModelError>;
}

/// Build a head by kind; the name-keyed entry point behind `--model`.
pub fn build_head<T: Scalar>(
    kind: HeadKind,
    cfg: &HeadConfig,
    seed: u64,
) -> Result<Box<dyn Head<T>>, ModelError> {
    Ok(match kind {
        HeadKind::Star => Box::new(StarHead::new(cfg.clone(), seed)?),
        HeadKind::Chain => Box::new(ChainHead::new(cfg.clone(), seed)?),
        HeadKind::FullyConnected => Box::new(FcHead::new(cfg.clone(), seed)?),
        HeadKind::SingleFrame => Box::new(SingleFrameHead::new(cfg.clone(), seed)?),
    })
}

/// Read ten [1,6] prediction nodes into actions.
pub fn predictions_to_actions<T: Scalar>(g: &Graph<T>, preds: &[TensorId]) -> Vec<Action6> {
    preds
        .iter()
        .map(|&id| {
            let v = g.value(id);
            Action6 {
                dpos: [v[0].to_f64(), v[1].to_f64(), v[2].to_f64()],
                drot: [v[3].to_f64(), v[4].to_f64(), v[5].to_f64()],
            }
        })
        .collect()
}

fn linear_count(input: usize, output: usize) -> usize {
    input * output + output
}

fn mha_count(width: usize) -> usize {
    4 * linear_count(width, width)
}

fn decoder_count(c: usize) -> usize {
    VIEW_COUNT * (linear_count(c, c) + linear_count(c, 6))
}

/// Closed-form parameter count per head at feature dimension C:
/// `actenc(6C+C) + depth*mha(2C) + proj(2CC+C) [+ mha(C) for star] +
/// 10*((C^2+C)+(6C+6))`, with `mha(w) = 4(w^2+w)`; the single-frame head
/// keeps only the decoders.
pub fn expected_param_count(kind: HeadKind, cfg: &HeadConfig) -> usize {
    let c = cfg.feature_dim;
    let stack = linear_count(6, c) + cfg.attn_depth * mha_count(2 * c) + linear_count(2 * c, c);
    match kind {
        HeadKind::Star => stack + mha_count(c) + decoder_count(c),
        HeadKind::Chain | HeadKind::FullyConnected => stack + decoder_count(c),
        HeadKind::SingleFrame => decoder_count(c),
    }
}

#[derive(Serialize, Deserialize)]
struct HeadMeta {
    kind: String,
    config: HeadConfig,
}

/// Write a head's parameters with its hyperparameters in the header.
pub fn save_head<T: Scalar>(
    path: &Path,
    head: &dyn Head<T>,
    digest: &[u8],
) -> Result<(), ModelError> {
    let meta = serde_json::to_string(&HeadMeta {
        kind: head.kind().name().to_string(),
        config: head.config().clone(),
    })
    .expect("meta is serializable");
    checkpoint::save(path, head.params(), digest, &meta)?;
    Ok(())
}

/// Rebuild a head from a checkpoint: construct from header hyperparameters,
/// then restore parameter values bit-exactly.
pub fn load_head<T: Scalar>(path: &Path) -> Result<(Box<dyn Head<T>>, Vec<u8>), ModelError> {
    let ckpt = checkpoint::load(path)?;
    let meta: HeadMeta =
        serde_json::from_str(&ckpt.meta).map_err(|e| ModelError::Meta(e.to_string()))?;
    let kind = HeadKind::from_name(&meta.kind)?;
    let mut head = build_head::<T>(kind, &meta.config, 0)?;
    checkpoint::restore(head.params_mut(), &ckpt)?;
    Ok((head, ckpt.digest))
}
