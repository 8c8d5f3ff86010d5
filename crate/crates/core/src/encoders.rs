//! Frozen visual-feature providers and the trainable action encoder.
//!
//! The vision backbone is out of scope: features arrive either precomputed in
//! scan files or from the simulator's pose-conditioned oracle, both behind
//! [`FeatureProvider`]. Providers are read-only after construction and no
//! gradient ever flows into them. The action encoder is a single trainable
//! linear layer mapping raw 6-DOF actions (mm, deg) into the feature space.

use crate::pose::Action6;
use crate::tensor::{Graph, Linear, Parameters, Scalar, TensorId};
use thiserror::Error;

/// Identifier of one scan within a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScanId(pub u64);

impl std::fmt::Display for ScanId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("unknown scan {0}")]
    UnknownScan(ScanId),
    #[error("scan {scan} has no frame {frame}")]
    UnknownFrame { scan: ScanId, frame: usize },
}

/// Deterministic lookup of frozen visual features by (scan, frame).
pub trait FeatureProvider: Send + Sync {
    /// Feature dimension C; constant for the provider's lifetime.
    fn dim(&self) -> usize;
    /// Feature of one frame. Repeated lookups return identical vectors.
    fn lookup(&self, scan: ScanId, frame: usize) -> Result<&[f64], EncoderError>;
}

/// Optional fixed scaling applied to raw actions before encoding.
/// Off by default: actions are fed in native units (mm, deg) so translation
/// and rotation stay on the same order of magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionScale {
    pub pos_mm: f64,
    pub rot_deg: f64,
}

impl Default for ActionScale {
    fn default() -> Self {
        ActionScale {
            pos_mm: 50.0,
            rot_deg: 60.0,
        }
    }
}

/// Flatten an action to its 6-vector, optionally standardized.
pub fn action_vector(a: &Action6, scale: Option<&ActionScale>) -> [f64; 6] {
    let mut v = a.as_array();
    if let Some(s) = scale {
        for x in &mut v[..3] {
            *x /= s.pos_mm;
        }
        for x in &mut v[3..] {
            *x /= s.rot_deg;
        }
    }
    v
}

/// Trainable linear map from 6-DOF actions into the C-dimensional feature
/// space shared with the vision features.
pub struct ActionEncoder {
    pub linear: Linear,
    pub dim: usize,
    pub scale: Option<ActionScale>,
}

impl ActionEncoder {
    pub fn new<T: Scalar>(
        params: &mut Parameters<T>,
        name: &str,
        dim: usize,
        scale: Option<ActionScale>,
        seed: u64,
    ) -> Self {
        ActionEncoder {
            linear: Linear::new(params, name, 6, dim, seed),
            dim,
            scale,
        }
    }

    /// Encode a batch of actions as an [n, C] tensor.
    pub fn encode<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        params: &Parameters<T>,
        actions: &[Action6],
    ) -> TensorId {
        let mut flat = Vec::with_capacity(actions.len() * 6);
        for a in actions {
            flat.extend_from_slice(&action_vector(a, self.scale.as_ref()));
        }
        let x = g.constant_f64(actions.len(), 6, &flat);
        self.linear.forward(g, params, x)
    }
}
