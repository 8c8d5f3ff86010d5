//! Single-frame head: per-view decoders applied to the raw current feature,
//! consuming no history at all.

use super::{Head, HeadConfig, HeadInput, HeadKind, ModelError};
use crate::sampling::VIEW_COUNT;
use crate::tensor::{Graph, Mlp, Parameters, Scalar, TensorId};

pub struct SingleFrameHead<T: Scalar> {
    cfg: HeadConfig,
    params: Parameters<T>,
    decoders: Vec<Mlp>,
}

impl<T: Scalar> SingleFrameHead<T> {
    pub fn new(cfg: HeadConfig, seed: u64) -> Result<Self, ModelError> {
        let c = cfg.feature_dim;
        let mut params = Parameters::new();
        let decoders = (0..VIEW_COUNT)
            .map(|k| Mlp::new(&mut params, &format!("decoder{k}"), c, c, 6, seed))
            .collect();
        Ok(SingleFrameHead { cfg, params, decoders })
    }
}

impl<T: Scalar> Head<T> for SingleFrameHead<T> {
    fn kind(&self) -> HeadKind {
        HeadKind::SingleFrame
    }

    fn config(&self) -> &HeadConfig {
        &self.cfg
    }

    fn params(&self) -> &Parameters<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut Parameters<T> {
        &mut self.params
    }

    fn forward(&self, g: &mut Graph<T>, input: &HeadInput) -> Result<Vec<TensorId>, ModelError> {
        let c = self.cfg.feature_dim;
        if input.set.current_feature.len() != c {
            return Err(ModelError::DimMismatch {
                expected: c,
                got: input.set.current_feature.len(),
            });
        }
        let feature = g.constant_f64(1, c, &input.set.current_feature);
        Ok(self
            .decoders
            .iter()
            .map(|d| d.forward(g, &self.params, feature))
            .collect())
    }
}
