//! Sequential-chain head: time-ordered tokens carrying consecutive
//! inter-frame actions, sinusoidal positions, non-causal self-attention.

use super::{Head, HeadConfig, HeadInput, HeadKind, ModelError};
use crate::encoders::ActionEncoder;
use crate::sampling::VIEW_COUNT;
use crate::tensor::{
    sinusoidal_positions, AttentionBlock, Graph, Linear, Mlp, Parameters, Scalar, TensorId,
};

pub struct ChainHead<T: Scalar> {
    cfg: HeadConfig,
    params: Parameters<T>,
    action_enc: ActionEncoder,
    blocks: Vec<AttentionBlock>,
    proj: Linear,
    decoders: Vec<Mlp>,
}

impl<T: Scalar> ChainHead<T> {
    pub fn new(cfg: HeadConfig, seed: u64) -> Result<Self, ModelError> {
        let c = cfg.feature_dim;
        let mut params = Parameters::new();
        let action_enc = ActionEncoder::new(&mut params, "action_enc", c, cfg.action_scale(), seed);
        let mut blocks = Vec::with_capacity(cfg.attn_depth);
        for i in 0..cfg.attn_depth {
            blocks.push(AttentionBlock::new(
                &mut params,
                &format!("block{i}"),
                2 * c,
                cfg.heads,
                cfg.prenorm,
                seed,
            )?);
        }
        let proj = Linear::new(&mut params, "proj", 2 * c, c, seed);
        let decoders = (0..VIEW_COUNT)
            .map(|k| Mlp::new(&mut params, &format!("decoder{k}"), c, c, 6, seed))
            .collect();
        Ok(ChainHead {
            cfg,
            params,
            action_enc,
            blocks,
            proj,
            decoders,
        })
    }
}

impl<T: Scalar> Head<T> for ChainHead<T> {
    fn kind(&self) -> HeadKind {
        HeadKind::Chain
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
        let set = &input.set;
        let len = set.anchors.len() + 1;
        if input.chain_actions.len() != len {
            return Err(ModelError::ChainLength {
                got: input.chain_actions.len(),
                want: len,
            });
        }
        let mut feats = Vec::with_capacity(len * c);
        for a in &set.anchors {
            if a.feature.len() != c {
                return Err(ModelError::DimMismatch {
                    expected: c,
                    got: a.feature.len(),
                });
            }
            feats.extend_from_slice(&a.feature);
        }
        if set.current_feature.len() != c {
            return Err(ModelError::DimMismatch {
                expected: c,
                got: set.current_feature.len(),
            });
        }
        feats.extend_from_slice(&set.current_feature);

        let visual = g.constant_f64(len, c, &feats);
        let encoded = self.action_enc.encode(g, &self.params, &input.chain_actions);
        let raw = g.concat_cols(&[visual, encoded]);
        let pe = g.constant_f64(len, 2 * c, &sinusoidal_positions(len, 2 * c));
        let mut tokens = g.add(raw, pe);
        for block in &self.blocks {
            tokens = block.forward_self(g, &self.params, tokens);
        }
        let current = g.slice_rows(tokens, len - 1, len);
        let localized = self.proj.forward(g, &self.params, current);
        Ok(self
            .decoders
            .iter()
            .map(|d| d.forward(g, &self.params, localized))
            .collect())
    }
}
