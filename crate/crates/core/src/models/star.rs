//! Star-graph head: anchor refinement by self-attention, then global
//! localization by cross-attention from the current view.

use super::{Head, HeadConfig, HeadInput, HeadKind, ModelError};
use crate::encoders::ActionEncoder;
use crate::sampling::VIEW_COUNT;
use crate::tensor::{AttentionBlock, Graph, Linear, Mlp, Parameters, Scalar, TensorId};

pub struct StarHead<T: Scalar> {
    cfg: HeadConfig,
    params: Parameters<T>,
    action_enc: ActionEncoder,
    refine: Vec<AttentionBlock>,
    proj: Linear,
    localize: AttentionBlock,
    decoders: Vec<Mlp>,
}

impl<T: Scalar> StarHead<T> {
    pub fn new(cfg: HeadConfig, seed: u64) -> Result<Self, ModelError> {
        let c = cfg.feature_dim;
        let mut params = Parameters::new();
        let action_enc = ActionEncoder::new(&mut params, "action_enc", c, cfg.action_scale(), seed);
        let mut refine = Vec::with_capacity(cfg.attn_depth);
        for i in 0..cfg.attn_depth {
            refine.push(AttentionBlock::new(
                &mut params,
                &format!("refine{i}"),
                2 * c,
                cfg.heads,
                cfg.prenorm,
                seed,
            )?);
        }
        let proj = Linear::new(&mut params, "proj", 2 * c, c, seed);
        let localize = AttentionBlock::new(&mut params, "localize", c, cfg.heads, cfg.prenorm, seed)?;
        let decoders = (0..VIEW_COUNT)
            .map(|k| Mlp::new(&mut params, &format!("decoder{k}"), c, c, 6, seed))
            .collect();
        Ok(StarHead {
            cfg,
            params,
            action_enc,
            refine,
            proj,
            localize,
            decoders,
        })
    }

    /// Apply the per-view decoders to a [1, C] feature node. This is the
    /// architectural limit in which the localized feature is replaced by the
    /// raw current-view feature; with shared decoder weights it coincides
    /// with the single-frame head (used as a wiring-equivalence check).
    pub fn decode_views(&self, g: &mut Graph<T>, feature: TensorId) -> Vec<TensorId> {
        self.decoders
            .iter()
            .map(|d| d.forward(g, &self.params, feature))
            .collect()
    }
}

impl<T: Scalar> Head<T> for StarHead<T> {
    fn kind(&self) -> HeadKind {
        HeadKind::Star
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
        let n = set.anchors.len();
        if n == 0 {
            return Err(ModelError::EmptyAnchors);
        }
        if set.current_feature.len() != c {
            return Err(ModelError::DimMismatch {
                expected: c,
                got: set.current_feature.len(),
            });
        }
        let mut feats = Vec::with_capacity(n * c);
        let mut actions = Vec::with_capacity(n);
        for a in &set.anchors {
            if a.feature.len() != c {
                return Err(ModelError::DimMismatch {
                    expected: c,
                    got: a.feature.len(),
                });
            }
            feats.extend_from_slice(&a.feature);
            actions.push(a.action);
        }
        let visual = g.constant_f64(n, c, &feats);
        let encoded = self.action_enc.encode(g, &self.params, &actions);
        let mut tokens = g.concat_cols(&[visual, encoded]);
        for block in &self.refine {
            tokens = block.forward_self(g, &self.params, tokens);
        }
        let map = self.proj.forward(g, &self.params, tokens);
        let query = g.constant_f64(1, c, &set.current_feature);
        let localized = self.localize.forward_cross(g, &self.params, query, map);
        Ok(self.decode_views(g, localized))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::ScanId;
    use crate::models::{predictions_to_actions, AnchorSet, Anchor};
    use crate::pose::Action6;
    use crate::rng::SplitMix64;

    fn tiny_cfg() -> HeadConfig {
        HeadConfig {
            feature_dim: 8,
            heads: 2,
            ..HeadConfig::default()
        }
    }

    fn random_input(cfg: &HeadConfig, n: usize, seed: u64) -> HeadInput {
        let mut rng = SplitMix64::new(seed);
        let c = cfg.feature_dim;
        let mk_feat = |rng: &mut SplitMix64| -> Vec<f64> {
            (0..c).map(|_| rng.uniform(-1.0, 1.0)).collect()
        };
        let anchors = (0..n)
            .map(|i| Anchor {
                index: i as u32,
                feature: mk_feat(&mut rng),
                action: Action6 {
                    dpos: [
                        rng.uniform(-40.0, 40.0),
                        rng.uniform(-40.0, 40.0),
                        rng.uniform(-40.0, 40.0),
                    ],
                    drot: [
                        rng.uniform(-60.0, 60.0),
                        rng.uniform(-50.0, 50.0),
                        rng.uniform(-60.0, 60.0),
                    ],
                },
            })
            .collect();
        let chain_actions = (0..=n)
            .map(|i| {
                if i == 0 {
                    Action6::zero()
                } else {
                    Action6 {
                        dpos: [rng.uniform(-5.0, 5.0), 0.0, rng.uniform(-5.0, 5.0)],
                        drot: [0.0, rng.uniform(-4.0, 4.0), 0.0],
                    }
                }
            })
            .collect();
        HeadInput {
            set: AnchorSet {
                scan: ScanId(0),
                current_index: 100,
                current_feature: mk_feat(&mut rng),
                anchors,
            },
            chain_actions,
        }
    }

    #[test]
    fn empty_anchor_set_is_rejected() {
        let head = StarHead::<f64>::new(tiny_cfg(), 3).unwrap();
        let input = HeadInput::current_only(ScanId(0), 10, vec![0.0; 8]);
        let mut g = Graph::new();
        assert!(matches!(
            head.forward(&mut g, &input),
            Err(ModelError::EmptyAnchors)
        ));
    }

    #[test]
    fn anchor_permutation_leaves_predictions_unchanged() {
        let head = StarHead::<f64>::new(tiny_cfg(), 5).unwrap();
        let input = random_input(&tiny_cfg(), 5, 17);
        let mut permuted = input.clone();
        permuted.set.anchors.rotate_left(2);
        permuted.set.anchors.swap(0, 3);

        let mut g = Graph::new();
        let p1 = head.forward(&mut g, &input).unwrap();
        let p2 = head.forward(&mut g, &permuted).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            for (x, y) in g.value(*a).to_vec().iter().zip(g.value(*b)) {
                assert!((x - y).abs() < 1e-6, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn zero_decoders_predict_zero_actions() {
        let mut head = StarHead::<f64>::new(tiny_cfg(), 7).unwrap();
        let names: Vec<String> = head
            .params()
            .iter()
            .map(|(_, e)| e.name.clone())
            .filter(|n| n.starts_with("decoder"))
            .collect();
        for name in names {
            let id = head.params().find(&name).unwrap();
            let entry = head.params_mut().entry_mut(id);
            entry.value.iter_mut().for_each(|v| *v = 0.0);
        }
        let input = random_input(&tiny_cfg(), 4, 23);
        let mut g = Graph::new();
        let preds = head.forward(&mut g, &input).unwrap();
        for action in predictions_to_actions(&g, &preds) {
            assert_eq!(action, Action6::zero());
        }
    }

    // Straight-line reimplementation with explicit loops and no graph engine:
    // encode actions, concatenate, two residual self-attention rounds, project,
    // one residual cross-attention round, per-view MLPs.
    #[test]
    fn tiny_forward_matches_hand_unrolled_oracle() {
        let cfg = HeadConfig {
            feature_dim: 8,
            heads: 2,
            ..HeadConfig::default()
        };
        let head = StarHead::<f64>::new(cfg.clone(), 11).unwrap();
        let input = random_input(&cfg, 3, 29);
        let mut g = Graph::new();
        let preds = head.forward(&mut g, &input).unwrap();
        let got = predictions_to_actions(&g, &preds);

        let p = |name: &str| -> Vec<f64> {
            let id = head.params().find(name).unwrap_or_else(|| panic!("{name}"));
            head.params().entry(id).value.clone()
        };
        let matvec = |m: &[f64], x: &[f64], rows: usize, cols: usize| -> Vec<f64> {
            // y[j] = sum_i x[i] m[i,j]  (x row-vector times matrix)
            let mut y = vec![0.0; cols];
            for i in 0..rows {
                for j in 0..cols {
                    y[j] += x[i] * m[i * cols + j];
                }
            }
            y
        };
        let add = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + y).collect()
        };
        let linear = |prefix: &str, x: &[f64], rows: usize, cols: usize| -> Vec<f64> {
            add(&matvec(&p(&format!("{prefix}.w")), x, rows, cols), &p(&format!("{prefix}.b")))
        };
        let attention = |prefix: &str,
                         queries: &[Vec<f64>],
                         keys_values: &[Vec<f64>],
                         width: usize,
                         heads: usize|
         -> Vec<Vec<f64>> {
            let dh = width / heads;
            let q: Vec<Vec<f64>> = queries
                .iter()
                .map(|x| linear(&format!("{prefix}.q"), x, width, width))
                .collect();
            let k: Vec<Vec<f64>> = keys_values
                .iter()
                .map(|x| linear(&format!("{prefix}.k"), x, width, width))
                .collect();
            let v: Vec<Vec<f64>> = keys_values
                .iter()
                .map(|x| linear(&format!("{prefix}.v"), x, width, width))
                .collect();
            let mut out = vec![vec![0.0; width]; q.len()];
            for (qi, orow) in q.iter().zip(out.iter_mut()) {
                for h in 0..heads {
                    let lo = h * dh;
                    let logits: Vec<f64> = k
                        .iter()
                        .map(|kj| {
                            (0..dh).map(|d| qi[lo + d] * kj[lo + d]).sum::<f64>()
                                / (dh as f64).sqrt()
                        })
                        .collect();
                    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
                    let total: f64 = exps.iter().sum();
                    for (w, vj) in exps.iter().zip(&v) {
                        for d in 0..dh {
                            orow[lo + d] += w / total * vj[lo + d];
                        }
                    }
                }
            }
            out.iter()
                .map(|row| linear(&format!("{prefix}.o"), row, width, width))
                .collect()
        };

        let c = cfg.feature_dim;
        // Tokens: [visual ; W_a * action + b_a]
        let mut tokens: Vec<Vec<f64>> = Vec::new();
        for anchor in &input.set.anchors {
            let mut tok = anchor.feature.clone();
            tok.extend(linear("action_enc", &anchor.action.as_array(), 6, c));
            tokens.push(tok);
        }
        for depth in 0..cfg.attn_depth {
            let attn = attention(&format!("refine{depth}"), &tokens, &tokens, 2 * c, cfg.heads);
            tokens = tokens.iter().zip(&attn).map(|(t, a)| add(t, a)).collect();
        }
        let map: Vec<Vec<f64>> = tokens.iter().map(|t| linear("proj", t, 2 * c, c)).collect();
        let query = input.set.current_feature.clone();
        let cross = attention("localize", &[query.clone()], &map, c, cfg.heads);
        let localized = add(&query, &cross[0]);
        let phi = |x: f64| 0.5 * (1.0 + libm::erf(x / 2f64.sqrt()));
        for (k, action) in got.iter().enumerate() {
            let h1 = linear(&format!("decoder{k}.l1"), &localized, c, c);
            let h1: Vec<f64> = h1.iter().map(|&x| x * phi(x)).collect();
            let out = linear(&format!("decoder{k}.l2"), &h1, c, 6);
            let expect = out;
            let got6 = action.as_array();
            for (a, b) in got6.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-9, "view {k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn outputs_are_finite_on_extreme_inputs() {
        let head = StarHead::<f64>::new(tiny_cfg(), 13).unwrap();
        let mut input = random_input(&tiny_cfg(), 6, 31);
        for a in &mut input.set.anchors {
            a.action.dpos = [500.0, -500.0, 500.0];
            a.action.drot = [179.0, -89.0, 179.0];
        }
        let mut g = Graph::new();
        let preds = head.forward(&mut g, &input).unwrap();
        for p in preds {
            assert!(g.all_finite(p));
        }
    }
}
