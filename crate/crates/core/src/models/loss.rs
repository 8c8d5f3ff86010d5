//! Multi-view training loss: mean over supervised views of the Smooth L1
//! loss over the six action components, translation in mm and rotation in
//! wrapped degrees, equally weighted.

use super::ModelError;
use crate::pose::Action6;
use crate::sampling::VIEW_COUNT;
use crate::tensor::{Graph, Scalar, TensorId};

/// Transition point of the Smooth L1 loss. The conventional value keeps
/// mm/deg errors below 1 in the quadratic regime.
pub const SMOOTH_L1_BETA: f64 = 1.0;

const WRAP_MASK: [bool; 6] = [false, false, false, true, true, true];

/// Scalar loss node over ten [1,6] prediction nodes. Views absent from the
/// mask contribute nothing and receive no gradient.
pub fn multi_view_loss<T: Scalar>(
    g: &mut Graph<T>,
    preds: &[TensorId],
    labels: &[Action6; VIEW_COUNT],
    mask: &[bool; VIEW_COUNT],
) -> Result<TensorId, ModelError> {
    assert_eq!(preds.len(), VIEW_COUNT, "ten prediction nodes required");
    let mut view_losses = Vec::with_capacity(VIEW_COUNT);
    for (k, (&pred, label)) in preds.iter().zip(labels).enumerate() {
        if !mask[k] {
            continue;
        }
        view_losses.push(g.smooth_l1(pred, &label.as_array(), Some(&WRAP_MASK), SMOOTH_L1_BETA));
    }
    if view_losses.is_empty() {
        return Err(ModelError::EmptyMask);
    }
    let stacked = g.concat_cols(&view_losses);
    Ok(g.mean_all(stacked))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred_nodes(g: &mut Graph<f64>, actions: &[Action6; VIEW_COUNT]) -> Vec<TensorId> {
        actions
            .iter()
            .map(|a| g.constant(1, 6, a.as_array().to_vec()))
            .collect()
    }

    #[test]
    fn equal_predictions_give_zero_loss() {
        let labels = [Action6 {
            dpos: [3.0, -2.0, 1.0],
            drot: [10.0, 20.0, -30.0],
        }; VIEW_COUNT];
        let mut g = Graph::new();
        let preds = pred_nodes(&mut g, &labels);
        let loss = multi_view_loss(&mut g, &preds, &labels, &[true; VIEW_COUNT]).unwrap();
        assert_eq!(g.scalar(loss), 0.0);
    }

    #[test]
    fn single_view_linear_branch_value() {
        // One present view with error (2,0,0,0,0,0): smooth-l1 mean over six
        // components = (2 - 0.5)/6 = 0.25.
        let labels = [Action6::zero(); VIEW_COUNT];
        let mut preds_actions = [Action6::zero(); VIEW_COUNT];
        preds_actions[4].dpos[0] = 2.0;
        let mut mask = [false; VIEW_COUNT];
        mask[4] = true;
        let mut g = Graph::new();
        let preds = pred_nodes(&mut g, &preds_actions);
        let loss = multi_view_loss(&mut g, &preds, &labels, &mask).unwrap();
        assert!((g.scalar(loss) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn masked_views_are_excluded() {
        let labels = [Action6::zero(); VIEW_COUNT];
        let mut preds_actions = [Action6::zero(); VIEW_COUNT];
        for (k, a) in preds_actions.iter_mut().enumerate() {
            a.dpos[0] = k as f64;
        }
        let mut g = Graph::new();
        let preds = pred_nodes(&mut g, &preds_actions);

        let mut mask = [true; VIEW_COUNT];
        mask[9] = false; // drop the largest-error view
        let masked = multi_view_loss(&mut g, &preds, &labels, &mask).unwrap();

        // Recompute over the present subset only.
        let mut expect = 0.0;
        for k in 0..9 {
            let d = k as f64;
            let huber = if d < 1.0 { 0.5 * d * d } else { d - 0.5 };
            expect += huber / 6.0;
        }
        expect /= 9.0;
        assert!((g.scalar(masked) - expect).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_rejected() {
        let labels = [Action6::zero(); VIEW_COUNT];
        let mut g = Graph::new();
        let preds = pred_nodes(&mut g, &labels);
        assert!(matches!(
            multi_view_loss(&mut g, &preds, &labels, &[false; VIEW_COUNT]),
            Err(ModelError::EmptyMask)
        ));
    }

    #[test]
    fn translation_and_rotation_errors_weigh_equally() {
        // Same magnitude error placed on a translation component vs a
        // rotation component must produce the same loss.
        let labels = [Action6::zero(); VIEW_COUNT];
        let mut trans_err = [Action6::zero(); VIEW_COUNT];
        trans_err[0].dpos[1] = 7.5;
        let mut rot_err = [Action6::zero(); VIEW_COUNT];
        rot_err[0].drot[1] = 7.5;
        let mut g = Graph::new();
        let p1 = pred_nodes(&mut g, &trans_err);
        let p2 = pred_nodes(&mut g, &rot_err);
        let l1 = multi_view_loss(&mut g, &p1, &labels, &[true; VIEW_COUNT]).unwrap();
        let l2 = multi_view_loss(&mut g, &p2, &labels, &[true; VIEW_COUNT]).unwrap();
        assert!((g.scalar(l1) - g.scalar(l2)).abs() < 1e-12);
    }

    #[test]
    fn rotation_errors_are_wrapped() {
        let mut labels = [Action6::zero(); VIEW_COUNT];
        labels[0].drot[2] = -179.0;
        let mut preds_actions = [Action6::zero(); VIEW_COUNT];
        preds_actions[0].drot[2] = 179.0;
        let mut mask = [false; VIEW_COUNT];
        mask[0] = true;
        let mut g = Graph::new();
        let preds = pred_nodes(&mut g, &preds_actions);
        let loss = multi_view_loss(&mut g, &preds, &labels, &mask).unwrap();
        // wrapped difference is 2 degrees -> (2 - 0.5)/6, not (358 - 0.5)/6
        assert!((g.scalar(loss) - 0.25).abs() < 1e-12);
    }
}
