//! AdamW with decoupled weight decay and the cosine learning-rate schedule.

use super::nn::{ParamId, Parameters, TensorError};
use super::scalar::Scalar;

/// Training hyperparameters shared by every head.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    /// "f32" (training default) or "f64" (verification).
    pub precision: Precision,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            learning_rate: 1e-4,
            epochs: 5,
            weight_decay: 0.01,
            precision: Precision::F32,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        if self.learning_rate <= 0.0 {
            return Err("learning_rate must be positive".into());
        }
        if self.epochs == 0 {
            return Err("epochs must be positive".into());
        }
        Ok(())
    }
}

/// AdamW moment coefficients.
#[derive(Debug, Clone, Copy)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamW {
    pub fn with_weight_decay(weight_decay: f64) -> Self {
        AdamW {
            weight_decay,
            ..AdamW::default()
        }
    }

    /// One update over the provided (parameter, gradient) pairs.
    ///
    /// Decay is decoupled: `p *= 1 - lr*wd` independent of the gradient path.
    /// `step` is 1-based and drives bias correction.
    pub fn step<T: Scalar>(
        &self,
        params: &mut Parameters<T>,
        grads: &[(ParamId, Vec<T>)],
        lr: f64,
        step: u64,
    ) -> Result<(), TensorError> {
        assert!(step >= 1, "AdamW step must be >= 1");
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one_m_b1 = T::from_f64(1.0 - self.beta1);
        let one_m_b2 = T::from_f64(1.0 - self.beta2);
        let bc1 = T::from_f64(1.0 / (1.0 - self.beta1.powi(step as i32)));
        let bc2 = T::from_f64(1.0 / (1.0 - self.beta2.powi(step as i32)));
        let lr_t = T::from_f64(lr);
        let eps = T::from_f64(self.eps);
        let decay = T::from_f64(1.0 - lr * self.weight_decay);
        for (id, grad) in grads {
            if id.0 >= params.len() {
                return Err(TensorError::UnknownParam(id.0));
            }
            let entry = params.entry_mut(*id);
            if grad.len() != entry.value.len() {
                return Err(TensorError::GradLength {
                    got: grad.len(),
                    want: entry.value.len(),
                });
            }
            entry.step = step;
            for ((p, g), (m, v)) in entry
                .value
                .iter_mut()
                .zip(grad)
                .zip(entry.m.iter_mut().zip(entry.v.iter_mut()))
            {
                *m = b1 * *m + one_m_b1 * *g;
                *v = b2 * *v + one_m_b2 * *g * *g;
                let m_hat = *m * bc1;
                let v_hat = *v * bc2;
                *p = *p * decay - lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Cosine decay without warmup: `base * 0.5 * (1 + cos(pi * step / total))`.
pub fn cosine_lr(step: u64, total_steps: u64, base_lr: f64) -> Result<f64, TensorError> {
    if step > total_steps || total_steps == 0 {
        return Err(TensorError::ScheduleRange {
            step,
            total: total_steps,
        });
    }
    let frac = step as f64 / total_steps as f64;
    Ok(base_lr * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adamw_first_step_hand_computed() {
        // param 1.0, grad 1.0, lr 0.1, wd 0: bias-corrected m_hat = v_hat = 1,
        // update = lr * 1/(1 + eps) ~ 0.1 -> param ~ 0.9.
        let mut params = Parameters::<f64>::new();
        let id = params.alloc_init("p", 1, 1, &[1.0]);
        let opt = AdamW::default();
        opt.step(&mut params, &[(id, vec![1.0])], 0.1, 1).unwrap();
        let got = params.entry(id).value[0];
        assert!((got - 0.9).abs() < 1e-8, "{got}");
    }

    #[test]
    fn adamw_zero_grad_zero_decay_is_noop() {
        let mut params = Parameters::<f64>::new();
        let id = params.alloc_init("p", 1, 2, &[0.5, -0.25]);
        let opt = AdamW::default();
        opt.step(&mut params, &[(id, vec![0.0, 0.0])], 0.1, 1).unwrap();
        assert_eq!(params.entry(id).value, vec![0.5, -0.25]);
    }

    #[test]
    fn adamw_decoupled_decay_scales_param() {
        let mut params = Parameters::<f64>::new();
        let id = params.alloc_init("p", 1, 1, &[2.0]);
        let opt = AdamW::with_weight_decay(0.01);
        opt.step(&mut params, &[(id, vec![0.0])], 0.1, 1).unwrap();
        let got = params.entry(id).value[0];
        assert!((got - 2.0 * (1.0 - 0.001)).abs() < 1e-12, "{got}");
    }

    #[test]
    fn adamw_is_bitwise_deterministic() {
        let run = || {
            let mut params = Parameters::<f32>::new();
            let id = params.alloc("p", 4, 4, 4, 7);
            let opt = AdamW::with_weight_decay(0.01);
            for step in 1..=10 {
                let g: Vec<f32> = (0..16).map(|i| (i as f32 * 0.3 + step as f32).sin()).collect();
                opt.step(&mut params, &[(id, g)], 1e-3, step).unwrap();
            }
            params.entry(id).value.iter().map(|v| v.to_bits()).collect::<Vec<u32>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn cosine_schedule_endpoints_and_midpoint() {
        assert_eq!(cosine_lr(0, 100, 1e-4).unwrap(), 1e-4);
        assert!(cosine_lr(100, 100, 1e-4).unwrap().abs() < 1e-20);
        assert!((cosine_lr(50, 100, 1e-4).unwrap() - 5e-5).abs() < 1e-18);
        assert!(cosine_lr(101, 100, 1e-4).is_err());
    }
}
