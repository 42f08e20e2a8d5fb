//! AdamW with decoupled weight decay, and the warmup + cosine-decay schedule.

use super::ops::NumericsError;
use super::tensor::Param;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// One AdamW update on `param` with learning rate `lr`.
///
/// Frozen params (`trainable == false`) are left untouched — value, moments
/// and step counter stay bit-identical. On a live param the accumulated
/// gradient is consumed (cleared) so the next batch starts from zero.
pub fn adamw_step(param: &mut Param, lr: f64, cfg: &AdamWConfig) -> Result<(), NumericsError> {
    if !param.trainable {
        return Ok(());
    }
    if !param.grad.is_finite() {
        return Err(NumericsError::NonFiniteGradient);
    }
    param.steps += 1;
    let t = param.steps as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let n = param.value.as_slice().len();
    for i in 0..n {
        let g = param.grad.as_slice()[i];
        let m = cfg.beta1 * param.first_moment.as_slice()[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * param.second_moment.as_slice()[i] + (1.0 - cfg.beta2) * g * g;
        param.first_moment.as_mut_slice()[i] = m;
        param.second_moment.as_mut_slice()[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        let w = param.value.as_slice()[i];
        // Decoupled decay: applied to the weight directly, not folded into g.
        param.value.as_mut_slice()[i] = w - lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * w);
    }
    param.zero_grad();
    Ok(())
}

/// Learning-rate plan: optional linear warmup, then cosine decay to zero.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub total_steps: u64,
    pub warmup_steps: u64,
}

/// Learning rate at `step` (0-based).
///
/// During warmup the rate ramps linearly up to `base_lr`; afterwards it
/// follows `0.5 * base * (1 + cos(pi * t / T))` with `t` counted from the end
/// of warmup, reaching 0 at `total_steps`. Steps past the end are an error —
/// the trainer sizing the schedule wrong should be loud, not silently clamped.
pub fn cosine_decay_lr(schedule: &LrSchedule, step: u64) -> Result<f64, NumericsError> {
    if step > schedule.total_steps {
        return Err(NumericsError::ScheduleExhausted {
            step,
            total: schedule.total_steps,
        });
    }
    if step < schedule.warmup_steps {
        return Ok(schedule.base_lr * (step + 1) as f64 / schedule.warmup_steps as f64);
    }
    let span = schedule.total_steps - schedule.warmup_steps;
    if span == 0 {
        return Ok(schedule.base_lr);
    }
    let t = (step - schedule.warmup_steps) as f64 / span as f64;
    Ok(0.5 * schedule.base_lr * (1.0 + (std::f64::consts::PI * t).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor::Tensor2;

    fn scalar_param(v: f64) -> Param {
        Param::new(Tensor2::new(1, 1, vec![v]))
    }

    #[test]
    fn zero_grad_leaves_value() {
        let mut p = scalar_param(1.5);
        adamw_step(&mut p, 0.1, &AdamWConfig::default()).unwrap();
        assert_eq!(p.value.get(0, 0), 1.5);
    }

    #[test]
    fn single_step_matches_hand_computation() {
        // p=1, g=1, lr=0.1, defaults: m_hat = v_hat = 1, so p' = 1 - 0.1/(1+eps).
        let mut p = scalar_param(1.0);
        p.grad.set(0, 0, 1.0);
        adamw_step(&mut p, 0.1, &AdamWConfig::default()).unwrap();
        assert!((p.value.get(0, 0) - 0.9).abs() < 1e-8, "got {}", p.value.get(0, 0));
    }

    #[test]
    fn frozen_param_is_untouched() {
        let mut p = scalar_param(2.0);
        p.trainable = false;
        p.grad.set(0, 0, 123.0);
        adamw_step(&mut p, 0.1, &AdamWConfig::default()).unwrap();
        assert_eq!(p.value.get(0, 0).to_bits(), 2.0_f64.to_bits());
        assert_eq!(p.steps, 0);
        // Gradient is deliberately preserved on frozen params: the step is a no-op.
        assert_eq!(p.grad.get(0, 0), 123.0);
    }

    #[test]
    fn non_finite_grad_fails() {
        let mut p = scalar_param(1.0);
        p.grad.set(0, 0, f64::NAN);
        assert!(matches!(
            adamw_step(&mut p, 0.1, &AdamWConfig::default()),
            Err(NumericsError::NonFiniteGradient)
        ));
    }

    #[test]
    fn grad_cleared_after_step() {
        let mut p = scalar_param(1.0);
        p.grad.set(0, 0, 1.0);
        adamw_step(&mut p, 0.1, &AdamWConfig::default()).unwrap();
        assert_eq!(p.grad.get(0, 0), 0.0);
    }

    #[test]
    fn weight_decay_shrinks_weights() {
        let mut p = scalar_param(1.0);
        // No gradient signal at all: decay alone should shrink the weight.
        let cfg = AdamWConfig {
            weight_decay: 0.1,
            ..AdamWConfig::default()
        };
        adamw_step(&mut p, 0.5, &cfg).unwrap();
        assert!((p.value.get(0, 0) - 0.95).abs() < 1e-12);
    }

    #[test]
    fn schedule_endpoints() {
        let s = LrSchedule {
            base_lr: 1e-3,
            total_steps: 100,
            warmup_steps: 0,
        };
        assert_eq!(cosine_decay_lr(&s, 0).unwrap(), 1e-3);
        assert!((cosine_decay_lr(&s, 50).unwrap() - 5e-4).abs() < 1e-18);
        assert!(cosine_decay_lr(&s, 100).unwrap().abs() < 1e-19);
        assert!(matches!(
            cosine_decay_lr(&s, 101),
            Err(NumericsError::ScheduleExhausted { .. })
        ));
    }

    #[test]
    fn schedule_monotone_after_warmup() {
        let s = LrSchedule {
            base_lr: 0.01,
            total_steps: 200,
            warmup_steps: 10,
        };
        assert_eq!(cosine_decay_lr(&s, 10).unwrap(), 0.01);
        let mut prev = f64::INFINITY;
        for step in 10..=200 {
            let lr = cosine_decay_lr(&s, step).unwrap();
            assert!(lr <= prev + 1e-18, "lr increased at step {step}");
            prev = lr;
        }
    }

    #[test]
    fn warmup_ramps_linearly() {
        let s = LrSchedule {
            base_lr: 1.0,
            total_steps: 20,
            warmup_steps: 4,
        };
        assert_eq!(cosine_decay_lr(&s, 0).unwrap(), 0.25);
        assert_eq!(cosine_decay_lr(&s, 3).unwrap(), 1.0);
    }
}
