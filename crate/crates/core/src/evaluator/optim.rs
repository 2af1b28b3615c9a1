use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const ADAM_EPS: f64 = 1e-8;

/// AdamW state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamW {
    pub fn new(len: usize, betas: (f64, f64), weight_decay: f64) -> Self {
        AdamW {
            beta1: betas.0,
            beta2: betas.1,
            weight_decay,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update: decoupled decay `θ ← θ(1 − lr·λ)`, then the bias-corrected
    /// Adam step.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer holds {} slots, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - lr * self.weight_decay;
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *p *= decay;
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        Ok(())
    }
}

/// `eta_min + ½(lr0 − eta_min)(1 + cos(π·step/total))`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64, eta_min: f64) -> f64 {
    let frac = step.min(total_steps) as f64 / total_steps.max(1) as f64;
    eta_min + 0.5 * (lr0 - eta_min) * (1.0 + (PI * frac).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grads_no_decay_is_identity() {
        let mut opt = AdamW::new(3, (0.9, 0.999), 0.0);
        let mut p = vec![1.0, -2.0, 3.5];
        opt.step(&mut p, &[0.0; 3], 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn scalar_first_step() {
        // m̂ = g = 1 and v̂ = g² = 1 after bias correction.
        let mut opt = AdamW::new(1, (0.9, 0.999), 0.0);
        let mut w = vec![1.0];
        opt.step(&mut w, &[1.0], 0.1).unwrap();
        assert!((w[0] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn decay_only() {
        let mut opt = AdamW::new(1, (0.9, 0.999), 1e-3);
        let mut w = vec![2.0];
        opt.step(&mut w, &[0.0], 0.5).unwrap();
        assert!((w[0] - 2.0 * (1.0 - 0.5 * 1e-3)).abs() < 1e-15);
    }

    #[test]
    fn shape_checked() {
        let mut opt = AdamW::new(2, (0.9, 0.999), 0.0);
        assert!(opt.step(&mut [0.0], &[0.0], 0.1).is_err());
    }

    #[test]
    fn cosine_schedule_points() {
        assert_eq!(cosine_lr(0, 100, 1e-4, 0.0), 1e-4);
        assert!(cosine_lr(100, 100, 1e-4, 0.0).abs() < 1e-20);
        assert!((cosine_lr(50, 100, 1e-4, 0.0) - 5e-5).abs() < 1e-18);
        assert!((cosine_lr(100, 100, 1e-4, 1e-6) - 1e-6).abs() < 1e-18);
    }
}
