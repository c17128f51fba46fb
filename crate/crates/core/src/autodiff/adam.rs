use serde::{Deserialize, Serialize};

use super::{AutodiffError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    /// Epochs between learning-rate decays; 0 disables decay.
    pub lr_decay_interval: u64,
    /// Divisor applied to the learning rate at each decay.
    pub lr_decay_factor: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            lr_decay_interval: 1000,
            lr_decay_factor: 100.0,
        }
    }
}

/// Adam moments for an ordered parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    epochs: u64,
    m: Vec<Tensor<f32>>,
    v: Vec<Tensor<f32>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Tensor<f32>]) -> Self {
        Self {
            config,
            step: 0,
            epochs: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn epochs(&self) -> u64 {
        self.epochs
    }

    /// Learning rate after the decays accrued so far.
    pub fn current_lr(&self) -> f32 {
        let c = &self.config;
        if c.lr_decay_interval == 0 {
            return c.lr;
        }
        let decays = (self.epochs / c.lr_decay_interval) as i32;
        c.lr / c.lr_decay_factor.powi(decays)
    }

    /// Marks the end of one local epoch for the decay schedule.
    pub fn end_epoch(&mut self) {
        self.epochs += 1;
    }

    /// One bias-corrected Adam update in place.
    pub fn step(&mut self, params: &mut [Tensor<f32>], grads: &[Tensor<f32>]) -> Result<(), AutodiffError> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "adam_step",
                lhs: vec![params.len()],
                rhs: vec![grads.len(), self.m.len()],
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        let c = self.config;
        let lr = self.current_lr();
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *pi -= lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> Vec<Tensor<f32>> {
        vec![
            Tensor::new(vec![2], vec![0.5, -1.0]).unwrap(),
            Tensor::new(vec![1, 3], vec![0.1, 0.2, 0.3]).unwrap(),
        ]
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = params();
        let before = p.clone();
        let mut st = AdamState::new(AdamConfig::default(), &p);
        let g: Vec<_> = p.iter().map(|t| Tensor::zeros(t.shape())).collect();
        st.step(&mut p, &g).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = g and v_hat = g^2, so the step is lr * g / (|g| + eps).
        let cfg = AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        };
        for g in [1e-3f32, 0.7, -5.0, 123.0] {
            let mut p = vec![Tensor::new(vec![1], vec![2.0]).unwrap()];
            let mut st = AdamState::new(cfg, &p);
            st.step(&mut p, &[Tensor::new(vec![1], vec![g]).unwrap()]).unwrap();
            let delta = (p[0].data()[0] - 2.0).abs();
            let expected = cfg.lr * g.abs() / (g.abs() + cfg.eps);
            assert!((delta - expected).abs() < 1e-6, "g={g} delta={delta}");
            assert!((delta - cfg.lr).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut p = params();
        let mut st = AdamState::new(AdamConfig::default(), &p);
        let bad = vec![Tensor::zeros(&[3]), Tensor::zeros(&[1, 3])];
        assert!(matches!(
            st.step(&mut p, &bad),
            Err(AutodiffError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn decay_divides_learning_rate() {
        let cfg = AdamConfig {
            lr: 1e-4,
            lr_decay_interval: 1000,
            lr_decay_factor: 100.0,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(cfg, &[]);
        for _ in 0..999 {
            st.end_epoch();
        }
        assert_eq!(st.current_lr(), 1e-4);
        st.end_epoch();
        assert!((st.current_lr() - 1e-6).abs() < 1e-12);
    }

    #[test]
    fn identical_runs_are_bitwise_equal() {
        let run = || {
            let mut p = params();
            let mut st = AdamState::new(AdamConfig::default(), &p);
            for k in 0..20 {
                let g: Vec<_> = p.iter().map(|t| t.map(|x| (x * 3.0 + k as f32).sin())).collect();
                st.step(&mut p, &g).unwrap();
            }
            p
        };
        let (a, b) = (run(), run());
        for (x, y) in a.iter().zip(&b) {
            assert!(x.data().iter().zip(y.data()).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }
}
