//! SGD with heavy-ball momentum and L2 weight decay, plus learning-rate
//! schedules.

use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// `lr₀ · (1 − t/T)^power`
    Poly { power: f64 },
}

impl LrSchedule {
    /// Learning rate for step `t` of `total`.
    pub fn lr(&self, base: f64, t: usize, total: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::Poly { power } => {
                if total == 0 {
                    return base;
                }
                let frac = (t.min(total) as f64) / total as f64;
                base * (1.0 - frac).powf(power)
            }
        }
    }
}

/// `v ← μ·v + (g + λ·w)`, `w ← w − lr·v`. Velocity starts at zero.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, model: &mut Model, lr: f64) {
        let params = model.params_and_grads_mut();
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|(p, _)| vec![0.0; p.len()]).collect();
        }
        for ((param, grad), vel) in params.into_iter().zip(&mut self.velocity) {
            for ((w, &g), v) in param.iter_mut().zip(grad).zip(vel.iter_mut()) {
                *v = self.momentum * *v + (g + self.weight_decay * *w);
                *w -= lr * *v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Mat;
    use crate::model::ModelConfig;

    #[test]
    fn poly_boundaries() {
        let s = LrSchedule::Poly { power: 0.9 };
        assert_eq!(s.lr(0.1, 0, 100), 0.1);
        assert_eq!(s.lr(0.1, 100, 100), 0.0);
        assert!((s.lr(0.1, 50, 100) - 0.1 * 0.5f64.powf(0.9)).abs() < 1e-15);
        assert_eq!(LrSchedule::Constant.lr(0.24, 77, 100), 0.24);
    }

    fn model_with_grads() -> Model {
        let cfg = ModelConfig {
            input_dim: 3,
            hidden: vec![4],
            embed_dim: 2,
            num_classes: 2,
            voxel_size: 1.0,
        };
        let mut m = Model::new(cfg, 0).unwrap();
        let x = Mat::from_rows(&[vec![0.5, -0.2, 1.0], vec![0.1, 0.9, -0.3]]);
        m.forward(&x).unwrap();
        m.backward(None, Some(&Mat::from_rows(&[vec![1.0, -1.0], vec![0.5, 0.2]]))).unwrap();
        m
    }

    #[test]
    fn zero_hyperparameters_leave_weights_unchanged() {
        let mut m = model_with_grads();
        let before = m.layers().to_vec();
        Sgd::new(0.0, 0.0).step(&mut m, 0.0);
        assert_eq!(m.layers(), before.as_slice());
    }

    #[test]
    fn plain_step_and_momentum() {
        let mut m = model_with_grads();
        let n = m.num_params();
        let w0: Vec<f64> = (0..n).map(|i| m.param(i)).collect();
        let g: Vec<f64> = (0..n).map(|i| m.grad(i)).collect();
        let mut opt = Sgd::new(0.9, 0.01);
        opt.step(&mut m, 0.1);
        let w1: Vec<f64> = (0..n).map(|i| m.param(i)).collect();
        for i in 0..n {
            let v1 = g[i] + 0.01 * w0[i];
            assert!((w1[i] - (w0[i] - 0.1 * v1)).abs() < 1e-15);
        }
        opt.step(&mut m, 0.1);
        for i in 0..n {
            let v1 = g[i] + 0.01 * w0[i];
            let v2 = 0.9 * v1 + g[i] + 0.01 * w1[i];
            assert!((m.param(i) - (w1[i] - 0.1 * v2)).abs() < 1e-14);
        }
    }
}
