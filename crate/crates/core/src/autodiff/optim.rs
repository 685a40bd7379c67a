use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamSet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Non-trainable tensors are skipped.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub cfg: AdamConfig,
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
    step: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParamSet<T>, cfg: AdamConfig) -> Self {
        let zeros = || params.iter().map(|(_, t)| Array2::zeros(t.value.raw_dim())).collect();
        Adam {
            cfg,
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f64 {
        self.cfg.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    pub fn moments(&self, index: usize) -> (&Array2<T>, &Array2<T>) {
        (&self.m[index], &self.v[index])
    }

    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &Gradients<T>) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient passed to adam".into()));
        }
        self.step += 1;
        let (b1, b2) = (T::of(self.cfg.beta1), T::of(self.cfg.beta2));
        let t = self.step as i32;
        let c1 = T::one() - T::of(self.cfg.beta1.powi(t));
        let c2 = T::one() - T::of(self.cfg.beta2.powi(t));
        let (lr, eps) = (T::of(self.cfg.lr), T::of(self.cfg.eps));
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let k = id.index();
            let g = grads.get(id);
            Zip::from(&mut self.m[k]).and(g).for_each(|m, &g| *m = b1 * *m + (T::one() - b1) * g);
            Zip::from(&mut self.v[k]).and(g).for_each(|v, &g| *v = b2 * *v + (T::one() - b2) * g * g);
            let tensor = params.get_mut(id);
            if !tensor.trainable {
                continue;
            }
            Zip::from(&mut tensor.value)
                .and(&self.m[k])
                .and(&self.v[k])
                .for_each(|p, &m, &v| *p = *p - lr * (m / c1) / ((v / c2).sqrt() + eps));
            if tensor.value.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("adam update of `{}`", tensor.name)));
            }
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `factor` once validation loss has not
/// improved for `patience` consecutive epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    best: Option<f64>,
    bad_epochs: usize,
}

impl Default for PlateauScheduler {
    fn default() -> Self {
        PlateauScheduler::new(0.5, 5, 1e-5)
    }
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize, min_lr: f64) -> Self {
        PlateauScheduler {
            factor,
            patience,
            min_lr,
            best: None,
            bad_epochs: 0,
        }
    }

    /// Records one validation loss and returns the learning rate to use next.
    pub fn observe(&mut self, val_loss: f64, lr: f64) -> f64 {
        if self.best.is_none_or(|b| val_loss < b) {
            self.best = Some(val_loss);
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            return (lr * self.factor).max(self.min_lr);
        }
        lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_gradient_leaves_parameter_and_decays_moments() {
        let mut p = ParamSet::<f64>::new();
        let id = p.add("x", array![[1.5]]);
        let mut adam = Adam::new(&p, AdamConfig::default());
        let mut g = p.zero_grads();
        g.get_mut(id)[[0, 0]] = 2.0;
        adam.step(&mut p, &g).unwrap();
        let after_first = p.value(id)[[0, 0]];
        g.fill_zero();
        adam.step(&mut p, &g).unwrap();
        let (m, v) = adam.moments(0);
        assert!((m[[0, 0]] - 0.9 * 0.2).abs() < 1e-15);
        assert!((v[[0, 0]] - 0.999 * 0.004).abs() < 1e-15);
        // the update continues on momentum; a fresh optimizer with zero grads never moves
        assert_ne!(p.value(id)[[0, 0]], after_first);
        let mut q = ParamSet::<f64>::new();
        let qid = q.add("x", array![[1.5]]);
        let mut fresh = Adam::new(&q, AdamConfig::default());
        let zero = q.zero_grads();
        fresh.step(&mut q, &zero).unwrap();
        assert_eq!(q.value(qid)[[0, 0]], 1.5);
        assert_eq!(fresh.steps(), 1);
    }

    #[test]
    fn first_step_hand_trace() {
        // m = 0.1 g, v = 0.001 g², m̂ = g, v̂ = g², update = lr · g / (|g| + eps)
        let g = -0.3;
        let mut p = ParamSet::<f64>::new();
        let id = p.add("x", array![[0.25]]);
        let mut adam = Adam::new(&p, AdamConfig::default());
        let mut grads = p.zero_grads();
        grads.get_mut(id)[[0, 0]] = g;
        adam.step(&mut p, &grads).unwrap();
        let expected = 0.25 - 0.005 * g / (0.3 + 1e-8);
        assert!((p.value(id)[[0, 0]] - expected).abs() < 1e-15);
        assert!(p.value(id)[[0, 0]] > 0.25);
    }

    #[test]
    fn second_step_hand_trace() {
        let (g1, g2) = (0.5, -1.0);
        let mut p = ParamSet::<f64>::new();
        let id = p.add("x", array![[0.0]]);
        let mut adam = Adam::new(&p, AdamConfig::default());
        for g in [g1, g2] {
            let mut grads = p.zero_grads();
            grads.get_mut(id)[[0, 0]] = g;
            adam.step(&mut p, &grads).unwrap();
        }
        let step1 = -0.005 * 0.5 / (0.5 + 1e-8);
        let m: f64 = 0.9 * 0.1 * g1 + 0.1 * g2;
        let v: f64 = 0.999 * 0.001 * g1 * g1 + 0.001 * g2 * g2;
        let mhat = m / (1.0 - 0.81);
        let vhat = v / (1.0 - 0.999f64.powi(2));
        let expected = step1 - 0.005 * mhat / (vhat.sqrt() + 1e-8);
        assert!((p.value(id)[[0, 0]] - expected).abs() < 1e-15);
    }

    #[test]
    fn frozen_tensor_is_not_updated() {
        let mut p = ParamSet::<f64>::new();
        let id = p.add("x", array![[1.0]]);
        p.set_trainable(id, false);
        let mut adam = Adam::new(&p, AdamConfig::default());
        let mut g = p.zero_grads();
        g.get_mut(id)[[0, 0]] = 1.0;
        adam.step(&mut p, &g).unwrap();
        assert_eq!(p.value(id)[[0, 0]], 1.0);
        g.get_mut(id)[[0, 0]] = f64::NAN;
        assert!(matches!(adam.step(&mut p, &g), Err(Error::NonFinite(_))));
    }

    #[test]
    fn plateau_halves_after_patience_with_floor() {
        let mut s = PlateauScheduler::default();
        let mut lr = 0.005;
        lr = s.observe(1.0, lr);
        for _ in 0..4 {
            lr = s.observe(1.0, lr);
            assert_eq!(lr, 0.005);
        }
        lr = s.observe(1.1, lr);
        assert_eq!(lr, 0.0025);
        lr = s.observe(0.5, lr);
        assert_eq!(lr, 0.0025);
        for _ in 0..200 {
            lr = s.observe(0.9, lr);
        }
        assert_eq!(lr, 1e-5);
    }
}
