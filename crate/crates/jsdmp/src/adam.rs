//! Adam with decoupled weight decay.
//!
//! Decay is applied to the parameters directly, before the moment update, so
//! it never leaks into the running gradient statistics. Bias correction uses
//! the step counter incremented at the start of each step.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::Config(format!("learning rate {} invalid", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} {b} outside [0, 1)")));
            }
        }
        if !self.eps.is_finite() || self.eps <= 0.0 {
            return Err(Error::Config(format!("eps {} must be positive", self.eps)));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight decay {} must be non-negative",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Optimizer state: first and second moment estimates per parameter, in the
/// order the parameters were registered.
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, shapes: &[(usize, usize)]) -> Result<Self> {
        cfg.validate()?;
        Ok(Adam {
            cfg,
            step: 0,
            m: shapes.iter().map(|&(r, c)| vec![0.0; r * c]).collect(),
            v: shapes.iter().map(|&(r, c)| vec![0.0; r * c]).collect(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every registered parameter. `params` and `grads` must
    /// line up with the shapes given at construction; a non-finite gradient
    /// aborts with the offending parameter's name.
    pub fn step(&mut self, params: &mut [(&str, &mut Matrix)], grads: &[Matrix]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((name, p), g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Dimension(format!(
                    "parameter {name}: value {}x{} vs gradient {}x{}",
                    p.rows(),
                    p.cols(),
                    g.rows(),
                    g.cols()
                )));
            }
            if let Some(bad) = g.data().iter().find(|v| !v.is_finite()) {
                return Err(Error::Train(format!(
                    "non-finite gradient {bad} in parameter {name}"
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (idx, ((_, p), g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for ((pv, &gv), (mv, vv)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *pv -= c.lr * c.weight_decay * *pv;
                *mv = c.beta1 * *mv + (1.0 - c.beta1) * gv;
                *vv = c.beta2 * *vv + (1.0 - c.beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}
