//! Adam with bias correction and a constant learning rate.

use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::nn::Module;
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0)
        {
            return Err(Error::Config(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// Moment estimates for every trainable parameter, in `Module::visit` order.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<S> {
    pub cfg: AdamConfig,
    steps: u64,
    moments: Vec<(Vec<S>, Vec<S>)>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            steps: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update with learning rate `lr` from the accumulated gradients.
    pub fn step(&mut self, module: &mut impl Module<S>, lr: f64) {
        self.steps += 1;
        let t = self.steps as i32;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        // bias-corrected step size, applied as lr_t · m / (sqrt(v) + eps_t)
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let lr_t = S::lit(lr * c2.sqrt() / c1);
        let eps_t = S::lit(self.cfg.eps * c2.sqrt());
        let (b1, b2) = (S::lit(b1), S::lit(b2));
        let (ob1, ob2) = (S::one() - b1, S::one() - b2);
        let moments = &mut self.moments;
        let mut i = 0;
        module.visit_mut("", &mut |_, p| {
            if !p.is_trainable() {
                return;
            }
            if moments.len() <= i {
                moments.push((vec![S::zero(); p.len()], vec![S::zero(); p.len()]));
            }
            let (m, v) = &mut moments[i];
            for (((w, &g), m), v) in p
                .value
                .iter_mut()
                .zip(&p.grad)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = b1 * *m + ob1 * g;
                *v = b2 * *v + ob2 * g * g;
                *w -= lr_t * *m / (v.sqrt() + eps_t);
            }
            i += 1;
        });
    }
}

impl Adam<f32> {
    pub fn save_into(&self, c: &mut Container, prefix: &str) {
        for (i, (m, v)) in self.moments.iter().enumerate() {
            c.push(format!("{prefix}.m.{i}"), &[m.len()], m.clone());
            c.push(format!("{prefix}.v.{i}"), &[v.len()], v.clone());
        }
    }

    /// Restores moments written by [`Adam::save_into`] for `module`'s trainable parameters.
    pub fn load_from(
        c: &Container,
        prefix: &str,
        cfg: AdamConfig,
        steps: u64,
        module: &impl Module<f32>,
    ) -> Result<Self> {
        let index = c.index();
        let mut moments = Vec::new();
        if steps > 0 {
            let mut missing = None;
            let mut i = 0;
            module.visit("", &mut |_, p| {
                if !p.is_trainable() {
                    return;
                }
                let m = index.get(format!("{prefix}.m.{i}").as_str()).map(|e| e.1);
                let v = index.get(format!("{prefix}.v.{i}").as_str()).map(|e| e.1);
                match (m, v) {
                    (Some(m), Some(v)) if m.len() == p.len() && v.len() == p.len() => {
                        moments.push((m.to_vec(), v.to_vec()))
                    }
                    _ => missing = Some(i),
                }
                i += 1;
            });
            if let Some(i) = missing {
                return Err(Error::Config(format!(
                    "optimizer state {prefix} lacks moments for parameter {i}"
                )));
            }
        }
        Ok(Adam {
            cfg,
            steps,
            moments,
        })
    }
}
