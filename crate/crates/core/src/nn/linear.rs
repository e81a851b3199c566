use rand::Rng;

use super::param::{join, Module, Param};
use crate::error::{dim_err, Result};
use crate::tensor::Scalar;

/// Fully connected layer on `[batch, features]` row-major inputs.
#[derive(Clone, Debug)]
pub struct Linear<S> {
    inputs: usize,
    outputs: usize,
    /// `[outputs, inputs]`
    pub weight: Param<S>,
    pub bias: Param<S>,
}

impl<S: Scalar> Linear<S> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Linear {
            inputs,
            outputs,
            weight: Param::uniform(&[outputs, inputs], 1.0 / (inputs as f64).sqrt(), rng),
            bias: Param::zeros(&[outputs]),
        }
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn forward(&self, x: &[S], batch: usize) -> Result<Vec<S>> {
        if x.len() != batch * self.inputs {
            return Err(dim_err!(
                "linear layer expects {} features per item, got {} values for batch {batch}",
                self.inputs,
                x.len()
            ));
        }
        let mut y: Vec<S> = (0..batch)
            .flat_map(|_| self.bias.value.iter().copied())
            .collect();
        // y[b, o] += Σ_i x[b, i]·W[o, i]
        S::gemm(
            batch,
            self.inputs,
            self.outputs,
            S::one(),
            x,
            (self.inputs as isize, 1),
            &self.weight.value,
            (1, self.inputs as isize),
            S::one(),
            &mut y,
            (self.outputs as isize, 1),
        );
        Ok(y)
    }

    pub fn backward(&mut self, x: &[S], dy: &[S], batch: usize) -> Vec<S> {
        for row in dy.chunks(self.outputs) {
            for (g, &d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        // dW[o, i] += Σ_b dy[b, o]·x[b, i]
        S::gemm(
            self.outputs,
            batch,
            self.inputs,
            S::one(),
            dy,
            (1, self.outputs as isize),
            x,
            (self.inputs as isize, 1),
            S::one(),
            &mut self.weight.grad,
            (self.inputs as isize, 1),
        );
        let mut dx = vec![S::zero(); batch * self.inputs];
        S::gemm(
            batch,
            self.outputs,
            self.inputs,
            S::one(),
            dy,
            (self.outputs as isize, 1),
            &self.weight.value,
            (self.inputs as isize, 1),
            S::zero(),
            &mut dx,
            (self.inputs as isize, 1),
        );
        dx
    }
}

impl<S: Scalar> Module<S> for Linear<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
