use rand::Rng;

use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Updated by the optimizer.
    Trainable,
    /// Persistent state that is not learned by gradient (batch-norm running statistics).
    Buffer,
}

/// A flat parameter tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<S> {
    pub value: Vec<S>,
    pub grad: Vec<S>,
    shape: Vec<usize>,
    kind: ParamKind,
}

impl<S: Scalar> Param<S> {
    pub fn trainable(shape: &[usize], value: Vec<S>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        Param {
            grad: vec![S::zero(); value.len()],
            value,
            shape: shape.to_vec(),
            kind: ParamKind::Trainable,
        }
    }

    pub fn buffer(shape: &[usize], value: Vec<S>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        Param {
            grad: Vec::new(),
            value,
            shape: shape.to_vec(),
            kind: ParamKind::Buffer,
        }
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Self {
        let n = shape.iter().product();
        let value = (0..n)
            .map(|_| S::lit(rng.random_range(-bound..=bound)))
            .collect();
        Self::trainable(shape, value)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::trainable(shape, vec![S::zero(); shape.iter().product()])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn kind(&self) -> ParamKind {
        self.kind
    }

    pub fn is_trainable(&self) -> bool {
        self.kind == ParamKind::Trainable
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = S::zero());
    }
}

/// Hierarchical parameter traversal in a fixed, documented order.
///
/// Names are dot-joined paths (`down.0.res.norm1.bn.gain`). The traversal order is
/// the order parameters are laid out in checkpoint files.
pub trait Module<S: Scalar> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>));

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, p| p.zero_grad());
    }

    /// Number of trainable scalars.
    fn num_trainable(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| {
            if p.is_trainable() {
                n += p.len();
            }
        });
        n
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit("", &mut |name, _| names.push(name.to_string()));
        names
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
