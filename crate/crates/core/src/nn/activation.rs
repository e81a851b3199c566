//! Element-wise activations. Backward passes take the forward *output*, which is
//! enough to recover the derivative for every activation here.

use crate::tensor::{Scalar, Tensor};

pub fn relu<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| v.max(S::zero()))
}

pub fn relu_backward<S: Scalar>(y: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
    y.zip_map(dy, |y, g| if y > S::zero() { g } else { S::zero() })
}

pub fn leaky_relu<S: Scalar>(x: &Tensor<S>, slope: f64) -> Tensor<S> {
    let k = S::lit(slope);
    x.map(|v| if v > S::zero() { v } else { v * k })
}

/// Valid for positive slopes, where the sign of the output equals the sign of the input.
pub fn leaky_relu_backward<S: Scalar>(y: &Tensor<S>, dy: &Tensor<S>, slope: f64) -> Tensor<S> {
    let k = S::lit(slope);
    y.zip_map(dy, |y, g| if y > S::zero() { g } else { g * k })
}

pub fn tanh<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| v.tanh())
}

pub fn tanh_backward<S: Scalar>(y: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
    y.zip_map(dy, |y, g| g * (S::one() - y * y))
}

pub fn sigmoid_scalar<S: Scalar>(v: S) -> S {
    if v >= S::zero() {
        S::one() / (S::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (S::one() + e)
    }
}
