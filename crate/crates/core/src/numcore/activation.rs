//! Elementwise nonlinearities.

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

pub fn activate(x: &Tensor, kind: Activation) -> Tensor {
    x.map(|a| kind.apply(a))
}

/// Chain rule through an activation given its input, output and the
/// upstream gradient.
pub fn activate_backward(x: &Tensor, y: &Tensor, grad: &Tensor, kind: Activation) -> Tensor {
    let mut out = grad.clone();
    for ((g, &a), &b) in out.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
        *g *= kind.derivative(a, b);
    }
    out
}
