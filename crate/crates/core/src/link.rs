//! Link functions mapping real parameters to observation probabilities.

use std::fmt::Debug;

/// A differentiable map from the reals into `(0, 1)`.
///
/// The loss methods default to the textbook formulas; implementations can
/// override them with numerically stable forms.
pub trait LinkFunction: Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn value(&self, x: f64) -> f64;

    fn derivative(&self, x: f64) -> f64;

    /// Negative Bernoulli log-likelihood of target `y` in `[0, 1]` at
    /// parameter `x`: `-(y log s(x) + (1 - y) log(1 - s(x)))`.
    fn loss(&self, x: f64, y: f64) -> f64 {
        let s = self.value(x);
        -(y * s.ln() + (1.0 - y) * (1.0 - s).ln())
    }

    /// Derivative of [`LinkFunction::loss`] in `x`.
    fn loss_derivative(&self, x: f64, y: f64) -> f64 {
        let s = self.value(x);
        let d = self.derivative(x);
        -(y * d / s - (1.0 - y) * d / (1.0 - s))
    }

    /// Upper bound on the second derivative of the loss in `x`, used to
    /// pick gradient step sizes.
    fn loss_smoothness(&self) -> f64;

    /// `L_gamma = sup_{|x| <= gamma} |s'(x)| / (s(x) (1 - s(x)))`.
    ///
    /// The default evaluates the ratio on a uniform grid of 10001 points.
    fn l_gamma(&self, gamma: f64) -> f64 {
        let steps = 10_000;
        (0..=steps)
            .map(|k| {
                let x = -gamma + 2.0 * gamma * k as f64 / steps as f64;
                let s = self.value(x);
                self.derivative(x).abs() / (s * (1.0 - s))
            })
            .fold(0.0, f64::max)
    }
}

/// `s(x) = 1 / (1 + e^{-x})`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Logistic;

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LinkFunction for Logistic {
    fn name(&self) -> &'static str {
        "logistic"
    }

    fn value(&self, x: f64) -> f64 {
        sigmoid(x)
    }

    fn derivative(&self, x: f64) -> f64 {
        let s = sigmoid(x);
        s * (1.0 - s)
    }

    // -log s(x) = softplus(-x) and -log(1 - s(x)) = softplus(x)
    fn loss(&self, x: f64, y: f64) -> f64 {
        y * softplus(-x) + (1.0 - y) * softplus(x)
    }

    fn loss_derivative(&self, x: f64, y: f64) -> f64 {
        sigmoid(x) - y
    }

    fn loss_smoothness(&self) -> f64 {
        0.25
    }

    fn l_gamma(&self, _gamma: f64) -> f64 {
        1.0
    }
}
