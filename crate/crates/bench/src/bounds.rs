//! Evaluators for the propensity-error and completion-error bounds.
//!
//! Only the error magnitudes are computed; the probability statements with
//! their unspecified universal constants are not.

use std::f64::consts::E;
use std::sync::Arc;

use serde::Serialize;
use tenips::decomposition::{singular_values, RankProfile};
use tenips::link::LinkFunction;
use tenips::tensor::{matrix_norms, square_set, DenseTensor, UnfoldingSpec};
use tenips::{Error, Result};

/// Problem constants entering the bounds.
#[derive(Clone, Debug, Serialize)]
pub struct BoundInputs {
    /// `||B||_max`
    pub psi: f64,
    /// `||A||_max`
    pub alpha: f64,
    /// `||A_sq||_* / sqrt(I_[N])` on the square unfolding.
    pub theta: f64,
    /// Spikiness `psi sqrt(I_[N]) / ||B||_F`.
    pub alpha_sp: f64,
    pub b_fro: f64,
    /// `L_gamma` of the link at the max-norm threshold.
    pub l_gamma: f64,
    /// Slack `epsilon` of the concentration event.
    pub epsilon: f64,
    /// Singular values of every mode-n unfolding of `B`, non-increasing.
    pub mode_singular_values: Vec<Vec<f64>>,
    pub square_rows: usize,
    pub square_cols: usize,
    #[serde(skip)]
    pub link: Arc<dyn LinkFunction>,
}

impl BoundInputs {
    /// Collects the constants for data `b`, parameter tensor `a`, link and
    /// max-norm threshold `gamma`.
    pub fn from_tensors(
        b: &DenseTensor,
        a: &DenseTensor,
        link: Arc<dyn LinkFunction>,
        gamma: f64,
        epsilon: f64,
    ) -> Result<Self> {
        b.check_same_shape(a)?;
        let b_fro = b.frobenius_norm();
        if b_fro == 0.0 {
            return Err(Error::InvalidParameter("data tensor is zero".into()));
        }
        let total = b.len() as f64;
        let sq = square_set(b.shape())?;
        let theta = matrix_norms(a.unfold(&sq)?.as_ref())?.nuclear / total.sqrt();
        let psi = b.max_abs();
        let mut mode_singular_values = Vec::with_capacity(b.order());
        for n in 0..b.order() {
            mode_singular_values.push(singular_values(b.mode_unfold(n)?.as_ref())?);
        }
        Ok(Self {
            psi,
            alpha: a.max_abs(),
            theta,
            alpha_sp: psi * total.sqrt() / b_fro,
            b_fro,
            l_gamma: link.l_gamma(gamma),
            epsilon,
            mode_singular_values,
            square_rows: sq.row_dim(),
            square_cols: sq.col_dim(),
            link,
        })
    }

    fn sigma(&self, n: usize, i: usize) -> f64 {
        // one-based index; past the end counts as zero
        self.mode_singular_values[n]
            .get(i - 1)
            .copied()
            .unwrap_or(0.0)
    }

    /// Per-mode condition numbers `sigma_1 / sigma_{r_n}`.
    pub fn kappa(&self, ranks: &RankProfile) -> Vec<f64> {
        ranks
            .ranks()
            .iter()
            .enumerate()
            .map(|(n, &r)| self.sigma(n, 1) / self.sigma(n, r))
            .collect()
    }

    /// `sum_{i > r} sigma_i(B^(n))^2`
    pub fn tail_energy(&self, n: usize, r: usize) -> f64 {
        self.mode_singular_values[n]
            .iter()
            .skip(r)
            .map(|s| s * s)
            .sum()
    }
}

/// Empirical slack: the smallest `epsilon` with
/// `||X_bar^(n) - B^(n)||_2 <= epsilon ||B||_F` for every mode, where
/// `x_bar` is reweighted with the true propensities.
pub fn empirical_epsilon(x_bar: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    let diff = x_bar.sub(b)?;
    let mut worst = 0.0f64;
    for n in 0..b.order() {
        let s = singular_values(diff.mode_unfold(n)?.as_ref())?;
        worst = worst.max(s.first().copied().unwrap_or(0.0));
    }
    Ok(worst / b.frobenius_norm())
}

/// Mean squared propensity error bound
/// `4 e L_gamma tau (I_S^{-1/2} + I_{S^C}^{-1/2})`.
pub fn propensity_mse_bound(l_gamma: f64, tau: f64, spec: &UnfoldingSpec) -> f64 {
    4.0 * E
        * l_gamma
        * tau
        * (1.0 / (spec.row_dim() as f64).sqrt() + 1.0 / (spec.col_dim() as f64).sqrt())
}

/// Bound on `||X_bar(P_hat) - X_bar(P)||_F` implied by the propensity-error
/// bound on the square unfolding.
pub fn reweighting_error_bound(inputs: &BoundInputs, tau: f64, gamma: f64) -> f64 {
    let link = &inputs.link;
    let shape_term =
        1.0 / (inputs.square_rows as f64).sqrt() + 1.0 / (inputs.square_cols as f64).sqrt();
    inputs.alpha_sp * inputs.b_fro / (link.value(-gamma) * link.value(-inputs.alpha))
        * (4.0 * E * inputs.l_gamma * tau * shape_term).sqrt()
}

/// Source of `||X_bar(P_hat) - X_bar(P)||_F` in the completion bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReweightingError {
    /// Measured on the instance.
    Measured(f64),
    /// Taken from [`reweighting_error_bound`] with these thresholds.
    FromThresholds { tau: f64, gamma: f64 },
}

/// Evaluated completion-error bound and its three terms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompletionBound {
    /// Bound on the squared relative error.
    pub squared: f64,
    /// Square root of `squared`, comparable with a relative error.
    pub relative: f64,
    pub projection_term: f64,
    pub perturbation_term: f64,
    pub tail_term: f64,
    pub reweighting_error: f64,
    /// Modes where `sigma_{r_n} = sigma_{r_n + 1}`; the bound is then infinite.
    pub vanishing_gap_modes: Vec<usize>,
}

/// Right-hand side of the general fixed-rank completion bound:
///
/// `min_n r_n (d/||B|| + eps)^2`
/// `+ sum_n 12 r_n s1^2/||B||^2 (2 s1 + d + eps||B||)^2/(s_r + s_{r+1})^2 (d + eps||B||)^2/(s_r - s_{r+1})^2`
/// `+ sum_n tail_n / ||B||^2`
///
/// with `s_i` the singular values of `B^(n)` and `d` the reweighting error.
pub fn completion_bound(
    inputs: &BoundInputs,
    ranks: &RankProfile,
    reweighting: ReweightingError,
) -> Result<CompletionBound> {
    let order = inputs.mode_singular_values.len();
    if ranks.order() != order {
        return Err(Error::DimensionMismatch {
            context: "rank profile order",
            expected: order,
            found: ranks.order(),
        });
    }
    let d = match reweighting {
        ReweightingError::Measured(d) => d,
        ReweightingError::FromThresholds { tau, gamma } => {
            reweighting_error_bound(inputs, tau, gamma)
        }
    };
    if !(d >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "reweighting error {d} is negative"
        )));
    }
    let bf = inputs.b_fro;
    let eps = inputs.epsilon;
    let projection_term = ranks
        .ranks()
        .iter()
        .map(|&r| r as f64 * (d / bf + eps).powi(2))
        .fold(f64::INFINITY, f64::min);
    let mut perturbation_term = 0.0;
    let mut tail_term = 0.0;
    let mut vanishing_gap_modes = Vec::new();
    for (n, &r) in ranks.ranks().iter().enumerate() {
        let s1 = inputs.sigma(n, 1);
        let sr = inputs.sigma(n, r);
        let sr1 = inputs.sigma(n, r + 1);
        let gap = sr - sr1;
        if !(gap > 0.0) {
            vanishing_gap_modes.push(n);
            perturbation_term = f64::INFINITY;
        } else {
            let shift = d + eps * bf;
            perturbation_term += 12.0 * r as f64 * s1 * s1 / (bf * bf) * (2.0 * s1 + shift).powi(2)
                / (sr + sr1).powi(2)
                * shift.powi(2)
                / gap.powi(2);
        }
        tail_term += inputs.tail_energy(n, r) / (bf * bf);
    }
    let squared = projection_term + perturbation_term + tail_term;
    Ok(CompletionBound {
        squared,
        relative: squared.sqrt(),
        projection_term,
        perturbation_term,
        tail_term,
        reweighting_error: d,
        vanishing_gap_modes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tenips::link::Logistic;
    use tenips::synthesis::{random_tucker, GeneratorConfig};
    use tenips::tensor::Shape;

    #[test]
    fn propensity_bound_logistic_and_symmetric_cases() {
        let shape = Shape::new(vec![4, 4]).unwrap();
        let spec = UnfoldingSpec::mode(&shape, 0).unwrap();
        let l = Logistic.l_gamma(1.0);
        assert_eq!(l, 1.0);
        let b = propensity_mse_bound(l, 0.7, &spec);
        assert!((b - 8.0 * E * 0.7 / 2.0).abs() < 1e-12);
        assert!((b - 4.0 * E * 0.7 * (0.5 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn square_unfolding_has_the_smaller_propensity_bound() {
        let shape = Shape::cubical(8, 6).unwrap();
        let sq = square_set(&shape).unwrap();
        let rect = UnfoldingSpec::mode(&shape, 0).unwrap();
        assert!(propensity_mse_bound(1.0, 1.0, &sq) < propensity_mse_bound(1.0, 1.0, &rect));
    }

    fn inputs(b: &DenseTensor, epsilon: f64) -> BoundInputs {
        let a = b.scale(1.0 / b.max_abs());
        BoundInputs::from_tensors(b, &a, Arc::new(Logistic), 1.0, epsilon).unwrap()
    }

    #[test]
    fn exact_rank_has_zero_tail_and_zero_slack_leaves_tail_only() {
        let cfg = GeneratorConfig::cubical(6, 3, 2, 10.0, 0.0, 1).unwrap();
        let (b, _) = random_tucker(&cfg).unwrap();
        let ranks = RankProfile::uniform(2, 3).unwrap();
        let inp = inputs(&b, 0.0);
        let bound = completion_bound(&inp, &ranks, ReweightingError::Measured(0.0)).unwrap();
        assert!(bound.tail_term < 1e-24);
        assert_eq!(bound.projection_term, 0.0);
        assert_eq!(bound.perturbation_term, 0.0);
        assert_eq!(bound.squared, bound.tail_term);

        let low = completion_bound(
            &inp,
            &RankProfile::uniform(1, 3).unwrap(),
            ReweightingError::Measured(0.0),
        )
        .unwrap();
        let oracle: f64 =
            (0..3).map(|n| inp.tail_energy(n, 1)).sum::<f64>() / (inp.b_fro * inp.b_fro);
        assert!((low.squared - oracle).abs() < 1e-15 * oracle.max(1.0));
    }

    #[test]
    fn vanishing_gap_is_infinite() {
        let b = DenseTensor::from_fn(Shape::new(vec![3, 3]).unwrap(), |i| {
            if i[0] == i[1] {
                1.0
            } else {
                0.0
            }
        });
        let inp = inputs(&b, 0.1);
        let bound = completion_bound(
            &inp,
            &RankProfile::uniform(1, 2).unwrap(),
            ReweightingError::Measured(0.0),
        )
        .unwrap();
        assert!(bound.squared.is_infinite());
        assert_eq!(bound.vanishing_gap_modes, vec![0, 1]);
    }

    #[test]
    fn full_rank_uses_zero_for_the_next_singular_value() {
        let b = DenseTensor::from_fn(Shape::new(vec![2, 3]).unwrap(), |i| {
            (i[0] + 2 * i[1]) as f64 + 0.5
        });
        let inp = inputs(&b, 0.05);
        let bound = completion_bound(
            &inp,
            &RankProfile::new(vec![2, 3]).unwrap(),
            ReweightingError::Measured(0.0),
        )
        .unwrap();
        // mode 1 has only two singular values, so sigma_3 = 0 is a vanishing gap
        assert_eq!(bound.vanishing_gap_modes, vec![1]);
        let bound = completion_bound(
            &inp,
            &RankProfile::new(vec![2, 2]).unwrap(),
            ReweightingError::Measured(0.0),
        )
        .unwrap();
        assert!(bound.squared.is_finite() && bound.squared > 0.0);
    }

    #[test]
    fn threshold_form_of_the_reweighting_error() {
        let cfg = GeneratorConfig::cubical(4, 4, 2, 10.0, 0.0, 2).unwrap();
        let (b, _) = random_tucker(&cfg).unwrap();
        let inp = inputs(&b, 0.0);
        let d = reweighting_error_bound(&inp, 0.5, 1.0);
        let s = |x: f64| 1.0 / (1.0 + (-x).exp());
        let oracle = inp.alpha_sp * inp.b_fro / (s(-1.0) * s(-inp.alpha))
            * (4.0 * E * 0.5 * (0.25 + 0.25)).sqrt();
        assert!((d - oracle).abs() < 1e-12 * oracle);
        let bound = completion_bound(
            &inp,
            &RankProfile::uniform(2, 4).unwrap(),
            ReweightingError::FromThresholds {
                tau: 0.5,
                gamma: 1.0,
            },
        )
        .unwrap();
        assert_eq!(bound.reweighting_error, d);
    }
}
