use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{degenerate_mask_warning, Parameter, PropensityModel};
use crate::decomposition::{project_box_matrix, project_nuclear_ball_detailed, singular_values};
use crate::error::{Error, Result};
use crate::link::LinkFunction;
use crate::tensor::{square_set, DenseTensor, MaskTensor, Matrix, UnfoldingSpec};

/// Thresholds and schedule for [`convex_pe`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexPeConfig {
    /// Nuclear threshold; the nuclear-norm radius is `tau * sqrt(I_[N])`.
    pub tau: f64,
    /// Max-norm threshold.
    pub gamma: f64,
    /// Gradient step; `None` uses `1 / L` with `L` the loss smoothness of the
    /// link.
    pub step: Option<f64>,
    pub max_iterations: usize,
    /// Stop once the relative objective change drops below this.
    pub tolerance: f64,
}

impl ConvexPeConfig {
    pub fn new(tau: f64, gamma: f64) -> Self {
        Self {
            tau,
            gamma,
            step: None,
            max_iterations: 2000,
            tolerance: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive(self.tau, "tau")?;
        positive(self.gamma, "gamma")?;
        if let Some(step) = self.step {
            positive(step, "step")?;
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidParameter(
                "tolerance must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Diagnostics of one [`convex_pe`] solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexPeReport {
    /// Row modes of the unfolding the solve ran on (zero-based).
    pub unfolding: Vec<usize>,
    pub rows: usize,
    pub cols: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Iteration whose iterate was returned (0 is the zero start).
    pub best_iteration: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Objective after each iteration, starting with the initial value.
    pub objective_trace: Vec<f64>,
    pub nuclear_norm: f64,
    pub nuclear_radius: f64,
    /// `max(0, ||A||_* - radius)` of the returned estimate.
    pub nuclear_residual: f64,
    pub max_abs: f64,
    /// `max(0, ||A||_max - gamma)` of the returned estimate.
    pub box_residual: f64,
    pub warnings: Vec<String>,
    pub wall_seconds: f64,
}

/// Estimates propensities from `mask` on its square unfolding.
pub fn convex_pe(
    mask: &MaskTensor,
    link: Arc<dyn LinkFunction>,
    cfg: &ConvexPeConfig,
) -> Result<(PropensityModel, ConvexPeReport)> {
    let spec = square_set(mask.shape())?;
    convex_pe_on_spec(mask, link, cfg, &spec)
}

/// Projected gradient descent for
/// `min -loglik(G; Omega)` s.t. `||G||_* <= tau sqrt(I_[N])`, `||G||_max <= gamma`
/// over the `spec`-unfolding `G` of the parameter tensor.
///
/// Each iteration takes a gradient step, projects onto the nuclear ball and
/// then clamps to the box. The lowest-objective iterate is returned; if the
/// clamp left it outside the nuclear ball it is shrunk radially onto it,
/// which keeps it inside the box.
pub fn convex_pe_on_spec(
    mask: &MaskTensor,
    link: Arc<dyn LinkFunction>,
    cfg: &ConvexPeConfig,
    spec: &UnfoldingSpec,
) -> Result<(PropensityModel, ConvexPeReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let shape = mask.shape().clone();
    let y = mask.to_dense().unfold(spec)?;
    let (rows, cols) = (y.nrows(), y.ncols());
    let radius = cfg.tau * (shape.len() as f64).sqrt();
    let step = cfg.step.unwrap_or(1.0 / link.loss_smoothness());
    let mut warnings: Vec<String> = degenerate_mask_warning(mask).into_iter().collect();

    let objective = |g: &Matrix| -> f64 {
        let mut s = 0.0;
        for j in 0..cols {
            for (&x, &t) in g.col_as_slice(j).iter().zip(y.col_as_slice(j)) {
                s += link.loss(x, t);
            }
        }
        s
    };

    let mut current = Matrix::zeros(rows, cols);
    let initial = objective(&current);
    let mut trace = vec![initial];
    let mut best = current.clone();
    let mut best_objective = initial;
    let mut best_iteration = 0;
    let mut converged = false;
    let mut iterations = 0;
    let mut prev = initial;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let mut z = current;
        for j in 0..cols {
            let target = y.col_as_slice(j);
            for (x, &t) in z.col_as_slice_mut(j).iter_mut().zip(target) {
                *x -= step * link.loss_derivative(*x, t);
            }
        }
        let mut next = project_nuclear_ball_detailed(z.as_ref(), radius)?.matrix;
        project_box_matrix(&mut next, cfg.gamma);
        let f = objective(&next);
        if !f.is_finite() {
            return Err(Error::NonFinite("convex propensity objective"));
        }
        trace.push(f);
        if f < best_objective {
            best_objective = f;
            best = next.clone();
            best_iteration = iterations;
        }
        current = next;
        let change = (prev - f).abs() / prev.abs().max(f64::MIN_POSITIVE);
        prev = f;
        if change < cfg.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!(
            "no convergence within {} iterations; returning the best iterate",
            cfg.max_iterations
        ));
    }

    let mut nuclear: f64 = singular_values(best.as_ref())?.iter().sum();
    if nuclear > radius {
        let shrink = radius / nuclear;
        for j in 0..cols {
            for x in best.col_as_slice_mut(j) {
                *x *= shrink;
            }
        }
        nuclear = singular_values(best.as_ref())?.iter().sum();
    }
    let final_objective = objective(&best);
    let param = DenseTensor::fold(best.as_ref(), spec, &shape)?;
    let max_abs = param.max_abs();
    let report = ConvexPeReport {
        unfolding: spec.subset().to_vec(),
        rows,
        cols,
        iterations,
        converged,
        best_iteration,
        initial_objective: initial,
        final_objective,
        objective_trace: trace,
        nuclear_norm: nuclear,
        nuclear_radius: radius,
        nuclear_residual: (nuclear - radius).max(0.0),
        max_abs,
        box_residual: (max_abs - cfg.gamma).max(0.0),
        warnings,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((PropensityModel::new(link, Parameter::Dense(param)), report))
}
