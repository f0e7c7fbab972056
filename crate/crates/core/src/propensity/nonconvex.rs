use std::fmt::Debug;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{degenerate_mask_warning, loss_sum, Parameter, PropensityModel};
use crate::decomposition::{RankProfile, TuckerDecomposition};
use crate::error::{Error, Result};
use crate::link::LinkFunction;
use crate::tensor::{DenseTensor, MaskTensor, Matrix, Shape};

/// Produces the starting core and factors for [`nonconvex_pe`].
pub trait InitStrategy: Debug + Send + Sync {
    fn initialize(
        &self,
        shape: &Shape,
        ranks: &RankProfile,
        seed: u64,
    ) -> Result<TuckerDecomposition>;
}

/// I.i.d. uniform entries on `[low, high]` for the core and every factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformInit {
    pub low: f64,
    pub high: f64,
}

impl Default for UniformInit {
    fn default() -> Self {
        Self {
            low: -1.0,
            high: 1.0,
        }
    }
}

impl InitStrategy for UniformInit {
    fn initialize(
        &self,
        shape: &Shape,
        ranks: &RankProfile,
        seed: u64,
    ) -> Result<TuckerDecomposition> {
        if !(self.low < self.high) {
            return Err(Error::InvalidParameter(format!(
                "empty init range [{}, {}]",
                self.low, self.high
            )));
        }
        ranks.validate_for(shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let core_shape = Shape::new(ranks.ranks().to_vec())?;
        let core = DenseTensor::from_fn(core_shape, |_| rng.random_range(self.low..=self.high));
        let factors = shape
            .dims()
            .iter()
            .zip(ranks.ranks())
            .map(|(&i, &r)| Matrix::from_fn(i, r, |_, _| rng.random_range(self.low..=self.high)))
            .collect();
        TuckerDecomposition::new(core, factors)
    }
}

/// Step size, rank and schedule for [`nonconvex_pe`].
#[derive(Clone, Debug)]
pub struct NonconvexPeConfig {
    pub step: f64,
    pub ranks: RankProfile,
    pub init: Arc<dyn InitStrategy>,
    pub seed: u64,
    pub max_iterations: usize,
    /// Stop once the relative objective change drops below this.
    pub tolerance: f64,
    /// Abort when the objective exceeds this multiple of its initial value.
    pub divergence_factor: f64,
}

impl NonconvexPeConfig {
    pub fn new(step: f64, ranks: RankProfile) -> Self {
        Self {
            step,
            ranks,
            init: Arc::new(UniformInit::default()),
            seed: 0,
            max_iterations: 1000,
            tolerance: 1e-6,
            divergence_factor: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step >= 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step must be nonnegative and finite, got {}",
                self.step
            )));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidParameter(
                "tolerance must be nonnegative".into(),
            ));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::InvalidParameter(
                "divergence factor must exceed 1".into(),
            ));
        }
        Ok(())
    }
}

/// Diagnostics of one [`nonconvex_pe`] solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonconvexPeReport {
    /// Step size the returned run used.
    pub step: f64,
    /// Number of times the step was halved after a divergence.
    pub halvings: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the initialization and after every step.
    pub objective_trace: Vec<f64>,
    pub warnings: Vec<String>,
    pub wall_seconds: f64,
}

/// Objective value and gradients with respect to the core and each factor.
#[derive(Clone, Debug)]
pub struct TuckerGradients {
    pub objective: f64,
    pub core: DenseTensor,
    pub factors: Vec<Matrix>,
}

/// Gradients of `f(G, U_1..U_N) = sum loss(A_hat, Omega)` where
/// `A_hat = G x_1 U_1 ... x_N U_N` and `omega` holds targets in `[0, 1]`.
///
/// With `R` the entrywise loss derivative at `A_hat`:
/// `df/dG = R x_1 U_1^T ... x_N U_N^T` and
/// `df/dU_n = unfold_n(R x_{m != n} U_m^T) unfold_n(G)^T`.
pub fn tucker_loglik_gradients(
    d: &TuckerDecomposition,
    omega: &DenseTensor,
    link: &dyn LinkFunction,
) -> Result<TuckerGradients> {
    let a_hat = d.reconstruct();
    a_hat.check_same_shape(omega)?;
    let objective = loss_sum(a_hat.data(), omega.data(), link);
    let residual = a_hat.zip_map(omega, |x, y| link.loss_derivative(x, y))?;
    let factors = d.factors();
    let order = factors.len();

    let mut factor_grads = Vec::with_capacity(order);
    for n in 0..order {
        let z = residual.multi_mode_product(
            (0..order)
                .filter(|&m| m != n)
                .map(|m| (m, factors[m].transpose())),
        )?;
        let zn = z.mode_unfold(n)?;
        let gn = d.core().mode_unfold(n)?;
        factor_grads.push(&zn * gn.transpose());
    }
    let core =
        residual.multi_mode_product(factors.iter().enumerate().map(|(m, u)| (m, u.transpose())))?;
    Ok(TuckerGradients {
        objective,
        core,
        factors: factor_grads,
    })
}

/// Gradient descent on the Tucker core and factors of the parameter tensor,
/// all blocks updated simultaneously with the fixed step `cfg.step`.
///
/// Factors are not re-orthonormalized between steps.
pub fn nonconvex_pe(
    mask: &MaskTensor,
    link: Arc<dyn LinkFunction>,
    cfg: &NonconvexPeConfig,
) -> Result<(PropensityModel, NonconvexPeReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let omega = mask.to_dense();
    let mut warnings: Vec<String> = degenerate_mask_warning(mask).into_iter().collect();
    let mut d = cfg.init.initialize(mask.shape(), &cfg.ranks, cfg.seed)?;
    if d.shape() != *mask.shape() || d.ranks() != cfg.ranks {
        return Err(Error::InvalidParameter(
            "initialization returned a decomposition of the wrong shape or rank".into(),
        ));
    }

    let mut grads = tucker_loglik_gradients(&d, &omega, link.as_ref())?;
    let initial = grads.objective;
    if !initial.is_finite() {
        return Err(Error::NonFinite("initial nonconvex propensity objective"));
    }
    let mut trace = vec![initial];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let (core, factors) = d.into_parts();
        let core = core
            .zip_map(&grads.core, |x, g| x - cfg.step * g)
            .expect("gradient has the core's shape");
        let factors = factors
            .into_iter()
            .zip(&grads.factors)
            .map(|(u, g)| {
                Matrix::from_fn(u.nrows(), u.ncols(), |i, j| {
                    u[(i, j)] - cfg.step * g[(i, j)]
                })
            })
            .collect();
        d = TuckerDecomposition::new(core, factors)?;
        grads = tucker_loglik_gradients(&d, &omega, link.as_ref())?;
        let f = grads.objective;
        trace.push(f);
        if !f.is_finite() || f > cfg.divergence_factor * initial {
            return Err(Error::Diverged {
                iteration: iterations,
                objective: f,
                initial,
            });
        }
        let prev = trace[trace.len() - 2];
        if (prev - f).abs() / prev.abs().max(f64::MIN_POSITIVE) < cfg.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!(
            "no convergence within {} iterations",
            cfg.max_iterations
        ));
    }
    let report = NonconvexPeReport {
        step: cfg.step,
        halvings: 0,
        iterations,
        converged,
        objective_trace: trace,
        warnings,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((PropensityModel::new(link, Parameter::Tucker(d)), report))
}

/// Runs [`nonconvex_pe`], halving the step after every divergence, at most
/// `max_halvings` times. Other errors are returned immediately.
pub fn nonconvex_pe_with_backoff(
    mask: &MaskTensor,
    link: Arc<dyn LinkFunction>,
    cfg: &NonconvexPeConfig,
    max_halvings: usize,
) -> Result<(PropensityModel, NonconvexPeReport)> {
    let mut cfg = cfg.clone();
    let mut halvings = 0;
    loop {
        match nonconvex_pe(mask, link.clone(), &cfg) {
            Ok((model, mut report)) => {
                report.halvings = halvings;
                if halvings > 0 {
                    report
                        .warnings
                        .push(format!("step halved {halvings} time(s) after divergence"));
                }
                return Ok((model, report));
            }
            Err(Error::Diverged { .. }) if halvings < max_halvings => {
                cfg.step /= 2.0;
                halvings += 1;
            }
            Err(e) => return Err(e),
        }
    }
}
