//! Completion of MNAR-observed tensors from inverse-propensity-reweighted
//! observations: TenIPS and the SqUnfold, RectUnfold and HOSVD_w baselines.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::decomposition::{hosvd_fixed_rank, svd, RankProfile, TuckerDecomposition};
use crate::error::{Error, Result};
use crate::tensor::{square_set, DenseTensor, MaskTensor, Matrix, Shape, UnfoldingSpec};

/// Default lower clamp applied to propensities before reweighting.
pub const DEFAULT_PROPENSITY_FLOOR: f64 = 1e-6;

/// Observed entries `B_obs = B (.) Omega` together with the mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedInstance {
    b_obs: DenseTensor,
    mask: MaskTensor,
}

impl ObservedInstance {
    /// Rejects a shape mismatch or a nonzero value at an unobserved entry.
    pub fn new(b_obs: DenseTensor, mask: MaskTensor) -> Result<Self> {
        if b_obs.shape() != mask.shape() {
            return Err(Error::ShapeMismatch {
                expected: mask.shape().dims().to_vec(),
                found: b_obs.dims().to_vec(),
            });
        }
        if let Some(k) = (0..b_obs.len()).find(|&k| !mask.is_observed(k) && b_obs.data()[k] != 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "unobserved entry {k} holds a nonzero value"
            )));
        }
        Ok(Self { b_obs, mask })
    }

    /// Masks a fully known tensor.
    pub fn from_full(b: &DenseTensor, mask: MaskTensor) -> Result<Self> {
        Ok(Self {
            b_obs: b.masked(&mask)?,
            mask,
        })
    }

    pub fn b_obs(&self) -> &DenseTensor {
        &self.b_obs
    }

    pub fn mask(&self) -> &MaskTensor {
        &self.mask
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "tenips")]
    TenIps,
    #[serde(rename = "sq_unfold")]
    SqUnfold,
    #[serde(rename = "rect_unfold")]
    RectUnfold,
    #[serde(rename = "hosvd_w")]
    HosvdW,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::TenIps,
        Method::HosvdW,
        Method::SqUnfold,
        Method::RectUnfold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::TenIps => "tenips",
            Method::SqUnfold => "sq_unfold",
            Method::RectUnfold => "rect_unfold",
            Method::HosvdW => "hosvd_w",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == norm || m.name().replace('_', "") == norm)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown completion method {s:?}")))
    }
}

/// Low-rank structure behind a completed tensor.
#[derive(Clone, Debug)]
pub enum Representation {
    /// Estimate equals the reconstruction.
    Tucker(TuckerDecomposition),
    /// Estimate is the `spec`-folding (to `shape`) of `left * right^T`.
    Unfolded {
        shape: Shape,
        spec: UnfoldingSpec,
        left: Matrix,
        right: Matrix,
    },
    /// Estimate is the reconstruction times `weights` entrywise.
    ScaledTucker {
        tucker: TuckerDecomposition,
        weights: DenseTensor,
    },
}

impl Representation {
    pub fn reconstruct(&self) -> Result<DenseTensor> {
        match self {
            Representation::Tucker(d) => Ok(d.reconstruct()),
            Representation::Unfolded {
                shape,
                spec,
                left,
                right,
            } => {
                let m = left * right.transpose();
                DenseTensor::fold(m.as_ref(), spec, shape)
            }
            Representation::ScaledTucker { tucker, weights } => {
                tucker.reconstruct().entrywise_product(weights)
            }
        }
    }
}

/// A completed tensor with its low-rank representation.
#[derive(Clone, Debug)]
pub struct CompletionResult {
    pub method: Method,
    pub estimate: DenseTensor,
    pub representation: Representation,
    /// Number of propensities raised to the floor before reweighting.
    pub clamped: usize,
    pub wall_seconds: f64,
}

fn check_propensities(inst: &ObservedInstance, p: &DenseTensor) -> Result<()> {
    if p.shape() != inst.mask.shape() {
        return Err(Error::ShapeMismatch {
            expected: inst.mask.shape().dims().to_vec(),
            found: p.dims().to_vec(),
        });
    }
    if !p.is_finite() {
        return Err(Error::NonFinite("propensity tensor"));
    }
    for (k, &q) in p.data().iter().enumerate() {
        if inst.mask.is_observed(k) && !(q > 0.0) {
            return Err(Error::NonPositivePropensity { index: k, value: q });
        }
    }
    Ok(())
}

fn check_floor(floor: f64) -> Result<()> {
    if floor > 0.0 && floor < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "propensity floor must lie in (0, 1), got {floor}"
        )))
    }
}

/// `X_bar = Omega (.) B_obs / P` with the default propensity floor.
pub fn ips_reweight(inst: &ObservedInstance, p: &DenseTensor) -> Result<DenseTensor> {
    ips_reweight_with_floor(inst, p, DEFAULT_PROPENSITY_FLOOR).map(|(x, _)| x)
}

/// `X_bar = Omega (.) B_obs / max(P, floor)`, also returning how many
/// observed propensities were below `floor`.
///
/// A non-positive propensity at an observed entry is an error.
pub fn ips_reweight_with_floor(
    inst: &ObservedInstance,
    p: &DenseTensor,
    floor: f64,
) -> Result<(DenseTensor, usize)> {
    check_floor(floor)?;
    check_propensities(inst, p)?;
    let mut clamped = 0;
    let data = inst
        .b_obs
        .data()
        .iter()
        .zip(p.data())
        .zip(inst.mask.bits())
        .map(|((&b, &q), &seen)| {
            if !seen {
                return 0.0;
            }
            if q < floor {
                clamped += 1;
            }
            b / q.max(floor)
        })
        .collect();
    Ok((DenseTensor::new(p.shape().clone(), data)?, clamped))
}

/// TenIPS: fixed-rank HOSVD of the reweighted observations.
pub fn tenips(
    inst: &ObservedInstance,
    p: &DenseTensor,
    ranks: &RankProfile,
) -> Result<CompletionResult> {
    let start = Instant::now();
    let (x_bar, clamped) = ips_reweight_with_floor(inst, p, DEFAULT_PROPENSITY_FLOOR)?;
    let d = hosvd_fixed_rank(&x_bar, ranks)?;
    Ok(CompletionResult {
        method: Method::TenIps,
        estimate: d.reconstruct(),
        representation: Representation::Tucker(d),
        clamped,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Rank-`r` truncated SVD of the `spec`-unfolding of `x`, refolded.
fn truncated_unfolding(
    x: &DenseTensor,
    spec: &UnfoldingSpec,
    r: usize,
) -> Result<(DenseTensor, Representation)> {
    let m = x.unfold(spec)?;
    let max = m.nrows().min(m.ncols());
    if r == 0 || r > max {
        return Err(Error::RankOutOfRange { rank: r, max });
    }
    let dec = svd(m.as_ref())?;
    let left = Matrix::from_fn(m.nrows(), r, |i, k| dec.u[(i, k)] * dec.s[k]);
    let right = dec.v.subcols(0, r).to_owned();
    let rep = Representation::Unfolded {
        shape: x.shape().clone(),
        spec: spec.clone(),
        left,
        right,
    };
    Ok((rep.reconstruct()?, rep))
}

/// SqUnfold: rank-`r` SVD of the square unfolding of the reweighted
/// observations.
pub fn sq_unfold_complete(
    inst: &ObservedInstance,
    p: &DenseTensor,
    r: usize,
) -> Result<CompletionResult> {
    let spec = square_set(inst.mask.shape())?;
    unfold_complete(inst, p, r, &spec, Method::SqUnfold)
}

/// RectUnfold: rank-`r` SVD of the mode-`mode` unfolding of the reweighted
/// observations.
pub fn rect_unfold_complete(
    inst: &ObservedInstance,
    p: &DenseTensor,
    r: usize,
    mode: usize,
) -> Result<CompletionResult> {
    let spec = UnfoldingSpec::mode(inst.mask.shape(), mode)?;
    unfold_complete(inst, p, r, &spec, Method::RectUnfold)
}

fn unfold_complete(
    inst: &ObservedInstance,
    p: &DenseTensor,
    r: usize,
    spec: &UnfoldingSpec,
    method: Method,
) -> Result<CompletionResult> {
    let start = Instant::now();
    let (x_bar, clamped) = ips_reweight_with_floor(inst, p, DEFAULT_PROPENSITY_FLOOR)?;
    let (estimate, representation) = truncated_unfolding(&x_bar, spec, r)?;
    Ok(CompletionResult {
        method,
        estimate,
        representation,
        clamped,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// HOSVD_w: `Y = B_obs / sqrt(P)`, `D = HOSVD(Y)`, estimate `D / sqrt(P)`.
///
/// The second reweighting touches every entry, so the floor is applied to
/// unobserved propensities as well.
pub fn hosvd_w_complete(
    inst: &ObservedInstance,
    p: &DenseTensor,
    ranks: &RankProfile,
) -> Result<CompletionResult> {
    let start = Instant::now();
    check_propensities(inst, p)?;
    let floor = DEFAULT_PROPENSITY_FLOOR;
    let clamped = p.data().iter().filter(|&&q| q < floor).count();
    let weights = p.map(|q| 1.0 / q.max(floor).sqrt());
    let y = inst.b_obs.entrywise_product(&weights)?;
    let tucker = hosvd_fixed_rank(&y, ranks)?;
    let estimate = tucker.reconstruct().entrywise_product(&weights)?;
    Ok(CompletionResult {
        method: Method::HosvdW,
        estimate,
        representation: Representation::ScaledTucker { tucker, weights },
        clamped,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
