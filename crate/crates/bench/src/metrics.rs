//! Error metrics and the fixed-schema rows written by experiments.

use std::io::Write;

use serde::Serialize;
use tenips::tensor::DenseTensor;
use tenips::{Error, Result};

/// `||est - truth||_F / ||truth||_F`.
pub fn relative_error(est: &DenseTensor, truth: &DenseTensor) -> Result<f64> {
    let denom = truth.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::InvalidParameter(
            "relative error against a zero tensor is undefined".into(),
        ));
    }
    Ok(est.sub(truth)?.frobenius_norm() / denom)
}

/// One row of `metrics.csv`. Every experiment writes this same column set;
/// fields that do not apply stay empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub experiment: String,
    /// Grid cell, e.g. `N=4` or `ratio=0.4`.
    pub cell: String,
    pub seed: u64,
    pub method: String,
    /// Sub-setting within a method, e.g. the unfolding or threshold setting.
    pub variant: String,
    /// `true`, `convex` or `nonconvex` for completion rows.
    pub propensity_source: String,
    pub target_rank: Option<usize>,
    /// Swept scalar (ratio, multiplier, step) when the cell has one.
    pub param: Option<f64>,
    pub propensity_rel_error: Option<f64>,
    pub completion_rel_error: Option<f64>,
    /// Square root of the general error bound for this completion.
    pub bound: Option<f64>,
    pub iterations: Option<usize>,
    /// `ok`, or `error: ...` for a failed cell.
    pub status: String,
}

impl MetricsRecord {
    pub fn new(experiment: &str, cell: &str, seed: u64, method: &str) -> Self {
        Self {
            experiment: experiment.into(),
            cell: cell.into(),
            seed,
            method: method.into(),
            status: "ok".into(),
            ..Self::default()
        }
    }

    pub fn failed(mut self, err: &dyn std::fmt::Display) -> Self {
        self.status = format!("error: {err}");
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// One row of `timings.csv`: wall seconds of a method call.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRecord {
    pub experiment: String,
    pub cell: String,
    pub seed: u64,
    pub method: String,
    pub variant: String,
    pub propensity_source: String,
    pub seconds: f64,
}

pub fn write_csv<T: Serialize>(w: impl Write, rows: &[T]) -> anyhow::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
