//! Preset experiment grids.
//!
//! Every random draw is seeded from a string key naming the instance plus
//! the seed, so results do not depend on which cells run or in what order.
//! A failing cell is recorded with an `error: ...` status and the grid goes
//! on.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{anyhow, Context};
use serde::Serialize;
use tenips::completion::{
    hosvd_w_complete, ips_reweight, rect_unfold_complete, sq_unfold_complete, tenips,
    CompletionResult, Method, ObservedInstance,
};
use tenips::decomposition::RankProfile;
use tenips::propensity::{
    convex_pe_on_spec, nonconvex_pe, nonconvex_pe_with_backoff, ConvexPeConfig, ConvexPeReport,
    NonconvexPeConfig, NonconvexPeReport,
};
use tenips::synthesis::{
    logistic, model_a_propensity, model_b_propensity, noisy_tucker, sample_mask, stream_seed,
    video_like_instance, GeneratorConfig,
};
use tenips::tensor::{matrix_norms, square_set, DenseTensor, MaskTensor, Shape, UnfoldingSpec};

use crate::bounds::{completion_bound, empirical_epsilon, BoundInputs, ReweightingError};
use crate::config::{ExperimentConfig, ObservationModel, Preset, PropensitySource};
use crate::metrics::{relative_error, write_csv, MetricsRecord, TimingRecord};

pub const DATA_STREAM: u64 = 1;
pub const PARAM_STREAM: u64 = 2;
pub const MASK_STREAM: u64 = 3;
pub const INIT_STREAM: u64 = 4;

/// NonconvexPE step that converges on the order-4, size-100 instance.
pub const REFERENCE_STEP: f64 = 5e-6;

fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Seed of random stream `stream` for instance `key` under `seed`.
pub fn derive_seed(key: &str, seed: u64, stream: u64) -> u64 {
    stream_seed(stream_seed(fnv1a(key), seed), stream)
}

/// Parameter core std for `order`: the configured value, or `100 (I/100)^{N/2}`,
/// which keeps the entry scale of `A` (and so the spread of the propensities)
/// of the size-100 instance.
pub fn param_core_std(cfg: &ExperimentConfig, order: usize) -> f64 {
    cfg.core_std_param
        .unwrap_or_else(|| 100.0 * (cfg.size as f64 / 100.0).powf(order as f64 / 2.0))
}

/// [`REFERENCE_STEP`] rescaled to `shape` by `(100/3)^4 / prod(I_n / 3)`.
pub fn reference_step(shape: &Shape) -> f64 {
    let prod: f64 = shape.dims().iter().map(|&i| i as f64 / 3.0).product();
    REFERENCE_STEP * (100.0f64 / 3.0).powi(4) / prod
}

/// `(theta, alpha)`: nuclear norm of the square unfolding over
/// `sqrt(I_[N])`, and the max norm, of a parameter tensor.
pub fn oracle_thresholds(a: &DenseTensor) -> tenips::Result<(f64, f64)> {
    let sq = square_set(a.shape())?;
    let nuclear = matrix_norms(a.unfold(&sq)?.as_ref())?.nuclear;
    Ok((nuclear / (a.len() as f64).sqrt(), a.max_abs()))
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Rank a method runs with at nominal target rank `target`: the square
/// unfolding uses the product over its row modes, capped by the matrix size.
pub fn method_rank(method: Method, shape: &Shape, target: usize) -> tenips::Result<usize> {
    Ok(match method {
        Method::TenIps | Method::HosvdW => target,
        Method::SqUnfold => {
            let sq = square_set(shape)?;
            let r = target.saturating_pow(sq.subset().len() as u32);
            r.min(sq.row_dim().min(sq.col_dim()))
        }
        Method::RectUnfold => {
            let spec = UnfoldingSpec::mode(shape, 0)?;
            target.min(spec.row_dim().min(spec.col_dim()))
        }
    })
}

pub fn run_method(
    method: Method,
    inst: &ObservedInstance,
    p: &DenseTensor,
    target: usize,
) -> tenips::Result<CompletionResult> {
    let shape = inst.mask().shape();
    let r = method_rank(method, shape, target)?;
    match method {
        Method::TenIps => tenips(inst, p, &RankProfile::uniform(r, shape.order())?),
        Method::HosvdW => hosvd_w_complete(inst, p, &RankProfile::uniform(r, shape.order())?),
        Method::SqUnfold => sq_unfold_complete(inst, p, r),
        Method::RectUnfold => rect_unfold_complete(inst, p, r, 0),
    }
}

/// Data tensor, parameter tensor, propensities and observations of one
/// entry-dependent-missingness instance.
#[derive(Clone, Debug)]
pub struct MnarInstance {
    pub b: DenseTensor,
    pub a: DenseTensor,
    pub p: DenseTensor,
    pub observed: ObservedInstance,
}

impl MnarInstance {
    pub fn mask(&self) -> &MaskTensor {
        self.observed.mask()
    }
}

fn tag(cfg: &ExperimentConfig, order: usize) -> String {
    format!("N={order},I={},r={}", cfg.size, cfg.rank)
}

/// Noisy low-rank data tensor shared by every preset with the same order,
/// size and rank.
pub fn data_tensor(cfg: &ExperimentConfig, order: usize, seed: u64) -> tenips::Result<DenseTensor> {
    let key = format!("data/{}", tag(cfg, order));
    let g = GeneratorConfig::cubical(
        cfg.size,
        order,
        cfg.rank,
        cfg.core_std_data,
        cfg.noise,
        derive_seed(&key, seed, DATA_STREAM),
    )?;
    noisy_tucker(&g)
}

fn param_tensor(
    cfg: &ExperimentConfig,
    key: &str,
    order: usize,
    seed: u64,
) -> tenips::Result<DenseTensor> {
    let g = GeneratorConfig::cubical(
        cfg.size,
        order,
        cfg.rank,
        param_core_std(cfg, order),
        cfg.noise,
        derive_seed(key, seed, PARAM_STREAM),
    )?;
    Ok(model_b_propensity(&g, logistic())?.1)
}

pub fn mnar_instance(
    cfg: &ExperimentConfig,
    order: usize,
    seed: u64,
) -> tenips::Result<MnarInstance> {
    let t = tag(cfg, order);
    let b = data_tensor(cfg, order, seed)?;
    let a = param_tensor(cfg, &format!("param/{t}"), order, seed)?;
    let link = logistic();
    let p = a.map(|x| link.value(x));
    let mask = sample_mask(&p, derive_seed(&format!("mnar/{t}"), seed, MASK_STREAM))?;
    let observed = ObservedInstance::from_full(&b, mask)?;
    Ok(MnarInstance { b, a, p, observed })
}

/// One ConvexPE or NonconvexPE solve with the settings it ran with.
#[derive(Clone, Debug, Serialize)]
pub struct SolveRecord {
    pub experiment: String,
    pub cell: String,
    pub seed: u64,
    pub variant: String,
    pub tau: Option<f64>,
    pub gamma: Option<f64>,
    pub step: Option<f64>,
    pub report: SolveReport,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "solver", rename_all = "snake_case")]
pub enum SolveReport {
    Convex(ConvexPeReport),
    Nonconvex(NonconvexPeReport),
    /// The solve stopped with an error (e.g. divergence).
    Failed {
        message: String,
    },
}

/// Seed-mean of the error columns over the successful rows of one cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub cell: String,
    pub method: String,
    pub variant: String,
    pub propensity_source: String,
    pub target_rank: Option<usize>,
    pub param: Option<f64>,
    pub seeds_ok: usize,
    pub seeds_failed: usize,
    pub propensity_rel_error: Option<f64>,
    pub completion_rel_error: Option<f64>,
    pub bound: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub metrics: Vec<MetricsRecord>,
    pub timings: Vec<TimingRecord>,
    pub solves: Vec<SolveRecord>,
}

impl ExperimentOutput {
    fn new(config: &ExperimentConfig) -> Self {
        Self {
            config: config.clone(),
            metrics: Vec::new(),
            timings: Vec::new(),
            solves: Vec::new(),
        }
    }

    fn experiment(&self) -> &'static str {
        self.config.preset.name()
    }

    fn record(&mut self, row: MetricsRecord, seconds: Option<f64>) {
        if let Some(seconds) = seconds {
            self.timings.push(TimingRecord {
                experiment: row.experiment.clone(),
                cell: row.cell.clone(),
                seed: row.seed,
                method: row.method.clone(),
                variant: row.variant.clone(),
                propensity_source: row.propensity_source.clone(),
                seconds,
            });
        }
        self.metrics.push(row);
    }

    fn row(&self, cell: &str, seed: u64, method: &str) -> MetricsRecord {
        MetricsRecord::new(self.experiment(), cell, seed, method)
    }

    fn fail(&mut self, cell: &str, seed: u64, method: &str, err: &anyhow::Error) {
        let row = self.row(cell, seed, method).failed(&format!("{err:#}"));
        self.metrics.push(row);
    }

    /// Per-cell seed-means in first-appearance order.
    pub fn summary(&self) -> Vec<CellSummary> {
        let mut order = Vec::new();
        let mut groups: BTreeMap<String, Vec<&MetricsRecord>> = BTreeMap::new();
        for r in &self.metrics {
            let key = format!(
                "{}\u{1f}{}\u{1f}{}\u{1f}{}\u{1f}{:?}\u{1f}{:?}",
                r.cell, r.method, r.variant, r.propensity_source, r.target_rank, r.param
            );
            let entry = groups.entry(key.clone()).or_default();
            if entry.is_empty() {
                order.push(key);
            }
            entry.push(r);
        }
        order
            .iter()
            .map(|k| {
                let rows = &groups[k];
                let ok: Vec<_> = rows.iter().filter(|r| r.is_ok()).collect();
                let mean = |f: fn(&MetricsRecord) -> Option<f64>| {
                    let v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
                    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
                };
                let first = rows[0];
                CellSummary {
                    cell: first.cell.clone(),
                    method: first.method.clone(),
                    variant: first.variant.clone(),
                    propensity_source: first.propensity_source.clone(),
                    target_rank: first.target_rank,
                    param: first.param,
                    seeds_ok: ok.len(),
                    seeds_failed: rows.len() - ok.len(),
                    propensity_rel_error: mean(|r| r.propensity_rel_error),
                    completion_rel_error: mean(|r| r.completion_rel_error),
                    bound: mean(|r| r.bound),
                }
            })
            .collect()
    }

    /// Seed-mean of `value` over successful rows matching `filter`.
    pub fn mean(
        &self,
        filter: impl Fn(&MetricsRecord) -> bool,
        value: impl Fn(&MetricsRecord) -> Option<f64>,
    ) -> Option<f64> {
        let v: Vec<f64> = self
            .metrics
            .iter()
            .filter(|r| r.is_ok() && filter(r))
            .filter_map(value)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Writes `metrics.csv`, `timings.csv`, `summary.json`, `solves.json` and
    /// `config.json` into `dir`.
    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let create = |name: &str| -> anyhow::Result<BufWriter<File>> {
            let path = dir.join(name);
            Ok(BufWriter::new(
                File::create(&path).with_context(|| format!("creating {}", path.display()))?,
            ))
        };
        write_csv(create("metrics.csv")?, &self.metrics)?;
        write_csv(create("timings.csv")?, &self.timings)?;
        serde_json::to_writer_pretty(create("summary.json")?, &self.summary())?;
        serde_json::to_writer_pretty(create("solves.json")?, &self.solves)?;
        serde_json::to_writer_pretty(create("config.json")?, &self.config)?;
        Ok(())
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> anyhow::Result<ExperimentOutput> {
    cfg.validate()?;
    let mut out = ExperimentOutput::new(cfg);
    match cfg.preset {
        Preset::Fig1 => fig1(cfg, &mut out),
        Preset::Fig2 => fig2(cfg, &mut out),
        Preset::Table2 => table2(cfg, &mut out),
        Preset::Fig3 => fig3(cfg, &mut out),
        Preset::Video => video(cfg, &mut out),
        Preset::AppdTauGamma => appd_tau_gamma(cfg, &mut out),
        Preset::AppdStep => appd_step(cfg, &mut out),
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn convex_row(
    out: &mut ExperimentOutput,
    cell: &str,
    seed: u64,
    variant: &str,
    param: Option<f64>,
    mask: &MaskTensor,
    p: &DenseTensor,
    pe: &ConvexPeConfig,
    spec: &UnfoldingSpec,
) -> Option<DenseTensor> {
    match convex_pe_on_spec(mask, logistic(), pe, spec) {
        Ok((model, report)) => {
            let p_hat = model.evaluate();
            let mut row = out.row(cell, seed, "convex_pe");
            row.variant = variant.into();
            row.param = param;
            row.iterations = Some(report.iterations);
            match relative_error(&p_hat, p) {
                Ok(e) => row.propensity_rel_error = Some(e),
                Err(e) => row = row.failed(&e),
            }
            let seconds = report.wall_seconds;
            out.solves.push(SolveRecord {
                experiment: out.experiment().into(),
                cell: cell.into(),
                seed,
                variant: variant.into(),
                tau: Some(pe.tau),
                gamma: Some(pe.gamma),
                step: pe.step,
                report: SolveReport::Convex(report),
            });
            out.record(row, Some(seconds));
            Some(p_hat)
        }
        Err(e) => {
            let mut row = out.row(cell, seed, "convex_pe").failed(&e);
            row.variant = variant.into();
            row.param = param;
            out.metrics.push(row);
            None
        }
    }
}

fn convex_config(cfg: &ExperimentConfig, tau: f64, gamma: f64) -> ConvexPeConfig {
    let mut pe = ConvexPeConfig::new(tau, gamma);
    pe.max_iterations = cfg.convex_max_iterations;
    pe
}

fn fig1(cfg: &ExperimentConfig, out: &mut ExperimentOutput) {
    for &model in &cfg.models {
        for &order in &cfg.orders {
            let m = match model {
                ObservationModel::A => "A",
                ObservationModel::B => "B",
            };
            let cell = format!("model={m},N={order}");
            for &seed in &cfg.seeds {
                let inst = (|| -> anyhow::Result<_> {
                    let shape = Shape::cubical(cfg.size, order)?;
                    let a = match model {
                        ObservationModel::A => {
                            if cfg.mcar_ratio >= 1.0 {
                                return Err(anyhow!("propensity estimation needs a ratio below 1"));
                            }
                            DenseTensor::filled(shape, logit(cfg.mcar_ratio))
                        }
                        ObservationModel::B => param_tensor(
                            cfg,
                            &format!("fig1/param/{}", tag(cfg, order)),
                            order,
                            seed,
                        )?,
                    };
                    let link = logistic();
                    let p = a.map(|x| link.value(x));
                    let key = format!("fig1/{m}/{}", tag(cfg, order));
                    let mask = sample_mask(&p, derive_seed(&key, seed, MASK_STREAM))?;
                    let (theta, alpha) = oracle_thresholds(&a)?;
                    Ok((
                        p,
                        mask,
                        cfg.tau.unwrap_or(theta),
                        cfg.gamma.unwrap_or(alpha),
                    ))
                })();
                let (p, mask, tau, gamma) = match inst {
                    Ok(v) => v,
                    Err(e) => {
                        out.fail(&cell, seed, "instance", &e);
                        continue;
                    }
                };
                let specs = match (square_set(p.shape()), UnfoldingSpec::mode(p.shape(), 0)) {
                    (Ok(sq), Ok(rect)) => [("square", sq), ("rect", rect)],
                    (Err(e), _) | (_, Err(e)) => {
                        out.fail(&cell, seed, "convex_pe", &e.into());
                        continue;
                    }
                };
                for (name, spec) in &specs {
                    for &mult in &cfg.threshold_multipliers {
                        let pe = convex_config(cfg, mult * tau, mult * gamma);
                        let variant = format!("{name}/x{mult}");
                        convex_row(out, &cell, seed, &variant, Some(mult), &mask, &p, &pe, spec);
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn completion_rows(
    out: &mut ExperimentOutput,
    cfg: &ExperimentConfig,
    cell: &str,
    seed: u64,
    inst: &ObservedInstance,
    truth: &DenseTensor,
    p: &DenseTensor,
    source: PropensitySource,
    target: usize,
    param: Option<f64>,
    propensity_error: Option<f64>,
    mut bound: impl FnMut(&CompletionResult) -> anyhow::Result<Option<f64>>,
) {
    for &method in &cfg.methods {
        let mut row = out.row(cell, seed, method.name());
        row.propensity_source = source.name().into();
        row.param = param;
        row.propensity_rel_error = propensity_error;
        row.target_rank = method_rank(method, truth.shape(), target).ok();
        let result = run_method(method, inst, p, target)
            .map_err(anyhow::Error::from)
            .and_then(|res| {
                let err = relative_error(&res.estimate, truth)?;
                let b = if method == Method::TenIps {
                    bound(&res)?
                } else {
                    None
                };
                Ok((res.wall_seconds, err, b))
            });
        match result {
            Ok((seconds, err, b)) => {
                row.completion_rel_error = Some(err);
                row.bound = b;
                out.record(row, Some(seconds));
            }
            Err(e) => out.metrics.push(row.failed(&format!("{e:#}"))),
        }
    }
}

fn fig2(cfg: &ExperimentConfig, out: &mut ExperimentOutput) {
    let target = cfg.target_ranks[0];
    for &order in &cfg.orders {
        for &ratio in &cfg.ratios {
            let cell = format!("N={order},ratio={ratio}");
            for &seed in &cfg.seeds {
                let inst = (|| -> anyhow::Result<_> {
                    let b = data_tensor(cfg, order, seed)?;
                    let p = model_a_propensity(b.shape(), ratio)?;
                    let key = format!("fig2/{},ratio={ratio}", tag(cfg, order));
                    let mask = sample_mask(&p, derive_seed(&key, seed, MASK_STREAM))?;
                    let inst = ObservedInstance::from_full(&b, mask)?;
                    Ok((b, p, inst))
                })();
                match inst {
                    Ok((b, p, inst)) => completion_rows(
                        out,
                        cfg,
                        &cell,
                        seed,
                        &inst,
                        &b,
                        &p,
                        PropensitySource::True,
                        target,
                        Some(ratio),
                        None,
                        |_| Ok(None),
                    ),
                    Err(e) => out.fail(&cell, seed, "instance", &e),
                }
            }
        }
    }
}

fn nonconvex_estimate(
    cfg: &ExperimentConfig,
    out: &mut ExperimentOutput,
    cell: &str,
    seed: u64,
    inst: &MnarInstance,
    key: &str,
) -> Option<DenseTensor> {
    let shape = inst.p.shape();
    let ranks = match RankProfile::uniform(cfg.rank, shape.order()) {
        Ok(r) => r,
        Err(e) => {
            out.fail(cell, seed, "nonconvex_pe", &e.into());
            return None;
        }
    };
    let mut pe = NonconvexPeConfig::new(cfg.step.unwrap_or_else(|| reference_step(shape)), ranks);
    pe.seed = derive_seed(key, seed, INIT_STREAM);
    pe.max_iterations = cfg.nonconvex_max_iterations;
    let mut row = out.row(cell, seed, "nonconvex_pe");
    match nonconvex_pe_with_backoff(inst.mask(), logistic(), &pe, cfg.max_halvings) {
        Ok((model, report)) => {
            let p_hat = model.evaluate();
            row.iterations = Some(report.iterations);
            match relative_error(&p_hat, &inst.p) {
                Ok(e) => row.propensity_rel_error = Some(e),
                Err(e) => row = row.failed(&e),
            }
            let seconds = report.wall_seconds;
            out.solves.push(SolveRecord {
                experiment: out.experiment().into(),
                cell: cell.into(),
                seed,
                variant: String::new(),
                tau: None,
                gamma: None,
                step: Some(report.step),
                report: SolveReport::Nonconvex(report),
            });
            out.record(row, Some(seconds));
            Some(p_hat)
        }
        Err(e) => {
            out.metrics.push(row.failed(&e));
            None
        }
    }
}

fn table2(cfg: &ExperimentConfig, out: &mut ExperimentOutput) {
    let target = cfg.target_ranks[0];
    for &order in &cfg.orders {
        let cell = format!("N={order}");
        for &seed in &cfg.seeds {
            let inst = match mnar_instance(cfg, order, seed) {
                Ok(i) => i,
                Err(e) => {
                    out.fail(&cell, seed, "instance", &e.into());
                    continue;
                }
            };
            let (theta, alpha) = match oracle_thresholds(&inst.a) {
                Ok(t) => t,
                Err(e) => {
                    out.fail(&cell, seed, "instance", &e.into());
                    continue;
                }
            };
            let (tau, gamma) = (cfg.tau.unwrap_or(theta), cfg.gamma.unwrap_or(alpha));

            // the bound needs the reweighted tensor under the true propensities
            let mut bound_ctx: Option<anyhow::Result<(BoundInputs, DenseTensor)>> = None;
            let bound_ctx_for = || -> anyhow::Result<(BoundInputs, DenseTensor)> {
                let x_bar = ips_reweight(&inst.observed, &inst.p)?;
                let eps = empirical_epsilon(&x_bar, &inst.b)?;
                let inputs = BoundInputs::from_tensors(&inst.b, &inst.a, logistic(), gamma, eps)?;
                Ok((inputs, x_bar))
            };

            for &source in &cfg.sources {
                let p_hat = match source {
                    PropensitySource::True => Some(inst.p.clone()),
                    PropensitySource::Convex => match square_set(inst.p.shape()) {
                        Ok(sq) => {
                            let pe = convex_config(cfg, tau, gamma);
                            convex_row(out, &cell, seed, "", None, inst.mask(), &inst.p, &pe, &sq)
                        }
                        Err(e) => {
                            out.fail(&cell, seed, "convex_pe", &e.into());
                            None
                        }
                    },
                    PropensitySource::Nonconvex => nonconvex_estimate(
                        cfg,
                        out,
                        &cell,
                        seed,
                        &inst,
                        &format!("table2/{}", tag(cfg, order)),
                    ),
                    PropensitySource::Mcar => {
                        let ratio = inst.mask().observation_ratio();
                        Some(DenseTensor::filled(inst.p.shape().clone(), ratio))
                    }
                };
                let Some(p_hat) = p_hat else { continue };
                let prop_err = match source {
                    PropensitySource::True => None,
                    _ => relative_error(&p_hat, &inst.p).ok(),
                };
                let bound = |_: &CompletionResult| -> anyhow::Result<Option<f64>> {
                    let ctx = bound_ctx.get_or_insert_with(bound_ctx_for);
                    let (inputs, x_bar) = ctx.as_ref().map_err(|e| anyhow!("{e:#}"))?;
                    let d = match source {
                        PropensitySource::True => 0.0,
                        _ => ips_reweight(&inst.observed, &p_hat)?
                            .sub(x_bar)?
                            .frobenius_norm(),
                    };
                    let ranks = RankProfile::uniform(target, order)?;
                    let b = completion_bound(inputs, &ranks, ReweightingError::Measured(d))?;
                    Ok(Some(b.relative))
                };
                completion_rows(
                    out,
                    cfg,
                    &cell,
                    seed,
                    &inst.observed,
                    &inst.b,
                    &p_hat,
                    source,
                    target,
                    None,
                    prop_err,
                    bound,
                );
            }
        }
    }
}

fn fig3(cfg: &ExperimentConfig, out: &mut ExperimentOutput) {
    for &model in &cfg.models {
        for &order in &cfg.orders {
            for &seed in &cfg.seeds {
                let m = match model {
                    ObservationModel::A => "A",
                    ObservationModel::B => "B",
                };
                let inst = (|| -> anyhow::Result<_> {
                    Ok(match model {
                        ObservationModel::B => {
                            let i = mnar_instance(cfg, order, seed)?;
                            (i.b, i.p, i.observed)
                        }
                        ObservationModel::A => {
                            let b = data_tensor(cfg, order, seed)?;
                            let p = model_a_propensity(b.shape(), cfg.mcar_ratio)?;
                            let key =
                                format!("fig3/A/{},ratio={}", tag(cfg, order), cfg.mcar_ratio);
                            let mask = sample_mask(&p, derive_seed(&key, seed, MASK_STREAM))?;
                            let inst = ObservedInstance::from_full(&b, mask)?;
                            (b, p, inst)
                        }
                    })
                })();
                let (b, p, inst) = match inst {
                    Ok(v) => v,
                    Err(e) => {
                        out.fail(&format!("model={m},N={order}"), seed, "instance", &e);
                        continue;
                    }
                };
                for &r in &cfg.target_ranks {
                    let cell = format!("model={m},N={order},r={r}");
                    completion_rows(
                        out,
                        cfg,
                        &cell,
                        seed,
                        &inst,
                        &b,
                        &p,
                        PropensitySource::True,
                        r,
                        Some(r as f64),
                        None,
                        |_| Ok(None),
                    );
                }
            }
        }
    }
}

fn video(cfg: &ExperimentConfig, out: &mut ExperimentOutput) {
    let target = cfg.target_ranks[0];
    let shape_name = cfg
        .video_shape
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x");
    let cell = format!("video={shape_name}");
    for &seed in &cfg.seeds {
        let inst = (|| -> anyhow::Result<_> {
            let shape = Shape::new(cfg.video_shape.clone())?;
            let (b, model) = video_like_instance(&shape, derive_seed(&cell, seed, DATA_STREAM))?;
            let p = model.evaluate();
            let a = model.parameter_tensor();
            let mask = sample_mask(&p, derive_seed(&cell, seed, MASK_STREAM))?;
            let inst = ObservedInstance::from_full(&b, mask)?;
            Ok((b, a, p, inst))
        })();
        let (b, a, p, inst) = match inst {
            Ok(v) => v,
            Err(e) => {
                out.fail(&cell, seed, "instance", &e);
                continue;
            }
        };
        for &source in &cfg.sources {
            let p_hat = match source {
                PropensitySource::True => Some(p.clone()),
                PropensitySource::Mcar => Some(DenseTensor::filled(
                    p.shape().clone(),
                    inst.mask().observation_ratio(),
                )),
                PropensitySource::Convex => {
                    let thresholds =
                        oracle_thresholds(&a).and_then(|t| Ok((t, square_set(a.shape())?)));
                    match thresholds {
                        Ok(((theta, alpha), sq)) => {
                            let pe = convex_config(
                                cfg,
                                cfg.tau.unwrap_or(theta),
                                cfg.gamma.unwrap_or(alpha),
                            );
                            convex_row(out, &cell, seed, "", None, inst.mask(), &p, &pe, &sq)
                        }
                        Err(e) => {
                            out.fail(&cell, seed, "convex_pe", &e.into());
                            None
                        }
                    }
                }
                PropensitySource::Nonconvex => {
                    let mi = MnarInstance {
                        b: b.clone(),
                        a: a.clone(),
                        p: p.clone(),
                        observed: inst.clone(),
                    };
                    nonconvex_estimate(cfg, out, &cell, seed, &mi, &cell)
                }
            };
            let Some(p_hat) = p_hat else { continue };
            let prop_err = (source != PropensitySource::True)
                .then(|| relative_error(&p_hat, &p).ok())
                .flatten();
            completion_rows(
                out,
                cfg,
                &cell,
                seed,
                &inst,
                &b,
                &p_hat,
                source,
                target,
                None,
                prop_err,
                |_| Ok(None),
            );
        }
    }
}

fn appd_tau_gamma(cfg: &ExperimentConfig, out: &mut ExperimentOutput) {
    for &order in &cfg.orders {
        let cell = format!("N={order}");
        for &seed in &cfg.seeds {
            let prep = mnar_instance(cfg, order, seed).and_then(|inst| {
                let t = oracle_thresholds(&inst.a)?;
                let sq = square_set(inst.p.shape())?;
                Ok((inst, t, sq))
            });
            let (inst, (theta, alpha), sq) = match prep {
                Ok(v) => v,
                Err(e) => {
                    out.fail(&cell, seed, "instance", &e.into());
                    continue;
                }
            };
            for &ratio in &cfg.tau_ratios {
                let pe = convex_config(cfg, ratio * theta, alpha);
                convex_row(
                    out,
                    &cell,
                    seed,
                    "tau",
                    Some(ratio),
                    inst.mask(),
                    &inst.p,
                    &pe,
                    &sq,
                );
            }
            for &ratio in &cfg.gamma_ratios {
                let pe = convex_config(cfg, theta, ratio * alpha);
                convex_row(
                    out,
                    &cell,
                    seed,
                    "gamma",
                    Some(ratio),
                    inst.mask(),
                    &inst.p,
                    &pe,
                    &sq,
                );
            }
        }
    }
}

fn appd_step(cfg: &ExperimentConfig, out: &mut ExperimentOutput) {
    for &order in &cfg.orders {
        let cell = format!("N={order}");
        for &seed in &cfg.seeds {
            let prep = mnar_instance(cfg, order, seed)
                .and_then(|inst| Ok((RankProfile::uniform(cfg.rank, order)?, inst)));
            let (ranks, inst) = match prep {
                Ok(v) => v,
                Err(e) => {
                    out.fail(&cell, seed, "instance", &e.into());
                    continue;
                }
            };
            let half = DenseTensor::filled(inst.p.shape().clone(), 0.5);
            let mut row = out.row(&cell, seed, "constant");
            match relative_error(&half, &inst.p) {
                Ok(e) => row.propensity_rel_error = Some(e),
                Err(e) => row = row.failed(&e),
            }
            out.record(row, None);

            let base = cfg.step.unwrap_or_else(|| reference_step(inst.p.shape()));
            for &mult in &cfg.step_multipliers {
                let mut pe = NonconvexPeConfig::new(mult * base, ranks.clone());
                pe.seed = derive_seed(&format!("appd-step/{}", tag(cfg, order)), seed, INIT_STREAM);
                pe.max_iterations = cfg.nonconvex_max_iterations;
                let variant = format!("x{mult}");
                let mut row = out.row(&cell, seed, "nonconvex_pe");
                row.variant = variant.clone();
                row.param = Some(pe.step);
                let (report, seconds) = match nonconvex_pe(inst.mask(), logistic(), &pe) {
                    Ok((model, report)) => {
                        row.iterations = Some(report.iterations);
                        match relative_error(&model.evaluate(), &inst.p) {
                            Ok(e) => row.propensity_rel_error = Some(e),
                            Err(e) => row = row.failed(&e),
                        }
                        let s = report.wall_seconds;
                        (SolveReport::Nonconvex(report), Some(s))
                    }
                    Err(e) => {
                        row = row.failed(&e);
                        (
                            SolveReport::Failed {
                                message: e.to_string(),
                            },
                            None,
                        )
                    }
                };
                out.solves.push(SolveRecord {
                    experiment: out.experiment().into(),
                    cell: cell.clone(),
                    seed,
                    variant,
                    tau: None,
                    gamma: None,
                    step: Some(pe.step),
                    report,
                });
                out.record(row, seconds);
            }
        }
    }
}
