use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tenips::completion::{Method, ObservedInstance};
use tenips::decomposition::RankProfile;
use tenips::io::{load_mask, load_tensor, save_mask, save_tensor};
use tenips::propensity::{
    convex_pe, nonconvex_pe_with_backoff, ConvexPeConfig, NonconvexPeConfig, Parameter,
};
use tenips::synthesis::{logistic, model_a_propensity, sample_mask};
use tenips::tensor::{square_set, UnfoldingSpec};

use tenips_bench::bounds::{
    completion_bound, empirical_epsilon, propensity_mse_bound, BoundInputs, ReweightingError,
};
use tenips_bench::config::{ConfigFile, ExperimentConfig, Preset};
use tenips_bench::experiment::{
    derive_seed, mnar_instance, oracle_thresholds, reference_step, run_experiment, run_method,
    MASK_STREAM,
};
use tenips_bench::metrics::relative_error;

#[derive(Parser)]
#[command(
    name = "tenips",
    version,
    about = "Tensor completion under entry-dependent missingness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic instance (data, parameter, propensity and mask files).
    Gen(GenArgs),
    /// Estimate propensities from a mask file.
    Estimate(EstimateArgs),
    /// Complete a partially observed tensor with given propensities.
    Complete(CompleteArgs),
    /// Run a preset experiment grid.
    Experiment(ExperimentArgs),
    /// Evaluate the propensity and completion error bounds of an instance.
    Bound(BoundArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "table2")]
    preset: Preset,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mode size of the cubical tensor.
    #[arg(long)]
    scale: Option<usize>,
    /// Tensor order; defaults to the preset's first order.
    #[arg(long)]
    order: Option<usize>,
    /// Observe every entry with this constant probability instead.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    mask: PathBuf,
    /// `convex` or `nonconvex`.
    #[arg(long, default_value = "convex")]
    method: String,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    ranks: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// True propensities, for reporting the estimation error.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CompleteArgs {
    /// Observed data (zeros at missing entries).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    propensity: PathBuf,
    #[arg(long, default_value = "tenips")]
    method: Method,
    /// One rank for every mode, or one per mode for the Tucker methods.
    #[arg(long, value_delimiter = ',', required = true)]
    ranks: Vec<usize>,
    /// Full data tensor, for reporting the completion error.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long)]
    scale: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    /// Full data tensor.
    #[arg(long)]
    data: PathBuf,
    /// Parameter tensor of the propensities.
    #[arg(long)]
    param: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    ranks: Vec<usize>,
    /// Nuclear threshold; defaults to the parameter tensor's own value.
    #[arg(long)]
    tau: Option<f64>,
    /// Max-norm threshold; defaults to the parameter tensor's max norm.
    #[arg(long)]
    gamma: Option<f64>,
    /// Mask used to measure the concentration slack; without it the slack is 0.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Gen(a) => gen(a),
        Command::Estimate(a) => estimate(a),
        Command::Complete(a) => complete(a),
        Command::Experiment(a) => experiment(a),
        Command::Bound(a) => bound(a),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn gen(args: GenArgs) -> anyhow::Result<()> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let mut cfg = ExperimentConfig::resolve(&file, Some(args.preset))?;
    if let Some(s) = args.scale {
        cfg.size = s;
    }
    cfg.validate()?;
    let order = args.order.unwrap_or(cfg.orders[0]);
    let inst = mnar_instance(&cfg, order, args.seed)?;
    let (p, mask) = match args.ratio {
        Some(ratio) => {
            let p = model_a_propensity(inst.b.shape(), ratio)?;
            let mask = sample_mask(&p, derive_seed("gen/mcar", args.seed, MASK_STREAM))?;
            (p, mask)
        }
        None => (inst.p.clone(), inst.mask().clone()),
    };
    let observed = ObservedInstance::from_full(&inst.b, mask.clone())?;
    let dir = &args.out_dir;
    fs::create_dir_all(dir)?;
    save_tensor(dir.join("b.tnsr"), &inst.b)?;
    save_tensor(dir.join("b_obs.tnsr"), observed.b_obs())?;
    save_tensor(dir.join("p.tnsr"), &p)?;
    save_mask(dir.join("mask.mask"), &mask)?;
    let mut meta = json!({
        "shape": inst.b.dims(),
        "rank": cfg.rank,
        "seed": args.seed,
        "observation_ratio": mask.observation_ratio(),
    });
    if args.ratio.is_none() {
        save_tensor(dir.join("a.tnsr"), &inst.a)?;
        let (theta, alpha) = oracle_thresholds(&inst.a)?;
        meta["theta"] = json!(theta);
        meta["alpha"] = json!(alpha);
    }
    write_json(&dir.join("instance.json"), &meta)?;
    println!("{}", serde_json::to_string_pretty(&meta)?);
    Ok(())
}

fn estimate(args: EstimateArgs) -> anyhow::Result<()> {
    let mask = load_mask(&args.mask)?;
    let (model, report) = match args.method.as_str() {
        "convex" => {
            let (Some(tau), Some(gamma)) = (args.tau, args.gamma) else {
                bail!("convex estimation needs --tau and --gamma");
            };
            let (m, r) = convex_pe(&mask, logistic(), &ConvexPeConfig::new(tau, gamma))?;
            (m, serde_json::to_value(r)?)
        }
        "nonconvex" => {
            let ranks = rank_profile(&args.ranks, mask.shape().order())?;
            let step = args.step.unwrap_or_else(|| reference_step(mask.shape()));
            let mut cfg = NonconvexPeConfig::new(step, ranks);
            cfg.seed = args.seed;
            let (m, r) = nonconvex_pe_with_backoff(&mask, logistic(), &cfg, 20)?;
            (m, serde_json::to_value(r)?)
        }
        other => bail!("unknown estimator `{other}`; expected convex or nonconvex"),
    };
    let p_hat = model.evaluate();
    fs::create_dir_all(&args.out_dir)?;
    save_tensor(args.out_dir.join("p_hat.tnsr"), &p_hat)?;
    save_tensor(args.out_dir.join("a_hat.tnsr"), &model.parameter_tensor())?;
    let mut out = json!({ "method": args.method, "report": report });
    if let Some(path) = &args.truth {
        out["propensity_rel_error"] = json!(relative_error(&p_hat, &load_tensor(path)?)?);
    }
    if let Parameter::Tucker(d) = model.parameter() {
        out["ranks"] = json!(d.ranks().ranks());
    }
    write_json(&args.out_dir.join("estimate.json"), &out)?;
    if let Some(e) = out.get("propensity_rel_error") {
        println!("propensity relative error: {e}");
    }
    Ok(())
}

fn rank_profile(ranks: &[usize], order: usize) -> anyhow::Result<RankProfile> {
    Ok(match ranks {
        [] => bail!("--ranks is required"),
        [r] => RankProfile::uniform(*r, order)?,
        rs => RankProfile::new(rs.to_vec())?,
    })
}

fn complete(args: CompleteArgs) -> anyhow::Result<()> {
    let b_obs = load_tensor(&args.data)?;
    let mask = load_mask(&args.mask)?;
    let p = load_tensor(&args.propensity)?;
    let inst = ObservedInstance::new(b_obs, mask)?;
    let order = p.order();
    let result = match (args.method, args.ranks.as_slice()) {
        (Method::TenIps | Method::HosvdW, rs) if rs.len() > 1 => {
            let ranks = rank_profile(rs, order)?;
            match args.method {
                Method::TenIps => tenips::completion::tenips(&inst, &p, &ranks)?,
                _ => tenips::completion::hosvd_w_complete(&inst, &p, &ranks)?,
            }
        }
        (Method::SqUnfold, [r]) => tenips::completion::sq_unfold_complete(&inst, &p, *r)?,
        (Method::RectUnfold, [r]) => tenips::completion::rect_unfold_complete(&inst, &p, *r, 0)?,
        (_, [r]) => run_method(args.method, &inst, &p, *r)?,
        (m, _) => bail!("{m} takes a single rank"),
    };
    fs::create_dir_all(&args.out_dir)?;
    save_tensor(args.out_dir.join("estimate.tnsr"), &result.estimate)?;
    let mut out = json!({
        "method": result.method,
        "ranks": args.ranks,
        "clamped_propensities": result.clamped,
        "seconds": result.wall_seconds,
    });
    if let Some(path) = &args.truth {
        let e = relative_error(&result.estimate, &load_tensor(path)?)?;
        out["completion_rel_error"] = json!(e);
        println!("completion relative error: {e}");
    }
    write_json(&args.out_dir.join("completion.json"), &out)?;
    Ok(())
}

fn experiment(args: ExperimentArgs) -> anyhow::Result<()> {
    let mut file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if !args.seed.is_empty() {
        file.seeds = Some(args.seed.clone());
    }
    if !args.method.is_empty() {
        file.methods = Some(args.method.clone());
    }
    file.size = args.scale.or(file.size);
    file.tau = args.tau.or(file.tau);
    file.gamma = args.gamma.or(file.gamma);
    file.step = args.step.or(file.step);
    let cfg = ExperimentConfig::resolve(&file, args.preset)?;
    let dir = args
        .out_dir
        .or_else(|| file.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results").join(cfg.preset.name()));
    let out = run_experiment(&cfg)?;
    out.write(&dir)?;
    let failed = out.metrics.iter().filter(|r| !r.is_ok()).count();
    for s in out.summary() {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        println!(
            "{:<22} {:<13} {:<12} {:<9} prop {:>8} compl {:>8} bound {:>10}  ({} ok, {} failed)",
            s.cell,
            s.method,
            s.variant,
            s.propensity_source,
            fmt(s.propensity_rel_error),
            fmt(s.completion_rel_error),
            fmt(s.bound),
            s.seeds_ok,
            s.seeds_failed
        );
    }
    println!(
        "{} rows ({failed} failed) written to {}",
        out.metrics.len(),
        dir.display()
    );
    Ok(())
}

fn bound(args: BoundArgs) -> anyhow::Result<()> {
    let b = load_tensor(&args.data)?;
    let a = load_tensor(&args.param)?;
    let (theta, alpha) = oracle_thresholds(&a)?;
    let tau = args.tau.unwrap_or(theta);
    let gamma = args.gamma.unwrap_or(alpha);
    let link = logistic();
    let epsilon = match &args.mask {
        Some(path) => {
            let mask = load_mask(path)?;
            let inst = ObservedInstance::from_full(&b, mask)?;
            let p = a.map(|x| link.value(x));
            empirical_epsilon(&tenips::completion::ips_reweight(&inst, &p)?, &b)?
        }
        None => 0.0,
    };
    let inputs = BoundInputs::from_tensors(&b, &a, Arc::clone(&link), gamma, epsilon)?;
    let ranks = rank_profile(&args.ranks, b.order())?;
    let sq = square_set(b.shape())?;
    let mut propensity_bounds = vec![json!({
        "unfolding": sq.to_string(),
        "square": true,
        "bound": propensity_mse_bound(inputs.l_gamma, tau, &sq),
    })];
    for n in 0..b.order() {
        let spec = UnfoldingSpec::mode(b.shape(), n)?;
        propensity_bounds.push(json!({
            "unfolding": spec.to_string(),
            "square": false,
            "bound": propensity_mse_bound(inputs.l_gamma, tau, &spec),
        }));
    }
    let completion = completion_bound(
        &inputs,
        &ranks,
        ReweightingError::FromThresholds { tau, gamma },
    )?;
    let exact = completion_bound(&inputs, &ranks, ReweightingError::Measured(0.0))?;
    let out = json!({
        "tau": tau,
        "gamma": gamma,
        "inputs": inputs,
        "kappa": inputs.kappa(&ranks),
        "propensity_mse_bound": propensity_bounds,
        "completion_bound_estimated_propensities": completion,
        "completion_bound_true_propensities": exact,
    });
    let text = serde_json::to_string_pretty(&out)?;
    println!("{text}");
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("bound.json"), text + "\n")?;
    }
    Ok(())
}
