//! Experiment settings: presets, the flat config file, and overrides.
//!
//! A config file holds one `key = value` pair per line. Values are JSON
//! (`size = 20`, `seeds = [0, 1, 2]`, `methods = ["tenips"]`); `#` starts a
//! comment line. Keys are the field names of [`ConfigFile`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use tenips::completion::Method;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Square vs rectangular propensity estimation across tensor orders.
    Fig1,
    /// Completion under uniform missingness across observation ratios.
    Fig2,
    /// Completion under entry-dependent missingness with true and estimated
    /// propensities.
    Table2,
    /// Target rank sweep.
    Fig3,
    /// Video-like order-3 instance.
    Video,
    /// ConvexPE sensitivity to its two thresholds.
    AppdTauGamma,
    /// NonconvexPE sensitivity to its step size.
    AppdStep,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Fig1,
        Preset::Fig2,
        Preset::Table2,
        Preset::Fig3,
        Preset::Video,
        Preset::AppdTauGamma,
        Preset::AppdStep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::Fig2 => "fig2",
            Preset::Table2 => "table2",
            Preset::Fig3 => "fig3",
            Preset::Video => "video",
            Preset::AppdTauGamma => "appd-tau-gamma",
            Preset::AppdStep => "appd-step",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let s = s.to_ascii_lowercase().replace('_', "-");
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
                anyhow!("unknown preset `{s}`; expected one of {}", names.join(", "))
            })
    }
}

/// Where completion rows take their propensities from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropensitySource {
    True,
    Convex,
    Nonconvex,
    /// Constant propensity equal to the observed fraction.
    Mcar,
}

impl PropensitySource {
    pub fn name(self) -> &'static str {
        match self {
            PropensitySource::True => "true",
            PropensitySource::Convex => "convex",
            PropensitySource::Nonconvex => "nonconvex",
            PropensitySource::Mcar => "mcar",
        }
    }
}

/// Observation model of a synthetic instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationModel {
    /// Constant propensity.
    A,
    /// Logistic of a noisy low-rank parameter tensor.
    B,
}

/// Fully resolved experiment settings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub seeds: Vec<u64>,
    /// Mode size `I` of the cubical synthetic tensors.
    pub size: usize,
    pub orders: Vec<usize>,
    /// True multilinear rank per mode.
    pub rank: usize,
    /// Target ranks of the completion methods; the rank sweep uses all of
    /// them, other presets the first.
    pub target_ranks: Vec<usize>,
    pub models: Vec<ObservationModel>,
    /// Observation ratios of the uniform-missingness sweep.
    pub ratios: Vec<f64>,
    /// Observation ratio of model A outside that sweep.
    pub mcar_ratio: f64,
    /// Relative noise on both the data and parameter tensors.
    pub noise: f64,
    pub core_std_data: f64,
    /// `None` scales the parameter core so that propensities keep the
    /// spread of the full-size instance: `100 (I/100)^{N/2}`.
    pub core_std_param: Option<f64>,
    pub methods: Vec<Method>,
    pub sources: Vec<PropensitySource>,
    /// ConvexPE thresholds; `None` uses the ground-truth values.
    pub tau: Option<f64>,
    pub gamma: Option<f64>,
    /// Threshold multipliers applied to both the nuclear and max-norm
    /// thresholds (1 is optimal, 2 overestimated).
    pub threshold_multipliers: Vec<f64>,
    pub tau_ratios: Vec<f64>,
    pub gamma_ratios: Vec<f64>,
    /// NonconvexPE step; `None` uses the reference step rescaled to the
    /// instance.
    pub step: Option<f64>,
    pub step_multipliers: Vec<f64>,
    pub convex_max_iterations: usize,
    pub nonconvex_max_iterations: usize,
    pub max_halvings: usize,
    /// Height, width and frames of the video instance.
    pub video_shape: Vec<usize>,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut cfg = Self {
            preset,
            seeds: (0..10).collect(),
            size: 30,
            orders: vec![4],
            rank: 5,
            target_ranks: vec![5],
            models: vec![ObservationModel::B],
            ratios: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            mcar_ratio: 0.5,
            noise: 0.1,
            core_std_data: 100.0,
            core_std_param: None,
            methods: Method::ALL.to_vec(),
            sources: vec![PropensitySource::True],
            tau: None,
            gamma: None,
            threshold_multipliers: vec![1.0],
            tau_ratios: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            gamma_ratios: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            step: None,
            step_multipliers: vec![0.05, 0.1, 0.2, 0.4],
            convex_max_iterations: 2000,
            nonconvex_max_iterations: 1000,
            max_halvings: 20,
            video_shape: vec![40, 48, 30],
        };
        match preset {
            Preset::Fig1 => {
                cfg.size = 8;
                cfg.orders = vec![3, 4, 5, 6];
                cfg.rank = 2;
                cfg.models = vec![ObservationModel::A, ObservationModel::B];
                cfg.mcar_ratio = 0.4;
                cfg.core_std_param = Some(10.0);
                cfg.threshold_multipliers = vec![1.0, 2.0];
                cfg.methods = Vec::new();
            }
            Preset::Fig2 => {
                cfg.models = vec![ObservationModel::A];
            }
            Preset::Table2 => {
                cfg.sources = vec![
                    PropensitySource::True,
                    PropensitySource::Convex,
                    PropensitySource::Nonconvex,
                ];
            }
            Preset::Fig3 => {
                cfg.models = vec![ObservationModel::A, ObservationModel::B];
                cfg.target_ranks = (3..=10).collect();
            }
            Preset::Video => {
                cfg.orders = vec![3];
                cfg.target_ranks = vec![10];
                cfg.sources = vec![
                    PropensitySource::Mcar,
                    PropensitySource::True,
                    PropensitySource::Convex,
                ];
            }
            Preset::AppdTauGamma => {
                cfg.methods = Vec::new();
            }
            Preset::AppdStep => {
                cfg.size = 20;
                cfg.orders = vec![3];
                cfg.rank = 2;
                cfg.core_std_param = Some(50.0);
                cfg.methods = Vec::new();
            }
        }
        cfg
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.seeds.is_empty() {
            bail!("seed list is empty");
        }
        if self.orders.is_empty() || self.orders.iter().any(|&n| n < 2) {
            bail!("orders must be nonempty and at least 2");
        }
        if self.rank == 0 || self.rank > self.size {
            bail!("rank {} must lie in 1..={}", self.rank, self.size);
        }
        if self.target_ranks.is_empty()
            || self.target_ranks.iter().any(|&r| r == 0 || r > self.size)
        {
            bail!("target ranks must be nonempty and lie in 1..={}", self.size);
        }
        if self.models.is_empty() {
            bail!("no observation model selected");
        }
        for &r in self.ratios.iter().chain([&self.mcar_ratio]) {
            if !(r > 0.0 && r <= 1.0) {
                bail!("observation ratio {r} outside (0, 1]");
            }
        }
        if !(self.noise >= 0.0) || !(self.core_std_data > 0.0) {
            bail!("noise must be nonnegative and the data core std positive");
        }
        if self.core_std_param.is_some_and(|s| !(s > 0.0)) {
            bail!("parameter core std must be positive");
        }
        let positive = |v: &[f64], what: &str| -> anyhow::Result<()> {
            if v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                bail!("{what} must be positive");
            }
            Ok(())
        };
        positive(&self.threshold_multipliers, "threshold multipliers")?;
        positive(&self.tau_ratios, "tau ratios")?;
        positive(&self.gamma_ratios, "gamma ratios")?;
        positive(&self.step_multipliers, "step multipliers")?;
        positive(
            &[self.tau, self.gamma]
                .into_iter()
                .flatten()
                .collect::<Vec<_>>(),
            "thresholds",
        )?;
        if self.step.is_some_and(|s| !(s >= 0.0 && s.is_finite())) {
            bail!("step must be nonnegative");
        }
        if self.video_shape.len() != 3 || self.video_shape.contains(&0) {
            bail!("video shape needs three positive sizes");
        }
        Ok(())
    }

    /// Overwrites every field set in `file`.
    pub fn apply(&mut self, file: &ConfigFile) {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = &file.$f { self.$f = v.clone(); } )* };
        }
        take!(
            seeds,
            size,
            orders,
            rank,
            target_ranks,
            models,
            ratios,
            mcar_ratio,
            noise,
            core_std_data,
            methods,
            sources,
            threshold_multipliers,
            tau_ratios,
            gamma_ratios,
            step_multipliers,
            convex_max_iterations,
            nonconvex_max_iterations,
            max_halvings,
            video_shape
        );
        if file.core_std_param.is_some() {
            self.core_std_param = file.core_std_param;
        }
        if file.tau.is_some() {
            self.tau = file.tau;
        }
        if file.gamma.is_some() {
            self.gamma = file.gamma;
        }
        if file.step.is_some() {
            self.step = file.step;
        }
    }

    /// Preset named in `file` (or `fallback`) with the file applied.
    pub fn resolve(file: &ConfigFile, fallback: Option<Preset>) -> anyhow::Result<Self> {
        let preset = match (&file.preset, fallback) {
            (_, Some(p)) => p,
            (Some(name), None) => name.parse()?,
            (None, None) => bail!("no preset given"),
        };
        let mut cfg = Self::preset(preset);
        cfg.apply(file);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Contents of a config file; every field is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub out_dir: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub size: Option<usize>,
    pub orders: Option<Vec<usize>>,
    pub rank: Option<usize>,
    pub target_ranks: Option<Vec<usize>>,
    pub models: Option<Vec<ObservationModel>>,
    pub ratios: Option<Vec<f64>>,
    pub mcar_ratio: Option<f64>,
    pub noise: Option<f64>,
    pub core_std_data: Option<f64>,
    pub core_std_param: Option<f64>,
    pub methods: Option<Vec<Method>>,
    pub sources: Option<Vec<PropensitySource>>,
    pub tau: Option<f64>,
    pub gamma: Option<f64>,
    pub threshold_multipliers: Option<Vec<f64>>,
    pub tau_ratios: Option<Vec<f64>>,
    pub gamma_ratios: Option<Vec<f64>>,
    pub step: Option<f64>,
    pub step_multipliers: Option<Vec<f64>>,
    pub convex_max_iterations: Option<usize>,
    pub nonconvex_max_iterations: Option<usize>,
    pub max_halvings: Option<usize>,
    pub video_shape: Option<Vec<usize>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut map = Map::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", lineno + 1))?;
            let key = key.trim();
            let value: Value = serde_json::from_str(value.trim())
                .with_context(|| format!("line {}: value of `{key}` is not JSON", lineno + 1))?;
            if map.insert(key.to_string(), value).is_some() {
                bail!("line {}: `{key}` set twice", lineno + 1);
            }
        }
        serde_json::from_value(Value::Object(map)).context("invalid config")
    }

    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_json_values() {
        let file = ConfigFile::parse(
            "# desk run\npreset = \"fig1\"\nseeds = [1, 2]\n\nsize = 6\nmethods = [\"tenips\", \"sq_unfold\"]\ntau = 0.5\n",
        )
        .unwrap();
        assert_eq!(file.seeds, Some(vec![1, 2]));
        assert_eq!(file.methods, Some(vec![Method::TenIps, Method::SqUnfold]));
        let cfg = ExperimentConfig::resolve(&file, None).unwrap();
        assert_eq!(cfg.preset, Preset::Fig1);
        assert_eq!(cfg.size, 6);
        assert_eq!(cfg.rank, 2);
        assert_eq!(cfg.tau, Some(0.5));
    }

    #[test]
    fn rejects_bad_files() {
        assert!(ConfigFile::parse("sizes = 3").is_err());
        assert!(ConfigFile::parse("size 3").is_err());
        assert!(ConfigFile::parse("size = three").is_err());
        assert!(ConfigFile::parse("size = 3\nsize = 4").is_err());
        let empty_seeds = ConfigFile::parse("seeds = []").unwrap();
        assert!(ExperimentConfig::resolve(&empty_seeds, Some(Preset::Fig2)).is_err());
        assert!(ExperimentConfig::resolve(&ConfigFile::default(), None).is_err());
    }

    #[test]
    fn presets_validate_and_round_trip_names() {
        for p in Preset::ALL {
            ExperimentConfig::preset(p).validate().unwrap();
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
            assert_eq!(
                ExperimentConfig::preset(p).seeds,
                (0..10).collect::<Vec<_>>()
            );
        }
        assert_eq!("APPD_STEP".parse::<Preset>().unwrap(), Preset::AppdStep);
        assert!("fig9".parse::<Preset>().is_err());
    }
}
