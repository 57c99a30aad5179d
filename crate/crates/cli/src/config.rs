//! Experiment specifications: defaults, JSON config merging and validation.

use std::path::PathBuf;

use geosmc::geodesic::GaussianPoint;
use geosmc::presets::{self, PriorKind};
use geosmc::smc::{SmcConfig, WeightMode};
use geosmc::{KernelChoice, ResamplingScheme};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    GeodesicEss,
    UniInfer,
    UniDrift,
    FnInfer,
    FnDrift,
    LvInfer,
    KernelRobustness,
    EssTrace,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 8] = [
        Self::GeodesicEss,
        Self::UniInfer,
        Self::UniDrift,
        Self::FnInfer,
        Self::FnDrift,
        Self::LvInfer,
        Self::KernelRobustness,
        Self::EssTrace,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::GeodesicEss => "geodesic-ess",
            Self::UniInfer => "uni-infer",
            Self::UniDrift => "uni-drift",
            Self::FnInfer => "fn-infer",
            Self::FnDrift => "fn-drift",
            Self::LvInfer => "lv-infer",
            Self::KernelRobustness => "kernel-robustness",
            Self::EssTrace => "ess-trace",
        }
    }

    pub fn parse(name: &str) -> CliResult<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == name)
            .ok_or_else(|| CliError::Config(format!("unknown experiment '{name}'")))
    }
}

impl std::fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which path between two Gaussians the geodesic experiment follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    Geodesic,
    StraightLine,
    TwoStage,
}

impl PathKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Geodesic => "geodesic",
            Self::StraightLine => "straight-line",
            Self::TwoStage => "two-stage",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub n_particles: usize,
    pub ess_fraction: f64,
    pub kernel: KernelChoice,
    #[serde(default = "one")]
    pub mcmc_steps: usize,
    #[serde(default)]
    pub weight_mode: WeightMode,
    #[serde(default)]
    pub resampling: ResamplingScheme,
    /// Number of distributions `p`.
    pub populations: usize,
    /// Second tempering exponent of the geometric schedule.
    #[serde(default = "default_phi2")]
    pub phi2: f64,
    /// Write every population's particles, not only the last.
    #[serde(default)]
    pub keep_history: bool,
}

fn one() -> usize {
    1
}

fn default_phi2() -> f64 {
    presets::UNI_PHI2
}

impl SamplerSettings {
    pub fn smc_config(&self, kernel: KernelChoice, seed: u64) -> SmcConfig {
        SmcConfig {
            n_particles: self.n_particles,
            ess_fraction: self.ess_fraction,
            kernel,
            mcmc_steps: self.mcmc_steps,
            weight_mode: self.weight_mode,
            resampling: self.resampling,
            seed,
            keep_history: self.keep_history,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    /// Seed of the simulated data set, fixed across replicates.
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default)]
    pub prior: PriorKind,
    #[serde(default)]
    pub path_start: Option<GaussianPoint>,
    #[serde(default)]
    pub path_end: Option<GaussianPoint>,
}

/// One drift-only run: step size and number of distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSetting {
    pub eps: f64,
    pub populations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub experiment: ExperimentName,
    pub seed: u64,
    pub replicates: usize,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
    pub sampler: SamplerSettings,
    pub model: ModelSettings,
    /// Kernels compared against each other (kernel-robustness, ess-trace).
    #[serde(default)]
    pub kernels: Vec<KernelChoice>,
    /// Numbers of distributions swept by kernel-robustness.
    #[serde(default)]
    pub population_counts: Vec<usize>,
    #[serde(default)]
    pub drift_settings: Vec<DriftSetting>,
    #[serde(default)]
    pub priors: Vec<PriorKind>,
    #[serde(default)]
    pub paths: Vec<PathKind>,
}

fn sampler(n: usize, t: f64, kernel: KernelChoice, p: usize, phi2: f64) -> SamplerSettings {
    SamplerSettings {
        n_particles: n,
        ess_fraction: t,
        kernel,
        mcmc_steps: 1,
        weight_mode: WeightMode::Simple,
        resampling: ResamplingScheme::Multinomial,
        populations: p,
        phi2,
        keep_history: false,
    }
}

fn model(data_seed: u64) -> ModelSettings {
    ModelSettings { data_seed, prior: PriorKind::Normal, path_start: None, path_end: None }
}

impl ExperimentSpec {
    /// The experiment's default settings.
    pub fn defaults(name: ExperimentName) -> Self {
        use ExperimentName::*;
        let base = |sampler: SamplerSettings, model: ModelSettings, replicates: usize| Self {
            experiment: name,
            seed: 1,
            replicates,
            out_dir: PathBuf::from("out").join(name.as_str()),
            threads: None,
            sampler,
            model,
            kernels: Vec::new(),
            population_counts: Vec::new(),
            drift_settings: Vec::new(),
            priors: Vec::new(),
            paths: Vec::new(),
        };
        let uni = || {
            let mut s = sampler(1500, 0.3, presets::mmala(presets::UNI_EPS), 45, presets::UNI_PHI2);
            s.keep_history = true;
            s
        };
        let fitz = || {
            let mut s = sampler(1000, 0.3, presets::mmala(presets::FN_EPS), 50, presets::FN_PHI2);
            s.keep_history = true;
            s
        };
        let lv = |n: usize| sampler(n, 0.3, presets::mmala(presets::LV_EPS), 30, presets::LV_PHI2);
        let lv_kernels = vec![presets::mmala(presets::LV_EPS), KernelChoice::AdaptiveMvn];
        match name {
            GeodesicEss => {
                let (a, b) = presets::geodesic_endpoints();
                let mut s = sampler(
                    500,
                    0.0,
                    KernelChoice::RwUniform { width: presets::PATH_KERNEL_WIDTH },
                    presets::PATH_POPULATIONS,
                    presets::UNI_PHI2,
                );
                s.weight_mode = WeightMode::FullKernel;
                let mut m = model(0);
                m.path_start = Some(a);
                m.path_end = Some(b);
                let mut spec = base(s, m, 10);
                spec.paths = vec![PathKind::Geodesic, PathKind::StraightLine, PathKind::TwoStage];
                spec
            }
            UniInfer => base(uni(), model(presets::UNI_DATA_SEED), 1),
            UniDrift => {
                let mut spec = base(uni(), model(presets::UNI_DATA_SEED), 1);
                for eps in [0.1, 0.4, 0.7] {
                    for populations in [10, 45, 500] {
                        spec.drift_settings.push(DriftSetting { eps, populations });
                    }
                }
                spec.drift_settings.push(DriftSetting { eps: 0.2, populations: 180 });
                spec
            }
            FnInfer => base(fitz(), model(presets::FN_DATA_SEED), 1),
            FnDrift => {
                let mut spec = base(fitz(), model(presets::FN_DATA_SEED), 1);
                spec.drift_settings = vec![DriftSetting { eps: presets::FN_EPS, populations: 50 }];
                spec.priors = vec![PriorKind::Uniform, PriorKind::Normal];
                spec
            }
            LvInfer => {
                let mut s = lv(1000);
                s.keep_history = true;
                base(s, model(presets::LV_DATA_SEED), 1)
            }
            KernelRobustness => {
                let mut spec = base(lv(1000), model(presets::LV_DATA_SEED), 27);
                spec.kernels = lv_kernels;
                spec.population_counts = vec![15, 30, 45];
                spec
            }
            EssTrace => {
                let mut spec = base(lv(1000), model(presets::LV_DATA_SEED), 1);
                spec.kernels = lv_kernels;
                spec
            }
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        use ExperimentName::*;
        let bad = |m: String| Err(CliError::Config(m));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        let min_p = if self.experiment == GeodesicEss { 2 } else { 3 };
        if self.sampler.populations < min_p {
            return bad(format!("need at least {min_p} populations"));
        }
        if !(self.sampler.phi2 > 0.0 && self.sampler.phi2 < 1.0) {
            return bad(format!("phi2 must lie in (0, 1), got {}", self.sampler.phi2));
        }
        self.sampler.smc_config(self.sampler.kernel, self.seed).validate()?;
        for k in &self.kernels {
            self.sampler.smc_config(*k, self.seed).validate()?;
        }
        match self.experiment {
            GeodesicEss => {
                if self.paths.is_empty() {
                    return bad("geodesic-ess needs at least one path".into());
                }
                let (Some(a), Some(b)) = (self.model.path_start, self.model.path_end) else {
                    return bad("geodesic-ess needs model.path_start and model.path_end".into());
                };
                GaussianPoint::new(a.mu, a.var)?;
                GaussianPoint::new(b.mu, b.var)?;
            }
            UniDrift | FnDrift => {
                if self.drift_settings.is_empty() {
                    return bad("drift experiments need drift_settings".into());
                }
                for d in &self.drift_settings {
                    if d.populations < 3 || !(d.eps >= 0.0 && d.eps.is_finite()) {
                        return bad(format!("invalid drift setting {d:?}"));
                    }
                }
                if !matches!(
                    self.sampler.kernel,
                    KernelChoice::MmalaEuler { .. } | KernelChoice::MmalaSimplified { .. } | KernelChoice::MmalaOzaki { .. }
                ) {
                    return bad("drift experiments need an mMALA kernel".into());
                }
            }
            KernelRobustness | EssTrace => {
                if self.kernels.is_empty() {
                    return bad(format!("{} needs at least one kernel", self.experiment));
                }
                if self.experiment == KernelRobustness && self.population_counts.iter().any(|p| *p < 3) {
                    return bad("population counts must be at least 3".into());
                }
                if self.experiment == KernelRobustness && self.population_counts.is_empty() {
                    return bad("kernel-robustness needs population_counts".into());
                }
            }
            UniInfer | FnInfer | LvInfer => {}
        }
        Ok(())
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).unwrap_or_else(|e| unreachable!("spec always serializes: {e}"))
    }

    pub fn from_value(v: Value) -> CliResult<Self> {
        let spec: Self = serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Recursively merge `patch` into `base`. Objects merge key by key; anything
/// else replaces. A tagged object whose `type` changes is replaced whole.
pub fn deep_merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            let retag = matches!((b.get("type"), p.get("type")), (Some(x), Some(y)) if x != y);
            if retag {
                *b = p;
                return;
            }
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub replicates: Option<usize>,
    pub threads: Option<usize>,
}

/// Defaults of the named experiment, overlaid with the config document and
/// then the command-line overrides.
pub fn resolve(config: Option<Value>, overrides: &Overrides) -> CliResult<ExperimentSpec> {
    let config = config.unwrap_or(Value::Object(Default::default()));
    if !config.is_object() {
        return Err(CliError::Config("config must be a JSON object".into()));
    }
    let name = match (&overrides.experiment, config.get("experiment")) {
        (Some(n), _) => n.clone(),
        (None, Some(Value::String(n))) => n.clone(),
        (None, Some(_)) => return Err(CliError::Config("'experiment' must be a string".into())),
        (None, None) => return Err(CliError::Config("no experiment given (use --experiment or the config)".into())),
    };
    let name = ExperimentName::parse(&name)?;
    let mut v = ExperimentSpec::defaults(name).to_value();
    deep_merge(&mut v, config);
    let obj = v.as_object_mut().unwrap_or_else(|| unreachable!());
    obj.insert("experiment".into(), Value::String(name.as_str().into()));
    if let Some(s) = overrides.seed {
        obj.insert("seed".into(), s.into());
    }
    if let Some(d) = &overrides.out_dir {
        obj.insert("out_dir".into(), Value::String(d.to_string_lossy().into_owned()));
    }
    if let Some(r) = overrides.replicates {
        obj.insert("replicates".into(), r.into());
    }
    if let Some(t) = overrides.threads {
        obj.insert("threads".into(), t.into());
    }
    ExperimentSpec::from_value(v)
}
