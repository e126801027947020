//! TOML run configuration. Every section is optional and unknown keys are
//! rejected. Command-line flags are applied on top with [`Overrides`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use tkjump::spot_vol::builtin_kernels;
use tkjump::{AlgoOptions, F0ThresholdMode, HestonMertonConfig, JumpLaw, Kernel, Method, Normalization, RightKernel};

use crate::error::{Result, ToolError};
use crate::harness::{self, BiasVarianceSpec, Scenario, StudySpec};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub simulate: SimulateSection,
    pub detect: DetectSection,
    pub spotvol: SpotvolSection,
    pub study: StudySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kappa: f64,
    pub theta: f64,
    pub xi: f64,
    pub rho: f64,
    pub drift_a: f64,
    pub drift_b: f64,
    pub lambda: f64,
    pub jump_sd: f64,
    pub x0: f64,
    pub v0: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kappa: 5.0,
            theta: 0.04,
            xi: 0.5,
            rho: 0.0,
            drift_a: 0.05,
            drift_b: -0.5,
            lambda: 100.0,
            jump_sd: 0.03,
            x0: 1.0,
            v0: 0.04,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub days: u32,
    pub obs_per_hour: u32,
    /// Number of increments; overrides `days` when set.
    pub n: Option<usize>,
    pub substeps: usize,
    pub seed: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { days: 21, obs_per_hour: harness::OBS_PER_HOUR, n: None, substeps: harness::SUBSTEPS, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectSection {
    pub method: String,
    pub max_iter: usize,
    pub kernel: String,
    /// Spot-variance bandwidth of the local methods; `√h` when absent.
    pub delta: Option<f64>,
    /// `detection` or `density`.
    pub f0_threshold: String,
    /// Right-sided kernel of the jump-density estimate: `exponential` or `half-gaussian`.
    pub f0_kernel: String,
}

impl Default for DetectSection {
    fn default() -> Self {
        DetectSection {
            method: "n2".into(),
            max_iter: 4,
            kernel: "double-exponential".into(),
            delta: None,
            f0_threshold: "detection".into(),
            f0_kernel: harness::F0_KERNEL.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpotvolSection {
    pub kernel: String,
    /// Fixed bandwidth. Without it `plug_in` decides between the plug-in
    /// bandwidth and `√h`.
    pub delta: Option<f64>,
    pub plug_in: bool,
    pub normalized: bool,
    /// Drop increments flagged by the detection method.
    pub truncate: bool,
}

impl Default for SpotvolSection {
    fn default() -> Self {
        SpotvolSection { kernel: "double-exponential".into(), delta: None, plug_in: false, normalized: true, truncate: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub replicates: Option<usize>,
    pub full: bool,
    pub base_seed: u64,
    pub methods: Vec<String>,
    pub substeps: usize,
    pub max_iter: usize,
    pub f0_kernel: String,
    /// Replaces the study's default scenario grid.
    pub scenarios: Option<Vec<Scenario>>,
    /// Horizon of the bias-variance check.
    pub bias_variance_days: u32,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            replicates: None,
            full: false,
            base_seed: 1,
            methods: Method::ALL.iter().map(|m| m.name().to_string()).collect(),
            substeps: harness::SUBSTEPS,
            max_iter: 4,
            f0_kernel: harness::F0_KERNEL.into(),
            scenarios: None,
            bias_variance_days: 63,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub full: bool,
    pub method: Option<String>,
    pub max_iter: Option<usize>,
    pub days: Option<u32>,
    pub n: Option<usize>,
    pub delta: Option<f64>,
    pub kernel: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Table1,
    Table2,
    Table3,
    Sse,
    BiasVariance,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Table1 => "table1",
            StudyKind::Table2 => "table2",
            StudyKind::Table3 => "table3",
            StudyKind::Sse => "sse",
            StudyKind::BiasVariance => "bias-variance",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [StudyKind::Table1, StudyKind::Table2, StudyKind::Table3, StudyKind::Sse, StudyKind::BiasVariance]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

fn cfg_err(msg: impl Into<String>) -> ToolError {
    ToolError::Config(msg.into())
}

pub fn right_kernel_by_name(name: &str) -> Result<RightKernel> {
    [RightKernel::Exponential, RightKernel::HalfGaussian]
        .into_iter()
        .find(|k| k.name() == name)
        .ok_or_else(|| cfg_err(format!("unknown jump-density kernel `{name}`")))
}

pub fn kernel_by_name(name: &str) -> Result<Kernel> {
    builtin_kernels()
        .into_iter()
        .find(|k| k.name() == name)
        .ok_or_else(|| cfg_err(format!("unknown kernel `{name}`")))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ToolError::Usage(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))
    }

    /// Load `path` if given, otherwise start from the defaults, then apply
    /// the overrides and validate.
    pub fn resolve(path: Option<&Path>, o: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(o);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.simulate.seed = s;
            self.study.base_seed = s;
        }
        if let Some(r) = o.replicates {
            self.study.replicates = Some(r);
        }
        if o.full {
            self.study.full = true;
            if o.replicates.is_none() {
                self.study.replicates = None;
            }
        }
        if let Some(m) = &o.method {
            self.detect.method = m.clone();
        }
        if let Some(k) = o.max_iter {
            self.detect.max_iter = k;
            self.study.max_iter = k;
        }
        if let Some(d) = o.days {
            self.simulate.days = d;
            self.simulate.n = None;
        }
        if o.n.is_some() {
            self.simulate.n = o.n;
        }
        if o.delta.is_some() {
            self.spotvol.delta = o.delta;
        }
        if let Some(k) = &o.kernel {
            self.spotvol.kernel = k.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.heston(self.simulate.seed)?;
        let s = &self.simulate;
        if s.obs_per_hour == 0 || !s.obs_per_hour.is_multiple_of(2) {
            return Err(cfg_err("simulate.obs_per_hour must be even and positive"));
        }
        if self.n() == 0 {
            return Err(cfg_err("simulate: n must be at least 1"));
        }
        if s.substeps == 0 {
            return Err(cfg_err("simulate.substeps must be at least 1"));
        }
        self.detect_method()?;
        self.algo_options()?;
        kernel_by_name(&self.spotvol.kernel)?;
        if let Some(d) = self.spotvol.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(cfg_err("spotvol.delta must be positive"));
            }
        }
        let st = &self.study;
        if st.replicates == Some(0) {
            return Err(cfg_err("study.replicates must be at least 1"));
        }
        if st.substeps == 0 || st.max_iter == 0 {
            return Err(cfg_err("study.substeps and study.max_iter must be at least 1"));
        }
        right_kernel_by_name(&st.f0_kernel)?;
        for m in &st.methods {
            Method::parse(m).ok_or_else(|| cfg_err(format!("study.methods: unknown method `{m}`")))?;
        }
        if let Some(sc) = &st.scenarios {
            sc.iter().try_for_each(Scenario::validate)?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        let s = &self.simulate;
        s.n.unwrap_or(s.days as usize * s.obs_per_hour as usize * 13 / 2)
    }

    pub fn h(&self) -> f64 {
        harness::step_size(self.simulate.obs_per_hour)
    }

    pub fn heston(&self, seed: u64) -> Result<HestonMertonConfig> {
        let m = &self.model;
        let cfg = HestonMertonConfig {
            kappa: m.kappa,
            theta: m.theta,
            xi: m.xi,
            rho: m.rho,
            drift: tkjump::simulate::AffineDrift { a: m.drift_a, b: m.drift_b },
            lambda: m.lambda,
            jump_law: JumpLaw::normal(m.jump_sd).map_err(|e| cfg_err(format!("model: {e}")))?,
            x0: m.x0,
            v0: m.v0,
            seed,
        };
        cfg.validate().map_err(|e| cfg_err(format!("model: {e}")))?;
        Ok(cfg)
    }

    pub fn detect_method(&self) -> Result<Method> {
        match Method::parse(&self.detect.method) {
            Some(Method::Oracle) => Err(cfg_err("detect.method: the oracle is only available in studies")),
            Some(m) => Ok(m),
            None => Err(cfg_err(format!("detect.method: unknown method `{}`", self.detect.method))),
        }
    }

    pub fn algo_options(&self) -> Result<AlgoOptions> {
        let d = &self.detect;
        if d.max_iter == 0 {
            return Err(cfg_err("detect.max_iter must be at least 1"));
        }
        if let Some(delta) = d.delta {
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(cfg_err("detect.delta must be positive"));
            }
        }
        let f0_threshold = match d.f0_threshold.as_str() {
            "detection" => F0ThresholdMode::Detection,
            "density" => F0ThresholdMode::Density,
            other => return Err(cfg_err(format!("detect.f0_threshold: expected `detection` or `density`, got `{other}`"))),
        };
        Ok(AlgoOptions {
            max_iter: d.max_iter,
            kernel: kernel_by_name(&d.kernel)?,
            delta: d.delta,
            f0_kernel: right_kernel_by_name(&d.f0_kernel)?,
            f0_threshold,
        })
    }

    pub fn normalization(&self) -> Normalization {
        if self.spotvol.normalized {
            Normalization::Normalized
        } else {
            Normalization::Unnormalized
        }
    }

    pub fn replicates(&self, kind: StudyKind) -> usize {
        if let Some(r) = self.study.replicates {
            return r;
        }
        match kind {
            StudyKind::Sse => harness::SSE_PATHS,
            StudyKind::BiasVariance => harness::BIAS_VARIANCE_REPLICATES,
            _ if self.study.full => harness::FULL_REPLICATES,
            _ => harness::DESK_REPLICATES,
        }
    }

    pub fn study_spec(&self, kind: StudyKind) -> StudySpec {
        let scenarios = self.study.scenarios.clone().unwrap_or_else(|| match kind {
            StudyKind::Table3 => harness::table3_scenarios(),
            StudyKind::Sse => harness::sse_scenarios(),
            _ => harness::table1_scenarios(),
        });
        StudySpec {
            scenarios,
            replicates: self.replicates(kind),
            base_seed: self.study.base_seed,
            methods: self.study.methods.clone(),
            substeps: self.study.substeps,
            max_iter: self.study.max_iter,
            f0_kernel: self.study.f0_kernel.clone(),
        }
    }

    pub fn bias_variance_spec(&self) -> BiasVarianceSpec {
        let mut spec = BiasVarianceSpec::reference(self.replicates(StudyKind::BiasVariance), self.study.base_seed);
        spec.days = self.study.bias_variance_days;
        spec.substeps = self.study.substeps;
        spec
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }
}
