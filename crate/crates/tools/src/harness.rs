//! Replicate studies over a grid of simulation scenarios.
//!
//! Replicate `r` of every scenario is simulated with seed `base_seed + r`,
//! so scenarios share random numbers. Replicates run in parallel; results
//! are collected in replicate order and reduced with pairwise sums, which
//! makes every report independent of the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use tkjump::math::pairwise_sum;
use tkjump::{
    algo_local, oracle_threshold, sample_loss, spot_series, threshold_first_order, AlgoOptions, Classification,
    HestonMertonConfig, JumpLaw, Method, Normalization, Order, SamplePath, ThresholdVector,
};

use crate::error::{Context, Result, ToolError};

pub const TRADING_DAYS: f64 = 252.0;
pub const HOURS_PER_DAY: f64 = 6.5;
pub const OBS_PER_HOUR: u32 = 12;
pub const SUBSTEPS: usize = 16;
pub const DESK_REPLICATES: usize = 200;
pub const FULL_REPLICATES: usize = 1000;
pub const SSE_PATHS: usize = 100;
pub const BIAS_VARIANCE_REPLICATES: usize = 500;
/// Right-sided kernel for the jump density at the origin.
pub const F0_KERNEL: &str = "exponential";

/// Observation spacing in years.
pub fn step_size(obs_per_hour: u32) -> f64 {
    1.0 / (TRADING_DAYS * HOURS_PER_DAY * obs_per_hour as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub days: u32,
    #[serde(default = "default_obs_per_hour")]
    pub obs_per_hour: u32,
    pub rho: f64,
    pub lambda: f64,
    pub jump_sd: f64,
}

fn default_obs_per_hour() -> u32 {
    OBS_PER_HOUR
}

impl Scenario {
    pub fn new(days: u32, rho: f64, lambda: f64, jump_sd: f64) -> Self {
        Scenario { days, obs_per_hour: OBS_PER_HOUR, rho, lambda, jump_sd }
    }

    pub fn validate(&self) -> Result<()> {
        if self.days == 0 || self.obs_per_hour == 0 || !self.obs_per_hour.is_multiple_of(2) {
            return Err(ToolError::Config(format!(
                "scenario needs days ≥ 1 and an even positive obs_per_hour, got {} and {}",
                self.days, self.obs_per_hour
            )));
        }
        self.config(0).map(|_| ())
    }

    pub fn n(&self) -> usize {
        self.days as usize * self.obs_per_hour as usize * 13 / 2
    }

    pub fn h(&self) -> f64 {
        step_size(self.obs_per_hour)
    }

    pub fn config(&self, seed: u64) -> Result<HestonMertonConfig> {
        HestonMertonConfig::reference(self.lambda, self.jump_sd, self.rho, seed)
            .map_err(|e| ToolError::Config(format!("{}: {e}", self.label())))
    }

    pub fn simulate(&self, seed: u64, substeps: usize) -> Result<SamplePath> {
        tkjump::simulate_path(&self.config(seed)?, self.n(), self.h(), substeps)
            .context(format!("{} seed {seed}", self.label()))
    }

    /// True jump density at the origin.
    pub fn f0(&self) -> f64 {
        1.0 / (self.jump_sd * (2.0 * std::f64::consts::PI).sqrt())
    }

    pub fn label(&self) -> String {
        format!("{}d rho={} lambda={} sd={}", self.days, self.rho, self.lambda, self.jump_sd)
    }
}

/// Intensity and jump size pairs of the reference study.
pub const JUMP_REGIMES: [(f64, f64); 4] = [(50.0, 0.03), (100.0, 0.03), (200.0, 0.03), (1000.0, 0.01)];

/// Every horizon, leverage and jump regime of the reference study.
pub fn table1_scenarios() -> Vec<Scenario> {
    let mut out = Vec::new();
    for days in [21, 63, 126] {
        for &(lambda, sd) in &JUMP_REGIMES {
            for rho in [0.0, -0.5] {
                out.push(Scenario::new(days, rho, lambda, sd));
            }
        }
    }
    out
}

/// Rows of the jump-density table.
pub fn table3_scenarios() -> Vec<Scenario> {
    let mut out = Vec::new();
    for &(lambda, sd) in &JUMP_REGIMES[1..] {
        for (days, rho) in [(21, 0.0), (21, -0.5), (63, 0.0), (63, -0.5), (126, -0.5)] {
            out.push(Scenario::new(days, rho, lambda, sd));
        }
    }
    out
}

/// Six-month paths with leverage at the two high-intensity regimes.
pub fn sse_scenarios() -> Vec<Scenario> {
    vec![Scenario::new(126, -0.5, 200.0, 0.03), Scenario::new(126, -0.5, 1000.0, 0.01)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub scenarios: Vec<Scenario>,
    pub replicates: usize,
    pub base_seed: u64,
    pub methods: Vec<String>,
    pub substeps: usize,
    pub max_iter: usize,
    pub f0_kernel: String,
}

impl StudySpec {
    pub fn new(scenarios: Vec<Scenario>, replicates: usize, base_seed: u64) -> Self {
        StudySpec {
            scenarios,
            replicates,
            base_seed,
            methods: Method::ALL.iter().map(|m| m.name().to_string()).collect(),
            substeps: SUBSTEPS,
            max_iter: 4,
            f0_kernel: F0_KERNEL.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(ToolError::Config("replicates must be at least 1".into()));
        }
        if self.scenarios.is_empty() {
            return Err(ToolError::Config("no scenarios".into()));
        }
        if self.substeps == 0 || self.max_iter == 0 {
            return Err(ToolError::Config("substeps and max_iter must be at least 1".into()));
        }
        self.parsed_methods()?;
        crate::config::right_kernel_by_name(&self.f0_kernel)?;
        self.scenarios.iter().try_for_each(Scenario::validate)
    }

    pub fn parsed_methods(&self) -> Result<Vec<Method>> {
        self.methods
            .iter()
            .map(|s| Method::parse(s).ok_or_else(|| ToolError::Config(format!("unknown method `{s}`"))))
            .collect()
    }

    pub fn seed(&self, replicate: usize) -> u64 {
        self.base_seed.wrapping_add(replicate as u64)
    }

    fn options(&self) -> Result<AlgoOptions> {
        let f0_kernel = crate::config::right_kernel_by_name(&self.f0_kernel)?;
        Ok(AlgoOptions { max_iter: self.max_iter, f0_kernel, ..AlgoOptions::default() })
    }

    /// Run `f` on every replicate of `scenario` in parallel, in replicate order.
    fn replicate<T: Send>(
        &self,
        scenario: &Scenario,
        f: impl Fn(usize, &SamplePath) -> Result<T> + Sync,
    ) -> Result<Vec<T>> {
        (0..self.replicates)
            .into_par_iter()
            .map(|r| f(r, &scenario.simulate(self.seed(r), self.substeps)?))
            .collect()
    }
}

/// Mean, sample standard deviation and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
}

pub fn summarize(values: &[f64]) -> Summary {
    let m = values.len() as f64;
    let mean = pairwise_sum(values) / m;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let sd = if values.len() > 1 { (pairwise_sum(&dev) / (m - 1.0)).sqrt() } else { 0.0 };
    Summary { mean, sd, se: sd / m.sqrt() }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn law(scenario: &Scenario) -> Result<JumpLaw> {
    JumpLaw::normal(scenario.jump_sd).context(scenario.label())
}

fn latent_counts(path: &SamplePath) -> &[u32] {
    &path.latent.as_ref().expect("simulated paths carry latent truth").jump_count
}

fn loss_of(cls: &Classification, path: &SamplePath) -> Result<f64> {
    Ok(sample_loss(cls, latent_counts(path)).context("sample loss")? as f64)
}

/// Classification of the oracle thresholds `B*2` at the true parameters.
fn oracle_classification(path: &SamplePath, law: &JumpLaw) -> Result<(ThresholdVector, Classification)> {
    let b = oracle_threshold(path, Order::Second, law).context("oracle threshold")?;
    let cls = tkjump::classify(path, &b).context("oracle classification")?;
    Ok((b, cls))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub scenario: Scenario,
    pub methods: Vec<String>,
    pub losses: Vec<Summary>,
}

impl LossRow {
    pub fn get(&self, method: &str) -> Option<&Summary> {
        self.methods.iter().position(|m| m == method).map(|i| &self.losses[i])
    }
}

/// Mean misclassification count per scenario and method.
pub fn run_misclassification_study(spec: &StudySpec) -> Result<Vec<LossRow>> {
    spec.validate()?;
    let methods = spec.parsed_methods()?;
    let opts = spec.options()?;
    spec.scenarios
        .iter()
        .map(|sc| {
            let law = law(sc)?;
            let per_rep = spec.replicate(sc, |_, path| {
                methods
                    .iter()
                    .map(|&m| match m {
                        Method::Oracle => loss_of(&oracle_classification(path, &law)?.1, path),
                        _ => {
                            let out = m.run(path, &opts).context(format!("{} {}", sc.label(), m.name()))?;
                            loss_of(&out.report.classification, path)
                        }
                    })
                    .collect::<Result<Vec<f64>>>()
            })?;
            let losses = (0..methods.len())
                .map(|j| summarize(&per_rep.iter().map(|r| r[j]).collect::<Vec<_>>()))
                .collect();
            Ok(LossRow { scenario: *sc, methods: methods.iter().map(|m| m.name().to_string()).collect(), losses })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub scenario: Scenario,
    /// Loss after each iteration; an early stop carries the final
    /// classification forward.
    pub iterations: Vec<Summary>,
}

/// Flags after iteration `k` (1-based) of a local run, carrying the final
/// classification forward once the run has stopped.
fn flags_after(out: &tkjump::AlgorithmOutput, k: usize) -> &[bool] {
    if k <= out.trace.iterations_used {
        &out.trace.records[k - 1].flags
    } else {
        &out.report.classification.flags
    }
}

/// Loss after each of the first `max_iter` passes of the second-order local algorithm.
pub fn run_convergence_study(spec: &StudySpec) -> Result<Vec<ConvergenceRow>> {
    spec.validate()?;
    let opts = spec.options()?;
    spec.scenarios
        .iter()
        .map(|sc| {
            let per_rep = spec.replicate(sc, |_, path| {
                let out = algo_local(path, Order::Second, &opts).context(sc.label())?;
                (1..=spec.max_iter)
                    .map(|k| loss_of(&Classification::from_flags(flags_after(&out, k).to_vec()), path))
                    .collect::<Result<Vec<f64>>>()
            })?;
            let iterations = (0..spec.max_iter)
                .map(|k| summarize(&per_rep.iter().map(|r| r[k]).collect::<Vec<_>>()))
                .collect();
            Ok(ConvergenceRow { scenario: *sc, iterations })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F0Row {
    pub scenario: Scenario,
    pub f0: f64,
    pub mean: f64,
    pub sd: f64,
    pub rmse: f64,
    /// Replicates with too few exceedances to estimate the density.
    pub insufficient: usize,
}

/// Final `f̂(0)` of the second-order local algorithm against the true density.
pub fn run_f0_study(spec: &StudySpec) -> Result<Vec<F0Row>> {
    spec.validate()?;
    let opts = spec.options()?;
    spec.scenarios
        .iter()
        .map(|sc| {
            let est = spec.replicate(sc, |_, path| {
                let out = algo_local(path, Order::Second, &opts).context(sc.label())?;
                Ok((out.report.f0.f0_hat, out.report.f0.insufficient_data))
            })?;
            let values: Vec<f64> = est.iter().map(|e| e.0).collect();
            let s = summarize(&values);
            let f0 = sc.f0();
            let sq: Vec<f64> = values.iter().map(|v| (v - f0) * (v - f0)).collect();
            Ok(F0Row {
                scenario: *sc,
                f0,
                mean: s.mean,
                sd: s.sd,
                rmse: (pairwise_sum(&sq) / values.len() as f64).sqrt(),
                insufficient: est.iter().filter(|e| e.1).count(),
            })
        })
        .collect()
}

/// Unnormalised double-exponential spot variance at bandwidth `√h` using
/// the increments not flagged as jumps.
fn spot_from_flags(path: &SamplePath, flags: &[bool]) -> Result<Vec<f64>> {
    let b: Vec<f64> = flags.iter().map(|&f| if f { 0.0 } else { f64::INFINITY }).collect();
    let b = ThresholdVector::new(b).context("spot thresholds")?;
    let kernel = tkjump::Kernel::double_exponential();
    spot_series(path, path.h.sqrt(), &kernel, &b, Normalization::Unnormalized).context("spot variance")
}

/// `Σ_{i=1}^{n} (σ̂²_{t_i} − V_{t_i})²`.
fn sse(spot: &[f64], variance: &[f64]) -> f64 {
    let sq: Vec<f64> = spot[1..].iter().zip(&variance[1..]).map(|(s, v)| (s - v) * (s - v)).collect();
    pairwise_sum(&sq)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SseRow {
    pub scenario: Scenario,
    pub paths: usize,
    pub median_iter1: f64,
    pub median_iter4: f64,
    pub median_oracle: f64,
    pub mean_iter1: f64,
    pub mean_iter4: f64,
    pub mean_oracle: f64,
}

/// One path's true and estimated spot variance, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotSeries {
    pub scenario: Scenario,
    pub t: Vec<f64>,
    pub v_true: Vec<f64>,
    pub v_iter1: Vec<f64>,
    pub v_iter4: Vec<f64>,
    pub v_oracle: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SseReport {
    pub rows: Vec<SseRow>,
    /// The first replicate of each scenario.
    pub series: Vec<SpotSeries>,
}

/// Spot-variance errors after the first and last iterations of the
/// second-order local algorithm and at the oracle thresholds.
pub fn run_spotvol_sse_study(spec: &StudySpec) -> Result<SseReport> {
    spec.validate()?;
    let opts = spec.options()?;
    let last = spec.max_iter;
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for sc in &spec.scenarios {
        let law = law(sc)?;
        let per_rep = spec.replicate(sc, |r, path| {
            let out = algo_local(path, Order::Second, &opts).context(sc.label())?;
            let s1 = spot_from_flags(path, flags_after(&out, 1))?;
            let s4 = spot_from_flags(path, flags_after(&out, last))?;
            let so = spot_from_flags(path, &oracle_classification(path, &law)?.1.flags)?;
            let v = &path.latent.as_ref().expect("simulated").variance;
            let errs = [sse(&s1, v), sse(&s4, v), sse(&so, v)];
            Ok((errs, (r == 0).then(|| ([s1, s4, so], path.clone()))))
        })?;
        let col = |j: usize| per_rep.iter().map(|r| r.0[j]).collect::<Vec<_>>();
        let (c1, c4, co) = (col(0), col(1), col(2));
        rows.push(SseRow {
            scenario: *sc,
            paths: spec.replicates,
            median_iter1: median(&c1),
            median_iter4: median(&c4),
            median_oracle: median(&co),
            mean_iter1: summarize(&c1).mean,
            mean_iter4: summarize(&c4).mean,
            mean_oracle: summarize(&co).mean,
        });
        let (_, first) = per_rep.into_iter().next().expect("replicates ≥ 1");
        let ([s1, s4, so], path) = first.expect("replicate 0 keeps its series");
        series.push(SpotSeries {
            scenario: *sc,
            t: (0..=path.n()).map(|i| path.time(i)).collect(),
            v_true: path.latent.expect("simulated").variance,
            v_iter1: s1,
            v_iter4: s4,
            v_oracle: so,
        });
    }
    Ok(SseReport { rows, series })
}

/// Deterministic-variance setting for the truncated realised variance check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasVarianceSpec {
    pub days: u32,
    pub gamma: f64,
    pub sigma2: f64,
    pub lambdas: [f64; 2],
    pub jump_sd: f64,
    pub replicates: usize,
    pub base_seed: u64,
    pub substeps: usize,
}

impl BiasVarianceSpec {
    pub fn reference(replicates: usize, base_seed: u64) -> Self {
        BiasVarianceSpec {
            days: 63,
            gamma: 0.05,
            sigma2: 0.04,
            lambdas: [100.0, 0.0],
            jump_sd: 0.03,
            replicates,
            base_seed,
            substeps: SUBSTEPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 || self.days == 0 || self.substeps == 0 {
            return Err(ToolError::Config("bias-variance needs ≥ 2 replicates, days ≥ 1, substeps ≥ 1".into()));
        }
        if !(self.sigma2 > 0.0) || self.lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(ToolError::Config("sigma2 must be positive and intensities non-negative".into()));
        }
        Ok(())
    }

    fn config(&self, lambda: f64, seed: u64) -> Result<HestonMertonConfig> {
        let cfg = HestonMertonConfig {
            kappa: 5.0,
            theta: self.sigma2,
            xi: 0.0,
            rho: 0.0,
            drift: tkjump::simulate::AffineDrift { a: self.gamma, b: 0.0 },
            lambda,
            jump_law: JumpLaw::normal(self.jump_sd).map_err(|e| ToolError::Config(e.to_string()))?,
            x0: 1.0,
            v0: self.sigma2,
            seed,
        };
        cfg.validate().map_err(|e| ToolError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceRow {
    pub lambda: f64,
    pub threshold: f64,
    pub bias: f64,
    pub bias_se: f64,
    pub bias_target: f64,
    pub variance: f64,
    pub variance_target: f64,
}

/// Error of the truncated realised variance at `B*1(σ²)` against its
/// integrated variance, compared with `hT(γ² − λσ²)` and `2hTσ⁴`.
pub fn run_trv_bias_variance_check(spec: &BiasVarianceSpec) -> Result<Vec<BiasVarianceRow>> {
    spec.validate()?;
    let sc = Scenario::new(spec.days, 0.0, 0.0, spec.jump_sd);
    let (n, h) = (sc.n(), sc.h());
    let t = n as f64 * h;
    let b = threshold_first_order(spec.sigma2, h).context("threshold")?;
    let bv = ThresholdVector::constant(n, b).context("threshold")?;
    spec.lambdas
        .iter()
        .map(|&lambda| {
            let errs = (0..spec.replicates)
                .into_par_iter()
                .map(|r| {
                    let cfg = spec.config(lambda, spec.base_seed.wrapping_add(r as u64))?;
                    let path = tkjump::simulate_path(&cfg, n, h, spec.substeps).context("bias-variance path")?;
                    let s = tkjump::estimate_n_j_iv(&path, &bv).context("truncated variance")?;
                    Ok(s.iv_hat - spec.sigma2 * t)
                })
                .collect::<Result<Vec<f64>>>()?;
            let s = summarize(&errs);
            Ok(BiasVarianceRow {
                lambda,
                threshold: b,
                bias: s.mean,
                bias_se: s.se,
                bias_target: h * t * (spec.gamma * spec.gamma - lambda * spec.sigma2),
                variance: s.sd * s.sd,
                variance_target: 2.0 * h * t * spec.sigma2 * spec.sigma2,
            })
        })
        .collect()
}
