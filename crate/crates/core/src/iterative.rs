//! The iterative threshold algorithms: constant first order, constant second
//! order and local (spot-variance) thresholds, with fixed-point and cycle
//! detection over classifications.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::jump_density::{estimate_f0_increments, DensityEstimate, RightKernel};
use crate::law::JumpLaw;
use crate::math;
use crate::simulate::SamplePath;
use crate::spot_vol::{kept, spot_series_kept, Kernel, Normalization};
use crate::thresholds::{
    classify_increments, first_order_unchecked, second_order_unchecked, truncated_sums, Classification,
    ThresholdVector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    First,
    Second,
}

/// Which thresholds feed the jump-density estimate inside the algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum F0ThresholdMode {
    /// The current detection thresholds.
    #[default]
    Detection,
    /// `√(4·σ̂²·h·log(1/h))` built from the current variance estimate.
    Density,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    FixedPoint,
    Cycle { period: usize },
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct AlgoOptions {
    pub max_iter: usize,
    /// Spot-variance kernel for the local algorithm.
    pub kernel: Kernel,
    /// Spot-variance bandwidth; `√h` when absent.
    pub delta: Option<f64>,
    pub f0_kernel: RightKernel,
    pub f0_threshold: F0ThresholdMode,
}

impl Default for AlgoOptions {
    fn default() -> Self {
        AlgoOptions {
            max_iter: 4,
            kernel: Kernel::double_exponential(),
            delta: None,
            f0_kernel: RightKernel::default(),
            f0_threshold: F0ThresholdMode::Detection,
        }
    }
}

/// One pass of an algorithm: estimates computed from the previous thresholds
/// and the classification produced by the new ones.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub b_min: f64,
    pub b_mean: f64,
    pub b_max: f64,
    pub lambda_hat: f64,
    pub sigma2_hat: f64,
    /// Spot variance at `t_0..=t_n` (local algorithm only).
    pub spot: Option<Vec<f64>>,
    pub spot_digest: Option<u64>,
    pub f0: Option<DensityEstimate>,
    /// Intervals where the second-order formula fell back to first order.
    pub fallback_count: usize,
    pub flags: Vec<bool>,
    pub digest: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    /// Digest of the classification under the initial thresholds.
    pub initial_digest: u64,
    pub records: Vec<IterationRecord>,
    pub status: Status,
    pub iterations_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub lambda_hat: f64,
    pub sigma2_hat: f64,
    pub n_hat: usize,
    pub j_hat: f64,
    pub f0: DensityEstimate,
    /// Unnormalised spot variance at `t_0..=t_n` under the final thresholds
    /// (local algorithm only).
    pub spot: Option<Vec<f64>>,
    pub classification: Classification,
    pub status: Status,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmOutput {
    pub thresholds: ThresholdVector,
    pub report: EstimationReport,
    pub trace: IterationTrace,
}

struct Step {
    b: Vec<f64>,
    lambda_hat: f64,
    sigma2_hat: f64,
    spot: Option<Vec<f64>>,
    f0: Option<DensityEstimate>,
    fallback_count: usize,
}

fn spot_digest(spot: &[f64]) -> u64 {
    math::fnv1a64(spot.iter().flat_map(|v| v.to_bits().to_le_bytes()))
}

fn summary(b: &[f64]) -> (f64, f64, f64) {
    let (lo, hi) = b.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    (lo, math::pairwise_sum(b) / b.len() as f64, hi)
}

fn check_input(path: &SamplePath) -> Result<()> {
    if path.n() < 2 {
        return Err(Error::Precondition(alloc::format!("at least 2 increments required, got {}", path.n())));
    }
    if !(path.h < 1.0) {
        return Err(Error::Domain(alloc::format!("h must be below 1, got {}", path.h)));
    }
    Ok(())
}

/// Runs `step` from `b0` until the classification repeats or `max_iter` passes.
fn iterate(
    inc: &[f64],
    b0: Vec<f64>,
    max_iter: usize,
    mut step: impl FnMut(&[f64]) -> Result<Step>,
) -> Result<(Vec<f64>, IterationTrace)> {
    let initial = classify_increments(inc, &b0);
    let mut thresholds = vec![b0];
    let mut digests = vec![initial.digest];
    let mut records = Vec::new();
    let mut status = Status::MaxIter;
    let mut chosen = None;
    for k in 1..=max_iter {
        let s = step(thresholds.last().expect("history is never empty"))?;
        let cls = classify_increments(inc, &s.b);
        let (b_min, b_mean, b_max) = summary(&s.b);
        records.push(IterationRecord {
            iteration: k,
            b_min,
            b_mean,
            b_max,
            lambda_hat: s.lambda_hat,
            sigma2_hat: s.sigma2_hat,
            spot_digest: s.spot.as_deref().map(spot_digest),
            spot: s.spot,
            f0: s.f0,
            fallback_count: s.fallback_count,
            flags: cls.flags,
            digest: cls.digest,
        });
        let last = *digests.last().expect("history is never empty");
        if cls.digest == last {
            status = Status::FixedPoint;
            chosen = Some(s.b);
            break;
        }
        if let Some(j) = digests.iter().position(|&d| d == cls.digest) {
            status = Status::Cycle { period: k - j };
            chosen = Some(thresholds.swap_remove(j));
            break;
        }
        thresholds.push(s.b);
        digests.push(cls.digest);
    }
    let iterations_used = records.len();
    let b = chosen.unwrap_or_else(|| thresholds.pop().expect("history is never empty"));
    Ok((b, IterationTrace { initial_digest: initial.digest, records, status, iterations_used }))
}

fn finish(
    path: &SamplePath,
    inc: &[f64],
    b: Vec<f64>,
    trace: IterationTrace,
    opts: &AlgoOptions,
    spot: Option<Vec<f64>>,
) -> Result<AlgorithmOutput> {
    let t = path.horizon();
    let sums = truncated_sums(inc, &b);
    let f0 = estimate_f0_increments(inc, &b, path.h, &opts.f0_kernel, None)?;
    let classification = classify_increments(inc, &b);
    let report = EstimationReport {
        lambda_hat: sums.n_hat as f64 / t,
        sigma2_hat: sums.iv_hat / t,
        n_hat: sums.n_hat,
        j_hat: sums.j_hat,
        f0,
        spot,
        classification,
        status: trace.status,
        iterations: trace.iterations_used,
    };
    Ok(AlgorithmOutput { thresholds: ThresholdVector::from_vec_unchecked(b), report, trace })
}

/// Constant first-order thresholds, starting from the full realised variance
/// and iterating until the variance estimate stops changing.
pub fn algo_constant_first_order(path: &SamplePath) -> Result<AlgorithmOutput> {
    // Each pass either keeps the classification or strictly shrinks the set of
    // retained increments, so `n + 1` passes always suffice.
    algo_constant_first_order_with(path, path.n() + 1)
}

/// [`algo_constant_first_order`] stopped after at most `max_iter` passes.
pub fn algo_constant_first_order_with(path: &SamplePath, max_iter: usize) -> Result<AlgorithmOutput> {
    check_input(path)?;
    if max_iter == 0 {
        return Err(Error::Precondition("max_iter must be at least 1".into()));
    }
    let inc = path.increments();
    let (h, t, n) = (path.h, path.horizon(), path.n());
    let (b, trace) = iterate(&inc, vec![f64::INFINITY; n], max_iter, |prev| {
        let s = truncated_sums(&inc, prev);
        let sigma2 = s.iv_hat / t;
        Ok(Step {
            b: vec![first_order_unchecked(sigma2, h); n],
            lambda_hat: s.n_hat as f64 / t,
            sigma2_hat: sigma2,
            spot: None,
            f0: None,
            fallback_count: 0,
        })
    })?;
    finish(path, &inc, b, trace, &AlgoOptions::default(), None)
}

fn f0_for(
    inc: &[f64],
    prev: &[f64],
    h: f64,
    sigma2: &dyn Fn(usize) -> f64,
    opts: &AlgoOptions,
) -> Result<DensityEstimate> {
    match opts.f0_threshold {
        F0ThresholdMode::Detection => estimate_f0_increments(inc, prev, h, &opts.f0_kernel, None),
        F0ThresholdMode::Density => {
            let l = math::ln(1.0 / h);
            let bt: Vec<f64> = (0..inc.len()).map(|m| math::sqrt(4.0 * sigma2(m) * h * l)).collect();
            estimate_f0_increments(inc, &bt, h, &opts.f0_kernel, None)
        }
    }
}

/// Constant second-order thresholds with `λ̂`, `σ̂²` and `f̂(0)` re-estimated
/// at each pass from the previous thresholds.
pub fn algo_constant_second_order(path: &SamplePath, opts: &AlgoOptions) -> Result<AlgorithmOutput> {
    check_input(path)?;
    if opts.max_iter == 0 {
        return Err(Error::Precondition("max_iter must be at least 1".into()));
    }
    let inc = path.increments();
    let (h, t, n) = (path.h, path.horizon(), path.n());
    let rv = truncated_sums(&inc, &vec![f64::INFINITY; n]).iv_hat / t;
    let b0 = vec![first_order_unchecked(rv, h); n];
    let (b, trace) = iterate(&inc, b0, opts.max_iter, |prev| {
        let s = truncated_sums(&inc, prev);
        let (lambda, sigma2) = (s.n_hat as f64 / t, s.iv_hat / t);
        let f0 = f0_for(&inc, prev, h, &|_| sigma2, opts)?;
        let b2 = second_order_unchecked(sigma2, lambda, f0.c0(), h);
        Ok(Step {
            b: vec![b2.threshold; n],
            lambda_hat: lambda,
            sigma2_hat: sigma2,
            spot: None,
            f0: Some(f0),
            fallback_count: if b2.fallback { n } else { 0 },
        })
    })?;
    finish(path, &inc, b, trace, opts, None)
}

/// Local thresholds from the unnormalised threshold-kernel spot variance.
///
/// The starting thresholds are constant and built from the output of the
/// constant first-order algorithm: `B*1(σ̂²)` for order 1, and for order 2
/// `B*2(σ̂², λ̂, f̂(0))` with `f̂(0)` estimated at that algorithm's thresholds.
pub fn algo_local(path: &SamplePath, order: Order, opts: &AlgoOptions) -> Result<AlgorithmOutput> {
    check_input(path)?;
    if opts.max_iter == 0 {
        return Err(Error::Precondition("max_iter must be at least 1".into()));
    }
    let inc = path.increments();
    let (h, t, n) = (path.h, path.horizon(), path.n());
    let delta = opts.delta.unwrap_or_else(|| math::sqrt(h));
    let c1 = algo_constant_first_order(path)?;
    let start = c1.report.sigma2_hat;
    let b0 = match order {
        Order::First => first_order_unchecked(start, h),
        Order::Second => {
            let f0 = f0_for(&inc, c1.thresholds.as_slice(), h, &|_| start, opts)?;
            second_order_unchecked(start, c1.report.lambda_hat, f0.c0(), h).threshold
        }
    };
    let b0 = vec![b0; n];
    let (b, trace) = iterate(&inc, b0, opts.max_iter, |prev| {
        let spot = spot_series_kept(&kept(&inc, prev), h, delta, &opts.kernel, Normalization::Unnormalized)?;
        let s = truncated_sums(&inc, prev);
        let lambda = s.n_hat as f64 / t;
        let (b, f0, fallback_count) = match order {
            Order::First => ((0..n).map(|m| first_order_unchecked(spot[m + 1], h)).collect(), None, 0),
            Order::Second => {
                let f0 = f0_for(&inc, prev, h, &|m| spot[m + 1], opts)?;
                let mut fallbacks = 0;
                let b = (0..n)
                    .map(|m| {
                        let r = second_order_unchecked(spot[m + 1], lambda, f0.c0(), h);
                        fallbacks += usize::from(r.fallback);
                        r.threshold
                    })
                    .collect();
                (b, Some(f0), fallbacks)
            }
        };
        Ok(Step { b, lambda_hat: lambda, sigma2_hat: s.iv_hat / t, spot: Some(spot), f0, fallback_count })
    })?;
    let spot = spot_series_kept(&kept(&inc, &b), h, delta, &opts.kernel, Normalization::Unnormalized)?;
    finish(path, &inc, b, trace, opts, Some(spot))
}

/// Threshold methods compared in the Monte Carlo study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    C1,
    C2,
    N1,
    N2,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::C1, Method::C2, Method::N1, Method::N2, Method::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Method::C1 => "c1",
            Method::C2 => "c2",
            Method::N1 => "n1",
            Method::N2 => "n2",
            Method::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Run a feasible method for at most `opts.max_iter` passes. `Oracle` is
    /// rejected: use [`oracle_threshold`].
    pub fn run(self, path: &SamplePath, opts: &AlgoOptions) -> Result<AlgorithmOutput> {
        match self {
            Method::C1 => algo_constant_first_order_with(path, opts.max_iter),
            Method::C2 => algo_constant_second_order(path, opts),
            Method::N1 => algo_local(path, Order::First, opts),
            Method::N2 => algo_local(path, Order::Second, opts),
            Method::Oracle => Err(Error::InvalidConfig("the oracle needs latent truth and a jump law".into())),
        }
    }
}

/// Per-interval `B*1` or `B*2` from the true variance at `t_i`, the true
/// intensity and the true `C₀(f)`.
pub fn oracle_threshold(path: &SamplePath, order: Order, law: &JumpLaw) -> Result<ThresholdVector> {
    let latent = path.latent.as_ref().ok_or(Error::MissingLatent)?;
    if !(path.h > 0.0 && path.h < 1.0) {
        return Err(Error::Domain(alloc::format!("h must lie in (0, 1), got {}", path.h)));
    }
    let h = path.h;
    let b = (0..path.n())
        .map(|m| {
            let v = latent.variance[m + 1];
            match order {
                Order::First => first_order_unchecked(v, h),
                Order::Second => second_order_unchecked(v, latent.intensity, law.c0(), h).threshold,
            }
        })
        .collect();
    Ok(ThresholdVector::from_vec_unchecked(b))
}

/// False alarms plus missed jump intervals.
pub fn sample_loss(classification: &Classification, jump_counts: &[u32]) -> Result<usize> {
    let flags = &classification.flags;
    if flags.len() != jump_counts.len() {
        return Err(Error::Dimension { expected: flags.len(), found: jump_counts.len() });
    }
    Ok(flags.iter().zip(jump_counts).filter(|(&f, &c)| f != (c != 0)).count())
}
