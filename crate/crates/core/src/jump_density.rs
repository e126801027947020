//! Kernel estimation of the jump-size density at the origin from the
//! increments that exceed their thresholds.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::law::JumpLaw;
use crate::math;
use crate::simulate::SamplePath;
use crate::thresholds::{poisson_cutoff, LocalParams, ThresholdVector};

/// Minimum number of exceedances needed for a non-zero estimate.
pub const MIN_EXCEEDANCES: usize = 6;

/// A kernel supported on `[0, ∞)` integrating to one.
#[derive(Clone)]
#[derive(Default)]
pub enum RightKernel {
    /// `√(2/π)·e^{−x²/2}`.
    #[default]
    HalfGaussian,
    /// `e^{−x}`.
    Exponential,
    Custom { name: String, eval: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl fmt::Debug for RightKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}


impl RightKernel {
    /// Wrap a user kernel after checking `∫₀^∞ K = 1` within `1e-9`.
    pub fn custom(name: impl Into<String>, eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let k = RightKernel::Custom { name: name.into(), eval: Arc::new(eval) };
        k.check_normalization()?;
        Ok(k)
    }

    pub fn name(&self) -> &str {
        match self {
            RightKernel::HalfGaussian => "half-gaussian",
            RightKernel::Exponential => "exponential",
            RightKernel::Custom { name, .. } => name,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match self {
            RightKernel::HalfGaussian => 2.0 * math::norm_pdf(x),
            RightKernel::Exponential => math::exp(-x),
            RightKernel::Custom { eval, .. } => eval(x),
        }
    }

    pub fn check_normalization(&self) -> Result<()> {
        let q = math::integrate_upper(|x| self.eval(x), 0.0, 1e-13, 1e-12)?;
        if (q.value - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(alloc::format!(
                "kernel {} integrates to {} on [0, ∞), not 1",
                self.name(),
                q.value
            )));
        }
        Ok(())
    }
}

/// `√(4·σ²·h·log(1/h))`.
pub fn density_threshold(sigma2: f64, h: f64) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::Domain(alloc::format!("h must lie in (0, 1), got {h}")));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain(alloc::format!("sigma2 must be positive, got {sigma2}")));
    }
    Ok(math::sqrt(4.0 * sigma2 * h * math::ln(1.0 / h)))
}

fn sample_sd(values: &[f64]) -> f64 {
    if values.iter().all(|v| *v == values[0]) {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = math::pairwise_sum(values) / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    math::sqrt(math::pairwise_sum(&dev) / (n - 1.0))
}

/// `1.06·L^{−1/5}·sd` with `sd` the sample standard deviation (divisor `L − 1`).
/// Constant input gives `0`.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InsufficientData(alloc::format!(
            "bandwidth needs at least 2 values, got {}",
            values.len()
        )));
    }
    Ok(1.06 * math::powf(values.len() as f64, -0.2) * sample_sd(values))
}

/// How the estimator's thresholds were supplied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdUsed {
    Scalar(f64),
    PerInterval { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub f0_hat: f64,
    pub exceedance_count: usize,
    pub bandwidth: f64,
    pub threshold_used: ThresholdUsed,
    pub insufficient_data: bool,
    /// Silverman's rule gave zero and the `σ̂√h` floor was used instead.
    pub bandwidth_floored: bool,
}

impl DensityEstimate {
    /// The value to plug into the second-order threshold (`0` means "fall back").
    pub fn c0(&self) -> f64 {
        self.f0_hat
    }
}

fn threshold_summary(b: &[f64]) -> ThresholdUsed {
    let (min, max) = b.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if b.is_empty() || min == max {
        ThresholdUsed::Scalar(if b.is_empty() { f64::NAN } else { min })
    } else {
        ThresholdUsed::PerInterval { min, max }
    }
}

pub(crate) fn estimate_f0_increments(
    inc: &[f64],
    b: &[f64],
    h: f64,
    kernel: &RightKernel,
    bandwidth: Option<f64>,
) -> Result<DensityEstimate> {
    let threshold_used = threshold_summary(b);
    let mut exceed = Vec::new();
    let mut excess = Vec::new();
    let mut kept_sq = Vec::with_capacity(inc.len());
    for (&d, &bi) in inc.iter().zip(b) {
        if d.abs() > bi {
            exceed.push(d);
            excess.push(d.abs() - bi);
        } else {
            kept_sq.push(d * d);
        }
    }
    let l = exceed.len();
    if l < MIN_EXCEEDANCES {
        return Ok(DensityEstimate {
            f0_hat: 0.0,
            exceedance_count: l,
            bandwidth: bandwidth.unwrap_or(f64::NAN),
            threshold_used,
            insufficient_data: true,
            bandwidth_floored: false,
        });
    }
    let (delta, floored) = match bandwidth {
        Some(d) if d > 0.0 && d.is_finite() => (d, false),
        Some(d) => return Err(Error::Domain(alloc::format!("bandwidth must be positive, got {d}"))),
        None => {
            let d = silverman_bandwidth(&exceed)?;
            if d > 0.0 {
                (d, false)
            } else {
                let t = inc.len() as f64 * h;
                let sigma2 = math::pairwise_sum(&kept_sq) / t;
                let floor = math::sqrt(sigma2 * h);
                if !(floor > 0.0) {
                    return Err(Error::Numerical("degenerate bandwidth and zero variance floor".into()));
                }
                (floor, true)
            }
        }
    };
    let weights: Vec<f64> = excess.iter().map(|e| kernel.eval(e / delta) / delta).collect();
    let f0_hat = math::pairwise_sum(&weights) / (2.0 * l as f64);
    Ok(DensityEstimate {
        f0_hat,
        exceedance_count: l,
        bandwidth: delta,
        threshold_used,
        insufficient_data: false,
        bandwidth_floored: floored,
    })
}

/// `f̂(0) = (1/2L)·Σ_{|Δ_iX| > B_i} K_δ(|Δ_iX| − B_i)`, with `δ` from
/// Silverman's rule unless given. Fewer than six exceedances yield `0`.
pub fn estimate_f0(
    path: &SamplePath,
    b: &ThresholdVector,
    kernel: &RightKernel,
    bandwidth: Option<f64>,
) -> Result<DensityEstimate> {
    b.check_len(path.n())?;
    if let RightKernel::Custom { .. } = kernel {
        kernel.check_normalization()?;
    }
    estimate_f0_increments(&path.increments(), b.as_slice(), path.h, kernel, bandwidth)
}

/// Root of `2abx·e^{−bx²} = 1` in `(1/√(2b), √(log(2ab)/b))`, which minimises
/// `a·e^{−bx²} + x` when `a√b > 1/(1 − e^{−1/2})` and `log(2ab) < b`.
pub fn minimize_exp_plus_linear(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::Precondition("a and b must be positive".into()));
    }
    let bound = 1.0 / (1.0 - math::exp(-0.5));
    if !(a * math::sqrt(b) > bound) {
        return Err(Error::Precondition(alloc::format!("a·√b > 1/(1 − e^(−1/2)) fails: {} <= {bound}", a * math::sqrt(b))));
    }
    let l2ab = math::ln(2.0 * a * b);
    if !(l2ab < b) {
        return Err(Error::Precondition(alloc::format!("log(2ab) < b fails: {l2ab} >= {b}")));
    }
    let lo = 1.0 / math::sqrt(2.0 * b);
    let hi = math::sqrt(l2ab / b);
    math::bisect(|x| 2.0 * a * b * x * math::exp(-b * x * x) - 1.0, lo, hi, 1e-12)
}

/// Parts of the `|ΔX|` law around a threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalDensity {
    /// `E₂ = f*_{|ΔX| | |ΔX|>B}(B) − 2f(0)`.
    pub gap: f64,
    /// `P(|ΔX| > B)`.
    pub exceedance_prob: f64,
    /// Density of `|ΔX|` at `B`.
    pub density_at_b: f64,
}

/// Density of `|ΔX|` at `B` conditional on `|ΔX| > B`, minus `2f(0)`, for
/// constant local parameters.
pub fn conditional_density_gap(b: f64, p: &LocalParams, law: &JumpLaw) -> Result<ConditionalDensity> {
    p.validate()?;
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::Domain(alloc::format!("threshold must be positive, got {b}")));
    }
    let x = p.h * p.lambda_bar;
    let k_max = poisson_cutoff(x);
    let m = p.h * p.gamma_bar;
    let s = math::sqrt(p.sigma2_bar * p.h);
    let mut weight = math::exp(-x);
    let mut density = weight * (math::gauss_density(b, m, s) + math::gauss_density(-b, m, s));
    let mut inside = weight * math::gauss_abs_le(b, m, s);
    for k in 1..=k_max {
        weight *= x / k as f64;
        density += weight * (law.conv_density(k, m, s, b)? + law.conv_density(k, m, s, -b)?);
        inside += weight * law.prob_abs_le(k, m, s, b)?;
    }
    let exceedance_prob = 1.0 - inside;
    if !(exceedance_prob > 0.0) {
        return Err(Error::Numerical(alloc::format!("P(|ΔX| > {b}) underflows")));
    }
    Ok(ConditionalDensity {
        gap: density / exceedance_prob - 2.0 * law.c0(),
        exceedance_prob,
        density_at_b: density,
    })
}
