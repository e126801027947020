//! Threshold classification, truncated estimators, the exact per-interval
//! misclassification loss and its minimiser, and the closed-form first- and
//! second-order optimal threshold approximations.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::law::JumpLaw;
use crate::math;
use crate::simulate::SamplePath;

/// Per-interval averages of drift, variance and intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalParams {
    pub gamma_bar: f64,
    pub sigma2_bar: f64,
    pub lambda_bar: f64,
    pub h: f64,
    /// Weight of a missed jump relative to a false alarm.
    pub w: f64,
}

impl LocalParams {
    pub fn new(gamma_bar: f64, sigma2_bar: f64, lambda_bar: f64, h: f64) -> Result<Self> {
        let p = LocalParams { gamma_bar, sigma2_bar, lambda_bar, h, w: 1.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn with_weight(mut self, w: f64) -> Result<Self> {
        self.w = w;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_bar > 0.0 && self.sigma2_bar.is_finite()) {
            return Err(Error::Domain("sigma2_bar must be positive".into()));
        }
        if !(self.lambda_bar >= 0.0 && self.lambda_bar.is_finite()) {
            return Err(Error::Domain("lambda_bar must be non-negative".into()));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Domain("h must be positive".into()));
        }
        if !(self.w > 0.0 && self.w.is_finite()) {
            return Err(Error::Domain("w must be positive".into()));
        }
        if !self.gamma_bar.is_finite() {
            return Err(Error::Domain("gamma_bar must be finite".into()));
        }
        Ok(())
    }

    fn mean(&self) -> f64 {
        self.h * self.gamma_bar
    }

    fn sd(&self) -> f64 {
        math::sqrt(self.sigma2_bar * self.h)
    }
}

/// Per-interval thresholds `B_i`. `+∞` means "never truncate".
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector {
    b: Vec<f64>,
}

impl ThresholdVector {
    pub fn new(b: Vec<f64>) -> Result<Self> {
        if let Some(bad) = b.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Domain(alloc::format!("thresholds must be non-negative, got {bad}")));
        }
        Ok(ThresholdVector { b })
    }

    pub fn constant(n: usize, b: f64) -> Result<Self> {
        Self::new(alloc::vec![b; n])
    }

    /// The no-truncation sentinel.
    pub fn infinite(n: usize) -> Self {
        ThresholdVector { b: alloc::vec![f64::INFINITY; n] }
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.b
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.b
    }

    pub(crate) fn from_vec_unchecked(b: Vec<f64>) -> Self {
        ThresholdVector { b }
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.b.len() != n {
            return Err(Error::Dimension { expected: n, found: self.b.len() });
        }
        Ok(())
    }
}

/// Jump flags and their digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub flags: Vec<bool>,
    pub digest: u64,
}

impl Classification {
    pub fn from_flags(flags: Vec<bool>) -> Self {
        let digest = flags_digest(&flags);
        Classification { flags, digest }
    }

    pub fn flagged(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// FNV-1a over the flags packed little-endian into bytes, followed by the
/// flag count as a little-endian `u64`.
pub fn flags_digest(flags: &[bool]) -> u64 {
    let packed = flags.chunks(8).map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &f)| acc | (u8::from(f) << i)));
    let len = (flags.len() as u64).to_le_bytes();
    math::fnv1a64(packed.chain(len))
}

pub(crate) fn classify_increments(inc: &[f64], b: &[f64]) -> Classification {
    Classification::from_flags(inc.iter().zip(b).map(|(d, b)| d.abs() > *b).collect())
}

/// Flag interval `i` as containing a jump iff `|Δ_iX| > B_i`.
pub fn classify(path: &SamplePath, b: &ThresholdVector) -> Result<Classification> {
    b.check_len(path.n())?;
    Ok(classify_increments(&path.increments(), b.as_slice()))
}

/// Jump count, jump sum and truncated realised variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedSums {
    pub n_hat: usize,
    pub j_hat: f64,
    pub iv_hat: f64,
}

pub(crate) fn truncated_sums(inc: &[f64], b: &[f64]) -> TruncatedSums {
    let mut n_hat = 0;
    let mut jumps = Vec::new();
    let mut squares = Vec::with_capacity(inc.len());
    for (&d, &bi) in inc.iter().zip(b) {
        if d.abs() > bi {
            n_hat += 1;
            jumps.push(d);
        } else {
            squares.push(d * d);
        }
    }
    TruncatedSums { n_hat, j_hat: math::pairwise_sum(&jumps), iv_hat: math::pairwise_sum(&squares) }
}

pub fn estimate_n_j_iv(path: &SamplePath, b: &ThresholdVector) -> Result<TruncatedSums> {
    b.check_len(path.n())?;
    Ok(truncated_sums(&path.increments(), b.as_slice()))
}

/// `λ̂ = N̂/T` and `σ̂² = ÎV/T`.
pub fn lambda_sigma_hat(path: &SamplePath, b: &ThresholdVector) -> Result<(f64, f64)> {
    if path.n() == 0 {
        return Err(Error::EmptyInput);
    }
    let s = estimate_n_j_iv(path, b)?;
    let t = path.horizon();
    Ok((s.n_hat as f64 / t, s.iv_hat / t))
}

/// Smallest `k` with `x^{k+1}/(k+1)! < 1e-15`.
pub fn poisson_cutoff(x: f64) -> usize {
    if x <= 0.0 {
        return 0;
    }
    let mut k = 0usize;
    let mut term = x; // x^{k+1}/(k+1)!
    while term >= 1e-15 && k < 200 {
        k += 1;
        term *= x / (k + 1) as f64;
    }
    k
}

fn poisson_weights(x: f64, k_max: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(k_max + 1);
    let mut term = math::exp(-x);
    w.push(term);
    for k in 1..=k_max {
        term *= x / k as f64;
        w.push(term);
    }
    w
}

/// Exact single-interval loss
/// `P(|ΔX| > B, ΔN = 0) + w·P(|ΔX| <= B, ΔN ≠ 0)`, with the Poisson series
/// truncated at `k_max` (default: tail bound `1e-15`).
pub fn loss_exact(b: f64, p: &LocalParams, law: &JumpLaw, k_max: Option<usize>) -> Result<f64> {
    p.validate()?;
    if !(b >= 0.0) {
        return Err(Error::Domain(alloc::format!("threshold must be non-negative, got {b}")));
    }
    let x = p.h * p.lambda_bar;
    let k_max = k_max.unwrap_or_else(|| poisson_cutoff(x));
    let weights = poisson_weights(x, k_max);
    let (m, s) = (p.mean(), p.sd());
    let false_alarm = weights[0] * (1.0 - math::gauss_abs_le(b, m, s));
    let mut missed = 0.0;
    for (k, &wk) in weights.iter().enumerate().skip(1) {
        missed += wk * law.prob_abs_le(k, m, s, b)?;
    }
    Ok(false_alarm + p.w * missed)
}

/// Outcome of a grid scan of the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct UnimodalityScan {
    pub grid: Vec<f64>,
    pub loss: Vec<f64>,
    pub argmin: usize,
    /// Number of slope sign changes once differences within tolerance are ignored.
    pub sign_changes: usize,
    /// `true` when the slopes go (weakly) down then up.
    pub unimodal: bool,
}

/// Evaluate `loss_exact` on `grid` and test for a single descent-then-ascent.
pub fn unimodality_scan(p: &LocalParams, law: &JumpLaw, grid: &[f64], tol: f64) -> Result<UnimodalityScan> {
    let loss = grid.iter().map(|&b| loss_exact(b, p, law, None)).collect::<Result<Vec<_>>>()?;
    let argmin = loss
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &l)| if l < acc.1 { (i, l) } else { acc })
        .0;
    let signs: Vec<i8> = loss
        .windows(2)
        .filter_map(|w| {
            let d = w[1] - w[0];
            if d.abs() <= tol {
                None
            } else if d > 0.0 {
                Some(1)
            } else {
                Some(-1)
            }
        })
        .collect();
    let sign_changes = signs.windows(2).filter(|s| s[0] != s[1]).count();
    let unimodal = sign_changes == 0 || (sign_changes == 1 && signs.first() == Some(&-1));
    Ok(UnimodalityScan { grid: grid.to_vec(), loss, argmin, sign_changes, unimodal })
}

/// `[0, 10·σ̄√(h·log(1/h))]`.
pub fn exact_search_bracket(p: &LocalParams) -> Result<(f64, f64)> {
    if !(p.h < 1.0) {
        return Err(Error::Domain("h must be below 1 for the search bracket".into()));
    }
    Ok((0.0, 10.0 * math::sqrt(p.sigma2_bar * p.h * math::ln(1.0 / p.h))))
}

/// Minimiser of the exact loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptimum {
    pub threshold: f64,
    pub loss: f64,
    /// Argmin of the 512-point verification grid.
    pub grid_argmin: f64,
    pub grid_step: f64,
}

pub const SCAN_POINTS: usize = 512;

/// Golden-section search for the loss minimiser after a 512-point grid scan
/// has confirmed unimodality on the bracket.
pub fn optimal_threshold_exact(p: &LocalParams, law: &JumpLaw) -> Result<ExactOptimum> {
    p.validate()?;
    let (lo, hi) = exact_search_bracket(p)?;
    if p.lambda_bar == 0.0 {
        return Err(Error::DegenerateLaw { pinned_at: hi });
    }
    let step = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..SCAN_POINTS).map(|i| lo + i as f64 * step).collect();
    let scan = unimodality_scan(p, law, &grid, 1e-12)?;
    if !scan.unimodal {
        return Err(Error::MultiModal { sign_changes: scan.sign_changes });
    }
    if scan.argmin == SCAN_POINTS - 1 {
        return Err(Error::DegenerateLaw { pinned_at: hi });
    }
    let tol = 1e-10 * p.sd();
    let mut failure = None;
    let (b, l) = math::golden_section(
        |b| match loss_exact(b, p, law, None) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                f64::NAN
            }
        },
        lo,
        hi,
        tol,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(ExactOptimum { threshold: b, loss: l, grid_argmin: grid[scan.argmin], grid_step: step })
}

fn check_h(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::Domain(alloc::format!("h must lie in (0, 1), got {h}")));
    }
    Ok(())
}

/// `B*1 = √(3·σ²·h·log(1/h))`.
pub fn threshold_first_order(sigma2: f64, h: f64) -> Result<f64> {
    check_h(h)?;
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain(alloc::format!("sigma2 must be positive, got {sigma2}")));
    }
    Ok(first_order_unchecked(sigma2, h))
}

#[inline]
pub(crate) fn first_order_unchecked(sigma2: f64, h: f64) -> f64 {
    math::sqrt(3.0 * sigma2 * h * math::ln(1.0 / h))
}

/// Second-order threshold; `fallback` marks a non-positive bracket (or
/// `λ·C₀ = 0`), in which case the first-order value is returned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrder {
    pub threshold: f64,
    pub fallback: bool,
}

/// `B*2 = √h·σ·[3·log(1/h) − 2·log(√(2π)·C₀·σ·λ)]^{1/2}`.
pub fn threshold_second_order(sigma2: f64, lambda: f64, c0: f64, h: f64) -> Result<SecondOrder> {
    check_h(h)?;
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain(alloc::format!("sigma2 must be positive, got {sigma2}")));
    }
    if !(lambda >= 0.0 && c0 >= 0.0) {
        return Err(Error::Domain("lambda and c0 must be non-negative".into()));
    }
    Ok(second_order_unchecked(sigma2, lambda, c0, h))
}

pub(crate) fn second_order_unchecked(sigma2: f64, lambda: f64, c0: f64, h: f64) -> SecondOrder {
    let sigma = math::sqrt(sigma2);
    let nu = math::SQRT_2PI * c0 * sigma * lambda;
    let bracket = 3.0 * math::ln(1.0 / h) - 2.0 * math::ln(nu);
    if nu > 0.0 && bracket > 0.0 && bracket.is_finite() {
        SecondOrder { threshold: math::sqrt(h) * sigma * math::sqrt(bracket), fallback: false }
    } else {
        SecondOrder { threshold: first_order_unchecked(sigma2, h), fallback: true }
    }
}

/// `Σ_k (hλ)^k/k!·[φ*f^{*k}(B) + φ*f^{*k}(−B)]`, weighted by `w`.
fn jump_density_sum(b: f64, p: &LocalParams, law: &JumpLaw) -> Result<f64> {
    let x = p.h * p.lambda_bar;
    let k_max = poisson_cutoff(x);
    let (m, s) = (p.mean(), p.sd());
    let mut term = 1.0;
    let mut acc = 0.0;
    for k in 1..=k_max {
        term *= x / k as f64;
        acc += term * (law.conv_density(k, m, s, b)? + law.conv_density(k, m, s, -b)?);
    }
    Ok(p.w * acc)
}

/// `B` minus the right-hand side of the first-order optimality condition
/// written as a fixed point in `B`. Vanishes at the exact optimum.
pub fn fixed_point_residual(b: f64, p: &LocalParams, law: &JumpLaw) -> Result<f64> {
    p.validate()?;
    if !(b > 0.0) {
        return Err(Error::Domain(alloc::format!("threshold must be positive, got {b}")));
    }
    let s2 = p.sigma2_bar;
    let hs2 = p.h * s2;
    let drift_term = math::ln(1.0 + math::exp(-2.0 * b * p.gamma_bar / s2));
    let jumps = jump_density_sum(b, p, law)?;
    let inner = drift_term - math::ln(math::sqrt(2.0 * core::f64::consts::PI * hs2) * jumps);
    if !(inner >= 0.0) {
        return Err(Error::Numerical(alloc::format!(
            "fixed-point square root argument is negative ({inner}) at B = {b}"
        )));
    }
    Ok(b - (p.mean() + math::sqrt(2.0 * hs2) * math::sqrt(inner)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const H5: f64 = 1.0 / 19_656.0;

    fn path(inc: &[f64]) -> SamplePath {
        let mut x = vec![0.0];
        for d in inc {
            x.push(x.last().unwrap() + d);
        }
        SamplePath::new(0.0, 0.01, x).unwrap()
    }

    fn reference_params() -> (LocalParams, JumpLaw) {
        (LocalParams::new(0.0, 0.04, 100.0, H5).unwrap(), JumpLaw::normal(0.03).unwrap())
    }

    #[test]
    fn classify_examples() {
        let p = path(&[0.1, -0.3, 0.05]);
        let c = classify(&p, &ThresholdVector::constant(3, 0.2).unwrap()).unwrap();
        assert_eq!(c.flags, vec![false, true, false]);
        let c = classify(&p, &ThresholdVector::infinite(3)).unwrap();
        assert_eq!(c.flags, vec![false; 3]);
        let c = classify(&p, &ThresholdVector::constant(3, 0.0).unwrap()).unwrap();
        assert_eq!(c.flags, vec![true; 3]);
        assert!(matches!(
            classify(&p, &ThresholdVector::constant(2, 0.2).unwrap()),
            Err(Error::Dimension { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn ties_are_not_jumps() {
        let p = SamplePath::new(0.0, 0.01, vec![0.0, 0.25]).unwrap();
        let c = classify(&p, &ThresholdVector::constant(1, 0.25).unwrap()).unwrap();
        assert_eq!(c.flags, vec![false]);
    }

    #[test]
    fn digest_depends_only_on_flags() {
        let a = Classification::from_flags(vec![true, false, true]);
        let b = Classification::from_flags(vec![true, false, true]);
        let c = Classification::from_flags(vec![true, false, false]);
        let d = Classification::from_flags(vec![true, false, true, false]);
        assert_eq!(a.digest, b.digest);
        assert_ne!(a.digest, c.digest);
        assert_ne!(a.digest, d.digest);
    }

    #[test]
    fn truncated_sums_examples() {
        let p = path(&[0.1, -0.3, 0.05]);
        let s = estimate_n_j_iv(&p, &ThresholdVector::infinite(3)).unwrap();
        assert_eq!(s.n_hat, 0);
        assert_eq!(s.j_hat, 0.0);
        assert!((s.iv_hat - (0.01 + 0.09 + 0.0025)).abs() < 1e-15);
        let p1 = path(&[0.5]);
        let s = estimate_n_j_iv(&p1, &ThresholdVector::constant(1, 0.1).unwrap()).unwrap();
        assert_eq!((s.n_hat, s.j_hat, s.iv_hat), (1, 0.5, 0.0));
        let (l, s2) = lambda_sigma_hat(&p1, &ThresholdVector::constant(1, 0.1).unwrap()).unwrap();
        assert_eq!((l, s2), (1.0 / 0.01, 0.0));
    }

    #[test]
    fn cutoff_respects_tail_bound() {
        assert_eq!(poisson_cutoff(0.0), 0);
        let x = 1000.0 * H5;
        let k = poisson_cutoff(x);
        let tail = |k: usize| libm::pow(x, (k + 1) as f64) / (1..=k + 1).map(|i| i as f64).product::<f64>();
        assert!(tail(k) < 1e-15);
        assert!(tail(k - 1) >= 1e-15);
    }

    #[test]
    fn loss_limits() {
        let (p, law) = reference_params();
        let x = p.h * p.lambda_bar;
        assert!((loss_exact(0.0, &p, &law, None).unwrap() - libm::exp(-x)).abs() < 1e-15);
        assert!((loss_exact(1e6, &p, &law, None).unwrap() - (1.0 - libm::exp(-x))).abs() < 1e-12);
    }

    #[test]
    fn first_order_examples() {
        let e = libm::exp(-1.0);
        assert!((threshold_first_order(1.0, e).unwrap() - libm::sqrt(3.0 / core::f64::consts::E)).abs() < 1e-15);
        let b = threshold_first_order(0.04, H5).unwrap();
        assert!((threshold_first_order(0.16, H5).unwrap() - 2.0 * b).abs() < 1e-16);
        // sqrt(3 * 0.04 * ln(19656) / 19656), evaluated with 50-digit arithmetic.
        assert!((b - 0.007_768_843_692_669_426).abs() < 1e-17, "{b:.18}");
        assert!(matches!(threshold_first_order(0.04, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn second_order_examples() {
        // c0·σ·λ = 1/√(2π) zeroes the correction term.
        let sigma = 0.2;
        let c0 = 1.0 / (math::SQRT_2PI * sigma * 10.0);
        let b2 = threshold_second_order(0.04, 10.0, c0, H5).unwrap();
        let b1 = threshold_first_order(0.04, H5).unwrap();
        assert!(!b2.fallback);
        assert!((b2.threshold - b1).abs() < 1e-15);

        let b2 = threshold_second_order(0.04, 1000.0, 39.89, H5).unwrap();
        assert!(!b2.fallback && b2.threshold < b1);

        for (l, c) in [(0.0, 13.3), (100.0, 0.0)] {
            let b = threshold_second_order(0.04, l, c, H5).unwrap();
            assert!(b.fallback);
            assert_eq!(b.threshold, b1);
        }
        // Huge λ·C₀ makes the bracket negative.
        let b = threshold_second_order(0.04, 1e12, 1e6, H5).unwrap();
        assert!(b.fallback);
    }

    #[test]
    fn exact_optimum_is_close_to_first_order() {
        let (p, law) = reference_params();
        let opt = optimal_threshold_exact(&p, &law).unwrap();
        let b1 = threshold_first_order(p.sigma2_bar, p.h).unwrap();
        assert!((opt.threshold / b1 - 1.0).abs() < 0.25, "{} vs {}", opt.threshold, b1);
        assert!((opt.threshold - opt.grid_argmin).abs() <= opt.grid_step);
    }

    #[test]
    fn second_order_loss_not_worse_than_first_order() {
        // Dense-grid oracle over (0, 5·B*1).
        let (p, law) = reference_params();
        let b1 = threshold_first_order(p.sigma2_bar, p.h).unwrap();
        let b2 = threshold_second_order(p.sigma2_bar, p.lambda_bar, law.c0(), p.h).unwrap().threshold;
        let grid: Vec<f64> = (1..=4000).map(|i| 5.0 * b1 * i as f64 / 4000.0).collect();
        let losses: Vec<f64> = grid.iter().map(|&b| loss_exact(b, &p, &law, None).unwrap()).collect();
        let best = losses.iter().cloned().fold(f64::INFINITY, f64::min);
        let l1 = loss_exact(b1, &p, &law, None).unwrap();
        let l2 = loss_exact(b2, &p, &law, None).unwrap();
        assert!(l2 <= l1, "{l2} > {l1}");
        assert!(best <= l2 + 1e-15);
    }

    #[test]
    fn no_jumps_is_degenerate() {
        let p = LocalParams::new(0.0, 0.04, 0.0, H5).unwrap();
        let law = JumpLaw::normal(0.03).unwrap();
        let (_, top) = exact_search_bracket(&p).unwrap();
        assert_eq!(optimal_threshold_exact(&p, &law), Err(Error::DegenerateLaw { pinned_at: top }));
    }

    #[test]
    fn residual_vanishes_at_optimum() {
        let (p, law) = reference_params();
        let b = optimal_threshold_exact(&p, &law).unwrap().threshold;
        let r = fixed_point_residual(b, &p, &law).unwrap();
        assert!(r.abs() < 1e-6 * b, "{r}");
        assert!(fixed_point_residual(2.0 * b, &p, &law).unwrap() > 0.0);
        for i in 0..100 {
            let bb = b * (0.5 + i as f64 / 99.0);
            let r = fixed_point_residual(bb, &p, &law).unwrap();
            assert!(r.is_finite());
        }
    }

    #[test]
    fn residual_with_drift_and_weight() {
        let law = JumpLaw::normal(0.03).unwrap();
        let p = LocalParams::new(0.5, 0.04, 200.0, H5).unwrap().with_weight(0.5).unwrap();
        let b = optimal_threshold_exact(&p, &law).unwrap().threshold;
        assert!(fixed_point_residual(b, &p, &law).unwrap().abs() < 1e-6 * b);
    }
}
