//! Kernel and threshold-kernel spot variance estimators, one-sided variants,
//! truncated quarticity, the two-time-scale vol-of-vol estimator, the plug-in
//! bandwidth and the leading-order MSE expansion.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::math;
use crate::simulate::SamplePath;
use crate::thresholds::ThresholdVector;

/// `ln(1e12)`: beyond this the exponential kernels fall below `1e-12·K(0)`.
const EXP_REACH: f64 = 27.631_021_115_928_547;
/// `√(2·ln(1e12))`.
const GAUSS_REACH: f64 = 7.433_844_377_699_677;

pub type KernelFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    DoubleExponential,
    Uniform,
    OneSidedExponential,
    Gaussian,
    Custom,
}

/// A two-sided weighting function with its `∫K²` and cross integral
/// `c₁ = ∬K(x)K(y)·min(|x|,|y|)·1{xy>0} dx dy`.
#[derive(Clone)]
pub struct Kernel {
    name: String,
    kind: KernelKind,
    custom: Option<KernelFn>,
    support: (f64, f64),
    reach: (f64, f64),
    k2: f64,
    c1: f64,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("name", &self.name)
            .field("support", &self.support)
            .field("k2_integral", &self.k2)
            .field("c1_cross_integral", &self.c1)
            .finish()
    }
}

impl PartialEq for Kernel {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.kind == other.kind && self.support == other.support
    }
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::double_exponential()
    }
}

impl Kernel {
    /// `½·e^{−|x|}`.
    pub fn double_exponential() -> Self {
        Kernel {
            name: "double-exponential".into(),
            kind: KernelKind::DoubleExponential,
            custom: None,
            support: (f64::NEG_INFINITY, f64::INFINITY),
            reach: (-EXP_REACH, EXP_REACH),
            k2: 0.25,
            c1: 0.25,
        }
    }

    /// `1` on `[−½, ½]`.
    pub fn uniform() -> Self {
        Kernel {
            name: "uniform".into(),
            kind: KernelKind::Uniform,
            custom: None,
            support: (-0.5, 0.5),
            reach: (-0.5, 0.5),
            k2: 1.0,
            c1: 1.0 / 12.0,
        }
    }

    /// `e^{−x}·1{x ≥ 0}`.
    pub fn one_sided_exponential() -> Self {
        Kernel {
            name: "one-sided-exponential".into(),
            kind: KernelKind::OneSidedExponential,
            custom: None,
            support: (0.0, f64::INFINITY),
            reach: (0.0, EXP_REACH),
            k2: 0.5,
            c1: 0.5,
        }
    }

    pub fn gaussian() -> Self {
        Kernel {
            name: "gaussian".into(),
            kind: KernelKind::Gaussian,
            custom: None,
            support: (f64::NEG_INFINITY, f64::INFINITY),
            reach: (-GAUSS_REACH, GAUSS_REACH),
            k2: 0.5 / math::sqrt(core::f64::consts::PI),
            c1: (core::f64::consts::SQRT_2 - 1.0) / math::sqrt(core::f64::consts::PI),
        }
    }

    /// A user kernel on `support` (either end may be infinite). The
    /// normalisation is checked to `1e-9` and both integrals are computed by
    /// adaptive quadrature.
    pub fn custom(
        name: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support: (f64, f64),
    ) -> Result<Self> {
        let (a, b) = support;
        if !(a < b) || a > 0.0 || b < 0.0 {
            return Err(Error::InvalidConfig("kernel support must be an interval containing 0".into()));
        }
        let f: KernelFn = Arc::new(eval);
        let g = f.clone();
        let inside = move |x: f64| if x < a || x > b { 0.0 } else { g(x) };
        let mass = integrate_line(&inside, a, b, 1e-13, 1e-12)?;
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(alloc::format!("kernel integrates to {mass}, not 1")));
        }
        let k2 = integrate_line(&|x| inside(x) * inside(x), a, b, 1e-13, 1e-11)?;
        if !(k2 > 0.0 && k2.is_finite()) {
            return Err(Error::InvalidConfig("∫K² must be finite and positive".into()));
        }
        let c1 = c1_by_quadrature(&inside, a, b)?;
        if !(c1 > 0.0 && c1.is_finite()) {
            return Err(Error::InvalidConfig("cross integral must be finite and positive".into()));
        }
        let peak = inside(0.0).max(1e-300);
        let reach = (reach_side(&inside, a, -1.0, peak), reach_side(&inside, b, 1.0, peak));
        Ok(Kernel { name: name.into(), kind: KernelKind::Custom, custom: Some(f), support, reach, k2, c1 })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    /// Interval outside which weights are skipped.
    pub fn reach(&self) -> (f64, f64) {
        self.reach
    }

    pub fn k2_integral(&self) -> f64 {
        self.k2
    }

    pub fn c1_cross_integral(&self) -> f64 {
        self.c1
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            KernelKind::DoubleExponential => 0.5 * math::exp(-x.abs()),
            KernelKind::Uniform => {
                if (-0.5..=0.5).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            KernelKind::OneSidedExponential => {
                if x >= 0.0 {
                    math::exp(-x)
                } else {
                    0.0
                }
            }
            KernelKind::Gaussian => math::norm_pdf(x),
            KernelKind::Custom => {
                if x < self.support.0 || x > self.support.1 {
                    0.0
                } else {
                    (self.custom.as_ref().expect("custom kernel carries its function"))(x)
                }
            }
        }
    }

    /// `K_δ(x) = K(x/δ)/δ`.
    #[inline]
    pub fn eval_scaled(&self, x: f64, delta: f64) -> f64 {
        self.eval(x / delta) / delta
    }
}

fn integrate_line(f: &dyn Fn(f64) -> f64, a: f64, b: f64, abs: f64, rel: f64) -> Result<f64> {
    let mut total = 0.0;
    if a < 0.0 {
        total += if a.is_finite() {
            math::integrate(f, a, 0.0, abs, rel)?.value
        } else {
            math::integrate_upper(|x| f(-x), 0.0, abs, rel)?.value
        };
    }
    if b > 0.0 {
        total += if b.is_finite() {
            math::integrate(f, 0.0, b, abs, rel)?.value
        } else {
            math::integrate_upper(f, 0.0, abs, rel)?.value
        };
    }
    Ok(total)
}

/// `∫₀^∞ S₊(u)² du + ∫₀^∞ S₋(u)² du` with `S₊(u) = ∫_u^∞ K` and
/// `S₋(u) = ∫_{−∞}^{−u} K`.
fn c1_by_quadrature(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    let mut total = 0.0;
    for (sign, end) in [(1.0, b), (-1.0, -a)] {
        if end <= 0.0 {
            continue;
        }
        let g = |x: f64| f(sign * x);
        let tail = |u: f64| -> f64 {
            let r = if end.is_finite() {
                math::integrate(g, u, end, 1e-14, 1e-12)
            } else {
                math::integrate_upper(g, u, 1e-14, 1e-12)
            };
            r.map(|q| q.value).unwrap_or(f64::NAN)
        };
        let sq = |u: f64| {
            let s = tail(u);
            s * s
        };
        let q = if end.is_finite() {
            math::integrate(sq, 0.0, end, 1e-12, 1e-10)?
        } else {
            math::integrate_upper(sq, 0.0, 1e-12, 1e-10)?
        };
        total += q.value;
    }
    Ok(total)
}

fn reach_side(f: &dyn Fn(f64) -> f64, end: f64, sign: f64, peak: f64) -> f64 {
    if end.is_finite() {
        return end;
    }
    let mut r = 1.0;
    while r < 1e6 && (f(sign * r) >= 1e-12 * peak || f(sign * 2.0 * r) >= 1e-12 * peak) {
        r *= 2.0;
    }
    sign * r
}

/// Double-exponential, uniform, one-sided exponential and Gaussian kernels.
pub fn builtin_kernels() -> Vec<Kernel> {
    vec![Kernel::double_exponential(), Kernel::uniform(), Kernel::one_sided_exponential(), Kernel::gaussian()]
}

/// Whether the kernel sum is divided by `h·Σ K_δ·1{kept}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `Σ K_δ(t_{j−1} − τ)(Δ_jX)²·1{|Δ_jX| ≤ B_j}`.
    Unnormalized,
    #[default]
    Normalized,
}

/// Squared kept increments and kept indicators.
pub(crate) struct Kept {
    pub sq: Vec<f64>,
    pub ind: Vec<f64>,
}

pub(crate) fn kept(inc: &[f64], b: &[f64]) -> Kept {
    let mut sq = Vec::with_capacity(inc.len());
    let mut ind = Vec::with_capacity(inc.len());
    for (&d, &bi) in inc.iter().zip(b) {
        if d.abs() <= bi {
            sq.push(d * d);
            ind.push(1.0);
        } else {
            sq.push(0.0);
            ind.push(0.0);
        }
    }
    Kept { sq, ind }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain(alloc::format!("bandwidth must be positive, got {delta}")));
    }
    Ok(())
}

fn point_estimate(
    path: &SamplePath,
    tau: f64,
    delta: f64,
    kernel: &Kernel,
    b: &[f64],
    normalization: Normalization,
) -> Result<f64> {
    check_delta(delta)?;
    let n = path.n();
    let (t0, t_end) = (path.t0, path.t0 + path.horizon());
    if !(tau > t0 && tau < t_end) {
        return Err(Error::Domain(alloc::format!("tau must lie in ({t0}, {t_end}), got {tau}")));
    }
    let h = path.h;
    let (lo, hi) = kernel.reach();
    let m_lo = math::ceil((tau + lo * delta - t0) / h).max(0.0) as usize;
    let m_hi_f = math::floor((tau + hi * delta - t0) / h);
    if m_hi_f < 0.0 || m_lo >= n {
        return Err(Error::InsufficientData("no observation inside the kernel window".into()));
    }
    let m_hi = (m_hi_f as usize).min(n - 1);
    let mut num = Vec::with_capacity(m_hi + 1 - m_lo.min(m_hi + 1));
    let mut den = Vec::with_capacity(num.capacity());
    let mut any_weight = false;
    for m in m_lo..=m_hi {
        let w = kernel.eval_scaled(path.time(m) - tau, delta);
        if w > 0.0 {
            any_weight = true;
        }
        let d = path.x[m + 1] - path.x[m];
        if d.abs() <= b[m] {
            num.push(w * d * d);
            den.push(w);
        }
    }
    if !any_weight {
        return Err(Error::InsufficientData("all kernel weights vanish".into()));
    }
    let s = math::pairwise_sum(&num);
    match normalization {
        Normalization::Unnormalized => Ok(s),
        Normalization::Normalized => {
            let w = math::pairwise_sum(&den);
            if !(w > 0.0) {
                return Err(Error::InsufficientData("no retained increment inside the kernel window".into()));
            }
            Ok(s / (h * w))
        }
    }
}

/// Threshold-kernel spot variance at `τ`.
pub fn tkw(
    path: &SamplePath,
    tau: f64,
    delta: f64,
    kernel: &Kernel,
    b: &ThresholdVector,
    normalization: Normalization,
) -> Result<f64> {
    b.check_len(path.n())?;
    point_estimate(path, tau, delta, kernel, b.as_slice(), normalization)
}

/// Kernel spot variance at `τ` without truncation.
pub fn kw(path: &SamplePath, tau: f64, delta: f64, kernel: &Kernel, normalization: Normalization) -> Result<f64> {
    let inf = vec![f64::INFINITY; path.n()];
    point_estimate(path, tau, delta, kernel, &inf, normalization)
}

/// Kernel weights `K_δ(o·h)` for integer offsets `o` in the kernel reach.
fn offset_weights(kernel: &Kernel, h: f64, delta: f64) -> (i64, Vec<f64>) {
    let (lo, hi) = kernel.reach();
    let o_lo = math::ceil(lo * delta / h) as i64;
    let o_hi = math::floor(hi * delta / h) as i64;
    let w = (o_lo..=o_hi).map(|o| kernel.eval_scaled(o as f64 * h, delta)).collect();
    (o_lo, w)
}

/// `Σ_m w(m − i)·u_m` for every grid index `i = 0..=n`, over `m` with
/// `o_range` admissible offsets.
fn windowed_sums(u: &[f64], o_lo: i64, w: &[f64], include: impl Fn(i64) -> bool) -> Vec<f64> {
    let n = u.len() as i64;
    (0..=n)
        .map(|i| {
            let mut acc = 0.0;
            for (k, &wk) in w.iter().enumerate() {
                let o = o_lo + k as i64;
                let m = i + o;
                if m < 0 || m >= n || !include(o) {
                    continue;
                }
                acc += wk * u[m as usize];
            }
            acc
        })
        .collect()
}

/// Two-sided double-exponential sums by forward/backward recursion:
/// `S_i = Σ_m r^{|m−i|}·u_m`, `r = e^{−h/δ}`, for `i = 0..=n`.
fn double_exp_sums(u: &[f64], r: f64) -> Vec<f64> {
    let n = u.len();
    let at = |m: usize| if m < n { u[m] } else { 0.0 };
    let mut out = vec![0.0; n + 1];
    let mut fwd = 0.0;
    for (i, o) in out.iter_mut().enumerate() {
        fwd = r * fwd + at(i);
        *o = fwd;
    }
    let mut back = 0.0;
    for i in (0..n).rev() {
        back = r * (back + at(i + 1));
        out[i] += back;
    }
    out
}

pub(crate) fn spot_series_kept(
    k: &Kept,
    h: f64,
    delta: f64,
    kernel: &Kernel,
    normalization: Normalization,
) -> Result<Vec<f64>> {
    check_delta(delta)?;
    let (num, den) = if kernel.kind() == KernelKind::DoubleExponential {
        let r = math::exp(-h / delta);
        let c = 0.5 / delta;
        let num: Vec<f64> = double_exp_sums(&k.sq, r).into_iter().map(|v| c * v).collect();
        let den = match normalization {
            Normalization::Normalized => double_exp_sums(&k.ind, r).into_iter().map(|v| c * v).collect(),
            Normalization::Unnormalized => Vec::new(),
        };
        (num, den)
    } else {
        let (o_lo, w) = offset_weights(kernel, h, delta);
        let num = windowed_sums(&k.sq, o_lo, &w, |_| true);
        let den = match normalization {
            Normalization::Normalized => windowed_sums(&k.ind, o_lo, &w, |_| true),
            Normalization::Unnormalized => Vec::new(),
        };
        (num, den)
    };
    Ok(match normalization {
        Normalization::Unnormalized => num,
        Normalization::Normalized => {
            num.iter().zip(&den).map(|(s, w)| if *w > 0.0 { s / (h * w) } else { f64::NAN }).collect()
        }
    })
}

/// Spot variance at every grid time `t_i`, `i = 0..=n`. Normalised values
/// with an empty effective window are `NaN`.
pub fn spot_series(
    path: &SamplePath,
    delta: f64,
    kernel: &Kernel,
    b: &ThresholdVector,
    normalization: Normalization,
) -> Result<Vec<f64>> {
    b.check_len(path.n())?;
    let k = kept(&path.increments(), b.as_slice());
    spot_series_kept(&k, path.h, delta, kernel, normalization)
}

/// Left (`j ≤ i`, data before `t_i`) and right (`j > i`, data after `t_i`)
/// normalised estimates at every `t_i`.
pub(crate) fn one_sided_series_kept(k: &Kept, h: f64, delta: f64, kernel: &Kernel) -> (Vec<f64>, Vec<f64>) {
    let n = k.sq.len();
    let (an, ad, bn, bd) = if kernel.kind() == KernelKind::DoubleExponential {
        let r = math::exp(-h / delta);
        // after: Σ_{m≥i} r^{m−i} u_m ; before: Σ_{m≤i−1} r^{i−m} u_m
        let after = |u: &[f64]| {
            let mut out = vec![0.0; n + 1];
            let mut acc = 0.0;
            for i in (0..n).rev() {
                acc = u[i] + r * acc;
                out[i] = acc;
            }
            out
        };
        let before = |u: &[f64]| {
            let mut out = vec![0.0; n + 1];
            let mut acc = 0.0;
            for i in 1..=n {
                acc = r * (acc + u[i - 1]);
                out[i] = acc;
            }
            out
        };
        (after(&k.sq), after(&k.ind), before(&k.sq), before(&k.ind))
    } else {
        let (o_lo, w) = offset_weights(kernel, h, delta);
        (
            windowed_sums(&k.sq, o_lo, &w, |o| o >= 0),
            windowed_sums(&k.ind, o_lo, &w, |o| o >= 0),
            windowed_sums(&k.sq, o_lo, &w, |o| o < 0),
            windowed_sums(&k.ind, o_lo, &w, |o| o < 0),
        )
    };
    let ratio = |s: &[f64], w: &[f64]| -> Vec<f64> {
        s.iter().zip(w).map(|(s, w)| if *w > 0.0 { s / (h * w) } else { f64::NAN }).collect()
    };
    (ratio(&bn, &bd), ratio(&an, &ad))
}

/// Minimum number of observations each side of `t_i` for one-sided estimates.
pub fn side_requirement(h: f64, delta: f64) -> usize {
    math::ceil(delta / h) as usize
}

/// Normalised one-sided estimates at `t_i`: `left` averages the increments
/// `j ≤ i` before `t_i`, `right` those with `j > i`.
pub fn one_sided_estimates(
    path: &SamplePath,
    i: usize,
    delta: f64,
    kernel: &Kernel,
    b: &ThresholdVector,
) -> Result<(f64, f64)> {
    check_delta(delta)?;
    b.check_len(path.n())?;
    let n = path.n();
    let need = side_requirement(path.h, delta);
    if i > n || i < need || n - i < need {
        return Err(Error::InsufficientData(alloc::format!(
            "index {i} needs {need} observations on each side (n = {n})"
        )));
    }
    let k = kept(&path.increments(), b.as_slice());
    let (left, right) = one_sided_series_kept(&k, path.h, delta, kernel);
    let (l, r) = (left[i], right[i]);
    if !(l.is_finite() && r.is_finite()) {
        return Err(Error::InsufficientData(alloc::format!("no retained increment on one side of index {i}")));
    }
    Ok((l, r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsrvvEstimate {
    pub value: f64,
    /// The estimate came out negative (finite-sample artefact, returned as is).
    pub negative: bool,
    pub k: usize,
    pub b_edge: usize,
}

/// Default scale `⌈√n⌉` and edge trim `⌈δ/h⌉`.
pub fn tsrvv_defaults(n: usize, h: f64, delta: f64) -> (usize, usize) {
    (math::ceil(math::sqrt(n as f64)) as usize, side_requirement(h, delta))
}

/// Two-time-scale realised vol-of-vol:
/// `(1/k)·Σ_{i=b}^{n−k−b} (Δ_i^{(k)}σ̂²)² − ((n−k+1)/(nk))·Σ_{i=b+k−1}^{n−k−b} (Δ_iσ̂²)²`
/// with `Δ_i^{(k)}σ̂² = σ̂²_{r,t_{i+k}} − σ̂²_{l,t_i}`.
pub fn tsrvv(
    path: &SamplePath,
    delta: f64,
    kernel: &Kernel,
    b: &ThresholdVector,
    k: usize,
    b_edge: usize,
) -> Result<TsrvvEstimate> {
    check_delta(delta)?;
    b.check_len(path.n())?;
    let n = path.n();
    if k == 0 || n <= 2 * (k + b_edge) {
        return Err(Error::Dimension { expected: 2 * (k.max(1) + b_edge) + 1, found: n });
    }
    let kp = kept(&path.increments(), b.as_slice());
    let (left, right) = one_sided_series_kept(&kp, path.h, delta, kernel);
    let diff = |i: usize, lag: usize| right[i + lag] - left[i];
    let first: Vec<f64> = (b_edge..=n - k - b_edge).map(|i| diff(i, k) * diff(i, k)).collect();
    let second: Vec<f64> = (b_edge + k - 1..=n - k - b_edge).map(|i| diff(i, 1) * diff(i, 1)).collect();
    if first.iter().chain(&second).any(|v| !v.is_finite()) {
        return Err(Error::InsufficientData("one-sided estimate undefined inside the trimmed range".into()));
    }
    let (nf, kf) = (n as f64, k as f64);
    let value = math::pairwise_sum(&first) / kf - (nf - kf + 1.0) / (nf * kf) * math::pairwise_sum(&second);
    Ok(TsrvvEstimate { value, negative: value < 0.0, k, b_edge })
}

/// `(3h)^{−1}·Σ (Δ_iX)⁴·1{|Δ_iX| < B_i}`.
pub fn truncated_quarticity(path: &SamplePath, b: &ThresholdVector) -> Result<f64> {
    b.check_len(path.n())?;
    let q: Vec<f64> = path
        .increments()
        .iter()
        .zip(b.as_slice())
        .map(|(&d, &bi)| if d.abs() < bi { d * d * d * d } else { 0.0 })
        .collect();
    Ok(math::pairwise_sum(&q) / (3.0 * path.h))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthChoice {
    pub delta: f64,
    /// `ÎVV ≤ 0`, so `δ = √h` was used.
    pub fallback: bool,
    pub iq: f64,
    pub ivv: f64,
}

/// `n^{−1/2}·[2T·ÎQ·∫K² / (ÎVV·c₁)]^{1/2}`, or `None` when `ÎVV ≤ 0`.
pub fn plug_in_formula(n: usize, t: f64, iq: f64, ivv: f64, kernel: &Kernel) -> Option<f64> {
    if !(ivv > 0.0) || !(iq > 0.0) {
        return None;
    }
    let v = math::sqrt(2.0 * t * iq * kernel.k2_integral() / (ivv * kernel.c1_cross_integral())) / math::sqrt(n as f64);
    v.is_finite().then_some(v)
}

/// Plug-in bandwidth using truncated quarticity and TSRVV. The TSRVV pilot
/// uses `δ = √h`; `k` and `b_edge` default as in [`tsrvv_defaults`].
pub fn plug_in_bandwidth(
    path: &SamplePath,
    kernel: &Kernel,
    b: &ThresholdVector,
    k: Option<usize>,
    b_edge: Option<usize>,
) -> Result<BandwidthChoice> {
    let pilot = math::sqrt(path.h);
    let (dk, db) = tsrvv_defaults(path.n(), path.h, pilot);
    let iq = truncated_quarticity(path, b)?;
    let ivv = tsrvv(path, pilot, kernel, b, k.unwrap_or(dk), b_edge.unwrap_or(db))?.value;
    Ok(match plug_in_formula(path.n(), path.horizon(), iq, ivv, kernel) {
        Some(delta) => BandwidthChoice { delta, fallback: false, iq, ivv },
        None => BandwidthChoice { delta: pilot, fallback: true, iq, ivv },
    })
}

pub type CovFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Covariance kernel `C_ϖ` of the variance process.
#[derive(Clone)]
pub enum Covariance {
    /// `min(|r|, |s|)·1{rs > 0}` (Brownian-driven variance, `ϖ = 1`).
    Brownian,
    Custom(CovFn),
}

impl Covariance {
    pub fn eval(&self, r: f64, s: f64) -> f64 {
        match self {
            Covariance::Brownian => {
                if r * s > 0.0 {
                    r.abs().min(s.abs())
                } else {
                    0.0
                }
            }
            Covariance::Custom(f) => f(r, s),
        }
    }
}

/// Regularity exponent `ϖ`, scale function `L(t)` and covariance kernel.
#[derive(Clone)]
pub struct VolModelSpec {
    pub varpi: f64,
    pub l_of_t: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub cov: Covariance,
}

impl fmt::Debug for VolModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VolModelSpec").field("varpi", &self.varpi).finish_non_exhaustive()
    }
}

impl VolModelSpec {
    pub fn new(
        varpi: f64,
        l_of_t: impl Fn(f64) -> f64 + Send + Sync + 'static,
        cov: Covariance,
    ) -> Result<Self> {
        let spec = VolModelSpec { varpi, l_of_t: Arc::new(l_of_t), cov };
        spec.validate()?;
        Ok(spec)
    }

    /// Heston variance: `ϖ = 1`, `L(t) = ξ²·E[V_t]` with
    /// `E[V_t] = θ + (v₀ − θ)e^{−κt}`, Brownian covariance.
    pub fn heston(kappa: f64, theta: f64, xi: f64, v0: f64) -> Result<Self> {
        Self::new(1.0, move |t| xi * xi * (theta + (v0 - theta) * math::exp(-kappa * t)), Covariance::Brownian)
    }

    /// Checks `ϖ > 0` and `C(hr, hs) = h^ϖ·C(r, s)` on a fixed set of points.
    pub fn validate(&self) -> Result<()> {
        if !(self.varpi > 0.0 && self.varpi.is_finite()) {
            return Err(Error::InvalidConfig("varpi must be positive".into()));
        }
        const PTS: [(f64, f64, f64); 6] =
            [(0.3, 0.7, 0.5), (-1.2, -0.4, 2.0), (0.9, 0.9, 0.1), (1.7, 0.2, 3.3), (-0.6, -2.5, 0.25), (2.2, 1.1, 7.0)];
        for (r, s, h) in PTS {
            let lhs = self.cov.eval(h * r, h * s);
            let rhs = math::powf(h, self.varpi) * self.cov.eval(r, s);
            if (lhs - rhs).abs() > 1e-9 * (1.0 + rhs.abs()) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "covariance kernel is not homogeneous of order {} at ({r}, {s}, {h})",
                    self.varpi
                )));
            }
        }
        Ok(())
    }

    /// `∬K(x)K(y)·C_ϖ(x, y) dx dy`.
    pub fn cross_integral(&self, kernel: &Kernel) -> Result<f64> {
        match self.cov {
            Covariance::Brownian => Ok(kernel.c1_cross_integral()),
            Covariance::Custom(ref c) => {
                let (a, b) = kernel.reach();
                let inner = |x: f64| -> f64 {
                    let f = |y: f64| kernel.eval(y) * c(x, y);
                    let mut s = 0.0;
                    if a < 0.0 {
                        s += math::integrate(f, a, 0.0, 1e-13, 1e-10).map(|q| q.value).unwrap_or(f64::NAN);
                    }
                    if b > 0.0 {
                        s += math::integrate(f, 0.0, b, 1e-13, 1e-10).map(|q| q.value).unwrap_or(f64::NAN);
                    }
                    kernel.eval(x) * s
                };
                let mut total = 0.0;
                if a < 0.0 {
                    total += math::integrate(inner, a, 0.0, 1e-12, 1e-9)?.value;
                }
                if b > 0.0 {
                    total += math::integrate(inner, 0.0, b, 1e-12, 1e-9)?.value;
                }
                Ok(total)
            }
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Domain(alloc::format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// `2(h/δ)·E[σ⁴]·∫K² + δ^ϖ·L(τ)·∬KK·C_ϖ`.
pub fn mse_expansion(
    sigma4_mean: f64,
    l_tau: f64,
    spec: &VolModelSpec,
    kernel: &Kernel,
    h: f64,
    delta: f64,
) -> Result<f64> {
    for (n, v) in [("sigma4_mean", sigma4_mean), ("l_tau", l_tau), ("h", h), ("delta", delta)] {
        check_positive(n, v)?;
    }
    let cross = spec.cross_integral(kernel)?;
    Ok(2.0 * (h / delta) * sigma4_mean * kernel.k2_integral() + math::powf(delta, spec.varpi) * l_tau * cross)
}

/// Minimiser of [`mse_expansion`] in `δ`: `[2h·E[σ⁴]·∫K² / (ϖ·L·∬KK·C)]^{1/(ϖ+1)}`.
pub fn optimal_bandwidth(sigma4_mean: f64, l_tau: f64, spec: &VolModelSpec, kernel: &Kernel, h: f64) -> Result<f64> {
    for (n, v) in [("sigma4_mean", sigma4_mean), ("l_tau", l_tau), ("h", h)] {
        check_positive(n, v)?;
    }
    let w = spec.varpi;
    let cross = spec.cross_integral(kernel)?;
    Ok(math::powf(2.0 * h * sigma4_mean * kernel.k2_integral() / (w * l_tau * cross), 1.0 / (w + 1.0)))
}

/// Value of [`mse_expansion`] at [`optimal_bandwidth`]:
/// `((1+ϖ)/ϖ)·(2h·E[σ⁴]·∫K²)^{ϖ/(1+ϖ)}·(ϖ·L·∬KK·C)^{1/(1+ϖ)}`.
pub fn optimal_mse(sigma4_mean: f64, l_tau: f64, spec: &VolModelSpec, kernel: &Kernel, h: f64) -> Result<f64> {
    for (n, v) in [("sigma4_mean", sigma4_mean), ("l_tau", l_tau), ("h", h)] {
        check_positive(n, v)?;
    }
    let w = spec.varpi;
    let cross = spec.cross_integral(kernel)?;
    Ok((1.0 + w) / w
        * math::powf(2.0 * h * sigma4_mean * kernel.k2_integral(), w / (1.0 + w))
        * math::powf(w * l_tau * cross, 1.0 / (1.0 + w)))
}
