//! Jump-size distributions.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math;

/// Largest jump count for which a user-supplied law carries a discretised
/// convolution table.
pub const CUSTOM_MAX_CONVOLUTION: usize = 8;
const CUSTOM_GRID: usize = 512;

pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SamplerFn = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

/// Distribution of the i.i.d. jump sizes.
#[derive(Clone)]
pub enum JumpLaw {
    /// Centred Gaussian (Merton) jumps with standard deviation `sd`.
    Normal { sd: f64 },
    /// User-supplied density with its own sampler.
    Custom(CustomLaw),
}

/// A jump law given by a density on a finite effective support.
#[derive(Clone)]
pub struct CustomLaw {
    name: String,
    density: DensityFn,
    sampler: SamplerFn,
    support: (f64, f64),
    c0: f64,
    // k-fold convolutions of the discretised density, k = 2..=CUSTOM_MAX_CONVOLUTION.
    tables: Arc<Vec<ConvolutionTable>>,
}

#[derive(Debug)]
struct ConvolutionTable {
    origin: f64,
    step: f64,
    weights: Vec<f64>,
}

impl fmt::Debug for JumpLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpLaw::Normal { sd } => f.debug_struct("Normal").field("sd", sd).finish(),
            JumpLaw::Custom(c) => f
                .debug_struct("Custom")
                .field("name", &c.name)
                .field("support", &c.support)
                .field("c0", &c.c0)
                .finish(),
        }
    }
}

impl JumpLaw {
    pub fn normal(sd: f64) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::Domain(alloc::format!("jump sd must be positive, got {sd}")));
        }
        Ok(JumpLaw::Normal { sd })
    }

    /// Build a law from a density and sampler. `support` must be finite and
    /// contain the origin; the density has to integrate to one on it within
    /// `1e-6`. `c0` is the mass concentration at the origin, `p f₊(0) + q f₋(0)`.
    pub fn custom(
        name: impl Into<String>,
        density: DensityFn,
        sampler: SamplerFn,
        support: (f64, f64),
        c0: f64,
    ) -> Result<Self> {
        let (lo, hi) = support;
        if !(lo.is_finite() && hi.is_finite() && lo < 0.0 && hi > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "custom jump law support must be finite and contain 0, got ({lo}, {hi})"
            )));
        }
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!("c0 must be positive, got {c0}")));
        }
        let d = density.clone();
        let left = math::integrate(|x| d(x), lo, 0.0, 1e-12, 1e-10)?;
        let right = math::integrate(|x| d(x), 0.0, hi, 1e-12, 1e-10)?;
        let mass = left.value + right.value;
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidConfig(alloc::format!(
                "custom jump density integrates to {mass}, expected 1"
            )));
        }
        let step = (hi - lo) / CUSTOM_GRID as f64;
        let base: Vec<f64> = (0..CUSTOM_GRID)
            .map(|j| {
                let x = lo + (j as f64 + 0.5) * step;
                let v = density(x);
                if v < 0.0 {
                    f64::NAN
                } else {
                    v * step
                }
            })
            .collect();
        if base.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidConfig("custom jump density takes negative values".into()));
        }
        let mut tables = Vec::with_capacity(CUSTOM_MAX_CONVOLUTION - 1);
        let mut current = base.clone();
        for k in 2..=CUSTOM_MAX_CONVOLUTION {
            current = convolve(&current, &base);
            tables.push(ConvolutionTable {
                origin: k as f64 * lo + 0.5 * k as f64 * step,
                step,
                weights: current.clone(),
            });
        }
        Ok(JumpLaw::Custom(CustomLaw {
            name: name.into(),
            density,
            sampler,
            support,
            c0,
            tables: Arc::new(tables),
        }))
    }

    /// Jump-size density at `x`.
    pub fn density(&self, x: f64) -> f64 {
        match self {
            JumpLaw::Normal { sd } => math::gauss_density(x, 0.0, *sd),
            JumpLaw::Custom(c) => (c.density)(x),
        }
    }

    /// `C₀(f)`, the density mass at the origin.
    pub fn c0(&self) -> f64 {
        match self {
            JumpLaw::Normal { sd } => math::FRAC_1_SQRT_2PI / sd,
            JumpLaw::Custom(c) => c.c0,
        }
    }

    pub fn sample<R: RngCore>(&self, rng: &mut R) -> f64 {
        match self {
            JumpLaw::Normal { sd } => {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            }
            JumpLaw::Custom(c) => (c.sampler)(rng),
        }
    }

    /// Largest jump count supported by [`Self::prob_abs_le`] and
    /// [`Self::conv_density`].
    pub fn max_convolution(&self) -> usize {
        match self {
            JumpLaw::Normal { .. } => usize::MAX,
            JumpLaw::Custom(_) => CUSTOM_MAX_CONVOLUTION,
        }
    }

    /// `P(|m + s·Z + ζ₁ + … + ζ_k| <= b)` with `Z` standard normal.
    pub fn prob_abs_le(&self, k: usize, mean: f64, sd: f64, b: f64) -> Result<f64> {
        if k == 0 {
            return Ok(math::gauss_abs_le(b, mean, sd));
        }
        match self {
            JumpLaw::Normal { sd: jsd } => {
                Ok(math::gauss_abs_le(b, mean, math::sqrt(sd * sd + k as f64 * jsd * jsd)))
            }
            JumpLaw::Custom(c) => {
                if b <= 0.0 {
                    return Ok(0.0);
                }
                if k == 1 {
                    let (lo, hi) = c.support;
                    let a = lo.max(-b - mean - 9.0 * sd);
                    let z = hi.min(b - mean + 9.0 * sd);
                    if a >= z {
                        return Ok(0.0);
                    }
                    let f = |u: f64| (c.density)(u) * math::gauss_abs_le(b, mean + u, sd);
                    let mut total = 0.0;
                    for (x0, x1) in split_at_zero(a, z) {
                        total += math::integrate(f, x0, x1, 1e-15, 1e-11)?.value;
                    }
                    Ok(total)
                } else {
                    let t = c.table(k)?;
                    let mut acc = 0.0;
                    for (j, &w) in t.weights.iter().enumerate() {
                        if w != 0.0 {
                            acc += w * math::gauss_abs_le(b, mean + t.origin + j as f64 * t.step, sd);
                        }
                    }
                    Ok(acc)
                }
            }
        }
    }

    /// Density of `m + s·Z + ζ₁ + … + ζ_k` at `x`.
    pub fn conv_density(&self, k: usize, mean: f64, sd: f64, x: f64) -> Result<f64> {
        if k == 0 {
            return Ok(math::gauss_density(x, mean, sd));
        }
        match self {
            JumpLaw::Normal { sd: jsd } => {
                Ok(math::gauss_density(x, mean, math::sqrt(sd * sd + k as f64 * jsd * jsd)))
            }
            JumpLaw::Custom(c) => {
                if k == 1 {
                    let (lo, hi) = c.support;
                    let a = lo.max(x - mean - 9.0 * sd);
                    let z = hi.min(x - mean + 9.0 * sd);
                    if a >= z {
                        return Ok(0.0);
                    }
                    let f = |u: f64| (c.density)(u) * math::gauss_density(x - u, mean, sd);
                    let mut total = 0.0;
                    for (x0, x1) in split_at_zero(a, z) {
                        total += math::integrate(f, x0, x1, 1e-13, 1e-11)?.value;
                    }
                    Ok(total)
                } else {
                    let t = c.table(k)?;
                    let mut acc = 0.0;
                    for (j, &w) in t.weights.iter().enumerate() {
                        if w != 0.0 {
                            acc += w * math::gauss_density(x, mean + t.origin + j as f64 * t.step, sd);
                        }
                    }
                    Ok(acc)
                }
            }
        }
    }
}

impl CustomLaw {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    fn table(&self, k: usize) -> Result<&ConvolutionTable> {
        self.tables.get(k.wrapping_sub(2)).ok_or_else(|| {
            Error::Numerical(alloc::format!(
                "{k}-fold convolution exceeds the tabulated maximum {CUSTOM_MAX_CONVOLUTION}"
            ))
        })
    }
}

fn split_at_zero(a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let parts = if a < 0.0 && b > 0.0 { [(a, 0.0), (0.0, b)] } else { [(a, b), (0.0, 0.0)] };
    parts.into_iter().filter(|(x0, x1)| x1 > x0)
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = alloc::vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}
