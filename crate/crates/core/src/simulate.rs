//! Heston stochastic volatility plus compound-Poisson jumps, sampled on a
//! uniform grid together with the latent truth needed to score estimators.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::law::JumpLaw;
use crate::math;

/// Affine drift `μ_t = a + b·V_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineDrift {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone)]
pub struct HestonMertonConfig {
    /// Mean-reversion speed of the variance (per year).
    pub kappa: f64,
    /// Long-run variance.
    pub theta: f64,
    /// Volatility of variance.
    pub xi: f64,
    /// Correlation between the price and variance Brownian drivers.
    pub rho: f64,
    pub drift: AffineDrift,
    /// Constant jump intensity (jumps per year).
    pub lambda: f64,
    pub jump_law: JumpLaw,
    pub x0: f64,
    pub v0: f64,
    pub seed: u64,
}

impl HestonMertonConfig {
    /// The reference parameter set `κ = 5, θ = 0.04, ξ = 0.5, μ_t = 0.05 − V_t/2`,
    /// `X₀ = 1`, `V₀ = 0.04`, with Merton jumps of standard deviation `jump_sd`.
    pub fn reference(lambda: f64, jump_sd: f64, rho: f64, seed: u64) -> Result<Self> {
        let cfg = HestonMertonConfig {
            kappa: 5.0,
            theta: 0.04,
            xi: 0.5,
            rho,
            drift: AffineDrift { a: 0.05, b: -0.5 },
            lambda,
            jump_law: JumpLaw::normal(jump_sd)?,
            x0: 1.0,
            v0: 0.04,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        let finite = [self.kappa, self.theta, self.xi, self.rho, self.drift.a, self.drift.b, self.lambda, self.x0, self.v0]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return bad("all parameters must be finite");
        }
        if self.kappa <= 0.0 {
            return bad("kappa must be positive");
        }
        if self.theta <= 0.0 {
            return bad("theta must be positive");
        }
        if self.xi < 0.0 {
            return bad("xi must be non-negative");
        }
        if self.rho.abs() > 1.0 {
            return bad("rho must lie in [-1, 1]");
        }
        if self.lambda < 0.0 {
            return bad("lambda must be non-negative");
        }
        if self.v0 <= 0.0 {
            return bad("v0 must be positive");
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        HestonMertonConfig { seed, ..self.clone() }
    }
}

/// Ground truth recorded alongside a simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    /// Jump count `Δ_iN` of each interval `(t_{i-1}, t_i]`, length `n`.
    pub jump_count: Vec<u32>,
    /// Sum of the jump sizes in each interval, length `n`.
    pub jump_sum: Vec<f64>,
    /// Variance `V_{t_i}` on the grid, length `n + 1`.
    pub variance: Vec<f64>,
    /// Drift `μ_{t_i}` on the grid, length `n + 1`.
    pub drift: Vec<f64>,
    /// Jump intensity used to generate the path.
    pub intensity: f64,
}

/// Observations `X_{t_i}`, `t_i = t0 + i·h`, `i = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub t0: f64,
    pub h: f64,
    pub x: Vec<f64>,
    pub latent: Option<Latent>,
}

impl SamplePath {
    pub fn new(t0: f64, h: f64, x: Vec<f64>) -> Result<Self> {
        let path = SamplePath { t0, h, x, latent: None };
        path.validate()?;
        Ok(path)
    }

    pub fn with_latent(mut self, latent: Latent) -> Result<Self> {
        self.latent = Some(latent);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidConfig("observation spacing must be positive".into()));
        }
        if self.x.len() < 2 {
            return Err(Error::EmptyInput);
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("observations must be finite".into()));
        }
        if let Some(l) = &self.latent {
            let n = self.n();
            for (len, want) in [
                (l.jump_count.len(), n),
                (l.jump_sum.len(), n),
                (l.variance.len(), n + 1),
                (l.drift.len(), n + 1),
            ] {
                if len != want {
                    return Err(Error::Dimension { expected: want, found: len });
                }
            }
        }
        Ok(())
    }

    /// Number of increments.
    pub fn n(&self) -> usize {
        self.x.len().saturating_sub(1)
    }

    /// Horizon `T = n·h`.
    pub fn horizon(&self) -> f64 {
        self.n() as f64 * self.h
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.h
    }

    /// `Δ_iX = X_{t_i} − X_{t_{i−1}}` for `i = 1..=n`, stored at index `i − 1`.
    pub fn increments(&self) -> Vec<f64> {
        self.x.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Merton jump-size density, `N(0, sd²)` evaluated at `x`.
pub fn merton_density(x: f64, sd: f64) -> Result<f64> {
    if !(sd > 0.0) {
        return Err(Error::Domain(alloc::format!("jump sd must be positive, got {sd}")));
    }
    Ok(math::gauss_density(x, 0.0, sd))
}

/// Simulate `n` increments at spacing `h`.
///
/// The variance follows a full-truncation Euler scheme on a sub-grid of
/// `h / substeps`; leverage is introduced by correlating the two Gaussian
/// draws of each substep. Jump counts are drawn per interval from
/// `Poisson(λh)` and their i.i.d. sizes are added to the interval increment.
pub fn simulate_path(cfg: &HestonMertonConfig, n: usize, h: f64, substeps: usize) -> Result<SamplePath> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidConfig("h must be positive".into()));
    }
    if substeps == 0 {
        return Err(Error::InvalidConfig("substeps must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let poisson = if cfg.lambda > 0.0 {
        Some(Poisson::new(cfg.lambda * h).map_err(|e| Error::InvalidConfig(alloc::format!("{e}")))?)
    } else {
        None
    };
    let dt = h / substeps as f64;
    let sqrt_dt = math::sqrt(dt);
    let rho_c = math::sqrt((1.0 - cfg.rho * cfg.rho).max(0.0));

    let mut x = Vec::with_capacity(n + 1);
    let mut variance = Vec::with_capacity(n + 1);
    let mut drift = Vec::with_capacity(n + 1);
    let mut jump_count = Vec::with_capacity(n);
    let mut jump_sum = Vec::with_capacity(n);

    let mut xc = cfg.x0;
    let mut v = cfg.v0;
    let mut jumps = 0.0;
    x.push(cfg.x0);
    variance.push(v.max(0.0));
    drift.push(cfg.drift.a + cfg.drift.b * v.max(0.0));

    for _ in 0..n {
        for _ in 0..substeps {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let vp = v.max(0.0);
            let sv = math::sqrt(vp);
            let mu = cfg.drift.a + cfg.drift.b * vp;
            xc += mu * dt + sv * sqrt_dt * z1;
            v += cfg.kappa * (cfg.theta - vp) * dt + cfg.xi * sv * sqrt_dt * (cfg.rho * z1 + rho_c * z2);
        }
        let count = match &poisson {
            Some(p) => {
                let c: f64 = p.sample(&mut rng);
                c as u32
            }
            None => 0,
        };
        let mut s = 0.0;
        for _ in 0..count {
            s += cfg.jump_law.sample(&mut rng);
        }
        jumps += s;
        jump_count.push(count);
        jump_sum.push(s);
        let vp = v.max(0.0);
        x.push(xc + jumps);
        variance.push(vp);
        drift.push(cfg.drift.a + cfg.drift.b * vp);
    }

    let path = SamplePath {
        t0: 0.0,
        h,
        x,
        latent: Some(Latent { jump_count, jump_sum, variance, drift, intensity: cfg.lambda }),
    };
    path.validate()?;
    Ok(path)
}
