use proptest::prelude::*;
use tkjump::spot_vol::{optimal_bandwidth, optimal_mse};
use tkjump::{
    algo_constant_first_order, kw, mse_expansion, one_sided_estimates, plug_in_bandwidth, simulate_path, tkw,
    truncated_quarticity, tsrvv, HestonMertonConfig, Kernel, Normalization, SamplePath, ThresholdVector,
    VolModelSpec,
};

const H5: f64 = 1.0 / 19_656.0;
const HALF_YEAR: usize = 126 * 78;

fn path_from(inc: &[f64]) -> SamplePath {
    let mut x = vec![0.0];
    for d in inc {
        x.push(x.last().unwrap() + d);
    }
    SamplePath::new(0.0, H5, x).unwrap()
}

fn heston(lambda: f64, xi: f64, seed: u64) -> HestonMertonConfig {
    let mut cfg = HestonMertonConfig::reference(lambda, 0.03, 0.0, seed).unwrap();
    cfg.xi = xi;
    cfg
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truncation_only_removes_mass(
        inc in prop::collection::vec(-0.02f64..0.02, 200..400),
        b in 0.001f64..0.02,
        tau_frac in 0.2f64..0.8,
    ) {
        let path = path_from(&inc);
        let tau = tau_frac * path.horizon();
        let delta = 40.0 * H5;
        let k = Kernel::double_exponential();
        let tv = ThresholdVector::constant(path.n(), b).unwrap();
        let un_t = tkw(&path, tau, delta, &k, &tv, Normalization::Unnormalized).unwrap();
        let un_k = kw(&path, tau, delta, &k, Normalization::Unnormalized).unwrap();
        prop_assert!(un_t >= 0.0);
        prop_assert!(un_t <= un_k * (1.0 + 1e-12));
        let inf = ThresholdVector::infinite(path.n());
        prop_assert_eq!(tkw(&path, tau, delta, &k, &inf, Normalization::Unnormalized).unwrap(), un_k);
        if let Ok(norm) = tkw(&path, tau, delta, &k, &tv, Normalization::Normalized) {
            let cap = inc.iter().filter(|d| d.abs() <= b).map(|d| d * d).fold(0.0, f64::max) / H5;
            prop_assert!(norm >= 0.0 && norm <= cap * (1.0 + 1e-12));
        }
    }

    #[test]
    fn quarticity_scales_by_sixteen(inc in prop::collection::vec(-0.01f64..0.01, 10..100), b in 0.001f64..0.01) {
        let doubled: Vec<f64> = inc.iter().map(|d| 2.0 * d).collect();
        let a = truncated_quarticity(&path_from(&inc), &ThresholdVector::constant(inc.len(), b).unwrap()).unwrap();
        let c = truncated_quarticity(&path_from(&doubled), &ThresholdVector::constant(inc.len(), 2.0 * b).unwrap()).unwrap();
        prop_assert!((c - 16.0 * a).abs() <= 1e-9 * c.max(1e-300));
    }
}

#[test]
fn exceeding_everything_gives_zero_or_error() {
    let path = path_from(&[0.01; 300]);
    let b = ThresholdVector::constant(300, 0.001).unwrap();
    let k = Kernel::uniform();
    let tau = path.horizon() / 2.0;
    assert_eq!(tkw(&path, tau, 50.0 * H5, &k, &b, Normalization::Unnormalized).unwrap(), 0.0);
    assert!(tkw(&path, tau, 50.0 * H5, &k, &b, Normalization::Normalized).is_err());
    assert_eq!(truncated_quarticity(&path, &b).unwrap(), 0.0);
}

#[test]
fn closed_form_mse_prefers_double_exponential() {
    let spec = VolModelSpec::heston(5.0, 0.04, 0.5, 0.04).unwrap();
    let best = optimal_mse(0.0026, 0.01, &spec, &Kernel::double_exponential(), H5).unwrap();
    for k in [Kernel::uniform(), Kernel::gaussian(), Kernel::one_sided_exponential()] {
        assert!(best < optimal_mse(0.0026, 0.01, &spec, &k, H5).unwrap(), "{}", k.name());
    }
}

// Stationary Heston without jumps: E[V] = θ, Var(V) = θξ²/(2κ).
#[test]
fn empirical_mse_matches_expansion_and_kernel_ranking() {
    let (theta, xi, kappa) = (0.04, 0.5, 5.0);
    let sigma4 = theta * theta + theta * xi * xi / (2.0 * kappa);
    let l_tau = xi * xi * theta;
    let spec = VolModelSpec::heston(kappa, theta, xi, theta).unwrap();
    let kernels = [Kernel::double_exponential(), Kernel::uniform(), Kernel::gaussian()];
    let deltas: Vec<f64> = kernels.iter().map(|k| optimal_bandwidth(sigma4, l_tau, &spec, k, H5).unwrap()).collect();
    let m = 500;
    let mut sq = vec![0.0; kernels.len()];
    for r in 0..m {
        let path = simulate_path(&heston(0.0, xi, 10_000 + r), HALF_YEAR, H5, 16).unwrap();
        let i = HALF_YEAR / 2;
        let truth = path.latent.as_ref().unwrap().variance[i];
        let b = ThresholdVector::infinite(path.n());
        for (j, k) in kernels.iter().enumerate() {
            let est = tkw(&path, path.time(i), deltas[j], k, &b, Normalization::Normalized).unwrap();
            sq[j] += (est - truth).powi(2) / m as f64;
        }
    }
    let predicted = mse_expansion(sigma4, l_tau, &spec, &kernels[0], H5, deltas[0]).unwrap();
    assert!((sq[0] / predicted - 1.0).abs() < 0.35, "empirical {} vs predicted {predicted}", sq[0]);
    assert!(sq[0] < sq[1] && sq[0] < sq[2], "{sq:?}");
}

#[test]
fn clt_variance_scaling_with_constant_volatility() {
    let sigma2 = 0.04;
    let k = Kernel::double_exponential();
    let n = HALF_YEAR;
    let delta = H5.sqrt();
    let mut z = Vec::new();
    for r in 0..500 {
        let mut cfg = heston(0.0, 0.0, 20_000 + r);
        cfg.drift.b = 0.0;
        let path = simulate_path(&cfg, n, H5, 1).unwrap();
        let est = kw(&path, path.horizon() / 2.0, delta, &k, Normalization::Normalized).unwrap();
        z.push((est - sigma2) / (H5 / delta).sqrt());
    }
    let (_, var) = mean_var(&z);
    let want = 2.0 * sigma2 * sigma2 * k.k2_integral();
    assert!((var / want - 1.0).abs() < 0.25, "{var} vs {want}");
}

#[test]
fn threshold_constant_barely_matters() {
    let k = Kernel::double_exponential();
    let delta = H5.sqrt();
    let mut mse = [0.0; 2];
    let m = 200;
    for r in 0..m {
        let path = simulate_path(&heston(200.0, 0.5, 30_000 + r), HALF_YEAR, H5, 16).unwrap();
        let s2 = algo_constant_first_order(&path).unwrap().report.sigma2_hat;
        let i = HALF_YEAR / 2;
        let truth = path.latent.as_ref().unwrap().variance[i];
        for (j, c) in [2.0, 3.0].into_iter().enumerate() {
            let b = ThresholdVector::constant(path.n(), (c * s2 * H5 * (1.0 / H5).ln()).sqrt()).unwrap();
            let est = tkw(&path, path.time(i), delta, &k, &b, Normalization::Normalized).unwrap();
            mse[j] += (est - truth).powi(2) / m as f64;
        }
    }
    assert!((mse[0] / mse[1] - 1.0).abs() < 0.10, "{mse:?}");
}

#[test]
fn vol_of_vol_estimates() {
    let k = Kernel::double_exponential();
    let delta = H5.sqrt();
    let (theta, xi, t) = (0.04, 0.5, HALF_YEAR as f64 * H5);
    let scale = xi * xi * theta * t;
    let mut positive = 0;
    let mut ratio = Vec::new();
    let mut flat = Vec::new();
    let m = 200;
    for r in 0..m {
        let path = simulate_path(&heston(0.0, xi, 40_000 + r), HALF_YEAR, H5, 16).unwrap();
        let b = ThresholdVector::infinite(path.n());
        let (kk, edge) = tkjump::spot_vol::tsrvv_defaults(path.n(), H5, delta);
        let est = tsrvv(&path, delta, &k, &b, kk, edge).unwrap();
        let v = &path.latent.as_ref().unwrap().variance;
        let truth = xi * xi * H5 * v[..HALF_YEAR].iter().sum::<f64>();
        positive += usize::from(est.value > 0.0);
        ratio.push(est.value / truth);
        if r < 50 {
            let p0 = simulate_path(&heston(0.0, 0.0, 40_000 + r), HALF_YEAR, H5, 16).unwrap();
            flat.push(tsrvv(&p0, delta, &k, &b, kk, edge).unwrap().value);
        }
    }
    let (mean_ratio, _) = mean_var(&ratio);
    assert!(positive as f64 >= 0.8 * m as f64, "{positive} positive of {m}");
    assert!((mean_ratio - 1.0).abs() < 0.5, "mean ratio {mean_ratio}");
    let (flat_mean, _) = mean_var(&flat);
    assert!(flat_mean.abs() < 0.1 * scale, "{flat_mean} vs {scale}");
}

#[test]
fn plug_in_bandwidth_is_near_root_h() {
    let k = Kernel::double_exponential();
    for r in 0..100 {
        let path = simulate_path(&heston(200.0, 0.5, 50_000 + r), HALF_YEAR, H5, 16).unwrap();
        let b = algo_constant_first_order(&path).unwrap().thresholds;
        let choice = plug_in_bandwidth(&path, &k, &b, None, None).unwrap();
        let ratio = choice.delta / H5.sqrt();
        assert!((1.0 / 3.0..=3.0).contains(&ratio), "replicate {r}: delta/sqrt(h) = {ratio}");
    }
}

#[test]
fn constant_variance_moments() {
    let sigma2 = 0.04;
    let n = 21 * 78;
    let k = Kernel::double_exponential();
    let delta = 4.0 * H5.sqrt();
    let mut iq = Vec::new();
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for r in 0..300 {
        let mut cfg = heston(0.0, 0.0, 60_000 + r);
        cfg.drift.b = 0.0;
        cfg.drift.a = 0.0;
        let path = simulate_path(&cfg, n, H5, 1).unwrap();
        let inf = ThresholdVector::infinite(n);
        iq.push(truncated_quarticity(&path, &inf).unwrap());
        let (l, rr) = one_sided_estimates(&path, n / 2, delta, &k, &inf).unwrap();
        left.push(l);
        right.push(rr);
    }
    let t = n as f64 * H5;
    let (m, v) = mean_var(&iq);
    assert!((m - sigma2 * sigma2 * t).abs() < 3.0 * (v / iq.len() as f64).sqrt(), "{m}");
    let (ml, _) = mean_var(&left);
    let (mr, _) = mean_var(&right);
    assert!((ml / sigma2 - 1.0).abs() < 0.05 && (mr / sigma2 - 1.0).abs() < 0.05, "{ml} {mr}");
}
