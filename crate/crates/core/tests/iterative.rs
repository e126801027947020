use proptest::prelude::*;
use tkjump::{
    algo_constant_first_order, algo_constant_second_order, algo_local, classify, lambda_sigma_hat, oracle_threshold,
    sample_loss, simulate_path, spot_series, threshold_first_order, threshold_second_order, AlgoOptions,
    AlgorithmOutput, Classification, HestonMertonConfig, Kernel, Method, Normalization, Order, Status,
};

const H5: f64 = 1.0 / 19_656.0;

fn sim(lambda: f64, sd: f64, rho: f64, days: usize, seed: u64) -> tkjump::SamplePath {
    let cfg = HestonMertonConfig::reference(lambda, sd, rho, seed).unwrap();
    simulate_path(&cfg, days * 78, H5, 16).unwrap()
}

fn check_trace(out: &AlgorithmOutput) {
    let t = &out.trace;
    assert_eq!(t.iterations_used, t.records.len());
    assert!(t.iterations_used >= 1);
    let mut digests = vec![t.initial_digest];
    digests.extend(t.records.iter().map(|r| r.digest));
    match t.status {
        Status::FixedPoint => {
            let k = digests.len();
            assert_eq!(digests[k - 1], digests[k - 2]);
            assert_eq!(out.report.classification.digest, digests[k - 1]);
        }
        Status::Cycle { period } => {
            assert!(period >= 2);
            let k = digests.len();
            assert_eq!(digests[k - 1], digests[k - 1 - period]);
        }
        Status::MaxIter => {}
    }
    for r in &t.records {
        assert_eq!(Classification::from_flags(r.flags.clone()).digest, r.digest);
    }
}

#[test]
fn every_method_terminates_with_a_consistent_trace() {
    let opts = AlgoOptions::default();
    for (i, &(lambda, sd)) in [(50.0, 0.03), (200.0, 0.03), (1000.0, 0.01)].iter().enumerate() {
        for seed in 0..8 {
            let path = sim(lambda, sd, -0.5, 21, 100 * i as u64 + seed);
            let c1 = algo_constant_first_order(&path).unwrap();
            assert!(!matches!(c1.trace.status, Status::Cycle { .. }));
            assert_eq!(c1.trace.status, Status::FixedPoint);
            check_trace(&c1);
            for m in [Method::C1, Method::C2, Method::N1, Method::N2] {
                let out = m.run(&path, &opts).unwrap();
                assert!(out.trace.iterations_used <= opts.max_iter);
                check_trace(&out);
            }
        }
    }
}

#[test]
fn first_order_fixed_points_are_exact() {
    let h = H5;
    for seed in 0..6 {
        let path = sim(200.0, 0.03, 0.0, 21, seed);
        let c1 = algo_constant_first_order(&path).unwrap();
        let (_, s2) = lambda_sigma_hat(&path, &c1.thresholds).unwrap();
        let again = threshold_first_order(s2, h).unwrap();
        assert!(c1.thresholds.as_slice().iter().all(|&b| b == again));

        let opts = AlgoOptions { max_iter: 50, ..AlgoOptions::default() };
        let n1 = algo_local(&path, Order::First, &opts).unwrap();
        if n1.trace.status == Status::FixedPoint {
            let spot =
                spot_series(&path, h.sqrt(), &Kernel::double_exponential(), &n1.thresholds, Normalization::Unnormalized)
                    .unwrap();
            let l = (1.0 / h).ln();
            for (m, &b) in n1.thresholds.as_slice().iter().enumerate() {
                assert_eq!(b, (3.0 * spot[m + 1] * h * l).sqrt());
            }
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let path = sim(1000.0, 0.01, -0.5, 21, 7);
    let opts = AlgoOptions::default();
    for m in [Method::C1, Method::C2, Method::N1, Method::N2] {
        assert_eq!(m.run(&path, &opts).unwrap(), m.run(&path, &opts).unwrap());
    }
    assert_eq!(path, sim(1000.0, 0.01, -0.5, 21, 7));
}

#[test]
fn local_first_order_is_flat_under_constant_volatility() {
    let mut cfg = HestonMertonConfig::reference(100.0, 0.03, 0.0, 3).unwrap();
    cfg.xi = 0.0;
    let path = simulate_path(&cfg, 63 * 78, H5, 16).unwrap();
    let out = algo_local(&path, Order::First, &AlgoOptions::default()).unwrap();
    let b = out.thresholds.as_slice();
    let inner = &b[200..b.len() - 200];
    let mean = inner.iter().sum::<f64>() / inner.len() as f64;
    let sd = (inner.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (inner.len() as f64 - 1.0)).sqrt();
    assert!(sd / mean < 0.2, "cv {}", sd / mean);

    let law = cfg.jump_law.clone();
    for order in [Order::First, Order::Second] {
        let o = oracle_threshold(&path, order, &law).unwrap();
        let want = match order {
            Order::First => threshold_first_order(0.04, H5).unwrap(),
            Order::Second => threshold_second_order(0.04, 100.0, law.c0(), H5).unwrap().threshold,
        };
        assert!(o.as_slice().iter().all(|&b| (b - want).abs() <= 1e-15 * want));
    }
}

#[test]
fn second_order_falls_back_when_density_is_unavailable() {
    // Almost no jumps: f̂(0) has too few exceedances and B^{c2} equals B^{c1}.
    let path = sim(0.0, 0.03, 0.0, 21, 11);
    let out = algo_constant_second_order(&path, &AlgoOptions::default()).unwrap();
    for r in &out.trace.records {
        assert!(r.f0.as_ref().unwrap().insufficient_data);
        assert_eq!(r.fallback_count, path.n());
        assert_eq!(r.b_min, threshold_first_order(r.sigma2_hat, H5).unwrap());
    }
}

#[test]
fn second_order_methods_beat_first_order_with_many_small_jumps() {
    let opts = AlgoOptions::default();
    let (mut c1, mut n2) = (0, 0);
    for seed in 0..20 {
        let path = sim(1000.0, 0.01, 0.0, 21, 500 + seed);
        let counts = &path.latent.as_ref().unwrap().jump_count;
        let loss = |m: Method| sample_loss(&m.run(&path, &opts).unwrap().report.classification, counts).unwrap();
        c1 += loss(Method::C1);
        n2 += loss(Method::N2);
    }
    assert!(n2 < c1, "n2 {n2} vs c1 {c1}");
}

proptest! {
    #[test]
    fn loss_of_complement(counts in prop::collection::vec(0u32..2, 1..200), flags in prop::collection::vec(any::<bool>(), 200)) {
        let flags = flags[..counts.len()].to_vec();
        let c = Classification::from_flags(flags.clone());
        let not = Classification::from_flags(flags.iter().map(|f| !f).collect());
        let a = sample_loss(&c, &counts).unwrap();
        let b = sample_loss(&not, &counts).unwrap();
        prop_assert_eq!(a + b, counts.len());
        let perfect = Classification::from_flags(counts.iter().map(|&k| k > 0).collect());
        prop_assert_eq!(sample_loss(&perfect, &counts).unwrap(), 0);
    }
}

#[test]
fn classification_of_reported_thresholds_matches_report() {
    let path = sim(200.0, 0.03, -0.5, 21, 9);
    let out = Method::N2.run(&path, &AlgoOptions::default()).unwrap();
    assert_eq!(classify(&path, &out.thresholds).unwrap(), out.report.classification);
    assert!(sample_loss(&out.report.classification, &[0; 3]).is_err());
}
