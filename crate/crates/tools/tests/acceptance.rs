//! End-to-end acceptance run. Prints one line per criterion.
//!
//! Desk scale (200 replicates, 5 SE for the loss table) by default; set
//! `TKJUMP_ACCEPTANCE_FULL=1` for 1000 replicates and 3 SE.

use std::path::Path;
use std::process::ExitCode;

use tkjump::thresholds::unimodality_scan;
use tkjump::{
    conditional_density_gap, density_threshold, fixed_point_residual, optimal_threshold_exact,
    threshold_first_order, threshold_second_order, JumpLaw, LocalParams,
};
use tkjump_tools::harness::{
    self, run_convergence_study, run_f0_study, run_misclassification_study, run_spotvol_sse_study,
    run_trv_bias_variance_check, BiasVarianceSpec, Scenario, StudySpec,
};

const H5: f64 = 1.0 / 19_656.0;
const METHODS: [&str; 5] = ["c1", "c2", "n1", "n2", "oracle"];

/// Criteria that are known to miss at the reference seeds; see the README.
const EXPECTED_SHORTFALLS: &[u8] = &[2, 7];

// (days, rho, lambda, jump sd): c1, c2, n1, n2, oracle.
const TABLE1: [(u32, f64, f64, f64, [f64; 5]); 10] = [
    (21, 0.0, 100.0, 0.03, [1.669, 1.591, 1.623, 1.382, 1.259]),
    (21, -0.5, 100.0, 0.03, [1.628, 1.643, 1.584, 1.381, 1.272]),
    (21, 0.0, 200.0, 0.03, [3.384, 2.967, 3.318, 2.603, 2.529]),
    (21, -0.5, 200.0, 0.03, [3.372, 2.882, 3.284, 2.577, 2.487]),
    (21, 0.0, 1000.0, 0.01, [51.301, 32.673, 49.700, 31.087, 30.218]),
    (21, -0.5, 1000.0, 0.01, [51.547, 32.937, 49.895, 31.361, 30.480]),
    (63, 0.0, 200.0, 0.03, [10.195, 11.518, 9.842, 7.651, 7.491]),
    (63, -0.5, 200.0, 0.03, [10.001, 11.144, 9.658, 7.515, 7.339]),
    (63, 0.0, 1000.0, 0.01, [148.661, 107.325, 143.339, 89.477, 87.434]),
    (63, -0.5, 1000.0, 0.01, [149.923, 107.895, 144.979, 90.393, 88.293]),
];

// Loss of the local second-order method after iterations 1 to 4.
const TABLE2: [[f64; 4]; 10] = [
    [1.383, 1.382, 1.382, 1.382],
    [1.384, 1.382, 1.381, 1.381],
    [2.602, 2.603, 2.603, 2.603],
    [2.586, 2.577, 2.577, 2.577],
    [31.855, 31.216, 31.121, 31.087],
    [32.080, 31.482, 31.385, 31.361],
    [7.680, 7.653, 7.651, 7.651],
    [7.544, 7.517, 7.515, 7.515],
    [91.283, 89.747, 89.526, 89.477],
    [92.324, 90.722, 90.411, 90.393],
];

// (days, rho, lambda, jump sd): mean and sd of the jump density estimate.
const TABLE3: [(u32, f64, f64, f64, f64, f64); 15] = [
    (21, 0.0, 100.0, 0.03, 8.6965, 5.4797),
    (21, -0.5, 100.0, 0.03, 8.8117, 5.6950),
    (63, 0.0, 100.0, 0.03, 11.6005, 2.1668),
    (63, -0.5, 100.0, 0.03, 11.4145, 2.2175),
    (126, -0.5, 100.0, 0.03, 11.9558, 1.6286),
    (21, 0.0, 200.0, 0.03, 11.2759, 2.6362),
    (21, -0.5, 200.0, 0.03, 11.1900, 2.7161),
    (63, 0.0, 200.0, 0.03, 11.9714, 1.6997),
    (63, -0.5, 200.0, 0.03, 11.9234, 1.6539),
    (126, -0.5, 200.0, 0.03, 12.4776, 1.3081),
    (21, 0.0, 1000.0, 0.01, 37.9363, 4.5286),
    (21, -0.5, 1000.0, 0.01, 37.8582, 4.2041),
    (63, 0.0, 1000.0, 0.01, 41.4335, 2.9176),
    (63, -0.5, 1000.0, 0.01, 41.5071, 3.0726),
    (126, -0.5, 1000.0, 0.01, 41.8874, 2.4255),
];

type Check = Box<dyn Fn() -> Outcome>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn loss_scenarios() -> Vec<Scenario> {
    TABLE1.iter().map(|&(d, rho, l, sd, _)| Scenario::new(d, rho, l, sd)).collect()
}

fn criterion1(m: usize, tol: f64) -> Outcome {
    let spec = StudySpec::new(loss_scenarios(), m, 1);
    let rows = run_misclassification_study(&spec).expect("loss study");
    let mut worst = (0.0f64, String::new());
    let mut misses = 0;
    for (row, (.., reference)) in rows.iter().zip(TABLE1.iter()) {
        for (name, want) in METHODS.iter().zip(reference) {
            let s = row.get(name).expect("method present");
            let z = (s.mean - want) / s.se;
            if z.abs() > tol {
                misses += 1;
            }
            if z.abs() > worst.0.abs() {
                worst = (z, format!("{} {name}: {:.3} vs {want}", row.scenario.label(), s.mean));
            }
        }
    }
    outcome(misses == 0, format!("{misses}/50 cells beyond {tol} SE; worst {:+.1} SE at {}", worst.0, worst.1))
}

fn criterion2(m: usize) -> Outcome {
    let spec = StudySpec::new(loss_scenarios(), m, 1);
    let rows = run_convergence_study(&spec).expect("convergence study");
    let (mut beyond, mut unstable) = (0, Vec::new());
    let mut worst_z = 0.0f64;
    for (row, reference) in rows.iter().zip(TABLE2.iter()) {
        for (s, want) in row.iterations.iter().zip(reference) {
            let z = (s.mean - want) / s.se;
            worst_z = if z.abs() > worst_z.abs() { z } else { worst_z };
            beyond += usize::from(z.abs() > 3.0);
        }
        let rel = (row.iterations[1].mean - row.iterations[3].mean).abs() / row.iterations[3].mean;
        if rel >= 0.005 {
            unstable.push(format!("{} {:.2}%", row.scenario.label(), 100.0 * rel));
        }
    }
    let detail = format!(
        "{beyond}/40 iteration cells beyond 3 SE (worst {worst_z:+.1}); |iter2-iter4| >= 0.5% in {}",
        if unstable.is_empty() { "none".to_string() } else { unstable.join(", ") }
    );
    outcome(beyond == 0 && unstable.is_empty(), detail)
}

fn criterion3(m: usize) -> Outcome {
    let scenarios = TABLE3.iter().map(|&(d, rho, l, sd, ..)| Scenario::new(d, rho, l, sd)).collect();
    let rows = run_f0_study(&StudySpec::new(scenarios, m, 1)).expect("density study");
    let mut close = 0;
    let mut sign_ok = true;
    for (row, &(.., mean, sd)) in rows.iter().zip(TABLE3.iter()) {
        if ((row.mean - mean) / mean).abs() < 0.1 && ((row.sd - sd) / sd).abs() < 0.1 {
            close += 1;
        }
        if row.scenario.jump_sd == 0.03 && row.mean >= row.f0 {
            sign_ok = false;
        }
    }
    outcome(
        close >= 6 && sign_ok,
        format!("{close}/15 rows within 10% on mean and sd; underestimation at sd 0.03: {sign_ok}"),
    )
}

fn criterion4() -> Outcome {
    let spec = StudySpec::new(harness::sse_scenarios(), harness::SSE_PATHS, 1);
    let report = run_spotvol_sse_study(&spec).expect("sse study");
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &report.rows {
        let ordered = r.median_iter1 >= r.median_iter4 && r.median_iter4 >= r.median_oracle;
        let close = (r.median_iter4 / r.median_oracle - 1.0).abs() <= 0.10;
        pass &= ordered && close;
        parts.push(format!(
            "lambda={}: {:.4} >= {:.4} >= {:.4}",
            r.scenario.lambda, r.median_iter1, r.median_iter4, r.median_oracle
        ));
    }
    outcome(pass, parts.join("; "))
}

fn study_params() -> Vec<(LocalParams, JumpLaw)> {
    let mut out = Vec::new();
    for &(lambda, sd) in &harness::JUMP_REGIMES {
        for &sigma2 in &[0.0025, 0.005, 0.01, 0.02, 0.04, 0.08, 0.16, 0.32] {
            let p = LocalParams::new(0.05 - sigma2 / 2.0, sigma2, lambda, H5).unwrap();
            out.push((p, JumpLaw::normal(sd).unwrap()));
        }
    }
    out
}

fn criterion5() -> Outcome {
    let mut bad = Vec::new();
    let params = study_params();
    for (p, law) in &params {
        let s = (p.sigma2_bar * p.h).sqrt();
        let (lo, hi) = ((1e-3 * s).ln(), (20.0 * s).ln());
        let grid: Vec<f64> = (0..512).map(|i| (lo + (hi - lo) * i as f64 / 511.0).exp()).collect();
        let scan = unimodality_scan(p, law, &grid, 1e-12).unwrap();
        let opt = optimal_threshold_exact(p, law).unwrap();
        let a = scan.argmin;
        let cell = (grid[(a + 1).min(511)] - grid[a.saturating_sub(1)]) / 2.0;
        if !scan.unimodal || (opt.threshold - grid[a]).abs() > cell.max(opt.grid_step) {
            bad.push(format!("lambda={} sigma2={}", p.lambda_bar, p.sigma2_bar));
        }
    }
    outcome(bad.is_empty(), format!("{} parameter sets, failures: {:?}", params.len(), bad))
}

fn criterion6() -> Outcome {
    let mut bad = Vec::new();
    let mut max_resid = 0.0f64;
    for &(lambda, sd) in &harness::JUMP_REGIMES {
        let law = JumpLaw::normal(sd).unwrap();
        let sigma2 = 0.04;
        let mut prev: Option<(f64, f64)> = None;
        let mut h = H5;
        for _ in 0..4 {
            let p = LocalParams::new(0.05 - sigma2 / 2.0, sigma2, lambda, h).unwrap();
            let b = optimal_threshold_exact(&p, &law).unwrap().threshold;
            let b1 = threshold_first_order(sigma2, h).unwrap();
            let b2 = threshold_second_order(sigma2, lambda, law.c0(), h).unwrap().threshold;
            let r = ((b / b1 - 1.0).abs(), (b - b2).abs() / h.sqrt());
            let resid = fixed_point_residual(b, &p, &law).unwrap().abs() / b;
            max_resid = max_resid.max(resid);
            if let Some(q) = prev {
                if !(r.0 < q.0 && r.1 < q.1) {
                    bad.push(format!("lambda={lambda} at h={h:.3e}"));
                }
            }
            prev = Some(r);
            h /= 2.0;
        }
    }
    outcome(
        bad.is_empty() && max_resid < 1e-6,
        format!("non-decreasing steps: {bad:?}; max relative residual {max_resid:.1e}"),
    )
}

fn criterion7() -> Outcome {
    let rows = run_trv_bias_variance_check(&BiasVarianceSpec::reference(harness::BIAS_VARIANCE_REPLICATES, 1))
        .expect("bias-variance study");
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &rows {
        let z = (r.bias - r.bias_target) / r.bias_se;
        let v = r.variance / r.variance_target - 1.0;
        pass &= z.abs() <= 3.0 && v.abs() <= 0.15;
        parts.push(format!("lambda={}: bias {:+.1} SE from target, variance {:+.1}%", r.lambda, z, 100.0 * v));
    }
    outcome(pass, parts.join("; "))
}

fn criterion8() -> Outcome {
    let law = JumpLaw::normal(1.0).unwrap();
    let gap = |b: f64, h: f64| {
        let p = LocalParams::new(0.0, 0.04, 1.0, h).unwrap();
        conditional_density_gap(b, &p, &law).unwrap().gap.abs()
    };
    let (mut dens, mut first) = (Vec::new(), Vec::new());
    let mut h = H5;
    for _ in 0..5 {
        dens.push(gap(density_threshold(0.04, h).unwrap(), h));
        first.push(gap(threshold_first_order(0.04, h).unwrap(), h));
        h /= 2.0;
    }
    let monotone = dens.windows(2).all(|w| w[1] < w[0]);
    let ratio = first[4] / dens[4];
    outcome(
        monotone && ratio >= 10.0,
        format!("E2 at the density threshold {:.3e} -> {:.3e}; first-order/density ratio {ratio:.0}", dens[0], dens[4]),
    )
}

fn run_cli(args: &[&str]) -> i32 {
    tkjump_tools::cli::run(std::iter::once("tkjump").chain(args.iter().copied()))
}

fn same_files(a: &Path, b: &Path) -> Vec<String> {
    let mut diff = Vec::new();
    for entry in std::fs::read_dir(a).unwrap() {
        let name = entry.unwrap().file_name();
        if std::fs::read(a.join(&name)).ok() != std::fs::read(b.join(&name)).ok() {
            diff.push(name.to_string_lossy().into_owned());
        }
    }
    diff
}

fn criterion9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut bad = Vec::new();
    for study in ["table1", "table2", "table3", "sse", "bias-variance"] {
        let first = tmp.path().join(format!("{study}-a"));
        let second = tmp.path().join(format!("{study}-b"));
        let (f, s) = (first.to_str().unwrap(), second.to_str().unwrap());
        let manifest = first.join("manifest.json");
        let code_a = run_cli(&["study", study, "--replicates", "8", "--seed", "3", "--out", f]);
        let code_b = run_cli(&["study", study, "--manifest", manifest.to_str().unwrap(), "--out", s]);
        let diff = same_files(&first, &second);
        if code_a != 0 || code_b != 0 || !diff.is_empty() {
            bad.push(format!("{study} (exit {code_a}/{code_b}, differing {diff:?})"));
        }
    }
    outcome(bad.is_empty(), format!("5 studies rerun from their manifests; mismatches: {bad:?}"))
}

fn main() -> ExitCode {
    let full = std::env::var("TKJUMP_ACCEPTANCE_FULL").is_ok_and(|v| v == "1");
    let (m, tol) = if full { (harness::FULL_REPLICATES, 3.0) } else { (harness::DESK_REPLICATES, 5.0) };
    println!("acceptance at {m} replicates");
    let checks: [(u8, &str, Check); 9] = [
        (1, "misclassification table", Box::new(move || criterion1(m, tol))),
        (2, "iteration convergence", Box::new(move || criterion2(m))),
        (3, "jump density at the origin", Box::new(move || criterion3(m))),
        (4, "spot variance SSE ordering", Box::new(criterion4)),
        (5, "loss unimodality", Box::new(criterion5)),
        (6, "threshold asymptotics", Box::new(criterion6)),
        (7, "TRV bias and variance", Box::new(criterion7)),
        (8, "density-threshold gap", Box::new(criterion8)),
        (9, "manifest reruns", Box::new(criterion9)),
    ];
    let mut unexpected = Vec::new();
    for (id, name, check) in checks.iter() {
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id} {verdict} {name}: {}", o.detail);
        if o.pass == EXPECTED_SHORTFALLS.contains(id) {
            unexpected.push(*id);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("outcome differs from the recorded expectation for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}
