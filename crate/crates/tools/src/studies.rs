//! Run a study from a resolved configuration and write its CSV files.

use std::path::Path;

use crate::config::{RunConfig, StudyKind};
use crate::error::Result;
use crate::harness::{self, Scenario};
use crate::io::{fmt, write_table};
use crate::manifest::{Manifest, Seeds};

pub const MANIFEST_FILE: &str = "manifest.json";

fn num(v: f64) -> String {
    format!("{v}")
}

fn head(extra: &[&str]) -> Vec<String> {
    ["days", "rho", "lambda", "jump_sd"].iter().chain(extra).map(|s| s.to_string()).collect()
}

fn key(sc: &Scenario) -> Vec<String> {
    vec![sc.days.to_string(), num(sc.rho), num(sc.lambda), num(sc.jump_sd)]
}

/// Written files, relative to the output directory, plus the resolved spec.
pub struct StudyOutput {
    pub files: Vec<String>,
    pub spec: serde_json::Value,
    pub seeds: Seeds,
    /// Human-readable lines for the terminal.
    pub summary: Vec<String>,
}

pub fn run_study(kind: StudyKind, cfg: &RunConfig, dir: &Path) -> Result<StudyOutput> {
    let mut files = Vec::new();
    let mut summary = Vec::new();
    let (spec, seeds) = match kind {
        StudyKind::BiasVariance => {
            let spec = cfg.bias_variance_spec();
            let rows = harness::run_trv_bias_variance_check(&spec)?;
            let header: Vec<String> =
                ["lambda", "threshold", "bias", "bias_se", "bias_target", "variance", "variance_target"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    summary.push(format!(
                        "lambda={}: bias {:.4e} ± {:.1e} (target {:.4e}), variance {:.4e} (target {:.4e})",
                        r.lambda, r.bias, r.bias_se, r.bias_target, r.variance, r.variance_target
                    ));
                    [r.lambda, r.threshold, r.bias, r.bias_se, r.bias_target, r.variance, r.variance_target]
                        .iter()
                        .map(|&v| num(v))
                        .collect()
                })
                .collect();
            write_table(&dir.join("bias_variance.csv"), &header, &body)?;
            files.push("bias_variance.csv".into());
            let seeds = Seeds { base_seed: spec.base_seed, replicates: spec.replicates };
            (serde_json::to_value(spec).expect("serialisable"), seeds)
        }
        _ => {
            let spec = cfg.study_spec(kind);
            let m = spec.replicates.to_string();
            match kind {
                StudyKind::Table1 => {
                    let rows = harness::run_misclassification_study(&spec)?;
                    let mut cols = vec!["replicates".to_string()];
                    for name in &spec.methods {
                        cols.push(name.clone());
                        cols.push(format!("{name}_se"));
                    }
                    let header = head(&cols.iter().map(String::as_str).collect::<Vec<_>>());
                    let body: Vec<Vec<String>> = rows
                        .iter()
                        .map(|r| {
                            let mut row = key(&r.scenario);
                            row.push(m.clone());
                            let mut line = r.scenario.label();
                            for (name, s) in r.methods.iter().zip(&r.losses) {
                                row.push(num(s.mean));
                                row.push(num(s.se));
                                line.push_str(&format!(" {name}={:.3}", s.mean));
                            }
                            summary.push(line);
                            row
                        })
                        .collect();
                    write_table(&dir.join("table1.csv"), &header, &body)?;
                    files.push("table1.csv".into());
                }
                StudyKind::Table2 => {
                    let rows = harness::run_convergence_study(&spec)?;
                    let mut cols = vec!["replicates".to_string()];
                    for k in 1..=spec.max_iter {
                        cols.push(format!("iter{k}"));
                        cols.push(format!("iter{k}_se"));
                    }
                    let header = head(&cols.iter().map(String::as_str).collect::<Vec<_>>());
                    let body: Vec<Vec<String>> = rows
                        .iter()
                        .map(|r| {
                            let mut row = key(&r.scenario);
                            row.push(m.clone());
                            let mut line = r.scenario.label();
                            for s in &r.iterations {
                                row.push(num(s.mean));
                                row.push(num(s.se));
                                line.push_str(&format!(" {:.3}", s.mean));
                            }
                            summary.push(line);
                            row
                        })
                        .collect();
                    write_table(&dir.join("table2.csv"), &header, &body)?;
                    files.push("table2.csv".into());
                }
                StudyKind::Table3 => {
                    let rows = harness::run_f0_study(&spec)?;
                    let header = head(&["replicates", "f0", "mean", "sd", "rmse", "insufficient"]);
                    let body: Vec<Vec<String>> = rows
                        .iter()
                        .map(|r| {
                            summary.push(format!(
                                "{} f0={:.2} mean={:.4} sd={:.4} rmse={:.4}",
                                r.scenario.label(),
                                r.f0,
                                r.mean,
                                r.sd,
                                r.rmse
                            ));
                            let mut row = key(&r.scenario);
                            row.extend([m.clone(), num(r.f0), num(r.mean), num(r.sd), num(r.rmse)]);
                            row.push(r.insufficient.to_string());
                            row
                        })
                        .collect();
                    write_table(&dir.join("table3.csv"), &header, &body)?;
                    files.push("table3.csv".into());
                }
                StudyKind::Sse => {
                    let report = harness::run_spotvol_sse_study(&spec)?;
                    let header = head(&[
                        "paths",
                        "median_iter1",
                        "median_iter4",
                        "median_oracle",
                        "mean_iter1",
                        "mean_iter4",
                        "mean_oracle",
                    ]);
                    let body: Vec<Vec<String>> = report
                        .rows
                        .iter()
                        .map(|r| {
                            summary.push(format!(
                                "{} median SSE iter1={:.4} iter4={:.4} oracle={:.4}",
                                r.scenario.label(),
                                r.median_iter1,
                                r.median_iter4,
                                r.median_oracle
                            ));
                            let mut row = key(&r.scenario);
                            row.push(r.paths.to_string());
                            row.extend(
                                [r.median_iter1, r.median_iter4, r.median_oracle, r.mean_iter1, r.mean_iter4, r.mean_oracle]
                                    .iter()
                                    .map(|&v| num(v)),
                            );
                            row
                        })
                        .collect();
                    write_table(&dir.join("sse.csv"), &header, &body)?;
                    files.push("sse.csv".into());
                    for (i, s) in report.series.iter().enumerate() {
                        let name = format!("sse_series_{}.csv", i + 1);
                        let header: Vec<String> =
                            ["t", "v_true", "v_iter1", "v_iter4", "v_oracle"].iter().map(|s| s.to_string()).collect();
                        let body: Vec<Vec<String>> = (0..s.t.len())
                            .map(|j| vec![fmt(s.t[j]), fmt(s.v_true[j]), fmt(s.v_iter1[j]), fmt(s.v_iter4[j]), fmt(s.v_oracle[j])])
                            .collect();
                        write_table(&dir.join(&name), &header, &body)?;
                        files.push(name);
                    }
                }
                StudyKind::BiasVariance => unreachable!(),
            }
            let seeds = Seeds { base_seed: spec.base_seed, replicates: spec.replicates };
            (serde_json::to_value(spec).expect("serialisable"), seeds)
        }
    };
    Ok(StudyOutput { files, spec, seeds, summary })
}

/// Run the study, write its files and `manifest.json` into `dir`.
pub fn run_and_record(kind: StudyKind, cfg: &RunConfig, dir: &Path) -> Result<(Manifest, Vec<String>)> {
    let out = run_study(kind, cfg, dir)?;
    let mut manifest = Manifest::new("study", Some(kind.name()), cfg, out.spec, out.seeds);
    manifest.record(dir, &out.files)?;
    manifest.write(&dir.join(MANIFEST_FILE))?;
    Ok((manifest, out.summary))
}
