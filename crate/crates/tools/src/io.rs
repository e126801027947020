//! CSV readers and writers. Floats are written in `{:.16e}` so that a path
//! survives a round trip bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use tkjump::{DensityEstimate, IterationTrace, Latent, SamplePath};

use crate::error::{Result, ToolError};

/// Relative tolerance on the spacing of the time column.
const SPACING_TOL: f64 = 1e-6;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| ToolError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| ToolError::io(path, e))
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new().from_writer(create(path)?))
}

fn csv_err(path: &Path, e: csv::Error) -> ToolError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => ToolError::io(path, source),
        kind => ToolError::Input { path: path.display().to_string(), line, msg: format!("{kind:?}") },
    }
}

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write `t,x` and, when the path carries latent truth, `v,dn,jump_sum`.
/// Row `i` holds `X_{t_i}`; the jump columns of row `i ≥ 1` describe the
/// interval `(t_{i−1}, t_i]` and are zero on row 0.
pub fn write_path(path: &Path, sample: &SamplePath) -> Result<()> {
    let mut w = writer(path)?;
    let e = |e| csv_err(path, e);
    match &sample.latent {
        Some(l) => {
            w.write_record(["t", "x", "v", "dn", "jump_sum"]).map_err(e)?;
            for (i, &x) in sample.x.iter().enumerate() {
                let (dn, js) = if i == 0 { (0, 0.0) } else { (l.jump_count[i - 1], l.jump_sum[i - 1]) };
                w.write_record([fmt(sample.time(i)), fmt(x), fmt(l.variance[i]), dn.to_string(), fmt(js)])
                    .map_err(e)?;
            }
        }
        None => {
            w.write_record(["t", "x"]).map_err(e)?;
            for (i, &x) in sample.x.iter().enumerate() {
                w.write_record([fmt(sample.time(i)), fmt(x)]).map_err(e)?;
            }
        }
    }
    w.flush().map_err(|e| ToolError::io(path, e))
}

/// Read a path written by [`write_path`] (or any CSV with `t` and `x`
/// columns on a uniform grid). Latent columns are optional but must come as
/// a set; the drift and intensity are not stored and read back as `NaN`.
pub fn read_path(path: &Path) -> Result<SamplePath> {
    let file = File::open(path).map_err(|e| ToolError::Usage(format!("{}: {e}", path.display())))?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let bad = |line: u64, msg: String| ToolError::Input { path: path.display().to_string(), line, msg };
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (ti, xi) = match (col("t"), col("x")) {
        (Some(t), Some(x)) => (t, x),
        _ => return Err(bad(1, "header must contain `t` and `x` columns".into())),
    };
    let latent_cols = [col("v"), col("dn"), col("jump_sum")];
    let latent = match latent_cols {
        [Some(v), Some(d), Some(j)] => Some((v, d, j)),
        [None, None, None] => None,
        _ => return Err(bad(1, "latent columns `v`, `dn`, `jump_sum` must appear together".into())),
    };

    let (mut t, mut x, mut v, mut dn, mut js) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize, name: &str| -> Result<f64> {
            let s = rec.get(i).ok_or_else(|| bad(line, format!("missing `{name}`")))?;
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(bad(line, format!("`{name}` is not a finite number: {s:?}"))),
            }
        };
        t.push(num(ti, "t")?);
        x.push(num(xi, "x")?);
        if let Some((vi, di, ji)) = latent {
            v.push(num(vi, "v")?);
            let s = rec.get(di).ok_or_else(|| bad(line, "missing `dn`".into()))?;
            dn.push(s.parse::<u32>().map_err(|_| bad(line, format!("`dn` is not a count: {s:?}")))?);
            js.push(num(ji, "jump_sum")?);
        }
    }
    if t.len() < 2 {
        return Err(bad(0, format!("need at least 2 rows, found {}", t.len())));
    }
    let n = t.len() - 1;
    let h = (t[n] - t[0]) / n as f64;
    if !(h > 0.0) {
        return Err(bad(3, "time column must be increasing".into()));
    }
    for (i, &ti) in t.iter().enumerate() {
        if (ti - t[0] - i as f64 * h).abs() > SPACING_TOL * h {
            return Err(bad(i as u64 + 2, format!("time {ti} is off the uniform grid of spacing {h}")));
        }
    }
    let sample = SamplePath::new(t[0], h, x).map_err(|e| bad(0, e.to_string()))?;
    if latent.is_none() {
        return Ok(sample);
    }
    let latent = Latent {
        jump_count: dn[1..].to_vec(),
        jump_sum: js[1..].to_vec(),
        variance: v,
        drift: vec![f64::NAN; n + 1],
        intensity: f64::NAN,
    };
    sample.with_latent(latent).map_err(|e| bad(0, e.to_string()))
}

/// `index,b,flag` with `index` running over intervals from 1.
pub fn write_thresholds(path: &Path, b: &[f64], flags: &[bool]) -> Result<()> {
    let mut w = writer(path)?;
    let e = |e| csv_err(path, e);
    w.write_record(["index", "b", "flag"]).map_err(e)?;
    for (i, (&b, &f)) in b.iter().zip(flags).enumerate() {
        w.write_record([(i + 1).to_string(), fmt(b), u8::from(f).to_string()]).map_err(e)?;
    }
    w.flush().map_err(|e| ToolError::io(path, e))
}

/// `t,sigma2_hat` plus `sigma2_true` when the path has latent variance.
pub fn write_spot(path: &Path, sample: &SamplePath, spot: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    let e = |e| csv_err(path, e);
    let truth = sample.latent.as_ref().map(|l| &l.variance);
    match truth {
        Some(_) => w.write_record(["t", "sigma2_hat", "sigma2_true"]).map_err(e)?,
        None => w.write_record(["t", "sigma2_hat"]).map_err(e)?,
    }
    for (i, &s) in spot.iter().enumerate() {
        let mut row = vec![fmt(sample.time(i)), fmt(s)];
        if let Some(v) = truth {
            row.push(fmt(v[i]));
        }
        w.write_record(&row).map_err(e)?;
    }
    w.flush().map_err(|e| ToolError::io(path, e))
}

pub fn write_f0(path: &Path, est: &DensityEstimate) -> Result<()> {
    let (lo, hi) = match est.threshold_used {
        tkjump::jump_density::ThresholdUsed::Scalar(b) => (b, b),
        tkjump::jump_density::ThresholdUsed::PerInterval { min, max } => (min, max),
    };
    let mut w = writer(path)?;
    let e = |e| csv_err(path, e);
    w.write_record([
        "f0_hat",
        "exceedance_count",
        "bandwidth",
        "threshold_min",
        "threshold_max",
        "insufficient_data",
        "bandwidth_floored",
    ])
    .map_err(e)?;
    w.write_record([
        fmt(est.f0_hat),
        est.exceedance_count.to_string(),
        fmt(est.bandwidth),
        fmt(lo),
        fmt(hi),
        est.insufficient_data.to_string(),
        est.bandwidth_floored.to_string(),
    ])
    .map_err(e)?;
    w.flush().map_err(|e| ToolError::io(path, e))
}

pub fn write_trace(path: &Path, trace: &IterationTrace) -> Result<()> {
    let mut w = writer(path)?;
    let e = |e| csv_err(path, e);
    w.write_record([
        "iteration",
        "b_min",
        "b_mean",
        "b_max",
        "lambda_hat",
        "sigma2_hat",
        "f0_hat",
        "fallback_count",
        "flagged",
        "digest",
    ])
    .map_err(e)?;
    for r in &trace.records {
        w.write_record([
            r.iteration.to_string(),
            fmt(r.b_min),
            fmt(r.b_mean),
            fmt(r.b_max),
            fmt(r.lambda_hat),
            fmt(r.sigma2_hat),
            r.f0.as_ref().map(|f| fmt(f.f0_hat)).unwrap_or_default(),
            r.fallback_count.to_string(),
            r.flags.iter().filter(|&&f| f).count().to_string(),
            format!("{:016x}", r.digest),
        ])
        .map_err(e)?;
    }
    w.flush().map_err(|e| ToolError::io(path, e))
}

/// Write a header and rows of pre-formatted cells.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = writer(path)?;
    let e = |e| csv_err(path, e);
    w.write_record(header).map_err(e)?;
    for row in rows {
        w.write_record(row).map_err(e)?;
    }
    w.flush().map_err(|e| ToolError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes()).and_then(|_| f.flush()).map_err(|e| ToolError::io(path, e))
}
