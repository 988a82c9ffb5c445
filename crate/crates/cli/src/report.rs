//! Plots and a JSON summary for a finished bundle.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use fin_core::scaling::{exponent_set, fit_power_law};
use fin_core::stats::quantile;
use serde_json::{json, Value};

use crate::bundle::{Bundle, Manifest, MANIFEST};
use crate::config::{Experiment, ExperimentConfig};
use crate::plots::{render, Axis, Figure, Series, Style};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("empty bundle: {0}")]
    Empty(String),
    #[error("missing series `{0}` in bundle")]
    MissingSeries(String),
    #[error("malformed `{file}`: {reason}")]
    Malformed { file: String, reason: String },
    #[error("{0}")]
    Core(#[from] fin_core::Error),
    #[error("{0}")]
    Plot(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, ReportError>;

/// CSV file with named columns.
struct Table {
    file: String,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(dir: &Path, name: &str) -> Result<Self> {
        let path = dir.join(name);
        if !path.exists() {
            return Err(ReportError::MissingSeries(name.into()));
        }
        let malformed = |e: csv::Error| ReportError::Malformed {
            file: name.into(),
            reason: e.to_string(),
        };
        let mut r = csv::Reader::from_path(&path).map_err(malformed)?;
        let headers = r.headers().map_err(malformed)?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()
            .map_err(malformed)?;
        if rows.is_empty() {
            return Err(ReportError::MissingSeries(name.into()));
        }
        Ok(Self {
            file: name.into(),
            headers,
            rows,
        })
    }

    fn index(&self, col: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == col).ok_or_else(|| ReportError::Malformed {
            file: self.file.clone(),
            reason: format!("no column `{col}`"),
        })
    }

    fn text(&self, col: &str) -> Result<Vec<String>> {
        let j = self.index(col)?;
        Ok(self.rows.iter().map(|r| r[j].clone()).collect())
    }

    fn num(&self, col: &str) -> Result<Vec<f64>> {
        let j = self.index(col)?;
        self.rows
            .iter()
            .map(|r| {
                r[j].parse::<f64>().map_err(|_| ReportError::Malformed {
                    file: self.file.clone(),
                    reason: format!("non-numeric `{}` in column `{col}`", r[j]),
                })
            })
            .collect()
    }
}

fn svg(fig: &Figure) -> Result<Vec<u8>> {
    render(fig).map(String::into_bytes).map_err(ReportError::Plot)
}

struct Products {
    files: Vec<(String, Vec<u8>)>,
    summary: Value,
}

/// Reads `source`, renders every plot and the summary in memory, then writes
/// them to `out` with a manifest. Nothing is written when any input is
/// missing.
pub fn run_report(source: &Path, out: &Path, config: &ExperimentConfig) -> Result<Manifest> {
    let start = Instant::now();
    let manifest_path = source.join(MANIFEST);
    if !manifest_path.exists() {
        return Err(ReportError::Empty(format!("no {MANIFEST} in {}", source.display())));
    }
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(&manifest_path)?).map_err(|e| {
        ReportError::Malformed {
            file: MANIFEST.into(),
            reason: e.to_string(),
        }
    })?;
    let source_cfg: ExperimentConfig =
        serde_json::from_value(manifest["config"].clone()).map_err(|e| ReportError::Malformed {
            file: MANIFEST.into(),
            reason: format!("config: {e}"),
        })?;
    let products = match source_cfg.experiment {
        Experiment::Heatkernel => heatkernel(source, &source_cfg)?,
        Experiment::Exit => exit(source, &source_cfg)?,
        Experiment::Volume => volume(source)?,
        Experiment::Subordinator => subordinator(source, &source_cfg)?,
        Experiment::Exponents => exponents(source)?,
        Experiment::Report => return Err(ReportError::Empty("source is itself a report".into())),
    };
    let mut bundle = Bundle::create(out)?;
    for (name, bytes) in &products.files {
        bundle.write(name, bytes)?;
    }
    let mut summary = products.summary;
    summary["source_experiment"] = json!(source_cfg.experiment.to_string());
    summary["source_status"] = manifest["status"].clone();
    let text = serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)? + "\n";
    bundle.write("summary.json", text.as_bytes())?;
    Ok(bundle.finish(config, Vec::new(), None, start.elapsed().as_secs_f64())?)
}

/// Groups `(key, x, y)` triples by key, keeping row order inside each group.
fn group(keys: &[f64], xs: &[f64], ys: &[f64]) -> BTreeMap<u64, Vec<(f64, f64)>> {
    let mut out: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for ((k, x), y) in keys.iter().zip(xs).zip(ys) {
        out.entry(k.to_bits()).or_default().push((*x, *y));
    }
    out
}

fn space_exponents(cfg: &ExperimentConfig) -> Result<fin_core::scaling::ExponentSet> {
    let space = cfg
        .space
        .as_ref()
        .ok_or_else(|| ReportError::Malformed {
            file: MANIFEST.into(),
            reason: "config has no space".into(),
        })?
        .spec()
        .build()?;
    Ok(exponent_set(cfg.alpha(), space.metric().beta, space.d_f())?)
}

fn heatkernel(source: &Path, cfg: &ExperimentConfig) -> Result<Products> {
    let ann = Table::read(source, "annealed.csv")?;
    let fit_table = Table::read(source, "fit.csv")?;
    let e = space_exponents(cfg)?;
    let groups = group(&ann.num("distance")?, &ann.num("t")?, &ann.num("mean")?);
    let diag = groups
        .get(&0f64.to_bits())
        .ok_or_else(|| ReportError::MissingSeries("annealed.csv distance 0".into()))?;
    let window = (fit_table.num("window_lo")?[0], fit_table.num("window_hi")?[0]);
    let (ts, ps): (Vec<f64>, Vec<f64>) = diag.iter().copied().unzip();
    let fit = fit_power_law(&ts, &ps, window)?;
    let reference = -e.d_s / 2.0;
    let in_window: Vec<f64> = ts.iter().copied().filter(|t| *t >= window.0 && *t <= window.1).collect();
    let (t0, t1) = (in_window[0], in_window[in_window.len() - 1]);
    let fitted_line = vec![
        (t0, fit.intercept.exp() * t0.powf(fit.exponent)),
        (t1, fit.intercept.exp() * t1.powf(fit.exponent)),
    ];
    let anchor = fit.intercept.exp() * t0.powf(fit.exponent);
    let reference_line = vec![(t0, anchor), (t1, anchor * (t1 / t0).powf(reference))];
    let decay = Figure {
        title: "annealed on-diagonal decay",
        x_label: "t",
        y_label: "E p_t(rho, rho)",
        x_axis: Axis::Log,
        y_axis: Axis::Log,
        series: vec![
            Series::new("annealed mean", diag.clone(), Style::Points),
            Series::new(format!("fit, slope {:.4}", fit.exponent), fitted_line, Style::Line),
            Series::new(format!("reference slope {reference:.4}"), reference_line, Style::Dashed),
        ],
        notes: vec![
            format!("fitted slope {:.4} (95% CI {:.4} .. {:.4})", fit.exponent, fit.bootstrap_ci.0, fit.bootstrap_ci.1),
            format!("reference slope -d_s/2 = {reference:.4}"),
        ],
    };
    let mut files = vec![("diagonal_decay.svg".to_string(), svg(&decay)?)];
    let mut collapse = Vec::new();
    for (&key, series) in groups.iter().filter(|(k, _)| **k != 0f64.to_bits()) {
        let d = f64::from_bits(key);
        let pts: Vec<(f64, f64)> = series
            .iter()
            .zip(diag)
            .map(|(&(t, p), &(_, p0))| ((d.powf(e.d_w) / t).powf(1.0 / (e.d_w - 1.0)), p / p0))
            .collect();
        collapse.push(Series::new(format!("d = {d}"), pts, Style::Points));
    }
    if !collapse.is_empty() {
        let fig = Figure {
            title: "off-diagonal collapse",
            x_label: "(d^d_w / t)^(1/(d_w - 1))",
            y_label: "E p_t(rho, y) / E p_t(rho, rho)",
            x_axis: Axis::Linear,
            y_axis: Axis::Log,
            series: collapse,
            notes: vec![format!("d_w = {:.4}", e.d_w)],
        };
        files.push(("offdiag_collapse.svg".to_string(), svg(&fig)?));
    }
    Ok(Products {
        files,
        summary: json!({
            "fitted_slope": fit.exponent,
            "bootstrap_ci": [fit.bootstrap_ci.0, fit.bootstrap_ci.1],
            "r_squared": fit.r_squared,
            "reference_slope": reference,
            "window": [window.0, window.1],
            "exponents": e,
        }),
    })
}

fn exit(source: &Path, cfg: &ExperimentConfig) -> Result<Products> {
    let inner = Table::read(source, "exit_fit.csv")?;
    let outer = Table::read(source, "exit_exponent.csv")?;
    let alpha = cfg.alpha();
    let reference = 1.0 + alpha;
    let groups = group(&inner.num("env")?, &inner.num("distance")?, &inner.num("slope")?);
    let mut series: Vec<Series> = groups
        .iter()
        .map(|(&k, pts)| Series::new(format!("env {}", f64::from_bits(k)), pts.clone(), Style::Points))
        .collect();
    let labels = outer.text("experiment")?;
    let exps = outer.num("exponent")?;
    let ensemble = labels.iter().position(|l| l == "ensemble").map(|i| exps[i]);
    let distances = inner.num("distance")?;
    let (d0, d1) = distances
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &d| (a.min(d), b.max(d)));
    if d1 > d0 {
        let slopes = inner.num("slope")?;
        let at_d0: Vec<f64> = distances
            .iter()
            .zip(&slopes)
            .filter(|(d, _)| **d == d0)
            .map(|(_, s)| s.ln())
            .collect();
        let anchor = (at_d0.iter().sum::<f64>() / at_d0.len() as f64).exp();
        series.push(Series::new(
            format!("reference D^{reference:.3}"),
            vec![(d0, anchor), (d1, anchor * (d1 / d0).powf(reference))],
            Style::Dashed,
        ));
    }
    series.truncate(7);
    let mut notes = vec![format!("reference D-exponent 1 + alpha = {reference:.4}")];
    if let Some(x) = ensemble {
        notes.insert(0, format!("fitted D-exponent {x:.4}"));
    }
    let fig = Figure {
        title: "exit tail slope against distance",
        x_label: "D",
        y_label: "slope of -log P(tau_D <= t) in t^-alpha",
        x_axis: Axis::Log,
        y_axis: Axis::Log,
        series,
        notes,
    };
    Ok(Products {
        files: vec![("varadhan.svg".to_string(), svg(&fig)?)],
        summary: json!({
            "d_exponent": ensemble,
            "reference_d_exponent": reference,
            "per_environment": labels.iter().zip(&exps).map(|(l, x)| json!({"fit": l, "exponent": x})).collect::<Vec<_>>(),
        }),
    })
}

fn volume(source: &Path) -> Result<Products> {
    let ratios = Table::read(source, "volume_ratios.csv")?;
    let bands = Table::read(source, "volume_bands.csv")?;
    let kinds = ratios.text("kind")?;
    let rs = ratios.num("r")?;
    let qs = ratios.num("ratio")?;
    let mut by_kind: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for ((k, r), q) in kinds.iter().zip(&rs).zip(&qs) {
        by_kind.entry(k.clone()).or_default().entry(r.to_bits()).or_default().push(*q);
    }
    let mut files = Vec::new();
    for (kind, per_r) in &by_kind {
        let mut lo = Vec::new();
        let mut mid = Vec::new();
        let mut hi = Vec::new();
        for (&rb, vals) in per_r {
            let r = f64::from_bits(rb);
            lo.push((r, quantile(vals, 0.05)));
            mid.push((r, quantile(vals, 0.5)));
            hi.push((r, quantile(vals, 0.95)));
        }
        let fig = Figure {
            title: kind,
            x_label: "r",
            y_label: "V(rho, r) / envelope",
            x_axis: Axis::Log,
            y_axis: Axis::Log,
            series: vec![
                Series::new("median", mid, Style::Line),
                Series::new("5% quantile", lo, Style::Dashed),
                Series::new("95% quantile", hi, Style::Dashed),
            ],
            notes: vec![],
        };
        files.push((format!("volume_{kind}.svg"), svg(&fig)?));
    }
    let summary: Vec<Value> = bands
        .text("kind")?
        .iter()
        .zip(bands.num("constant")?)
        .zip(bands.num("violation_fraction")?)
        .zip(bands.text("pass")?)
        .map(|(((k, c), v), p)| json!({"kind": k, "constant": c, "violation_fraction": v, "pass": p == "true"}))
        .collect();
    Ok(Products {
        files,
        summary: json!({ "bands": summary }),
    })
}

fn subordinator(source: &Path, cfg: &ExperimentConfig) -> Result<Products> {
    let t = Table::read(source, "subordinator.csv")?;
    let xs = t.num("x")?;
    let emp = t.num("empirical_cdf")?;
    let exact = t.num("exact_cdf")?;
    let fig = Figure {
        title: "standard subordinator marginal",
        x_label: "x",
        y_label: "P(S <= x)",
        x_axis: Axis::Log,
        y_axis: Axis::Log,
        series: vec![
            Series::new("empirical", xs.iter().copied().zip(emp).collect(), Style::Points),
            Series::new("exact", xs.iter().copied().zip(exact).collect(), Style::Line),
        ],
        notes: vec![format!("alpha = {}", cfg.alpha())],
    };
    let fit = Table::read(source, "small_ball.csv").ok();
    let small_ball = match fit {
        Some(f) => json!({
            "corrected_slope": f.num("corrected_slope")?[0],
            "plain_slope": f.num("plain_slope")?[0],
            "c2": f.num("c2")?[0],
        }),
        None => Value::Null,
    };
    Ok(Products {
        files: vec![("subordinator_cdf.svg".to_string(), svg(&fig)?)],
        summary: json!({ "small_ball": small_ball }),
    })
}

fn exponents(source: &Path) -> Result<Products> {
    let t = Table::read(source, "exponents.csv")?;
    let mut map = serde_json::Map::new();
    for h in &t.headers {
        map.insert(h.clone(), json!(t.num(h)?[0]));
    }
    Ok(Products {
        files: Vec::new(),
        summary: Value::Object(map),
    })
}
