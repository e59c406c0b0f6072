//! Config-driven pipelines: simulate, certify, discover, fit and report.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Cell, ExperimentConfig};
use crate::dynamics::{SystemKind, SystemSpec};
use crate::error::{Error, Result};
use crate::integrator::{integrate, uniform_grid, Trajectory};
use crate::lyapunov::{eval_log_e, CertTolerances, Certifier, LyapunovSpec};
use crate::rational::{from_f64_decimal, RatioPair, Q};
use crate::ratefit::{self, compare_rates, RateComparison, RateFit, RateModel};
use crate::report::{write_summary_csv, CertReport};
use crate::symsearch::{reconstruct_parameter_dependence, search, Candidate, ParameterDependence, PowerSum, SearchOptions};

pub const CERTIFY_JSON: &str = "certify.json";
pub const CERTIFY_CSV: &str = "certify_summary.csv";
pub const CANDIDATES_JSON: &str = "candidates.json";
pub const FIT_JSON: &str = "fit.json";
pub const FIT_CSV: &str = "fit.csv";
pub const SUMMARY: &str = "summary.txt";

#[derive(Clone, Debug)]
pub struct RunContext {
    pub out: PathBuf,
    pub seed: u64,
}

impl RunContext {
    /// Output directory and seed from the config.
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        RunContext { out: cfg.output_dir.clone(), seed: cfg.seed }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        std::fs::create_dir_all(&self.out)?;
        let p = self.path(name);
        let f = File::create(&p)?;
        Ok((p, BufWriter::new(f)))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let (p, mut w) = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub certification_failed: bool,
    /// `cell: inequality_id` for every failed certification.
    pub failures: Vec<String>,
}

fn simulate_cells(cfg: &ExperimentConfig, cells: &[Cell]) -> Result<Vec<Trajectory>> {
    let tol = cfg.tolerance();
    cells
        .par_iter()
        .map(|c| {
            let grid = uniform_grid(cfg.t0, c.t_end, cfg.samples);
            integrate(c.system.clone(), cfg.t0, &c.x0, &c.v0, c.t_end, tol, &grid)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// One CSV per (objective, system) pair: `t, x…, v…, f_gap, err`.
pub fn run_simulate(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Outcome> {
    let cells = cfg.cells(ctx.seed)?;
    let trajs = simulate_cells(cfg, &cells)?;
    let mut out = Outcome::default();
    for (c, tr) in cells.iter().zip(&trajs) {
        let (p, w) = ctx.create(&format!("traj_{}.csv", c.label))?;
        tr.write_csv(w, true)?;
        out.files.push(p);
    }
    Ok(out)
}

fn has_lyapunov(sys: &SystemSpec) -> bool {
    matches!(sys.kind(), SystemKind::Nag | SystemKind::GeneralizedNag)
}

fn search_options(cfg: &ExperimentConfig) -> SearchOptions {
    SearchOptions { breadth: cfg.symsearch.as_ref().map_or(2, |s| s.breadth) }
}

fn discovered_for(cfg: &ExperimentConfig, sys: &SystemSpec) -> Result<Vec<LyapunovSpec>> {
    let Some(s) = &cfg.symsearch else {
        return Ok(Vec::new());
    };
    let Some(damping) = sys.damping_powersum() else {
        return Ok(Vec::new());
    };
    let grid: Vec<Q> = s.grid.iter().map(|e| e.0.clone()).collect();
    let mu = from_f64_decimal(sys.objective().mu)?;
    Ok(search(&damping, &grid, &mu, search_options(cfg))?.into_iter().map(|c| c.spec).collect())
}

#[derive(Serialize)]
struct CertifiedCell {
    cell: String,
    system: String,
    lyapunov: LyapunovSpec,
    threshold: f64,
    anchor: f64,
    pass: bool,
    reports: Vec<CertReport>,
}

#[derive(Serialize)]
struct CertifyBundle {
    pass: bool,
    cells: Vec<CertifiedCell>,
    skipped: Vec<String>,
}

/// All certifications plus weighted boundedness for each cell with a
/// second-order friction law. Nothing is written if any cell errors.
pub fn run_certify(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Outcome> {
    let cells = cfg.cells(ctx.seed)?;
    let (active, skipped): (Vec<&Cell>, Vec<&Cell>) = cells.iter().partition(|c| has_lyapunov(&c.system));
    let specs: Vec<LyapunovSpec> = active
        .iter()
        .map(|c| {
            let disc = discovered_for(cfg, &c.system)?;
            cfg.lyapunov_for(&c.system, Some(&disc))
        })
        .collect::<Result<_>>()?;
    let owned: Vec<Cell> = active.iter().map(|c| (*c).clone()).collect();
    let trajs = simulate_cells(cfg, &owned)?;
    let tol = CertTolerances::default();
    let certified: Vec<CertifiedCell> = owned
        .par_iter()
        .zip(trajs.par_iter())
        .zip(specs.par_iter())
        .map(|((c, tr), spec)| {
            let cert = Certifier::with_tolerances(tr, spec, tol)?;
            let mut reports = cert.all();
            reports.push(ratefit::check_weighted_boundedness(tr, &spec.gamma(), &cert.rate_constants(), tol.rate_bound));
            Ok(CertifiedCell {
                cell: c.label.clone(),
                system: c.system.label(),
                lyapunov: spec.clone(),
                threshold: cert.threshold(),
                anchor: cert.anchor(),
                pass: reports.iter().all(|r| r.pass),
                reports,
            })
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let bundle = CertifyBundle {
        pass: certified.iter().all(|c| c.pass),
        skipped: skipped.iter().map(|c| c.label.clone()).collect(),
        cells: certified,
    };
    let failures = bundle
        .cells
        .iter()
        .flat_map(|c| c.reports.iter().filter(|r| !r.pass).map(move |r| format!("{}: {}", c.cell, r.inequality_id)))
        .collect();
    let mut out = Outcome { certification_failed: !bundle.pass, failures, ..Default::default() };
    out.files.push(ctx.write_json(CERTIFY_JSON, &bundle)?);
    let rows: Vec<(String, CertReport)> = bundle
        .cells
        .iter()
        .flat_map(|c| c.reports.iter().map(move |r| (c.cell.clone(), r.clone())))
        .collect();
    let (p, w) = ctx.create(CERTIFY_CSV)?;
    write_summary_csv(w, &rows)?;
    out.files.push(p);
    Ok(out)
}

#[derive(Serialize)]
struct DiscoveredInstance {
    r: RatioPair,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<RatioPair>,
    mu: RatioPair,
    candidates: Vec<Candidate>,
}

#[derive(Serialize)]
struct Reconstruction {
    mu: RatioPair,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_prime: Option<ParameterDependence>,
    #[serde(skip_serializing_if = "Option::is_none")]
    g: Option<ParameterDependence>,
    #[serde(skip_serializing_if = "Option::is_none")]
    h: Option<ParameterDependence>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    errors: Vec<String>,
}

#[derive(Serialize)]
struct DiscoverOutput {
    grid: Vec<RatioPair>,
    instances: Vec<DiscoveredInstance>,
    reconstruction: Vec<Reconstruction>,
}

/// Ranked candidates for every `(r, μ)` of the symsearch section, and the
/// `r`-dependence of the top candidates when at least two `r` succeed.
pub fn run_discover(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Outcome> {
    let s = cfg
        .symsearch
        .as_ref()
        .ok_or_else(|| Error::config("symsearch", "discover needs a symsearch section"))?;
    let grid: Vec<Q> = s.grid.iter().map(|e| e.0.clone()).collect();
    let exponent = match &s.alpha {
        Some(a) => -a.0.clone(),
        None => -Q::from_integer(1.into()),
    };
    let jobs: Vec<(Q, Q)> = s
        .mu
        .iter()
        .flat_map(|m| s.r.iter().map(move |r| (r.0.clone(), m.0.clone())))
        .collect();
    let opts = search_options(cfg);
    let instances: Vec<DiscoveredInstance> = jobs
        .par_iter()
        .map(|(r, mu)| {
            let damping = PowerSum::monomial(r.clone(), exponent.clone());
            Ok(DiscoveredInstance {
                r: RatioPair(r.clone()),
                alpha: s.alpha.as_ref().map(|a| RatioPair(a.0.clone())),
                mu: RatioPair(mu.clone()),
                candidates: search(&damping, &grid, mu, opts)?,
            })
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;

    let mut reconstruction = Vec::new();
    for m in &s.mu {
        let tops: Vec<(Q, &LyapunovSpec)> = instances
            .iter()
            .filter(|i| i.mu.0 == m.0)
            .filter_map(|i| i.candidates.first().map(|c| (i.r.0.clone(), &c.spec)))
            .collect();
        if tops.len() < 2 {
            continue;
        }
        let mut errors = Vec::new();
        let mut fit = |name: &str, pick: fn(&LyapunovSpec) -> &PowerSum| {
            let data: Vec<(Q, PowerSum)> = tops.iter().map(|(r, sp)| (r.clone(), pick(sp).clone())).collect();
            reconstruct_parameter_dependence(&data)
                .map_err(|e| errors.push(format!("{name}: {e}")))
                .ok()
        };
        let gamma_prime = fit("gamma_prime", |s| &s.gamma_prime);
        let g = fit("g", |s| &s.g);
        let h = fit("h", |s| &s.h);
        reconstruction.push(Reconstruction { mu: RatioPair(m.0.clone()), gamma_prime, g, h, errors });
    }
    let output = DiscoverOutput {
        grid: {
            let mut g: Vec<Q> = grid.clone();
            g.sort();
            g.dedup();
            g.into_iter().map(RatioPair).collect()
        },
        instances,
        reconstruction,
    };
    Ok(Outcome { files: vec![ctx.write_json(CANDIDATES_JSON, &output)?], ..Default::default() })
}

fn model_for(sys: &SystemSpec) -> Option<RateModel> {
    match sys.kind() {
        SystemKind::Nag => Some(RateModel::PowerLaw),
        SystemKind::GeneralizedNag => Some(RateModel::StretchedExponential { alpha: sys.alpha_f64() }),
        SystemKind::GradientFlow => Some(RateModel::StretchedExponential { alpha: 0.0 }),
        SystemKind::Undamped => None,
    }
}

#[derive(Serialize)]
struct FittedCell {
    cell: String,
    system: String,
    fit: RateFit,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<RateComparison>,
}

#[derive(Serialize)]
struct FitOutput {
    cells: Vec<FittedCell>,
    #[serde(skip_serializing_if = "Option::is_none")]
    series: Option<RateFit>,
}

/// Writes `t, f_gap, log_e, log_weighted_gap`; the last two are empty when
/// no Lyapunov function applies or `E ≤ 0`.
fn write_plot_data(path: &Path, tr: &Trajectory, spec: Option<&LyapunovSpec>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["t", "f_gap", "log_e", "log_weighted_gap"])?;
    let sys = tr.system();
    let obj = sys.objective();
    let gamma = spec.map(|s| s.gamma());
    for s in tr.samples() {
        let gap = obj.gap_unchecked(&s.x);
        let (log_e, weighted) = match (spec, &gamma) {
            (Some(sp), Some(gm)) => {
                let le = eval_log_e(sp, sys, &s.state())?.log_e();
                let wg = (gap > 0.0).then(|| gap.ln() + gm.eval(s.t));
                (le, wg)
            }
            _ => (None, None),
        };
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([s.t.to_string(), gap.to_string(), opt(log_e), opt(weighted)])?;
    }
    w.flush()?;
    Ok(())
}

fn read_series(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    #[derive(serde::Deserialize)]
    struct Row {
        t: f64,
        gap: f64,
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut ts = Vec::new();
    let mut gaps = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        ts.push(row.t);
        gaps.push(row.gap);
    }
    Ok((ts, gaps))
}

/// Rate fits, rate-exponent comparisons and plot data for every cell, plus
/// the optional series file.
pub fn run_fit(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Outcome> {
    let cells: Vec<Cell> = cfg.cells(ctx.seed)?.into_iter().filter(|c| model_for(&c.system).is_some()).collect();
    let trajs = simulate_cells(cfg, &cells)?;
    let mut out = Outcome::default();
    let mut fitted = Vec::new();
    for (c, tr) in cells.iter().zip(&trajs) {
        let model = cfg.fit.model.or_else(|| model_for(&c.system)).expect("filtered");
        let window = cfg.fit.window.unwrap_or_else(|| ratefit::default_window(cfg.t0, c.t_end));
        let fit = ratefit::fit(tr, model, window)?;
        let sys = &c.system;
        let comparison = match sys.kind() {
            SystemKind::Nag => Some(compare_rates(sys.r(), None, &cfg.fit.epsilon.0)?),
            SystemKind::GeneralizedNag => Some(compare_rates(sys.r(), Some(sys.alpha()), &cfg.fit.epsilon.0)?),
            _ => None,
        };
        let spec = has_lyapunov(sys).then(|| LyapunovSpec::paper_for(sys)).transpose()?;
        let p = ctx.path(&format!("plot_{}.csv", c.label));
        std::fs::create_dir_all(&ctx.out)?;
        write_plot_data(&p, tr, spec.as_ref())?;
        out.files.push(p);
        if let Some(cmp) = &comparison {
            let (p, w) = ctx.create(&format!("comparison_{}.csv", c.label))?;
            cmp.write_csv(w)?;
            out.files.push(p);
        }
        fitted.push(FittedCell { cell: c.label.clone(), system: sys.label(), fit, comparison });
    }
    let series = match &cfg.fit.series_file {
        Some(path) => {
            let (ts, gaps) = read_series(path)?;
            let window = cfg.fit.window.unwrap_or((
                ts.first().copied().unwrap_or(0.0),
                ts.last().copied().unwrap_or(0.0),
            ));
            Some(ratefit::fit_series(&ts, &gaps, cfg.fit.model.unwrap_or(RateModel::PowerLaw), window)?)
        }
        None => None,
    };
    let (p, w) = ctx.create(FIT_CSV)?;
    let mut csvw = csv::Writer::from_writer(w);
    csvw.write_record(["cell", "model", "slope", "intercept", "window_lo", "window_hi", "residual", "samples"])?;
    let rows = fitted.iter().map(|f| (f.cell.as_str(), &f.fit)).chain(series.iter().map(|s| ("series", s)));
    for (name, f) in rows {
        let model = match f.model {
            RateModel::PowerLaw => "power-law".to_string(),
            RateModel::StretchedExponential { alpha } => format!("stretched-exponential(alpha={alpha})"),
        };
        csvw.write_record([
            name.to_string(),
            model,
            f.slope.to_string(),
            f.intercept.to_string(),
            f.window.0.to_string(),
            f.window.1.to_string(),
            f.residual.to_string(),
            f.samples.to_string(),
        ])?;
    }
    csvw.flush()?;
    drop(csvw);
    out.files.push(p);
    out.files.push(ctx.write_json(FIT_JSON, &FitOutput { cells: fitted, series })?);
    Ok(out)
}

/// Concatenates whichever pipeline outputs exist into one text summary.
pub fn run_report(_cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Outcome> {
    let mut text = String::new();
    let mut found = 0;
    for name in [CERTIFY_CSV, FIT_CSV, CANDIDATES_JSON] {
        let p = ctx.path(name);
        if let Ok(body) = std::fs::read_to_string(&p) {
            text.push_str(&format!("== {name} ==\n{body}"));
            if !body.ends_with('\n') {
                text.push('\n');
            }
            text.push('\n');
            found += 1;
        }
    }
    if found == 0 {
        return Err(Error::input(format!(
            "no pipeline outputs found in {}; run certify, fit or discover first",
            ctx.out.display()
        )));
    }
    let mut certification_failed = false;
    if let Ok(body) = std::fs::read_to_string(ctx.path(CERTIFY_JSON)) {
        let v: serde_json::Value = serde_json::from_str(&body)?;
        certification_failed = v.get("pass").and_then(|p| p.as_bool()) == Some(false);
    }
    let (p, mut w) = ctx.create(SUMMARY)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(Outcome { files: vec![p], certification_failed, ..Default::default() })
}
