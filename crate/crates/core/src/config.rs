//! Experiment configuration: one JSON document with a schema version.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::integrator::Tolerance;
use crate::lyapunov::LyapunovSpec;
use crate::objectives::ObjectiveSpec;
use crate::rational::{display, q, Exact, Q};
use crate::ratefit::RateModel;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub objectives: Vec<ObjectiveConfig>,
    #[serde(default)]
    pub systems: Vec<SystemConfig>,
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub gamma_cap: Option<f64>,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub tolerance: ToleranceConfig,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub lyapunov: LyapunovSelection,
    #[serde(default)]
    pub mutation: Option<MutationConfig>,
    #[serde(default)]
    pub symsearch: Option<SymsearchConfig>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_t0() -> f64 {
    0.1
}

fn default_samples() -> usize {
    2000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveConfig {
    Quadratic {
        name: Option<String>,
        spectrum: Vec<f64>,
        #[serde(default)]
        x_star: Option<Vec<f64>>,
        #[serde(default)]
        f_star: f64,
    },
    Logsumexp {
        name: Option<String>,
        dimension: usize,
        rows: usize,
        mu: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemConfig {
    GradientFlow,
    Undamped,
    Nag { r: Exact },
    GeneralizedNag { r: Exact, alpha: Exact },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Explicit `x(t0)`; default `x_* + 1`.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Explicit `v(t0)`; default zero.
    #[serde(default)]
    pub v0: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    pub rel: f64,
    pub abs: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        let t = Tolerance::default();
        ToleranceConfig { rel: t.rel, abs: t.abs }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LyapunovSelection {
    /// The paper function matching each system's friction law.
    #[default]
    Paper,
    PaperNag,
    PaperAlpha,
    /// Index into the ranked candidates of a search on the system's friction.
    Discovered(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationConfig {
    #[serde(default)]
    pub g_scale: Option<Exact>,
    #[serde(default)]
    pub gamma_prime_scale: Option<Exact>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymsearchConfig {
    pub grid: Vec<Exact>,
    /// Friction values for `discover`.
    #[serde(default)]
    pub r: Vec<Exact>,
    #[serde(default)]
    pub alpha: Option<Exact>,
    #[serde(default = "default_mu")]
    pub mu: Vec<Exact>,
    #[serde(default = "default_breadth")]
    pub breadth: usize,
}

fn default_mu() -> Vec<Exact> {
    vec![Exact(Q::one())]
}

fn default_breadth() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: Exact,
    #[serde(default)]
    pub window: Option<(f64, f64)>,
    /// Overrides the model implied by each system.
    #[serde(default)]
    pub model: Option<RateModel>,
    /// CSV with columns `t,gap`, fitted in addition to the trajectories.
    #[serde(default)]
    pub series_file: Option<PathBuf>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { epsilon: default_epsilon(), window: None, model: None, series_file: None }
    }
}

fn default_epsilon() -> Exact {
    Exact(q(1, 100))
}

/// One (objective, system) pair with its resolved span.
#[derive(Clone, Debug)]
pub struct Cell {
    pub label: String,
    pub system: Arc<SystemSpec>,
    pub t_end: f64,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn tolerance(&self) -> Tolerance {
        Tolerance { rel: self.tolerance.rel, abs: self.tolerance.abs }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(Error::config("t0", format!("must be positive and finite, got {}", self.t0)));
        }
        match (self.t_end, self.gamma_cap) {
            (Some(_), Some(_)) => {
                return Err(Error::config("gamma_cap", "t_end and gamma_cap are mutually exclusive"))
            }
            (Some(t), None) if !(t > self.t0 && t.is_finite()) => {
                return Err(Error::config("t_end", format!("must exceed t0 = {}, got {t}", self.t0)))
            }
            (None, Some(c)) if !(c > 0.0 && c.is_finite()) => {
                return Err(Error::config("gamma_cap", format!("must be positive, got {c}")))
            }
            _ => {}
        }
        if !self.systems.is_empty() && self.t_end.is_none() && self.gamma_cap.is_none() {
            return Err(Error::config("t_end", "either t_end or gamma_cap is required"));
        }
        self.tolerance().validate().map_err(|e| Error::config("tolerance", e.to_string()))?;
        if self.samples < 2 {
            return Err(Error::config("samples", format!("need at least 2, got {}", self.samples)));
        }
        for (i, o) in self.objectives.iter().enumerate() {
            validate_objective(o).map_err(|m| Error::config(format!("objectives[{i}]"), m))?;
        }
        for (i, s) in self.systems.iter().enumerate() {
            validate_system(s, &format!("systems[{i}]"))?;
        }
        if !self.systems.is_empty() && self.objectives.is_empty() {
            return Err(Error::config("objectives", "systems are given but no objective"));
        }
        if let Some(m) = &self.mutation {
            for (field, k) in [("mutation.g_scale", &m.g_scale), ("mutation.gamma_prime_scale", &m.gamma_prime_scale)] {
                if let Some(k) = k {
                    if k.0 <= Q::zero() {
                        return Err(Error::config(field, format!("must be positive, got {k}")));
                    }
                }
            }
        }
        if let Some(s) = &self.symsearch {
            if s.breadth == 0 {
                return Err(Error::config("symsearch.breadth", "must be at least 1"));
            }
            for (i, r) in s.r.iter().enumerate() {
                if r.0 <= Q::zero() {
                    return Err(Error::config(format!("symsearch.r[{i}]"), format!("must be positive, got {r}")));
                }
            }
            if let Some(a) = &s.alpha {
                if !(a.0 > Q::zero() && a.0 < Q::one()) {
                    return Err(Error::config("symsearch.alpha", format!("must lie in (0, 1), got {a}")));
                }
            }
            for (i, m) in s.mu.iter().enumerate() {
                if m.0 <= Q::zero() {
                    return Err(Error::config(format!("symsearch.mu[{i}]"), format!("must be positive, got {m}")));
                }
            }
        }
        if self.fit.epsilon.0 <= Q::zero() {
            return Err(Error::config("fit.epsilon", format!("must be positive, got {}", self.fit.epsilon)));
        }
        if let Some((lo, hi)) = self.fit.window {
            if !(lo < hi) {
                return Err(Error::config("fit.window", format!("empty window [{lo}, {hi}]")));
            }
        }
        if matches!(self.lyapunov, LyapunovSelection::Discovered(_)) && self.symsearch.is_none() {
            return Err(Error::config("lyapunov", "a discovered index needs a symsearch section"));
        }
        Ok(())
    }

    /// Objectives built in order; log-sum-exp rows are seeded from `seed + index`.
    pub fn build_objectives(&self, seed: u64) -> Result<Vec<(String, Arc<ObjectiveSpec>)>> {
        self.objectives
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let wrap = |e: Error| Error::config(format!("objectives[{i}]"), e.to_string());
                let (name, spec) = match o {
                    ObjectiveConfig::Quadratic { name, spectrum, x_star, f_star } => {
                        let xs = x_star.clone().unwrap_or_else(|| vec![0.0; spectrum.len()]);
                        let spec = ObjectiveSpec::quadratic(spectrum.clone(), xs, *f_star).map_err(wrap)?;
                        (name.clone().unwrap_or_else(|| format!("quadratic{i}")), spec)
                    }
                    ObjectiveConfig::Logsumexp { name, dimension, rows, mu } => {
                        let spec = ObjectiveSpec::regularized_logsumexp(*dimension, *rows, *mu, seed.wrapping_add(i as u64))
                            .map_err(wrap)?;
                        (name.clone().unwrap_or_else(|| format!("logsumexp{i}")), spec)
                    }
                };
                Ok((name, Arc::new(spec)))
            })
            .collect()
    }

    /// Every (objective, system) pair, objectives outermost.
    pub fn cells(&self, seed: u64) -> Result<Vec<Cell>> {
        let objectives = self.build_objectives(seed)?;
        let mut cells = Vec::new();
        for (oname, obj) in &objectives {
            for (i, s) in self.systems.iter().enumerate() {
                let field = format!("systems[{i}]");
                let sys = Arc::new(build_system(s, obj.clone()).map_err(|e| Error::config(&field, e.to_string()))?);
                let t_end = match (self.t_end, self.gamma_cap) {
                    (Some(t), _) => t,
                    (None, Some(cap)) => gamma_cap_time(&sys, self.t0, cap)?,
                    (None, None) => unreachable!("validated"),
                };
                let x0 = match &self.initial.x0 {
                    Some(x) => x.clone(),
                    None => obj.x_star.iter().map(|c| c + 1.0).collect(),
                };
                let v0 = self.initial.v0.clone().unwrap_or_else(|| vec![0.0; obj.dimension]);
                if x0.len() != obj.dimension || v0.len() != obj.dimension {
                    return Err(Error::config(
                        "initial",
                        format!("initial state must have dimension {} for objective {oname}", obj.dimension),
                    ));
                }
                cells.push(Cell { label: format!("{oname}_{}", slug(&sys.label())), system: sys, t_end, x0, v0 });
            }
        }
        Ok(cells)
    }

    /// The Lyapunov function selected for a system, with any mutation applied.
    /// `discovered` supplies the ranked search result when the selection needs it.
    pub fn lyapunov_for(&self, sys: &SystemSpec, discovered: Option<&[LyapunovSpec]>) -> Result<LyapunovSpec> {
        use crate::dynamics::SystemKind;
        let mismatch = |want: &str| {
            Error::config("lyapunov", format!("{want} does not apply to {}", sys.label()))
        };
        let base = match (&self.lyapunov, sys.kind()) {
            (LyapunovSelection::Paper, _) => {
                LyapunovSpec::paper_for(sys).map_err(|e| Error::config("lyapunov", e.to_string()))?
            }
            (LyapunovSelection::PaperNag, SystemKind::Nag) => LyapunovSpec::paper_nag(sys.r()),
            (LyapunovSelection::PaperNag, _) => return Err(mismatch("paper-nag")),
            (LyapunovSelection::PaperAlpha, SystemKind::GeneralizedNag) => {
                LyapunovSpec::paper_alpha(sys.r(), sys.alpha())
            }
            (LyapunovSelection::PaperAlpha, _) => return Err(mismatch("paper-alpha")),
            (LyapunovSelection::Discovered(i), _) => discovered
                .and_then(|d| d.get(*i))
                .cloned()
                .ok_or_else(|| {
                    Error::config("lyapunov", format!("no discovered candidate with index {i} for {}", sys.label()))
                })?,
        };
        Ok(match &self.mutation {
            None => base,
            Some(m) => {
                let mut s = base;
                if let Some(k) = &m.g_scale {
                    s = s.scale_g(&k.0);
                }
                if let Some(k) = &m.gamma_prime_scale {
                    s = s.scale_gamma_prime(&k.0);
                }
                s
            }
        })
    }
}

fn validate_objective(o: &ObjectiveConfig) -> std::result::Result<(), String> {
    match o {
        ObjectiveConfig::Quadratic { spectrum, x_star, .. } => {
            if spectrum.is_empty() {
                return Err("spectrum must not be empty".into());
            }
            if let Some(x) = x_star {
                if x.len() != spectrum.len() {
                    return Err(format!("x_star has length {}, spectrum {}", x.len(), spectrum.len()));
                }
            }
        }
        ObjectiveConfig::Logsumexp { dimension, rows, mu, .. } => {
            if *dimension == 0 || *rows == 0 {
                return Err("dimension and rows must be positive".into());
            }
            if !(*mu > 0.0) {
                return Err(format!("mu must be positive, got {mu}"));
            }
        }
    }
    Ok(())
}

fn validate_system(s: &SystemConfig, field: &str) -> Result<()> {
    match s {
        SystemConfig::Nag { r } | SystemConfig::GeneralizedNag { r, .. } if r.0 <= Q::zero() => {
            Err(Error::config(format!("{field}.r"), format!("must be positive, got {r}")))
        }
        SystemConfig::GeneralizedNag { alpha, .. } if !(alpha.0 > Q::zero() && alpha.0 < Q::one()) => Err(
            Error::config(format!("{field}.alpha"), format!("must lie in (0, 1), got {}", display(&alpha.0))),
        ),
        _ => Ok(()),
    }
}

pub fn build_system(s: &SystemConfig, obj: Arc<ObjectiveSpec>) -> Result<SystemSpec> {
    match s {
        SystemConfig::GradientFlow => Ok(SystemSpec::gradient_flow(obj)),
        SystemConfig::Undamped => Ok(SystemSpec::undamped(obj)),
        SystemConfig::Nag { r } => SystemSpec::nag(r.0.clone(), obj),
        SystemConfig::GeneralizedNag { r, alpha } => SystemSpec::generalized_nag(r.0.clone(), alpha.0.clone(), obj),
    }
}

/// Time at which the paper weight `γ` reaches `cap`.
pub fn gamma_cap_time(sys: &SystemSpec, t0: f64, cap: f64) -> Result<f64> {
    let gamma = LyapunovSpec::paper_for(sys)
        .map_err(|_| Error::config("gamma_cap", format!("no weight is defined for {}", sys.label())))?
        .gamma();
    if gamma.eval(t0) >= cap {
        return Err(Error::config("gamma_cap", format!("gamma(t0) = {} already exceeds the cap", gamma.eval(t0))));
    }
    let (mut lo, mut hi) = (t0, t0 * 2.0);
    while gamma.eval(hi) < cap {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::config("gamma_cap", format!("cap {cap} is not reached before t = 1e12")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gamma.eval(mid) < cap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

fn slug(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            'a'..='z' | 'A'..='Z' | '0'..='9' | '-' => out.push(c),
            '/' => out.push('_'),
            _ => {
                if !out.ends_with('_') {
                    out.push('_');
                }
            }
        }
    }
    out.trim_matches('_').to_string()
}
