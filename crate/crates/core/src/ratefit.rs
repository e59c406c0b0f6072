//! Empirical decay rates of the objective gap and comparison of rate exponents.

use std::io::Write;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::lyapunov::RateConstants;
use crate::rational::{display, q, RatioPair, Q};
use crate::report::{CertReport, ViolationTracker};
use crate::symsearch::NumericAntiderivative;

pub const MIN_FIT_SAMPLES: usize = 20;
/// Gaps below this fraction of the first gap are treated as round-off.
pub const NOISE_FRACTION: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateModel {
    /// `log gap` against `log t`.
    PowerLaw,
    /// `log gap` against `t^{1−α}`; `α = 0` is a plain exponential.
    StretchedExponential { alpha: f64 },
}

impl RateModel {
    fn abscissa(&self, t: f64) -> f64 {
        match self {
            RateModel::PowerLaw => t.ln(),
            RateModel::StretchedExponential { alpha } => t.powf(1.0 - alpha),
        }
    }

    fn validate(&self) -> Result<()> {
        if let RateModel::StretchedExponential { alpha } = self {
            if !(0.0..1.0).contains(alpha) {
                return Err(Error::input(format!("stretched-exponential alpha must lie in [0, 1), got {alpha}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub model: RateModel,
    pub slope: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    /// Root-mean-square residual of the regression.
    pub residual: f64,
    pub samples: usize,
}

/// Least-squares line through `log gap` on the model's abscissa, over the
/// nonincreasing envelope of the gap inside `window`.
pub fn fit(traj: &Trajectory, model: RateModel, window: (f64, f64)) -> Result<RateFit> {
    let obj = traj.system().objective();
    let ts: Vec<f64> = traj.samples().iter().map(|s| s.t).collect();
    let gaps: Vec<f64> = traj.samples().iter().map(|s| obj.gap_unchecked(&s.x)).collect();
    fit_series(&ts, &gaps, model, window)
}

pub fn fit_series(ts: &[f64], gaps: &[f64], model: RateModel, window: (f64, f64)) -> Result<RateFit> {
    model.validate()?;
    if ts.len() != gaps.len() {
        return Err(Error::input("time and gap series differ in length"));
    }
    if !(window.0 < window.1) {
        return Err(Error::input(format!("empty fit window [{}, {}]", window.0, window.1)));
    }
    if matches!(model, RateModel::PowerLaw) && window.0 <= 0.0 {
        return Err(Error::input("power-law fits need a window in t > 0"));
    }
    let floor = gaps.first().map_or(0.0, |g| g.abs() * NOISE_FRACTION);
    // Suffix maximum: the smallest nonincreasing function above the gap.
    let mut envelope = gaps.to_vec();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(gaps.iter().zip(&envelope))
        .filter(|(t, (g, _))| **t >= window.0 && **t <= window.1 && **g > floor && **g > 0.0)
        .map(|(t, (_, e))| (model.abscissa(*t), e.ln()))
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::input(format!(
            "only {} usable samples in [{}, {}]; at least {MIN_FIT_SAMPLES} are required",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::input("fit window has no spread in the abscissa"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(RateFit { model, slope, intercept, window, residual, samples: pts.len() })
}

/// Default window: the last decade of the span, clipped below at `t_lo`.
pub fn default_window(t_lo: f64, t_end: f64) -> (f64, f64) {
    ((t_end / 10.0).max(t_lo), t_end)
}

/// `log(f − f_*) + γ(t) ≤ log(E(T) + remainder)` for samples with `t ≥ T`.
/// `gamma` is passed separately so that a modified weight can be tested
/// against the same constants.
pub fn check_weighted_boundedness(
    traj: &Trajectory,
    gamma: &NumericAntiderivative,
    constants: &RateConstants,
    tolerance: f64,
) -> CertReport {
    let obj = traj.system().objective();
    let bound = constants.log_total();
    let mut tr = ViolationTracker::new("weighted_boundedness", tolerance);
    let mut sup = f64::NEG_INFINITY;
    for s in traj.samples().iter().filter(|s| s.t >= constants.anchor) {
        let gap = obj.gap_unchecked(&s.x);
        if gap == 0.0 {
            tr.record_trivial();
            continue;
        }
        let w = gap.ln() + gamma.eval(s.t);
        sup = sup.max(w);
        tr.record(s.t, w - bound);
    }
    tr.finish(Some(format!(
        "sup log weighted gap = {sup:.6}, log(E(T) + remainder) = {bound:.6}, anchored at T = {:.6}",
        constants.anchor
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub name: String,
    pub exponent: RatioPair,
    pub text: String,
    pub value: f64,
}

impl RateRow {
    fn new(name: &str, e: Q) -> Self {
        RateRow {
            name: name.into(),
            text: display(&e),
            value: crate::rational::to_f64(&e),
            exponent: RatioPair(e),
        }
    }
}

/// Rate exponents of the accelerated flows and of the prior bounds they
/// improve on, compared exactly.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateComparison {
    pub r: RatioPair,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<RatioPair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<RatioPair>,
    /// The first row is the new exponent; the rest are prior ones.
    pub rows: Vec<RateRow>,
    /// The new exponent strictly exceeds every prior one.
    pub strict_improvement: bool,
    /// The new exponent equals some prior one.
    pub equality: bool,
    /// Rows are strictly decreasing in order.
    pub ordered: bool,
}

impl RateComparison {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["name", "exponent", "value", "strict_improvement", "equality", "ordered"])?;
        for row in &self.rows {
            w.write_record([
                row.name.as_str(),
                row.text.as_str(),
                &row.value.to_string(),
                &self.strict_improvement.to_string(),
                &self.equality.to_string(),
                &self.ordered.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// NAG (`alpha = None`): `2r/3` against `(r+1)/2`.
/// α-friction: `(2/3)r/(1−α)` against `(2/3 − ε)r/(1−α)` and `(1/2)r/(1−α)`.
pub fn compare_rates(r: &Q, alpha: Option<&Q>, epsilon: &Q) -> Result<RateComparison> {
    if !r.is_positive() {
        return Err(Error::input(format!("r must be positive, got {}", display(r))));
    }
    let rows = match alpha {
        None => vec![
            RateRow::new("paper", r * q(2, 3)),
            RateRow::new("prior", (r + Q::one()) / Q::from_integer(2.into())),
        ],
        Some(a) => {
            if !(a.is_positive() && *a < Q::one()) {
                return Err(Error::input(format!("alpha must lie in (0, 1), got {}", display(a))));
            }
            if epsilon.is_negative() || epsilon.is_zero() {
                return Err(Error::input(format!("epsilon must be positive, got {}", display(epsilon))));
            }
            let base = r / (Q::one() - a);
            vec![
                RateRow::new("paper", &base * q(2, 3)),
                RateRow::new("prior_epsilon", &base * (q(2, 3) - epsilon)),
                RateRow::new("prior_half", &base * q(1, 2)),
            ]
        }
    };
    let new = &rows[0].exponent.0;
    let strict_improvement = rows[1..].iter().all(|p| new > &p.exponent.0);
    let equality = rows[1..].iter().any(|p| new == &p.exponent.0);
    let ordered = rows.windows(2).all(|w| w[0].exponent.0 > w[1].exponent.0);
    Ok(RateComparison {
        r: RatioPair(r.clone()),
        alpha: alpha.map(|a| RatioPair(a.clone())),
        epsilon: alpha.map(|_| RatioPair(epsilon.clone())),
        rows,
        strict_improvement,
        equality,
        ordered,
    })
}
