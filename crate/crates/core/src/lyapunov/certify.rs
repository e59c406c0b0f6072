use rayon::prelude::*;

use super::{EnergyEval, LyapunovSpec, NumericSpec, Provenance};
use crate::dynamics::{State, SystemSpec};
use crate::error::{Error, Result};
use crate::integrator::{rk4_advance, Trajectory};
use crate::objectives::norm;
use crate::report::{CertReport, ViolationTracker};

/// Tolerances for the trajectory checks. Log-space checks compare
/// logarithms directly; relative ones compare ratios.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertTolerances {
    /// `None` selects `max(1e-9, 1e-8·|log E(T)|)`.
    pub monotone: Option<f64>,
    pub main_nonneg: f64,
    pub velocity: f64,
    pub rate_bound: f64,
    pub derivative_rel: f64,
    pub derivative_max_rel: f64,
    pub derivative_fraction: f64,
    /// Samples with `|dE/dt| < noise_floor·E` are not compared.
    pub noise_floor: f64,
    pub y_growth: f64,
}

impl Default for CertTolerances {
    fn default() -> Self {
        CertTolerances {
            monotone: None,
            main_nonneg: 1e-8,
            velocity: 1e-8,
            rate_bound: 1e-6,
            derivative_rel: 1e-5,
            derivative_max_rel: 1e-4,
            derivative_fraction: 0.95,
            noise_floor: 1e-6,
            y_growth: 1e-5,
        }
    }
}

/// `e^{−γ} dE/dt` from the simplified closed form for the system's own
/// friction law:
/// `−[(2r/3)t^{−α} D − ((2r³t^{−3α} − 9rα(1+α)t^{−2−α})/27)‖z‖²]`,
/// `D = f_* − f − ⟨∇f, x_* − x⟩`; `α = 1` gives the NAG form.
pub fn analytic_dedt_closed_form(sys: &SystemSpec, s: &State) -> Result<f64> {
    let (r, a) = (sys.r_f64(), sys.alpha_f64());
    if r <= 0.0 {
        return Err(Error::input("closed-form derivative needs a damped second-order system"));
    }
    let b = NumericSpec::basis_values(sys, s);
    let d = -b.gap + b.grad_dot_z;
    let t = s.t;
    let coef_d = 2.0 * r / 3.0 * t.powf(-a);
    let coef_z = (2.0 * r * r * r * t.powf(-3.0 * a) - 9.0 * r * a * (1.0 + a) * t.powf(-2.0 - a)) / 27.0;
    let inner = if b.z_norm_sq == 0.0 { coef_d * d } else { coef_d * d - coef_z * b.z_norm_sq };
    Ok(-inner)
}

/// Derivative-match statistics over the compared samples.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeMatch {
    pub compared: usize,
    pub below_noise_floor: usize,
    pub fraction_within_rel: f64,
    pub fraction_within_max: f64,
    pub max_rel_error: f64,
    pub max_location: Option<f64>,
    /// Relative error at the required fraction (e.g. the 95th percentile).
    pub quantile_rel_error: f64,
    pub pass: bool,
    tol: CertTolerances,
}

impl DerivativeMatch {
    /// Two reports: the quantile criterion and the worst-case criterion.
    pub fn reports(&self) -> [CertReport; 2] {
        let note = Some(format!(
            "{} compared, {} below noise floor; {:.4} within {:e}, {:.4} within {:e}",
            self.compared,
            self.below_noise_floor,
            self.fraction_within_rel,
            self.tol.derivative_rel,
            self.fraction_within_max,
            self.tol.derivative_max_rel
        ));
        let q = CertReport {
            inequality_id: "derivative_match_quantile".into(),
            samples_checked: self.compared,
            max_violation: self.quantile_rel_error,
            violation_location: None,
            tolerance: self.tol.derivative_rel,
            pass: self.quantile_rel_error <= self.tol.derivative_rel,
            note: note.clone(),
        };
        let m = CertReport {
            inequality_id: "derivative_match_max".into(),
            samples_checked: self.compared,
            max_violation: self.max_rel_error,
            violation_location: self.max_location,
            tolerance: self.tol.derivative_max_rel,
            pass: self.max_rel_error <= self.tol.derivative_max_rel,
            note,
        };
        [q, m]
    }
}

/// Constants of the explicit rate bound, anchored at `T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateConstants {
    /// `max(T, t0)`.
    pub anchor: f64,
    pub log_e_anchor: f64,
    /// `log sup_{t ≥ T} e^{γ(t)} g₊(t) U(t)²`; `−∞` when the remainder vanishes.
    pub log_remainder_sup: f64,
}

impl RateConstants {
    /// `log(E(T) + remainder_sup)`.
    pub fn log_total(&self) -> f64 {
        log_add(self.log_e_anchor, self.log_remainder_sup)
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

fn ln_or_neg_inf(x: f64) -> f64 {
    if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        x.ln()
    }
}

#[derive(Clone, Debug)]
struct Point {
    state: State,
    energy: EnergyEval,
    /// `e^{−γ} dE/dt`
    dedt: f64,
    gap: f64,
    z_norm_sq: f64,
}

/// Precomputed evaluation of one Lyapunov function along one trajectory,
/// from `max(T, t0)` onward.
pub struct Certifier<'a> {
    traj: &'a Trajectory,
    sys: &'a SystemSpec,
    lyap: &'a LyapunovSpec,
    num: NumericSpec,
    closed_form: bool,
    threshold: f64,
    anchor: f64,
    points: Vec<Point>,
    tol: CertTolerances,
}

impl<'a> Certifier<'a> {
    pub fn new(traj: &'a Trajectory, lyap: &'a LyapunovSpec) -> Result<Self> {
        Self::with_tolerances(traj, lyap, CertTolerances::default())
    }

    pub fn with_tolerances(traj: &'a Trajectory, lyap: &'a LyapunovSpec, tol: CertTolerances) -> Result<Self> {
        let sys = traj.system();
        let num = lyap.numeric(sys)?;
        let threshold = super::threshold_t(lyap, sys)?;
        let anchor = threshold.max(traj.t0());
        if anchor > traj.t_end() {
            return Err(Error::input(format!(
                "trajectory ends at t = {} before the threshold T = {threshold}",
                traj.t_end()
            )));
        }
        let closed_form = matches!(lyap.provenance, Provenance::PaperNag | Provenance::PaperAlpha)
            && LyapunovSpec::paper_for(sys).map(|p| p == *lyap).unwrap_or(false);
        let mut states = vec![traj.state_at(anchor)?];
        states.extend(traj.samples().iter().filter(|s| s.t > anchor).map(|s| s.state()));
        let mut c = Certifier {
            traj,
            sys,
            lyap,
            num,
            closed_form,
            threshold,
            anchor,
            points: Vec::new(),
            tol,
        };
        c.points = states.into_par_iter().map(|s| c.point(s)).collect();
        Ok(c)
    }

    fn scaled_dedt(&self, s: &State) -> f64 {
        if self.closed_form {
            analytic_dedt_closed_form(self.sys, s).unwrap_or(f64::NAN)
        } else {
            self.num.collection.eval(s.t, &NumericSpec::basis_values(self.sys, s))
        }
    }

    fn point(&self, state: State) -> Point {
        let energy = self.num.eval(self.sys, &state);
        let obj = self.sys.objective();
        let z_norm_sq = state
            .x
            .iter()
            .zip(&obj.x_star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Point {
            dedt: self.scaled_dedt(&state),
            gap: obj.gap_unchecked(&state.x),
            energy,
            z_norm_sq,
            state,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    fn anchor_note(&self) -> String {
        format!("anchored at T = {:.6}", self.anchor)
    }

    /// `log E(T)` (`−∞` when `E(T) = 0`, NaN when its interior is negative).
    pub fn log_e_anchor(&self) -> f64 {
        let e = &self.points[0].energy;
        e.gamma + ln_or_neg_inf(e.interior())
    }

    /// Non-increase of `E` on `[T, t_end]`: the analytic rate, scaled to a
    /// log-change over the local sample spacing, and consecutive `log E`
    /// differences.
    pub fn monotone(&self) -> CertReport {
        let tol = self
            .tol
            .monotone
            .unwrap_or_else(|| 1e-9f64.max(1e-8 * self.log_e_anchor().abs()));
        let mut tr = ViolationTracker::new("monotone", tol);
        let n = self.points.len();
        for (i, p) in self.points.iter().enumerate() {
            let lo = self.points[i.saturating_sub(1)].state.t;
            let hi = self.points[(i + 1).min(n - 1)].state.t;
            let spacing = if n > 1 { (hi - lo) / if i == 0 || i == n - 1 { 1.0 } else { 2.0 } } else { 0.0 };
            let interior = p.energy.interior();
            if interior > 0.0 {
                tr.record(p.state.t, p.dedt / interior * spacing);
            } else if p.dedt <= 0.0 && interior == 0.0 {
                tr.record_trivial();
            } else {
                tr.record(p.state.t, f64::INFINITY);
            }
        }
        for w in self.points.windows(2) {
            let (a, b) = (w[0].energy.interior(), w[1].energy.interior());
            if a == 0.0 && b == 0.0 {
                tr.record_trivial();
                continue;
            }
            let la = w[0].energy.gamma + ln_or_neg_inf(a);
            let lb = w[1].energy.gamma + ln_or_neg_inf(b);
            tr.record(w[1].state.t, lb - la);
        }
        tr.finish(Some(self.anchor_note()))
    }

    /// `f − f_* − g‖z‖² ≥ 0` on `[T, t_end]`, measured relative to
    /// `f − f_* + |g|‖z‖²`.
    pub fn main_nonneg(&self) -> CertReport {
        let mut tr = ViolationTracker::new("main_nonneg", self.tol.main_nonneg);
        for p in &self.points {
            self.record_main(&mut tr, p.state.t, p.energy.main_part, p.gap, p.z_norm_sq);
        }
        tr.finish(Some(self.anchor_note()))
    }

    fn record_main(&self, tr: &mut ViolationTracker, t: f64, main: f64, gap: f64, zz: f64) {
        let scale = gap + self.num.g.eval(t).abs() * zz;
        if scale == 0.0 && main == 0.0 {
            tr.record_trivial();
        } else {
            tr.record(t, -main / scale);
        }
    }

    /// Same inequality on the samples before `T`; outside the certified range,
    /// so a failure here is informational only.
    pub fn main_nonneg_before_threshold(&self) -> CertReport {
        let mut tr = ViolationTracker::new("main_nonneg_before_threshold", self.tol.main_nonneg);
        let x_star = &self.sys.objective().x_star;
        for s in self.traj.samples().iter().filter(|s| s.t < self.anchor) {
            let st = s.state();
            let e = self.num.eval(self.sys, &st);
            let zz = st.x.iter().zip(x_star).map(|(a, b)| (a - b) * (a - b)).sum();
            let gap = self.sys.objective().gap_unchecked(&st.x);
            self.record_main(&mut tr, s.t, e.main_part, gap, zz);
        }
        tr.finish(Some(format!(
            "informational: t < T = {:.6} is outside the certified range",
            self.threshold
        )))
    }

    /// `γ(t) + log ½‖v + h z‖² ≤ log E(T)` on `[T, t_end]`.
    pub fn velocity_bound(&self) -> CertReport {
        let log_et = self.log_e_anchor();
        let mut tr = ViolationTracker::new("velocity_bound", self.tol.velocity);
        for p in &self.points {
            let vel = p.energy.velocity_part;
            if vel == 0.0 {
                tr.record_trivial();
            } else {
                tr.record(p.state.t, p.energy.gamma + vel.ln() - log_et);
            }
        }
        tr.finish(Some(self.anchor_note()))
    }

    /// `log K(t)` for every point, where `K` bounds the growth of `‖z‖` driven
    /// by the velocity bound: `K = √(2E(T)) e^{−γ(t)} ∫_T^t e^{γ(s)/2} ds`.
    fn log_k(&self) -> Vec<f64> {
        let log_et = self.log_e_anchor();
        let half_log_2e = 0.5 * (std::f64::consts::LN_2 + log_et);
        let (r, a) = (self.sys.r_f64(), self.sys.alpha_f64());
        if self.closed_form {
            // ∫ bounded by its antiderivative at t with the lower limit dropped.
            return self
                .points
                .iter()
                .map(|p| {
                    let t = p.state.t;
                    if a == 1.0 {
                        3f64.ln() + half_log_2e - (r + 3.0).ln() + (1.0 - r / 3.0) * t.ln()
                    } else {
                        3f64.ln() + half_log_2e - r.ln() + a * t.ln() - 0.5 * p.energy.gamma
                    }
                })
                .collect();
        }
        // I(t) = ∫_T^t e^{(γ(s) − γ(t))/2} ds by composite Simpson, accumulated
        // without overflow.
        let gamma = &self.num.gamma;
        let mut out = Vec::with_capacity(self.points.len());
        let mut integral = 0.0;
        out.push(f64::NEG_INFINITY);
        for w in self.points.windows(2) {
            let (t0, t1) = (w[0].state.t, w[1].state.t);
            let (g0, g1) = (w[0].energy.gamma, w[1].energy.gamma);
            const M: usize = 16;
            let step = (t1 - t0) / M as f64;
            let mut acc = 0.0;
            for k in 0..=M {
                let s = t0 + step * k as f64;
                let wgt = if k == 0 || k == M { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                acc += wgt * (0.5 * (gamma.eval(s) - g1)).exp();
            }
            integral = integral * (-0.5 * (g1 - g0)).exp() + acc * step / 3.0;
            out.push(half_log_2e - 0.5 * g1 + ln_or_neg_inf(integral));
        }
        out
    }

    /// `log U(t)` with `U = ‖z(T)‖ e^{γ(T) − γ(t)} + K(t)`, per point.
    fn log_u(&self) -> Vec<f64> {
        let p0 = &self.points[0];
        let log_zt = 0.5 * ln_or_neg_inf(p0.z_norm_sq);
        self.log_k()
            .into_iter()
            .zip(&self.points)
            .map(|(lk, p)| log_add(log_zt + p0.energy.gamma - p.energy.gamma, lk))
            .collect()
    }

    /// Per point, `log(g₊(t) U(t)²)`.
    fn log_remainder(&self) -> Vec<f64> {
        self.log_u()
            .into_iter()
            .zip(&self.points)
            .map(|(lu, p)| ln_or_neg_inf(self.num.g_plus.eval(p.state.t)) + 2.0 * lu)
            .collect()
    }

    /// `f − f_* ≤ E(T) e^{−γ(t)} + g₊(t) U(t)²` on `[T, t_end]`, in log-space.
    pub fn rate_bound(&self) -> CertReport {
        let log_et = self.log_e_anchor();
        let mut tr = ViolationTracker::new("rate_bound", self.tol.rate_bound);
        for (p, lr) in self.points.iter().zip(self.log_remainder()) {
            if p.gap == 0.0 {
                tr.record_trivial();
                continue;
            }
            let bound = log_add(log_et - p.energy.gamma, lr);
            tr.record(p.state.t, p.gap.ln() - bound);
        }
        tr.finish(Some(format!("{}; remainder uses the positive part of g", self.anchor_note())))
    }

    pub fn rate_constants(&self) -> RateConstants {
        let sup = self
            .log_remainder()
            .into_iter()
            .zip(&self.points)
            .map(|(lr, p)| lr + p.energy.gamma)
            .fold(f64::NEG_INFINITY, f64::max);
        RateConstants {
            anchor: self.anchor,
            log_e_anchor: self.log_e_anchor(),
            log_remainder_sup: sup,
        }
    }

    /// Finite-difference stencil `(f(−2δ) − 8f(−δ) + 8f(δ) − f(2δ)) / 12δ`
    /// over states advanced locally with the reference stepper.
    fn stencil_states(&self, s: &State) -> (f64, [State; 4]) {
        let delta = 1e-3 * s.t.min(1.0);
        let sys = self.sys;
        let states = [
            rk4_advance(sys, s, -2.0 * delta, 16),
            rk4_advance(sys, s, -delta, 8),
            rk4_advance(sys, s, delta, 8),
            rk4_advance(sys, s, 2.0 * delta, 16),
        ];
        (delta, states)
    }

    /// Analytic `dE/dt` against a five-point central difference of `E`.
    pub fn derivative_match(&self) -> DerivativeMatch {
        let gamma = &self.num.gamma;
        let results: Vec<Option<(f64, f64)>> = self
            .traj
            .samples()
            .par_iter()
            .map(|sample| {
                let s = sample.state();
                let e = self.num.eval(self.sys, &s);
                let u = self.scaled_dedt(&s);
                if !(u.abs() >= self.tol.noise_floor * e.interior().abs()) || u == 0.0 {
                    return None;
                }
                let (delta, st) = self.stencil_states(&s);
                let g0 = gamma.eval(s.t);
                let ev = |x: &State| {
                    let ee = self.num.eval(self.sys, x);
                    (ee.gamma - g0).exp() * ee.interior()
                };
                let fd = (ev(&st[0]) - 8.0 * ev(&st[1]) + 8.0 * ev(&st[2]) - ev(&st[3])) / (12.0 * delta);
                Some((s.t, (fd - u).abs() / u.abs()))
            })
            .collect();
        let total = results.len();
        let mut errs: Vec<(f64, f64)> = results.into_iter().flatten().collect();
        let compared = errs.len();
        let within = |tol: f64, errs: &[(f64, f64)]| {
            if errs.is_empty() {
                1.0
            } else {
                errs.iter().filter(|(_, e)| *e <= tol).count() as f64 / errs.len() as f64
            }
        };
        let fraction_within_rel = within(self.tol.derivative_rel, &errs);
        let fraction_within_max = within(self.tol.derivative_max_rel, &errs);
        let (max_location, max_rel_error) = errs
            .iter()
            .copied()
            .fold((None, 0.0f64), |(loc, m), (t, e)| {
                if e > m || e.is_nan() {
                    (Some(t), if e.is_nan() { f64::INFINITY } else { e })
                } else {
                    (loc, m)
                }
            });
        errs.sort_by(|a, b| a.1.total_cmp(&b.1));
        let quantile_rel_error = if errs.is_empty() {
            0.0
        } else {
            let k = ((self.tol.derivative_fraction * compared as f64).ceil() as usize).clamp(1, compared);
            errs[k - 1].1
        };
        DerivativeMatch {
            compared,
            below_noise_floor: total - compared,
            fraction_within_rel,
            fraction_within_max,
            pass: fraction_within_rel >= self.tol.derivative_fraction && max_rel_error <= self.tol.derivative_max_rel,
            max_rel_error,
            max_location,
            quantile_rel_error,
            tol: self.tol,
        }
    }

    /// (a) `d/dt[e^γ z] = e^γ (v + h z)` by finite differences, relative;
    /// (b) `log‖z(t)‖ ≤ log U(t)`.
    pub fn y_growth(&self) -> CertReport {
        let mut tr = ViolationTracker::new("y_growth", self.tol.y_growth);
        let x_star = &self.sys.objective().x_star;
        let gamma = &self.num.gamma;
        let identity: Vec<Option<f64>> = self
            .points
            .par_iter()
            .map(|p| {
                let s = &p.state;
                let z: Vec<f64> = s.x.iter().zip(x_star).map(|(a, b)| a - b).collect();
                let h = self.num.h.eval(s.t);
                let expect: Vec<f64> = s.v.iter().zip(&z).map(|(v, z)| v + h * z).collect();
                let scale = norm(&expect)
                    .max(self.num.gamma_prime.eval(s.t).abs() * norm(&z) + norm(&s.v));
                if scale == 0.0 {
                    return None;
                }
                let (delta, st) = self.stencil_states(s);
                let g0 = gamma.eval(s.t);
                let w: Vec<f64> = st.iter().map(|x| (gamma.eval(x.t) - g0).exp()).collect();
                let diff: Vec<f64> = (0..z.len())
                    .map(|i| {
                        let y = |k: usize| w[k] * (st[k].x[i] - x_star[i]);
                        (y(0) - 8.0 * y(1) + 8.0 * y(2) - y(3)) / (12.0 * delta) - expect[i]
                    })
                    .collect();
                Some(norm(&diff) / scale)
            })
            .collect();
        for ((p, id), lu) in self.points.iter().zip(identity).zip(self.log_u()) {
            match id {
                Some(e) => tr.record(p.state.t, e),
                None => tr.record_trivial(),
            }
            if p.z_norm_sq > 0.0 {
                tr.record(p.state.t, 0.5 * p.z_norm_sq.ln() - lu);
            }
        }
        tr.finish(Some(self.anchor_note()))
    }

    /// All trajectory checks in a fixed order.
    pub fn all(&self) -> Vec<CertReport> {
        let dm = self.derivative_match().reports();
        let [dq, dmax] = dm;
        vec![
            self.monotone(),
            dq,
            dmax,
            self.main_nonneg(),
            self.velocity_bound(),
            self.rate_bound(),
            self.y_growth(),
        ]
    }

    pub fn spec(&self) -> &LyapunovSpec {
        self.lyap
    }
}

pub fn certify_monotone(traj: &Trajectory, lyap: &LyapunovSpec) -> Result<CertReport> {
    Ok(Certifier::new(traj, lyap)?.monotone())
}

pub fn certify_main_nonneg(traj: &Trajectory, lyap: &LyapunovSpec) -> Result<CertReport> {
    Ok(Certifier::new(traj, lyap)?.main_nonneg())
}

pub fn certify_main_nonneg_before_threshold(traj: &Trajectory, lyap: &LyapunovSpec) -> Result<CertReport> {
    Ok(Certifier::new(traj, lyap)?.main_nonneg_before_threshold())
}

pub fn certify_velocity_bound(traj: &Trajectory, lyap: &LyapunovSpec) -> Result<CertReport> {
    Ok(Certifier::new(traj, lyap)?.velocity_bound())
}

pub fn certify_rate_bound(traj: &Trajectory, lyap: &LyapunovSpec) -> Result<CertReport> {
    Ok(Certifier::new(traj, lyap)?.rate_bound())
}

pub fn certify_y_growth(traj: &Trajectory, lyap: &LyapunovSpec) -> Result<CertReport> {
    Ok(Certifier::new(traj, lyap)?.y_growth())
}

pub fn certify_derivative_match(traj: &Trajectory, lyap: &LyapunovSpec) -> Result<DerivativeMatch> {
    Ok(Certifier::new(traj, lyap)?.derivative_match())
}

pub fn rate_bound_constants(traj: &Trajectory, lyap: &LyapunovSpec) -> Result<RateConstants> {
    Ok(Certifier::new(traj, lyap)?.rate_constants())
}
