//! Adaptive Dormand–Prince 5(4) integration with continuous output.
//!
//! Step control and the dense-output polynomial follow Hairer, Nørsett &
//! Wanner's DOPRI5. Accepted steps are retained so a trajectory can be
//! resampled anywhere inside its span.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{State, SystemSpec};
use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const MAX_STEPS: usize = 20_000_000;

/// Relative/absolute tolerance pair for the mixed error test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rel: 1e-10, abs: 1e-12 }
    }
}

impl Tolerance {
    pub fn new(rel: f64, abs: f64) -> Result<Self> {
        let tol = Tolerance { rel, abs };
        tol.validate()?;
        Ok(tol)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel > 0.0 && self.abs > 0.0) || !self.rel.is_finite() || !self.abs.is_finite() {
            return Err(Error::input(format!(
                "tolerance must be a positive (rel, abs) pair, got ({}, {})",
                self.rel, self.abs
            )));
        }
        Ok(())
    }
}

/// One output point. `err` is the normalized local error estimate of the
/// accepted step that produced it (a fraction of the tolerance, so `≤ 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub err: f64,
}

impl Sample {
    pub fn state(&self) -> State {
        State { t: self.t, x: self.x.clone(), v: self.v.clone() }
    }
}

/// Dense-output coefficients of one accepted step on `[t_start, t_stop]`.
#[derive(Clone, Debug)]
struct Segment {
    t_start: f64,
    t_stop: f64,
    err: f64,
    /// Five coefficient vectors, each of length `2n`, stored back to back.
    cont: Vec<f64>,
}

impl Segment {
    fn eval(&self, t: f64, out: &mut [f64]) {
        let m = out.len();
        let h = self.t_stop - self.t_start;
        let theta = (t - self.t_start) / h;
        let theta1 = 1.0 - theta;
        let c = &self.cont;
        for i in 0..m {
            out[i] = c[i]
                + theta
                    * (c[m + i]
                        + theta1 * (c[2 * m + i] + theta * (c[3 * m + i] + theta1 * c[4 * m + i])));
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    system: Arc<SystemSpec>,
    samples: Vec<Sample>,
    tol: Tolerance,
    t0: f64,
    t_end: f64,
    y0: Vec<f64>,
    segments: Arc<Vec<Segment>>,
}

impl Trajectory {
    pub fn system(&self) -> &SystemSpec {
        &self.system
    }

    pub fn system_arc(&self) -> &Arc<SystemSpec> {
        &self.system
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn tolerance(&self) -> Tolerance {
        self.tol
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Number of accepted integration steps.
    pub fn steps(&self) -> usize {
        self.segments.len()
    }

    fn interpolate(&self, t: f64) -> Result<Sample> {
        if !(t >= self.t0 && t <= self.t_end) {
            return Err(Error::input(format!(
                "time {t} outside trajectory span [{}, {}]",
                self.t0, self.t_end
            )));
        }
        let n = self.system.dimension();
        if t == self.t0 || self.segments.is_empty() {
            return Ok(Sample {
                t,
                x: self.y0[..n].to_vec(),
                v: self.y0[n..].to_vec(),
                err: 0.0,
            });
        }
        let idx = self
            .segments
            .partition_point(|s| s.t_stop < t)
            .min(self.segments.len() - 1);
        let seg = &self.segments[idx];
        let mut y = vec![0.0; 2 * n];
        seg.eval(t, &mut y);
        let v = y.split_off(n);
        Ok(Sample { t, x: y, v, err: seg.err })
    }

    /// Interpolated state at a single time.
    pub fn state_at(&self, t: f64) -> Result<State> {
        Ok(self.interpolate(t)?.state())
    }

    /// Same trajectory sampled on a new, strictly increasing grid.
    pub fn resample(&self, grid: &[f64]) -> Result<Trajectory> {
        check_grid(grid, self.t0, self.t_end)?;
        let samples = grid.iter().map(|&t| self.interpolate(t)).collect::<Result<Vec<_>>>()?;
        Ok(Trajectory { samples, ..self.clone() })
    }

    /// CSV with columns `t, x0.., v0.., [f_gap,] err`.
    pub fn write_csv<W: Write>(&self, out: W, with_gap: bool) -> Result<()> {
        let n = self.system.dimension();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..n).map(|i| format!("v{i}")));
        if with_gap {
            header.push("f_gap".into());
        }
        header.push("err".into());
        w.write_record(&header)?;
        let obj = self.system.objective();
        for s in &self.samples {
            let mut row = Vec::with_capacity(header.len());
            row.push(s.t.to_string());
            row.extend(s.x.iter().map(|v| v.to_string()));
            row.extend(s.v.iter().map(|v| v.to_string()));
            if with_gap {
                row.push(obj.gap_unchecked(&s.x).to_string());
            }
            row.push(s.err.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_grid(grid: &[f64], t0: f64, t_end: f64) -> Result<()> {
    for (i, &t) in grid.iter().enumerate() {
        if !(t >= t0 && t <= t_end) {
            return Err(Error::input(format!("grid time {t} outside [{t0}, {t_end}]")));
        }
        if i > 0 && !(t > grid[i - 1]) {
            return Err(Error::input("grid must be strictly increasing"));
        }
    }
    Ok(())
}

/// `n` equally spaced times covering `[t0, t_end]` inclusive.
pub fn uniform_grid(t0: f64, t_end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![t0],
        _ => {
            let mut g: Vec<f64> = (0..n)
                .map(|i| t0 + (t_end - t0) * i as f64 / (n - 1) as f64)
                .collect();
            g[n - 1] = t_end;
            g
        }
    }
}

fn error_norm(y: &[f64], y_new: &[f64], err: &[f64], tol: &Tolerance) -> f64 {
    let m = y.len() as f64;
    let sum: f64 = y
        .iter()
        .zip(y_new)
        .zip(err)
        .map(|((a, b), e)| {
            let sc = tol.abs + tol.rel * a.abs().max(b.abs());
            (e / sc) * (e / sc)
        })
        .sum();
    (sum / m).sqrt()
}

fn rms_scaled(v: &[f64], y: &[f64], tol: &Tolerance) -> f64 {
    let m = v.len() as f64;
    (v.iter()
        .zip(y)
        .map(|(a, b)| {
            let sc = tol.abs + tol.rel * b.abs();
            (a / sc) * (a / sc)
        })
        .sum::<f64>()
        / m)
        .sqrt()
}

/// Starting step size estimate (Hairer–Wanner, order 5).
fn initial_step(sys: &SystemSpec, t: f64, y: &[f64], f0: &[f64], span: f64, tol: &Tolerance) -> f64 {
    let d0 = rms_scaled(y, y, tol);
    let d1 = rms_scaled(f0, y, tol);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    sys.rhs(t + h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms_scaled(&diff, y, tol) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    // Zero components with a tiny absolute tolerance can drive the estimate
    // below the underflow guard; the controller recovers from a small start.
    (100.0 * h0).min(h1).max(1e-12 * t.abs().max(1.0)).min(span)
}

/// Integrates `sys` from `(t0, x0, v0)` to `t_end`, sampling at `grid`.
pub fn integrate(
    sys: Arc<SystemSpec>,
    t0: f64,
    x0: &[f64],
    v0: &[f64],
    t_end: f64,
    tol: Tolerance,
    grid: &[f64],
) -> Result<Trajectory> {
    tol.validate()?;
    if !(t0 > 0.0) || !(t_end > t0) || !t_end.is_finite() {
        return Err(Error::input(format!("need t_end > t0 > 0, got t0 = {t0}, t_end = {t_end}")));
    }
    let n = sys.dimension();
    if x0.len() != n || v0.len() != n {
        return Err(Error::input(format!("initial state must have dimension {n}")));
    }
    check_grid(grid, t0, t_end)?;

    let m = 2 * n;
    let mut y: Vec<f64> = x0.iter().chain(v0).copied().collect();
    let y0 = y.clone();
    let mut samples = Vec::with_capacity(grid.len());
    let mut next = 0;
    while next < grid.len() && grid[next] == t0 {
        samples.push(Sample { t: t0, x: x0.to_vec(), v: v0.to_vec(), err: 0.0 });
        next += 1;
    }

    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; m]);
    let mut ys = vec![0.0; m];
    let mut y_new = vec![0.0; m];
    let mut err_vec = vec![0.0; m];
    let mut segments: Vec<Segment> = Vec::new();

    let mut t = t0;
    sys.rhs(t, &y, &mut k[0]);
    let mut h = initial_step(&sys, t, &y, &k[0], t_end - t0, &tol);
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut steps = 0usize;

    let fail = |t: f64, y: &[f64], message: String| Error::Integration {
        t,
        x: y[..n].to_vec(),
        v: y[n..].to_vec(),
        message,
    };

    while t < t_end {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(fail(t, &y, "step budget exhausted".into()));
        }
        let h_min = 1e-14 * t.abs().max(1.0);
        if !(h >= h_min) {
            return Err(fail(t, &y, format!("step size underflow (h = {h:e})")));
        }
        let last = t + 1.01 * h >= t_end;
        if last {
            h = t_end - t;
        }

        // stages
        for i in 0..m {
            ys[i] = y[i] + h * A21 * k[0][i];
        }
        sys.rhs(t + C2 * h, &ys, &mut k[1]);
        for i in 0..m {
            ys[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
        }
        sys.rhs(t + C3 * h, &ys, &mut k[2]);
        for i in 0..m {
            ys[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
        }
        sys.rhs(t + C4 * h, &ys, &mut k[3]);
        for i in 0..m {
            ys[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
        }
        sys.rhs(t + C5 * h, &ys, &mut k[4]);
        for i in 0..m {
            ys[i] = y[i]
                + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
        }
        let t_new = if last { t_end } else { t + h };
        sys.rhs(t_new, &ys, &mut k[5]);
        for i in 0..m {
            y_new[i] = y[i]
                + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
        }
        let (head, tail) = k.split_at_mut(6);
        sys.rhs(t_new, &y_new, &mut tail[0]);
        for i in 0..m {
            err_vec[i] = h
                * (E1 * head[0][i] + E3 * head[2][i] + E4 * head[3][i] + E5 * head[4][i]
                    + E6 * head[5][i]
                    + E7 * tail[0][i]);
        }
        let err = error_norm(&y, &y_new, &err_vec, &tol);
        if !err.is_finite() {
            return Err(fail(t, &y, "non-finite error estimate".into()));
        }

        let fac11 = err.powf(0.2 - BETA * 0.75);
        if err <= 1.0 {
            let mut cont = vec![0.0; 5 * m];
            for i in 0..m {
                let dy = y_new[i] - y[i];
                let bspl = h * k[0][i] - dy;
                cont[i] = y[i];
                cont[m + i] = dy;
                cont[2 * m + i] = bspl;
                cont[3 * m + i] = dy - h * k[6][i] - bspl;
                cont[4 * m + i] = h
                    * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i]
                        + D7 * k[6][i]);
            }
            let seg = Segment { t_start: t, t_stop: t_new, err, cont };
            let mut buf = vec![0.0; m];
            while next < grid.len() && grid[next] <= t_new {
                seg.eval(grid[next], &mut buf);
                samples.push(Sample {
                    t: grid[next],
                    x: buf[..n].to_vec(),
                    v: buf[n..].to_vec(),
                    err,
                });
                next += 1;
            }
            segments.push(seg);

            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            fac_old = err.max(1e-4);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            t = t_new;
            h = h_new;
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            last_rejected = true;
        }
    }

    Ok(Trajectory {
        system: sys,
        samples,
        tol,
        t0,
        t_end,
        y0,
        segments: Arc::new(segments),
    })
}

/// Classical fixed-step RK4 over `dt` (either sign) in `substeps` steps.
/// Serves as an integrator-independent reference for local finite differences.
pub fn rk4_advance(sys: &SystemSpec, s: &State, dt: f64, substeps: usize) -> State {
    let n = sys.dimension();
    let m = 2 * n;
    let mut y: Vec<f64> = s.x.iter().chain(&s.v).copied().collect();
    let mut t = s.t;
    let h = dt / substeps as f64;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut tmp = vec![0.0; m];
    for _ in 0..substeps {
        sys.rhs(t, &y, &mut k1);
        for i in 0..m {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        sys.rhs(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..m {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        sys.rhs(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..m {
            tmp[i] = y[i] + h * k3[i];
        }
        sys.rhs(t + h, &tmp, &mut k4);
        for i in 0..m {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += h;
    }
    let v = y.split_off(n);
    State { t: s.t + dt, x: y, v }
}
