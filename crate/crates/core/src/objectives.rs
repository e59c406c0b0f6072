//! Strongly convex test objectives with known minimizers.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{CertReport, ViolationTracker};

/// Required stationarity at the stored minimizer.
pub const MINIMIZER_GRAD_TOL: f64 = 1e-12;

/// Acceptance threshold for the sampled strong-convexity residual.
pub const STRONG_CONVEXITY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObjectiveKind {
    /// `½ Σ λᵢ (xᵢ − x*ᵢ)² + f*`
    Quadratic { spectrum: Vec<f64> },
    /// `log Σⱼ exp(aⱼᵀx) + (μ/2)‖x‖²`
    RegularizedLogsumexp { rows: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub dimension: usize,
    pub mu: f64,
    pub x_star: Vec<f64>,
    pub f_star: f64,
}

impl ObjectiveSpec {
    /// Diagonal quadratic; `μ` is the smallest eigenvalue.
    pub fn quadratic(spectrum: Vec<f64>, x_star: Vec<f64>, f_star: f64) -> Result<Self> {
        if spectrum.is_empty() {
            return Err(Error::input("quadratic needs at least one eigenvalue"));
        }
        if spectrum.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::input("quadratic eigenvalues must be positive and finite"));
        }
        if x_star.len() != spectrum.len() {
            return Err(Error::input(format!(
                "minimizer has dimension {} but spectrum has {}",
                x_star.len(),
                spectrum.len()
            )));
        }
        let mu = spectrum.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(ObjectiveSpec {
            dimension: spectrum.len(),
            kind: ObjectiveKind::Quadratic { spectrum },
            mu,
            x_star,
            f_star,
        })
    }

    /// Log-sum-exp over `n_rows` seeded rows in `[-1, 1]^n`, regularized by
    /// `(μ/2)‖x‖²`. The minimizer is located by damped Newton.
    pub fn regularized_logsumexp(dimension: usize, n_rows: usize, mu: f64, seed: u64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        if n_rows == 0 {
            return Err(Error::input("log-sum-exp needs at least one row"));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::input("mu must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n_rows)
            .map(|_| (0..dimension).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut spec = ObjectiveSpec {
            kind: ObjectiveKind::RegularizedLogsumexp { rows },
            dimension,
            mu,
            x_star: vec![0.0; dimension],
            f_star: 0.0,
        };
        let x_star = spec.newton_minimize()?;
        spec.f_star = spec.value(&x_star);
        spec.x_star = x_star;
        Ok(spec)
    }

    /// Overrides the declared modulus without validation; used to exercise
    /// mis-declared objectives.
    pub fn with_declared_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.value(x))
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut g = vec![0.0; self.dimension];
        self.grad_into(x, &mut g);
        Ok(g)
    }

    /// `f(x) − f_*`, computed without cancellation for quadratics.
    pub fn gap(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.gap_unchecked(x))
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::input(format!(
                "expected a vector of dimension {}, got {}",
                self.dimension,
                x.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ObjectiveKind::Quadratic { .. } => self.gap_unchecked(x) + self.f_star,
            ObjectiveKind::RegularizedLogsumexp { rows } => {
                let (lse, _) = logsumexp(rows, x);
                lse + 0.5 * self.mu * dot(x, x)
            }
        }
    }

    pub(crate) fn gap_unchecked(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ObjectiveKind::Quadratic { spectrum } => {
                0.5 * spectrum
                    .iter()
                    .zip(x.iter().zip(&self.x_star))
                    .map(|(l, (xi, si))| l * (xi - si) * (xi - si))
                    .sum::<f64>()
            }
            ObjectiveKind::RegularizedLogsumexp { .. } => self.value(x) - self.f_star,
        }
    }

    /// Gradient into a caller-provided buffer; dimensions are not checked.
    pub(crate) fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            ObjectiveKind::Quadratic { spectrum } => {
                for i in 0..self.dimension {
                    out[i] = spectrum[i] * (x[i] - self.x_star[i]);
                }
            }
            ObjectiveKind::RegularizedLogsumexp { rows } => {
                let (_, weights) = logsumexp(rows, x);
                for i in 0..self.dimension {
                    out[i] = self.mu * x[i];
                }
                for (row, w) in rows.iter().zip(&weights) {
                    for i in 0..self.dimension {
                        out[i] += w * row[i];
                    }
                }
            }
        }
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dimension;
        let mut h = DMatrix::<f64>::identity(n, n) * self.mu;
        if let ObjectiveKind::RegularizedLogsumexp { rows } = &self.kind {
            let (_, p) = logsumexp(rows, x);
            let mean: Vec<f64> = (0..n)
                .map(|i| rows.iter().zip(&p).map(|(r, w)| w * r[i]).sum())
                .collect();
            for (row, w) in rows.iter().zip(&p) {
                for i in 0..n {
                    for j in 0..n {
                        h[(i, j)] += w * row[i] * row[j];
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] -= mean[i] * mean[j];
                }
            }
        } else if let ObjectiveKind::Quadratic { spectrum } = &self.kind {
            h = DMatrix::from_diagonal(&DVector::from_vec(spectrum.clone()));
        }
        h
    }

    fn newton_minimize(&self) -> Result<Vec<f64>> {
        let n = self.dimension;
        let mut x = vec![0.0; n];
        let mut g = vec![0.0; n];
        for _ in 0..100 {
            self.grad_into(&x, &mut g);
            if norm(&g) <= 1e-14 {
                break;
            }
            let chol = self
                .hessian(&x)
                .cholesky()
                .ok_or_else(|| Error::input("Hessian not positive definite during Newton solve"))?;
            let step = chol.solve(&DVector::from_column_slice(&g));
            let f0 = self.value(&x);
            let slope: f64 = -dot(&g, step.as_slice());
            let mut alpha = 1.0;
            let mut next = x.clone();
            loop {
                for i in 0..n {
                    next[i] = x[i] - alpha * step[i];
                }
                if self.value(&next) <= f0 + 1e-4 * alpha * slope || alpha < 1e-12 {
                    break;
                }
                alpha *= 0.5;
            }
            if next == x {
                break;
            }
            x.clone_from(&next);
        }
        self.grad_into(&x, &mut g);
        if norm(&g) > MINIMIZER_GRAD_TOL {
            return Err(Error::input(format!(
                "Newton pre-solve stalled with gradient norm {:e}",
                norm(&g)
            )));
        }
        Ok(x)
    }

    /// Validates the declared data: positive `μ`, matching dimensions, and for
    /// quadratics `min(spectrum) = μ` exactly.
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        if !(self.mu > 0.0) {
            return Err(Error::input("mu must be positive"));
        }
        self.check_dim(&self.x_star)?;
        if let ObjectiveKind::Quadratic { spectrum } = &self.kind {
            let min = spectrum.iter().copied().fold(f64::INFINITY, f64::min);
            if min != self.mu {
                return Err(Error::input(format!(
                    "smallest eigenvalue {min} differs from declared mu {}",
                    self.mu
                )));
            }
        }
        let g = self.grad(&self.x_star)?;
        if norm(&g) > MINIMIZER_GRAD_TOL {
            return Err(Error::input("declared minimizer is not stationary"));
        }
        Ok(())
    }

    /// Samples `n_pairs` pairs around the minimizer and reports the minimum of
    /// `f(y) − f(x) − ⟨∇f(x), y − x⟩ − (μ/2)‖y − x‖²`.
    pub fn check_strong_convexity(&self, n_pairs: usize, seed: u64) -> Result<CertReport> {
        if n_pairs == 0 {
            return Err(Error::input("n_pairs must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.dimension;
        let mut tracker = ViolationTracker::new("strong_convexity", STRONG_CONVEXITY_TOL);
        let mut gx = vec![0.0; n];
        let mut diff = vec![0.0; n];
        for k in 0..n_pairs {
            let x: Vec<f64> = (0..n).map(|i| self.x_star[i] + rng.gen_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..n).map(|i| self.x_star[i] + rng.gen_range(-2.0..2.0)).collect();
            self.grad_into(&x, &mut gx);
            for i in 0..n {
                diff[i] = y[i] - x[i];
            }
            let residual = self.value(&y) - self.value(&x) - dot(&gx, &diff) - 0.5 * self.mu * dot(&diff, &diff);
            // violation is the negated residual
            tracker.record(k as f64, -residual);
        }
        let report = tracker.finish(Some(format!("mu = {}", self.mu)));
        Ok(report)
    }
}

/// `(log Σ exp(aⱼᵀx), softmax weights)`, shifted for stability.
fn logsumexp(rows: &[Vec<f64>], x: &[f64]) -> (f64, Vec<f64>) {
    let s: Vec<f64> = rows.iter().map(|r| dot(r, x)).collect();
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = e.iter().sum();
    (m + total.ln(), e.into_iter().map(|v| v / total).collect())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
