//! The damped flows as first-order vector fields on `(t, x, v)`, `v = ẋ`.

use std::sync::Arc;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::ObjectiveSpec;
use crate::rational::{display, to_f64, Q};
use crate::symsearch::PowerSum;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    /// `ẋ = −∇f(x)`
    GradientFlow,
    /// `ẍ + (r/t) ẋ + ∇f(x) = 0`
    Nag,
    /// `ẍ + (r/t^α) ẋ + ∇f(x) = 0`, `0 < α < 1`
    GeneralizedNag,
    /// `ẍ + ∇f(x) = 0`; integrator test mode only.
    Undamped,
}

/// A flow bound to its objective. Friction parameters are kept exactly so the
/// symbolic side can use them; `f64` copies are cached for the numerics.
#[derive(Clone, Debug)]
pub struct SystemSpec {
    kind: SystemKind,
    r: Q,
    alpha: Q,
    r_f: f64,
    alpha_f: f64,
    objective: Arc<ObjectiveSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl SystemSpec {
    pub fn gradient_flow(objective: Arc<ObjectiveSpec>) -> Self {
        Self::build(SystemKind::GradientFlow, Q::zero(), Q::zero(), objective)
    }

    pub fn undamped(objective: Arc<ObjectiveSpec>) -> Self {
        Self::build(SystemKind::Undamped, Q::zero(), Q::zero(), objective)
    }

    pub fn nag(r: Q, objective: Arc<ObjectiveSpec>) -> Result<Self> {
        if r <= Q::zero() {
            return Err(Error::Domain(format!("friction r must be positive, got {}", display(&r))));
        }
        Ok(Self::build(SystemKind::Nag, r, Q::one(), objective))
    }

    pub fn generalized_nag(r: Q, alpha: Q, objective: Arc<ObjectiveSpec>) -> Result<Self> {
        if r <= Q::zero() {
            return Err(Error::Domain(format!("friction r must be positive, got {}", display(&r))));
        }
        if alpha <= Q::zero() || alpha >= Q::one() {
            return Err(Error::Domain(format!("alpha must lie in (0, 1), got {}", display(&alpha))));
        }
        Ok(Self::build(SystemKind::GeneralizedNag, r, alpha, objective))
    }

    fn build(kind: SystemKind, r: Q, alpha: Q, objective: Arc<ObjectiveSpec>) -> Self {
        SystemSpec {
            kind,
            r_f: to_f64(&r),
            alpha_f: to_f64(&alpha),
            r,
            alpha,
            objective,
        }
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn r(&self) -> &Q {
        &self.r
    }

    /// Exponent of the friction schedule: 1 for NAG, α for the generalized flow.
    pub fn alpha(&self) -> &Q {
        &self.alpha
    }

    pub fn r_f64(&self) -> f64 {
        self.r_f
    }

    pub fn alpha_f64(&self) -> f64 {
        self.alpha_f
    }

    pub fn objective(&self) -> &ObjectiveSpec {
        &self.objective
    }

    pub fn objective_arc(&self) -> &Arc<ObjectiveSpec> {
        &self.objective
    }

    pub fn dimension(&self) -> usize {
        self.objective.dimension
    }

    pub fn is_second_order(&self) -> bool {
        self.kind != SystemKind::GradientFlow
    }

    /// Whether the friction is singular at `t = 0`.
    pub fn needs_positive_time(&self) -> bool {
        matches!(self.kind, SystemKind::Nag | SystemKind::GeneralizedNag)
    }

    /// Friction `d(t)`: `r/t`, `r t^{−α}`, or 0.
    pub fn damping(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("damping needs t > 0, got {t}")));
        }
        Ok(self.damping_unchecked(t))
    }

    #[inline]
    fn damping_unchecked(&self, t: f64) -> f64 {
        match self.kind {
            SystemKind::Nag => self.r_f / t,
            SystemKind::GeneralizedNag => self.r_f * t.powf(-self.alpha_f),
            SystemKind::GradientFlow | SystemKind::Undamped => 0.0,
        }
    }

    /// Friction as an exact power sum, for second-order kinds.
    pub fn damping_powersum(&self) -> Option<PowerSum> {
        match self.kind {
            SystemKind::Nag | SystemKind::GeneralizedNag => {
                Some(PowerSum::monomial(self.r.clone(), -self.alpha.clone()))
            }
            SystemKind::Undamped => Some(PowerSum::zero()),
            SystemKind::GradientFlow => None,
        }
    }

    pub fn vector_field(&self, s: &State) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.dimension();
        if s.x.len() != n || s.v.len() != n {
            return Err(Error::input(format!("state dimension differs from objective dimension {n}")));
        }
        if self.needs_positive_time() && !(s.t > 0.0) {
            return Err(Error::Domain(format!("state time must be positive, got {}", s.t)));
        }
        let mut y = Vec::with_capacity(2 * n);
        y.extend_from_slice(&s.x);
        y.extend_from_slice(&s.v);
        let mut dy = vec![0.0; 2 * n];
        self.rhs(s.t, &y, &mut dy);
        let dv = dy.split_off(n);
        Ok((dy, dv))
    }

    /// Packed right-hand side on `y = [x; v]`.
    #[inline]
    pub(crate) fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.dimension();
        let (x, v) = y.split_at(n);
        let (dx, dv) = dy.split_at_mut(n);
        match self.kind {
            SystemKind::GradientFlow => {
                self.objective.grad_into(x, dx);
                dx.iter_mut().for_each(|g| *g = -*g);
                dv.iter_mut().for_each(|d| *d = 0.0);
            }
            _ => {
                let d = self.damping_unchecked(t);
                self.objective.grad_into(x, dv);
                for i in 0..n {
                    dx[i] = v[i];
                    dv[i] = -d * v[i] - dv[i];
                }
            }
        }
    }

    /// `½‖v‖² + f(x) − f_*`; non-increasing along exact damped trajectories.
    pub fn mechanical_energy(&self, x: &[f64], v: &[f64]) -> f64 {
        0.5 * v.iter().map(|a| a * a).sum::<f64>() + self.objective.gap_unchecked(x)
    }

    pub fn label(&self) -> String {
        match self.kind {
            SystemKind::GradientFlow => "gradient-flow".into(),
            SystemKind::Undamped => "undamped".into(),
            SystemKind::Nag => format!("nag(r={})", display(&self.r)),
            SystemKind::GeneralizedNag => {
                format!("generalized-nag(r={}, alpha={})", display(&self.r), display(&self.alpha))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    fn obj(n: usize) -> Arc<ObjectiveSpec> {
        Arc::new(ObjectiveSpec::quadratic(vec![1.0; n], vec![0.0; n], 0.0).unwrap())
    }

    /// Quadratic with D = I and minimizer chosen so ∇f(x) = x − x_* hits a target.
    fn obj_with_grad(x: &[f64], grad: &[f64]) -> Arc<ObjectiveSpec> {
        let x_star: Vec<f64> = x.iter().zip(grad).map(|(a, g)| a - g).collect();
        Arc::new(ObjectiveSpec::quadratic(vec![1.0; x.len()], x_star, 0.0).unwrap())
    }

    #[test]
    fn damping_examples() {
        assert_eq!(SystemSpec::nag(qi(3), obj(1)).unwrap().damping(1.0).unwrap(), 3.0);
        let gen = SystemSpec::generalized_nag(qi(3), q(1, 2), obj(1)).unwrap();
        assert_eq!(gen.damping(4.0).unwrap(), 1.5);
        assert_eq!(SystemSpec::gradient_flow(obj(1)).damping(7.0).unwrap(), 0.0);
        assert!(matches!(gen.damping(0.0), Err(Error::Domain(_))));
        assert!(matches!(gen.damping(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn parameter_domains() {
        assert!(SystemSpec::nag(qi(0), obj(1)).is_err());
        assert!(SystemSpec::generalized_nag(qi(1), qi(1), obj(1)).is_err());
        assert!(SystemSpec::generalized_nag(qi(1), q(3, 2), obj(1)).is_err());
        assert!(SystemSpec::generalized_nag(qi(1), qi(0), obj(1)).is_err());
    }

    #[test]
    fn vector_field_examples() {
        let x = [0.3, -0.2];
        let nag = SystemSpec::nag(qi(3), obj_with_grad(&x, &[1.0, 0.0])).unwrap();
        let s = State { t: 1.0, x: x.to_vec(), v: vec![0.0, 1.0] };
        let (dx, dv) = nag.vector_field(&s).unwrap();
        assert_eq!(dx, vec![0.0, 1.0]);
        assert_eq!(dv, vec![-1.0, -3.0]);

        let gf = SystemSpec::gradient_flow(obj_with_grad(&x, &[2.0, -1.0]));
        let s = State { t: 0.5, x: x.to_vec(), v: vec![9.0, 9.0] };
        let (dx, dv) = gf.vector_field(&s).unwrap();
        assert_eq!(dx, vec![-2.0, 1.0]);
        assert_eq!(dv, vec![0.0, 0.0]);

        let gen = SystemSpec::generalized_nag(qi(3), q(1, 2), obj_with_grad(&x, &[0.0, 0.0])).unwrap();
        let s = State { t: 4.0, x: x.to_vec(), v: vec![2.0, 0.0] };
        let (_, dv) = gen.vector_field(&s).unwrap();
        assert_eq!(dv, vec![-3.0, 0.0]);
    }

    #[test]
    fn vector_field_rejects_bad_states() {
        let nag = SystemSpec::nag(qi(3), obj(2)).unwrap();
        let s = State { t: 0.0, x: vec![0.0; 2], v: vec![0.0; 2] };
        assert!(nag.vector_field(&s).is_err());
        let s = State { t: 1.0, x: vec![0.0; 3], v: vec![0.0; 2] };
        assert!(nag.vector_field(&s).is_err());
    }

    #[test]
    fn damping_powersum_matches_numeric() {
        let gen = SystemSpec::generalized_nag(qi(3), q(3, 4), obj(1)).unwrap();
        let d = gen.damping_powersum().unwrap();
        assert!((d.eval(2.0) - gen.damping(2.0).unwrap()).abs() < 1e-15);
        assert!(SystemSpec::gradient_flow(obj(1)).damping_powersum().is_none());
    }

    #[test]
    fn vector_field_is_pure() {
        let nag = SystemSpec::nag(q(7, 2), obj(3)).unwrap();
        let s = State { t: 1.7, x: vec![0.1, 0.2, 0.3], v: vec![-1.0, 0.5, 2.0] };
        assert_eq!(nag.vector_field(&s).unwrap(), nag.vector_field(&s).unwrap());
    }

    #[test]
    fn energy_rate_is_minus_damping_times_speed_squared() {
        let o = Arc::new(ObjectiveSpec::quadratic(vec![1.0, 2.0, 5.0], vec![0.0; 3], 0.0).unwrap());
        let nag = SystemSpec::nag(qi(4), o.clone()).unwrap();
        let s = State { t: 2.0, x: vec![0.3, -0.4, 0.1], v: vec![0.2, 0.7, -0.5] };
        let (dx, dv) = nag.vector_field(&s).unwrap();
        let g = o.grad(&s.x).unwrap();
        let rate: f64 = (0..3).map(|i| g[i] * dx[i] + s.v[i] * dv[i]).sum();
        let speed: f64 = s.v.iter().map(|a| a * a).sum();
        assert!((rate + 2.0 * speed).abs() < 1e-14);
    }
}
