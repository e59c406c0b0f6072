//! Lyapunov energies of the form
//! `E = e^γ (f − f_* − g‖z‖²) + ½ e^γ ‖v + h z‖²`, `z = x − x_*`,
//! their analytic time derivatives, and trajectory certification.

mod certify;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::dynamics::{State, SystemKind, SystemSpec};
use crate::error::{Error, Result};
use crate::objectives::dot;
use crate::rational::{from_f64_decimal, q, qi, Q};
use crate::symsearch::{
    derive_collection, principal_threshold, NumericAntiderivative, NumericCollection,
    NumericPowerSum, BasisValues, PowerSum, Threshold,
};

pub use certify::{
    analytic_dedt_closed_form, certify_derivative_match, certify_main_nonneg,
    certify_main_nonneg_before_threshold, certify_monotone, certify_rate_bound,
    certify_velocity_bound, certify_y_growth, rate_bound_constants, CertTolerances, Certifier,
    DerivativeMatch, RateConstants,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    PaperNag,
    PaperAlpha,
    Discovered,
}

/// How `T` is obtained for a given friction and `μ`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum ThresholdRule {
    /// `T = (scale/μ)^power`.
    Scaled {
        scale: crate::rational::RatioPair,
        power: crate::rational::RatioPair,
    },
    /// Sign change of the quasi-static absorbed coefficient, recomputed for
    /// the system's friction and `μ`.
    Extracted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpec {
    pub gamma_prime: PowerSum,
    pub g: PowerSum,
    pub h: PowerSum,
    pub threshold: ThresholdRule,
    pub provenance: Provenance,
}

/// `E` evaluated at one state, split into its pieces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyEval {
    pub t: f64,
    pub gamma: f64,
    /// `f − f_* − g‖z‖²`
    pub main_part: f64,
    /// `½‖v + h z‖²`
    pub velocity_part: f64,
}

impl EnergyEval {
    pub fn interior(&self) -> f64 {
        self.main_part + self.velocity_part
    }

    /// `log E`, or `None` when the interior is not strictly positive
    /// (`E = 0` at the equilibrium, or a sign defect worth reporting).
    pub fn log_e(&self) -> Option<f64> {
        let i = self.interior();
        (i > 0.0).then(|| self.gamma + i.ln())
    }
}

/// A real number carried as sign and log-magnitude so that `e^γ`-weighted
/// quantities never overflow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedLog {
    pub sign: i8,
    /// `log|value|`; `−∞` when `sign = 0`.
    pub log_abs: f64,
}

impl SignedLog {
    pub fn new(scaled: f64, log_scale: f64) -> Self {
        if scaled == 0.0 {
            SignedLog { sign: 0, log_abs: f64::NEG_INFINITY }
        } else {
            SignedLog {
                sign: if scaled > 0.0 { 1 } else { -1 },
                log_abs: scaled.abs().ln() + log_scale,
            }
        }
    }

    /// Plain value; may overflow to `±∞` for large weights.
    pub fn value(&self) -> f64 {
        f64::from(self.sign) * self.log_abs.exp()
    }
}

impl LyapunovSpec {
    /// `γ′ = h = (2r/3)t^{−1}`, `g = ((r² − 3r)/9)t^{−2}`.
    pub fn paper_nag(r: &Q) -> Self {
        let c = r * q(2, 3);
        LyapunovSpec {
            gamma_prime: PowerSum::monomial(c.clone(), qi(-1)),
            g: PowerSum::monomial((r * r - r * qi(3)) / qi(9), qi(-2)),
            h: PowerSum::monomial(c, qi(-1)),
            threshold: Self::paper_rule(r, &Q::one()),
            provenance: Provenance::PaperNag,
        }
    }

    /// `γ′ = h = (2r/3)t^{−α}`, `g = (r²/9)t^{−2α} − (rα/3)t^{−1−α}`.
    pub fn paper_alpha(r: &Q, alpha: &Q) -> Self {
        let c = r * q(2, 3);
        LyapunovSpec {
            gamma_prime: PowerSum::monomial(c.clone(), -alpha.clone()),
            g: PowerSum::from_terms([
                (r * r / qi(9), -(alpha * qi(2))),
                (-(r * alpha) / qi(3), -(Q::one() + alpha)),
            ]),
            h: PowerSum::monomial(c, -alpha.clone()),
            threshold: Self::paper_rule(r, alpha),
            provenance: Provenance::PaperAlpha,
        }
    }

    fn paper_rule(r: &Q, alpha: &Q) -> ThresholdRule {
        ThresholdRule::Scaled {
            scale: crate::rational::RatioPair(r * r * q(2, 9)),
            power: crate::rational::RatioPair((alpha * qi(2)).recip()),
        }
    }

    pub fn discovered(gamma_prime: PowerSum, g: PowerSum, h: PowerSum) -> Self {
        LyapunovSpec {
            gamma_prime,
            g,
            h,
            threshold: ThresholdRule::Extracted,
            provenance: Provenance::Discovered,
        }
    }

    /// The paper's function for the system's friction law.
    pub fn paper_for(sys: &SystemSpec) -> Result<Self> {
        match sys.kind() {
            SystemKind::Nag => Ok(Self::paper_nag(sys.r())),
            SystemKind::GeneralizedNag => Ok(Self::paper_alpha(sys.r(), sys.alpha())),
            k => Err(Error::input(format!("no Lyapunov function is defined for {k:?}"))),
        }
    }

    /// Copy with `g` multiplied by `k`; the threshold rule is kept.
    pub fn scale_g(&self, k: &Q) -> Self {
        LyapunovSpec {
            g: self.g.scale(k),
            provenance: Provenance::Discovered,
            ..self.clone()
        }
    }

    /// Copy with `γ′` multiplied by `k`; the threshold rule is kept.
    pub fn scale_gamma_prime(&self, k: &Q) -> Self {
        LyapunovSpec {
            gamma_prime: self.gamma_prime.scale(k),
            provenance: Provenance::Discovered,
            ..self.clone()
        }
    }

    /// `γ(t)` with zero integration constant: `(2r/3) log t` or
    /// `(2/3)(r/(1−α)) t^{1−α}` for the paper's weights.
    pub fn gamma(&self) -> NumericAntiderivative {
        self.gamma_prime.antiderivative().to_numeric()
    }

    /// Exact `T` for the system's friction and `μ`.
    pub fn threshold_exact(&self, sys: &SystemSpec) -> Result<Threshold> {
        let mu_f = sys.objective().mu;
        if !(mu_f > 0.0) {
            return Err(Error::input(format!("threshold needs mu > 0, got {mu_f}")));
        }
        let mu = from_f64_decimal(mu_f)?;
        match &self.threshold {
            ThresholdRule::Scaled { scale, power } => {
                if scale.0 < Q::zero() || power.0 <= Q::zero() {
                    return Err(Error::input("threshold rule needs scale ≥ 0 and power > 0"));
                }
                Ok(Threshold { base: &scale.0 / &mu, power: power.0.clone() })
            }
            ThresholdRule::Extracted => {
                let damping = sys
                    .damping_powersum()
                    .ok_or_else(|| Error::input("threshold needs a second-order system"))?;
                principal_threshold(&self.gamma_prime, &self.h, &damping, &mu).ok_or_else(|| {
                    Error::input("no two-term sign change: threshold is not extractable")
                })
            }
        }
    }

    /// Numeric images used along trajectories.
    pub fn numeric(&self, sys: &SystemSpec) -> Result<NumericSpec> {
        let damping = sys
            .damping_powersum()
            .ok_or_else(|| Error::input("Lyapunov evaluation needs a second-order system"))?;
        Ok(NumericSpec {
            gamma_prime: self.gamma_prime.to_numeric(),
            g: self.g.to_numeric(),
            g_plus: self.g.positive_part().to_numeric(),
            h: self.h.to_numeric(),
            gamma: self.gamma(),
            collection: derive_collection(&self.gamma_prime, &self.g, &self.h, &damping).to_numeric(),
        })
    }
}

/// `f64` coefficient functions of a [`LyapunovSpec`].
#[derive(Clone, Debug)]
pub struct NumericSpec {
    pub gamma_prime: NumericPowerSum,
    pub g: NumericPowerSum,
    pub g_plus: NumericPowerSum,
    pub h: NumericPowerSum,
    pub gamma: NumericAntiderivative,
    pub collection: NumericCollection,
}

impl NumericSpec {
    pub fn eval(&self, sys: &SystemSpec, s: &State) -> EnergyEval {
        let obj = sys.objective();
        let gap = obj.gap_unchecked(&s.x);
        let h = self.h.eval(s.t);
        let mut zz = 0.0;
        let mut w = 0.0;
        for i in 0..s.x.len() {
            let z = s.x[i] - obj.x_star[i];
            zz += z * z;
            let a = s.v[i] + h * z;
            w += a * a;
        }
        let g = self.g.eval(s.t);
        EnergyEval {
            t: s.t,
            gamma: self.gamma.eval(s.t),
            main_part: if g == 0.0 { gap } else { gap - g * zz },
            velocity_part: 0.5 * w,
        }
    }

    /// Monomial values `f − f_*, ⟨∇f, z⟩, ⟨∇f, v⟩, ‖z‖², ⟨z, v⟩, ‖v‖²`.
    pub fn basis_values(sys: &SystemSpec, s: &State) -> BasisValues {
        let obj = sys.objective();
        let n = s.x.len();
        let mut grad = vec![0.0; n];
        obj.grad_into(&s.x, &mut grad);
        let z: Vec<f64> = s.x.iter().zip(&obj.x_star).map(|(a, b)| a - b).collect();
        BasisValues {
            gap: obj.gap_unchecked(&s.x),
            grad_dot_z: dot(&grad, &z),
            grad_dot_v: dot(&grad, &s.v),
            z_norm_sq: dot(&z, &z),
            z_dot_v: dot(&z, &s.v),
            v_norm_sq: dot(&s.v, &s.v),
        }
    }
}

/// `T` for the system: `√(2r²/(9μ))` (NAG), `(2r²/(9μ))^{1/(2α)}` (α-friction),
/// or the extracted rule for discovered functions.
pub fn threshold_t(lyap: &LyapunovSpec, sys: &SystemSpec) -> Result<f64> {
    Ok(lyap.threshold_exact(sys)?.to_f64())
}

pub fn eval_log_e(lyap: &LyapunovSpec, sys: &SystemSpec, s: &State) -> Result<EnergyEval> {
    check_state(sys, s)?;
    Ok(lyap.numeric(sys)?.eval(sys, s))
}

/// `dE/dt` at a state. The paper's functions use their simplified closed
/// forms; discovered ones evaluate the derived coefficient collection.
pub fn analytic_dedt(lyap: &LyapunovSpec, sys: &SystemSpec, s: &State) -> Result<SignedLog> {
    check_state(sys, s)?;
    let num = lyap.numeric(sys)?;
    let gamma = num.gamma.eval(s.t);
    let paper = matches!(lyap.provenance, Provenance::PaperNag | Provenance::PaperAlpha)
        && LyapunovSpec::paper_for(sys).map(|p| p == *lyap).unwrap_or(false);
    let scaled = if paper {
        analytic_dedt_closed_form(sys, s)?
    } else {
        num.collection.eval(s.t, &NumericSpec::basis_values(sys, s))
    };
    Ok(SignedLog::new(scaled, gamma))
}

fn check_state(sys: &SystemSpec, s: &State) -> Result<()> {
    if !(s.t > 0.0) {
        return Err(Error::Domain(format!("Lyapunov evaluation needs t > 0, got {}", s.t)));
    }
    let n = sys.dimension();
    if s.x.len() != n || s.v.len() != n {
        return Err(Error::input(format!("state dimension differs from objective dimension {n}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::ObjectiveSpec;
    use std::sync::Arc;

    fn scalar_quadratic(mu: f64) -> Arc<ObjectiveSpec> {
        Arc::new(ObjectiveSpec::quadratic(vec![mu], vec![0.0], 0.0).unwrap())
    }

    #[test]
    fn paper_coefficients() {
        let s = LyapunovSpec::paper_nag(&qi(6));
        assert_eq!(s.gamma_prime, PowerSum::monomial(qi(4), qi(-1)));
        assert_eq!(s.g, PowerSum::monomial(qi(2), qi(-2)));
        assert!(LyapunovSpec::paper_nag(&qi(3)).g.is_zero());
        let a = LyapunovSpec::paper_alpha(&qi(3), &q(1, 2));
        assert_eq!(a.g.to_string(), "t^(-1) - 1/2*t^(-3/2)");
        assert_eq!(a.h, PowerSum::monomial(qi(2), q(-1, 2)));
    }

    #[test]
    fn threshold_examples() {
        let nag3 = SystemSpec::nag(qi(3), scalar_quadratic(1.0)).unwrap();
        let t = threshold_t(&LyapunovSpec::paper_nag(&qi(3)), &nag3).unwrap();
        assert!((t - 1.414213562).abs() < 1e-9);

        let alpha = SystemSpec::generalized_nag(qi(3), q(1, 2), scalar_quadratic(1.0)).unwrap();
        let t = threshold_t(&LyapunovSpec::paper_alpha(&qi(3), &q(1, 2)), &alpha).unwrap();
        assert_eq!(t, 2.0);

        let nag_mu2 = SystemSpec::nag(qi(3), scalar_quadratic(2.0)).unwrap();
        let t = threshold_t(&LyapunovSpec::paper_nag(&qi(3)), &nag_mu2).unwrap();
        assert!((t - 1.0).abs() < 1e-15);
    }

    #[test]
    fn extracted_rule_agrees_with_scaled_rule() {
        for r in [3, 4, 6] {
            let sys = SystemSpec::nag(qi(r), scalar_quadratic(2.0)).unwrap();
            let paper = LyapunovSpec::paper_nag(&qi(r));
            let found = LyapunovSpec::discovered(paper.gamma_prime.clone(), paper.g.clone(), paper.h.clone());
            assert_eq!(paper.threshold_exact(&sys).unwrap(), found.threshold_exact(&sys).unwrap());
        }
    }

    #[test]
    fn energy_examples() {
        let sys = SystemSpec::nag(qi(6), scalar_quadratic(1.0)).unwrap();
        let spec = LyapunovSpec::paper_nag(&qi(6));
        let e = eval_log_e(&spec, &sys, &State { t: 2.0, x: vec![1.0], v: vec![0.0] }).unwrap();
        assert!(e.main_part.abs() < 1e-15);
        assert!((e.velocity_part - 2.0).abs() < 1e-15);
        // independent scalar evaluation: t^4 · 2
        let expected = (2f64.powi(4) * 2.0).ln();
        assert!((e.log_e().unwrap() - expected).abs() < 1e-14);

        let eq = eval_log_e(&spec, &sys, &State { t: 2.0, x: vec![0.0], v: vec![0.0] }).unwrap();
        assert_eq!(eq.log_e(), None);

        let sys3 = SystemSpec::nag(qi(3), scalar_quadratic(1.0)).unwrap();
        let s = State { t: 0.7, x: vec![0.3], v: vec![1.0] };
        let e3 = eval_log_e(&LyapunovSpec::paper_nag(&qi(3)), &sys3, &s).unwrap();
        assert_eq!(e3.main_part, 0.5 * 0.3 * 0.3);
    }

    #[test]
    fn derivative_examples() {
        let sys = SystemSpec::nag(qi(6), scalar_quadratic(1.0)).unwrap();
        let spec = LyapunovSpec::paper_nag(&qi(6));
        let d = analytic_dedt(&spec, &sys, &State { t: 10.0, x: vec![1.0], v: vec![0.0] }).unwrap();
        assert_eq!(d.sign, -1);
        // 10⁴·[(12/30)·(1/2) − 324/27000]
        assert!((d.value() + 1880.0).abs() < 1e-9);
        let found = spec.scale_g(&qi(1));
        let via_collection = analytic_dedt(&found, &sys, &State { t: 10.0, x: vec![1.0], v: vec![0.0] }).unwrap();
        assert!((via_collection.value() + 1880.0).abs() < 1e-9);

        let zero = analytic_dedt(&spec, &sys, &State { t: 10.0, x: vec![0.0], v: vec![0.0] }).unwrap();
        assert_eq!(zero.sign, 0);
        assert!(analytic_dedt(&spec, &sys, &State { t: 0.0, x: vec![0.0], v: vec![0.0] }).is_err());
    }

    #[test]
    fn mutations_keep_threshold_and_mark_provenance() {
        let spec = LyapunovSpec::paper_nag(&qi(4));
        let m = spec.scale_g(&qi(2));
        assert_eq!(m.provenance, Provenance::Discovered);
        assert_eq!(m.threshold, spec.threshold);
        assert_eq!(m.g, spec.g.scale(&qi(2)));
        let m = spec.scale_gamma_prime(&q(6, 5));
        assert_eq!(m.gamma_prime, PowerSum::monomial(q(8, 3) * q(6, 5), qi(-1)));
    }
}
