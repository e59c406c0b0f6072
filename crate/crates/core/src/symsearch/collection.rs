//! Exact time derivative of the ansatz
//! `E = e^γ (f − f_* − g‖z‖²) + ½ e^γ ‖v + h z‖²`, `z = x − x_*`,
//! along `ẋ = v`, `v̇ = −d(t) v − ∇f(x)`.
//!
//! The interior is held as a linear combination of state monomials with
//! power-sum coefficients and pushed through the product and chain rules
//! term by term; nothing is simplified by hand.

use std::collections::BTreeMap;

use num_traits::One;
use serde::{Deserialize, Serialize};

use super::powersum::{NumericPowerSum, PowerSum};
use crate::rational::{q, Q};

/// State monomials spanning the derivative of the ansatz.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// `f − f_*`
    Gap,
    /// `⟨∇f, z⟩`
    GradDotZ,
    /// `⟨∇f, v⟩`
    GradDotV,
    /// `‖z‖²`
    ZNormSq,
    /// `⟨z, v⟩`
    ZDotV,
    /// `‖v‖²`
    VNormSq,
}

impl Basis {
    pub const ALL: [Basis; 6] = [
        Basis::Gap,
        Basis::GradDotZ,
        Basis::GradDotV,
        Basis::ZNormSq,
        Basis::ZDotV,
        Basis::VNormSq,
    ];
}

type Form = BTreeMap<Basis, PowerSum>;

fn add_to(form: &mut Form, b: Basis, c: PowerSum) {
    if c.is_zero() {
        return;
    }
    let slot = form.entry(b).or_default();
    *slot = &*slot + &c;
}

/// Time derivative of a single monomial along the damped flow, as a form.
fn monomial_rate(b: Basis, damping: &PowerSum) -> Vec<(Basis, PowerSum)> {
    let one = PowerSum::constant(Q::one());
    let two = PowerSum::constant(q(2, 1));
    match b {
        // d(f − f_*) = ⟨∇f, ẋ⟩
        Basis::Gap => vec![(Basis::GradDotV, one)],
        // d‖z‖² = 2⟨z, ẋ⟩
        Basis::ZNormSq => vec![(Basis::ZDotV, two)],
        // d⟨z, v⟩ = ‖v‖² + ⟨z, −d v − ∇f⟩
        Basis::ZDotV => vec![
            (Basis::VNormSq, one.clone()),
            (Basis::ZDotV, -damping),
            (Basis::GradDotZ, -one),
        ],
        // d‖v‖² = 2⟨v, −d v − ∇f⟩
        Basis::VNormSq => vec![
            (Basis::VNormSq, -(&two * damping)),
            (Basis::GradDotV, -two),
        ],
        // Gradient monomials never occur inside the ansatz itself.
        Basis::GradDotZ | Basis::GradDotV => {
            unreachable!("gradient monomials are not differentiated")
        }
    }
}

/// Coefficients of `e^{−γ} dE/dt` on the six basis monomials.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivativeCollection {
    pub gap: PowerSum,
    pub grad_dot_z: PowerSum,
    pub grad_dot_v: PowerSum,
    pub z_norm_sq: PowerSum,
    pub z_dot_v: PowerSum,
    pub v_norm_sq: PowerSum,
}

impl DerivativeCollection {
    pub fn get(&self, b: Basis) -> &PowerSum {
        match b {
            Basis::Gap => &self.gap,
            Basis::GradDotZ => &self.grad_dot_z,
            Basis::GradDotV => &self.grad_dot_v,
            Basis::ZNormSq => &self.z_norm_sq,
            Basis::ZDotV => &self.z_dot_v,
            Basis::VNormSq => &self.v_norm_sq,
        }
    }

    fn slot(&mut self, b: Basis) -> &mut PowerSum {
        match b {
            Basis::Gap => &mut self.gap,
            Basis::GradDotZ => &mut self.grad_dot_z,
            Basis::GradDotV => &mut self.grad_dot_v,
            Basis::ZNormSq => &mut self.z_norm_sq,
            Basis::ZDotV => &mut self.z_dot_v,
            Basis::VNormSq => &mut self.v_norm_sq,
        }
    }

    pub fn is_zero(&self) -> bool {
        Basis::ALL.iter().all(|&b| self.get(b).is_zero())
    }

    pub fn to_numeric(&self) -> NumericCollection {
        NumericCollection {
            coeffs: Basis::ALL.map(|b| self.get(b).to_numeric()),
        }
    }
}

/// Monomial values at one state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BasisValues {
    pub gap: f64,
    pub grad_dot_z: f64,
    pub grad_dot_v: f64,
    pub z_norm_sq: f64,
    pub z_dot_v: f64,
    pub v_norm_sq: f64,
}

impl BasisValues {
    fn as_array(&self) -> [f64; 6] {
        [
            self.gap,
            self.grad_dot_z,
            self.grad_dot_v,
            self.z_norm_sq,
            self.z_dot_v,
            self.v_norm_sq,
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NumericCollection {
    coeffs: [NumericPowerSum; 6],
}

impl NumericCollection {
    /// `e^{−γ(t)} dE/dt` at a state.
    pub fn eval(&self, t: f64, values: &BasisValues) -> f64 {
        self.coeffs
            .iter()
            .zip(values.as_array())
            .map(|(c, v)| if v == 0.0 { 0.0 } else { c.eval(t) * v })
            .sum()
    }
}

/// Differentiates the ansatz along the damped flow.
///
/// `gamma_prime` is the rate of the exponential weight, `g` the coefficient of
/// `−‖z‖²`, `h` the coefficient of `z` in the velocity term and `damping` the
/// friction `d(t)`.
pub fn derive_collection(
    gamma_prime: &PowerSum,
    g: &PowerSum,
    h: &PowerSum,
    damping: &PowerSum,
) -> DerivativeCollection {
    derive(gamma_prime, g, h, damping, false)
}

/// Same derivation with the coefficient functions held constant in time
/// (their own derivatives dropped). The difference to [`derive_collection`] is
/// exactly the contribution of the coefficients' time variation.
pub fn derive_collection_frozen(
    gamma_prime: &PowerSum,
    g: &PowerSum,
    h: &PowerSum,
    damping: &PowerSum,
) -> DerivativeCollection {
    derive(gamma_prime, g, h, damping, true)
}

/// Interior of the ansatz as a form: `(f − f_*) − g‖z‖² + ½‖v‖² + h⟨z,v⟩ + ½h²‖z‖²`.
fn ansatz_form(g: &PowerSum, h: &PowerSum) -> Form {
    let half = PowerSum::constant(q(1, 2));
    let mut form = Form::new();
    add_to(&mut form, Basis::Gap, PowerSum::constant(Q::one()));
    add_to(&mut form, Basis::ZNormSq, -g);
    add_to(&mut form, Basis::VNormSq, half.clone());
    add_to(&mut form, Basis::ZDotV, h.clone());
    add_to(&mut form, Basis::ZNormSq, &half * &(h * h));
    form
}

fn derive(
    gamma_prime: &PowerSum,
    g: &PowerSum,
    h: &PowerSum,
    damping: &PowerSum,
    frozen: bool,
) -> DerivativeCollection {
    let form = ansatz_form(g, h);
    let mut out = Form::new();
    for (&b, coeff) in &form {
        // d/dt[e^γ c B] = e^γ (γ′ c B + c′ B + c Ḃ)
        add_to(&mut out, b, gamma_prime * coeff);
        if !frozen {
            add_to(&mut out, b, coeff.derivative());
        }
        for (b2, rate) in monomial_rate(b, damping) {
            add_to(&mut out, b2, coeff * &rate);
        }
    }
    let mut coll = DerivativeCollection::default();
    for (b, c) in out {
        *coll.slot(b) = c;
    }
    coll
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    fn mono(c: Q, p: Q) -> PowerSum {
        PowerSum::monomial(c, p)
    }

    /// Coefficients collected by hand from expanding dE/dt, used as an oracle.
    fn hand_collection(gp: &PowerSum, g: &PowerSum, h: &PowerSum, d: &PowerSum) -> DerivativeCollection {
        let half = PowerSum::constant(q(1, 2));
        let two = PowerSum::constant(qi(2));
        DerivativeCollection {
            gap: gp.clone(),
            grad_dot_z: -h,
            grad_dot_v: PowerSum::zero(),
            z_norm_sq: &(&(&(-&(gp * g)) + &(&half * &(gp * &(h * h)))) - &g.derivative())
                + &(h * &h.derivative()),
            z_dot_v: &(&(&(&(gp * h) - &(&two * g)) + &h.derivative()) - &(h * d)) + &(h * h),
            v_norm_sq: &(&(&half * gp) - d) + h,
        }
    }

    #[test]
    fn nag_r6_reproduces_the_simplified_display() {
        // γ′ = 4/t, g = 2/t², h = 4/t, d = 6/t
        let gp = mono(qi(4), qi(-1));
        let g = mono(qi(2), qi(-2));
        let h = mono(qi(4), qi(-1));
        let d = mono(qi(6), qi(-1));
        let c = derive_collection(&gp, &g, &h, &d);
        assert_eq!(c.gap, mono(qi(4), qi(-1)));
        assert_eq!(c.grad_dot_z, mono(qi(-4), qi(-1)));
        // (2r³ − 18r)/27 = 12 at r = 6
        assert_eq!(c.z_norm_sq, mono(qi(12), qi(-3)));
        assert!(c.z_dot_v.is_zero());
        assert!(c.v_norm_sq.is_zero());
        assert!(c.grad_dot_v.is_zero());
    }

    #[test]
    fn matches_hand_expansion_for_general_coefficients() {
        let gp = PowerSum::from_terms([(qi(2), q(-1, 2)), (q(1, 3), qi(-1))]);
        let g = PowerSum::from_terms([(qi(1), qi(-1)), (q(-1, 2), q(-3, 2))]);
        let h = PowerSum::from_terms([(qi(5), q(-1, 2)), (qi(-1), qi(0))]);
        let d = mono(qi(3), q(-1, 2));
        assert_eq!(derive_collection(&gp, &g, &h, &d), hand_collection(&gp, &g, &h, &d));
    }

    #[test]
    fn alpha_instance_matches_corrected_display() {
        // r = 3, α = 1/2: γ′ = h = 2 t^{-1/2}, g = t^{-1} − ½ t^{-3/2}, d = 3 t^{-1/2}
        let gp = mono(qi(2), q(-1, 2));
        let g = PowerSum::from_terms([(qi(1), qi(-1)), (q(-1, 2), q(-3, 2))]);
        let d = mono(qi(3), q(-1, 2));
        let c = derive_collection(&gp, &g, &gp, &d);
        assert!(c.z_dot_v.is_zero() && c.v_norm_sq.is_zero());
        // (2r³ t^{-3α} − 9rα(1+α) t^{-2-α}) / 27 = 2 t^{-3/2} − ¾ t^{-5/2}
        let expected = PowerSum::from_terms([(qi(2), q(-3, 2)), (q(-3, 4), q(-5, 2))]);
        assert_eq!(c.z_norm_sq, expected);
        // independent scalar evaluation at t = 4
        let t: f64 = 4.0;
        let (r, a) = (3.0_f64, 0.5_f64);
        let display = (2.0 * r.powi(3) * t.powf(-3.0 * a) - 9.0 * r * a * (1.0 + a) * t.powf(-2.0 - a)) / 27.0;
        assert!((c.z_norm_sq.eval(t) - display).abs() < 1e-15);
    }

    #[test]
    fn pure_energy_derivative_cancels() {
        // E = f − f_* + ½‖v‖² with no damping: d/dt = ⟨∇f,v⟩ − ⟨v,∇f⟩ = 0
        let z = PowerSum::zero();
        let c = derive_collection(&z, &z, &z, &z);
        assert!(c.is_zero());
    }

    #[test]
    fn frozen_drops_only_coefficient_rates() {
        let gp = mono(qi(4), qi(-1));
        let g = mono(qi(2), qi(-2));
        let h = mono(qi(4), qi(-1));
        let d = mono(qi(6), qi(-1));
        let full = derive_collection(&gp, &g, &h, &d);
        let frozen = derive_collection_frozen(&gp, &g, &h, &d);
        // −g′ + h h′ = 4 t^{-3} − 16 t^{-3}
        assert_eq!(&full.z_norm_sq - &frozen.z_norm_sq, mono(qi(-12), qi(-3)));
        // h′ = −4 t^{-2}
        assert_eq!(&full.z_dot_v - &frozen.z_dot_v, mono(qi(-4), qi(-2)));
        assert_eq!(full.v_norm_sq, frozen.v_norm_sq);
    }
}
