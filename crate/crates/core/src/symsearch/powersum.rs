//! Exact sums of rational powers of `t`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::rational::{display, to_f64, RatioPair, Q};

/// `Σ cᵢ·t^{pᵢ}` with exact rational coefficients and exponents.
///
/// Canonical form: terms sorted by ascending exponent, no zero coefficients,
/// no repeated exponents. Every constructor and operation preserves it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct PowerSum {
    terms: Vec<(Q, Q)>,
}

impl PowerSum {
    pub fn zero() -> Self {
        PowerSum { terms: Vec::new() }
    }

    /// `coeff · t^exponent`
    pub fn monomial(coeff: Q, exponent: Q) -> Self {
        PowerSum::from_terms([(coeff, exponent)])
    }

    pub fn constant(c: Q) -> Self {
        PowerSum::monomial(c, Q::zero())
    }

    /// Builds a canonical sum from arbitrary `(coeff, exponent)` pairs.
    pub fn from_terms(terms: impl IntoIterator<Item = (Q, Q)>) -> Self {
        let mut acc: BTreeMap<Q, Q> = BTreeMap::new();
        for (c, p) in terms {
            *acc.entry(p).or_insert_with(Q::zero) += c;
        }
        PowerSum {
            terms: acc
                .into_iter()
                .filter(|(_, c)| !c.is_zero())
                .map(|(p, c)| (c, p))
                .collect(),
        }
    }

    /// Terms as `(coeff, exponent)` in ascending exponent order.
    pub fn terms(&self) -> &[(Q, Q)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff_of(&self, exponent: &Q) -> Q {
        self.terms
            .iter()
            .find(|(_, p)| p == exponent)
            .map(|(c, _)| c.clone())
            .unwrap_or_else(Q::zero)
    }

    pub fn exponents(&self) -> impl Iterator<Item = &Q> {
        self.terms.iter().map(|(_, p)| p)
    }

    /// The term that dominates as `t → ∞` (largest exponent).
    pub fn leading(&self) -> Option<&(Q, Q)> {
        self.terms.last()
    }

    pub fn scale(&self, k: &Q) -> Self {
        PowerSum::from_terms(self.terms.iter().map(|(c, p)| (c * k, p.clone())))
    }

    /// `d/dt (c·t^p) = c·p·t^{p−1}`
    pub fn derivative(&self) -> Self {
        PowerSum::from_terms(
            self.terms
                .iter()
                .map(|(c, p)| (c * p, p - Q::one())),
        )
    }

    /// True when every coefficient is strictly positive (and the sum is nonempty).
    pub fn all_positive(&self) -> bool {
        !self.terms.is_empty() && self.terms.iter().all(|(c, _)| c.is_positive())
    }

    /// True when no coefficient is positive, i.e. the sum is `≤ 0` for all `t > 0`.
    pub fn termwise_nonpositive(&self) -> bool {
        self.terms.iter().all(|(c, _)| !c.is_positive())
    }

    /// Sum of the strictly positive terms; bounds `self` from above for `t > 0`.
    pub fn positive_part(&self) -> Self {
        PowerSum {
            terms: self
                .terms
                .iter()
                .filter(|(c, _)| c.is_positive())
                .cloned()
                .collect(),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|(c, p)| to_f64(c) * t.powf(to_f64(p)))
            .sum()
    }

    /// Floating-point view used by hot numerical loops.
    pub fn to_numeric(&self) -> NumericPowerSum {
        NumericPowerSum {
            terms: self
                .terms
                .iter()
                .map(|(c, p)| (to_f64(c), to_f64(p)))
                .collect(),
        }
    }

    /// Antiderivative with zero integration constant; `t^{−1}` integrates to `log t`.
    pub fn antiderivative(&self) -> Antiderivative {
        let minus_one = -Q::one();
        let mut log_coeff = Q::zero();
        let mut powers = Vec::new();
        for (c, p) in &self.terms {
            if *p == minus_one {
                log_coeff += c;
            } else {
                let q = p + Q::one();
                powers.push((c / &q, q));
            }
        }
        Antiderivative {
            log_coeff,
            powers: PowerSum::from_terms(powers),
        }
    }
}

impl Add for &PowerSum {
    type Output = PowerSum;
    fn add(self, rhs: &PowerSum) -> PowerSum {
        PowerSum::from_terms(self.terms.iter().chain(rhs.terms.iter()).cloned())
    }
}

impl Add for PowerSum {
    type Output = PowerSum;
    fn add(self, rhs: PowerSum) -> PowerSum {
        &self + &rhs
    }
}

impl Neg for &PowerSum {
    type Output = PowerSum;
    fn neg(self) -> PowerSum {
        PowerSum {
            terms: self.terms.iter().map(|(c, p)| (-c, p.clone())).collect(),
        }
    }
}

impl Neg for PowerSum {
    type Output = PowerSum;
    fn neg(self) -> PowerSum {
        -&self
    }
}

impl Sub for &PowerSum {
    type Output = PowerSum;
    fn sub(self, rhs: &PowerSum) -> PowerSum {
        self + &(-rhs)
    }
}

impl Sub for PowerSum {
    type Output = PowerSum;
    fn sub(self, rhs: PowerSum) -> PowerSum {
        &self - &rhs
    }
}

impl Mul for &PowerSum {
    type Output = PowerSum;
    fn mul(self, rhs: &PowerSum) -> PowerSum {
        let mut out = Vec::with_capacity(self.terms.len() * rhs.terms.len());
        for (a, p) in &self.terms {
            for (b, q) in &rhs.terms {
                out.push((a * b, p + q));
            }
        }
        PowerSum::from_terms(out)
    }
}

impl Mul for PowerSum {
    type Output = PowerSum;
    fn mul(self, rhs: PowerSum) -> PowerSum {
        &self * &rhs
    }
}

impl fmt::Display for PowerSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (c, p)) in self.terms.iter().rev().enumerate() {
            let mag = c.abs();
            if i == 0 {
                if c.is_negative() {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if c.is_negative() { " - " } else { " + " })?;
            }
            if p.is_zero() {
                f.write_str(&display(&mag))?;
            } else if mag.is_one() {
                write!(f, "t^({})", display(p))?;
            } else {
                write!(f, "{}*t^({})", display(&mag), display(p))?;
            }
        }
        Ok(())
    }
}

/// JSON shape: `[{"coeff": [n, d], "exponent": [n, d]}, ...]`.
#[derive(Serialize, Deserialize)]
struct TermJson {
    coeff: RatioPair,
    exponent: RatioPair,
}

impl Serialize for PowerSum {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let v: Vec<TermJson> = self
            .terms
            .iter()
            .map(|(c, p)| TermJson {
                coeff: RatioPair(c.clone()),
                exponent: RatioPair(p.clone()),
            })
            .collect();
        v.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for PowerSum {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let v: Vec<TermJson> = Deserialize::deserialize(de)?;
        Ok(PowerSum::from_terms(
            v.into_iter().map(|t| (t.coeff.0, t.exponent.0)),
        ))
    }
}

/// `c_log·log t + Σ cᵢ·t^{pᵢ}`: the antiderivative of a [`PowerSum`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Antiderivative {
    pub log_coeff: Q,
    pub powers: PowerSum,
}

impl Antiderivative {
    pub fn to_numeric(&self) -> NumericAntiderivative {
        NumericAntiderivative {
            log_coeff: to_f64(&self.log_coeff),
            powers: self.powers.to_numeric(),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.to_numeric().eval(t)
    }
}

/// `f64` image of a [`PowerSum`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NumericPowerSum {
    pub terms: Vec<(f64, f64)>,
}

impl NumericPowerSum {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.terms.iter().map(|&(c, p)| c * t.powf(p)).sum()
    }

    pub fn scaled(&self, k: f64) -> Self {
        NumericPowerSum {
            terms: self.terms.iter().map(|&(c, p)| (c * k, p)).collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NumericAntiderivative {
    pub log_coeff: f64,
    pub powers: NumericPowerSum,
}

impl NumericAntiderivative {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.log_coeff * t.ln() + self.powers.eval(t)
    }

    pub fn scaled(&self, k: f64) -> Self {
        NumericAntiderivative {
            log_coeff: self.log_coeff * k,
            powers: self.powers.scaled(k),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};
    use proptest::prelude::*;

    fn ps(terms: &[(i64, i64, i64, i64)]) -> PowerSum {
        PowerSum::from_terms(terms.iter().map(|&(a, b, c, d)| (q(a, b), q(c, d))))
    }

    #[test]
    fn canonical_form_merges_and_drops_zeros() {
        let s = ps(&[(1, 1, -1, 1), (2, 1, 0, 1), (-1, 1, -1, 1), (3, 1, -2, 1)]);
        assert_eq!(s.terms(), &[(qi(3), qi(-2)), (qi(2), qi(0))]);
        assert!(ps(&[(1, 2, 1, 3), (-1, 2, 1, 3)]).is_zero());
    }

    #[test]
    fn derivative_of_monomial() {
        // d/dt (3 t^{-1/2}) = -3/2 t^{-3/2}
        let d = PowerSum::monomial(qi(3), q(-1, 2)).derivative();
        assert_eq!(d, PowerSum::monomial(q(-3, 2), q(-3, 2)));
        // constants vanish
        assert!(PowerSum::constant(qi(7)).derivative().is_zero());
    }

    #[test]
    fn antiderivative_handles_log_term() {
        let a = ps(&[(4, 1, -1, 1), (2, 1, -1, 2)]).antiderivative();
        assert_eq!(a.log_coeff, qi(4));
        assert_eq!(a.powers, PowerSum::monomial(qi(4), q(1, 2)));
        let t: f64 = 2.5;
        let expected = 4.0 * t.ln() + 4.0 * t.sqrt();
        assert!((a.eval(t) - expected).abs() < 1e-14);
    }

    #[test]
    fn display_is_readable() {
        let s = ps(&[(1, 1, -1, 1), (-1, 2, -3, 2)]);
        assert_eq!(s.to_string(), "t^(-1) - 1/2*t^(-3/2)");
        assert_eq!(PowerSum::zero().to_string(), "0");
    }

    #[test]
    fn json_uses_integer_pairs() {
        let s = ps(&[(2, 1, -1, 2)]);
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"[{"coeff":[2,1],"exponent":[-1,2]}]"#);
        let back: PowerSum = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
    }

    fn arb_sum() -> impl Strategy<Value = PowerSum> {
        prop::collection::vec((-6i64..6, 1i64..4, -6i64..3, 1i64..3), 0..5).prop_map(|v| {
            PowerSum::from_terms(v.into_iter().map(|(a, b, c, d)| (q(a, b), q(c, d))))
        })
    }

    proptest! {
        #[test]
        fn product_rule_holds_exactly(a in arb_sum(), b in arb_sum()) {
            let lhs = (&a * &b).derivative();
            let rhs = &(&a.derivative() * &b) + &(&a * &b.derivative());
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn canonical_form_is_order_independent(a in arb_sum(), b in arb_sum()) {
            prop_assert_eq!(&a + &b, &b + &a);
            let mut rev: Vec<_> = a.terms().to_vec();
            rev.reverse();
            prop_assert_eq!(PowerSum::from_terms(rev), a.clone());
        }

        #[test]
        fn numeric_eval_matches_exact(a in arb_sum(), t in 0.1f64..10.0) {
            let exact = a.eval(t);
            let fast = a.to_numeric().eval(t);
            prop_assert!((exact - fast).abs() <= 1e-12 * (1.0 + exact.abs()));
        }
    }
}
