//! Exact thresholds `T` after which a power sum stays nonpositive.

use std::cmp::Ordering;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use super::collection::derive_collection_frozen;
use super::powersum::PowerSum;
use crate::rational::{display, q, to_f64, RatioPair, Q};

/// `T = base^power` with `base ≥ 0` and `power > 0`; `base = 0` means the
/// condition holds for every `t > 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Threshold {
    pub base: Q,
    pub power: Q,
}

impl Threshold {
    pub fn always() -> Self {
        Threshold { base: Q::zero(), power: Q::one() }
    }

    pub fn to_f64(&self) -> f64 {
        if self.base.is_zero() {
            0.0
        } else {
            to_f64(&self.base).powf(to_f64(&self.power))
        }
    }

    /// `k` when `power = 1/k`, i.e. `T` is the `k`-th root of `base`.
    pub fn root_index(&self) -> Option<u64> {
        let inv = self.power.recip();
        if inv.is_integer() && inv.is_positive() {
            inv.to_integer().try_into().ok()
        } else {
            None
        }
    }

    /// `T^k` when that is rational, e.g. `T²` for a square root.
    pub fn pow_exact(&self, k: i64) -> Option<Q> {
        let e = &self.power * Q::from_integer(k.into());
        if !e.is_integer() {
            return None;
        }
        let n: i32 = e.to_integer().try_into().ok()?;
        if n < 0 && self.base.is_zero() {
            return None;
        }
        Some(num_traits::pow::Pow::pow(&self.base, n))
    }

    fn cmp_value(&self, other: &Threshold) -> Ordering {
        match (self.base.is_zero(), other.base.is_zero()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ if self.power == other.power => self.base.cmp(&other.base),
            _ => self.to_f64().total_cmp(&other.to_f64()),
        }
    }

    pub fn max(self, other: Threshold) -> Threshold {
        if other.cmp_value(&self) == Ordering::Greater {
            other
        } else {
            self
        }
    }
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.base.is_zero() {
            return f.write_str("0");
        }
        if self.power.is_one() {
            return f.write_str(&display(&self.base));
        }
        write!(f, "({})^({})", display(&self.base), display(&self.power))
    }
}

#[derive(Serialize, Deserialize)]
struct ThresholdJson {
    base: RatioPair,
    power: RatioPair,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    root_index: Option<u64>,
    value: f64,
}

impl Serialize for Threshold {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ThresholdJson {
            base: RatioPair(self.base.clone()),
            power: RatioPair(self.power.clone()),
            root_index: self.root_index(),
            value: self.to_f64(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let j = ThresholdJson::deserialize(de)?;
        Ok(Threshold { base: j.base.0, power: j.power.0 })
    }
}

/// Smallest `T` with `c(t) ≤ 0` for all `t ≥ T`, when that is decidable from
/// the shape of `c`: termwise nonpositive sums give `T = 0`; a two-term sum
/// `c₁t^{p₁} + c₂t^{p₂}` with `p₁ > p₂`, `c₁ < 0 < c₂` gives
/// `T = (c₂/|c₁|)^{1/(p₁−p₂)}`. Anything else is rejected.
pub fn sign_change_threshold(c: &PowerSum) -> Option<Threshold> {
    if c.termwise_nonpositive() {
        return Some(Threshold::always());
    }
    match c.terms() {
        [(c2, p2), (c1, p1)] if c1.is_negative() && c2.is_positive() => Some(Threshold {
            base: c2 / c1.abs(),
            power: (p1 - p2).recip(),
        }),
        _ => None,
    }
}

/// `g` solving the frozen cross-term condition for the given `γ′`, `h`.
///
/// The frozen `⟨z, v⟩` coefficient is affine in `g` with slope `−2`.
pub fn frozen_g(gamma_prime: &PowerSum, h: &PowerSum, damping: &PowerSum) -> PowerSum {
    let at_zero = derive_collection_frozen(gamma_prime, &PowerSum::zero(), h, damping);
    at_zero.z_dot_v.scale(&q(1, 2))
}

/// Threshold from the quasi-static part of the ansatz.
///
/// With the coefficient functions frozen, the cross terms cancel for
/// `g₀ = frozen_g(..)`, leaving `‖z‖²` coefficient `B₀`. `T` is the later of
/// the sign changes of `B₀ − (μ/2)γ′` and `g₀ − μ/2`.
pub fn principal_threshold(
    gamma_prime: &PowerSum,
    h: &PowerSum,
    damping: &PowerSum,
    mu: &Q,
) -> Option<Threshold> {
    let g0 = frozen_g(gamma_prime, h, damping);
    let coll = derive_collection_frozen(gamma_prime, &g0, h, damping);
    let half_mu = mu * q(1, 2);
    let absorbed = &coll.z_norm_sq - &gamma_prime.scale(&half_mu);
    let t1 = sign_change_threshold(&absorbed)?;
    let t2 = sign_change_threshold(&(&g0 - &PowerSum::constant(half_mu)))?;
    Some(t1.max(t2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::qi;

    fn mono(c: Q, p: Q) -> PowerSum {
        PowerSum::monomial(c, p)
    }

    #[test]
    fn two_term_rule() {
        // −t^{-1} + 2t^{-3} ≤ 0 ⇔ t² ≥ 2
        let c = &mono(qi(-1), qi(-1)) + &mono(qi(2), qi(-3));
        let th = sign_change_threshold(&c).unwrap();
        assert_eq!(th.base, qi(2));
        assert_eq!(th.power, q(1, 2));
        assert_eq!(th.root_index(), Some(2));
        assert_eq!(th.pow_exact(2), Some(qi(2)));
        assert!((th.to_f64() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sign_patterns() {
        assert_eq!(sign_change_threshold(&mono(qi(-3), qi(-2))), Some(Threshold::always()));
        assert_eq!(sign_change_threshold(&PowerSum::zero()), Some(Threshold::always()));
        assert!(sign_change_threshold(&mono(qi(1), qi(-2))).is_none());
        // eventually positive
        let c = &mono(qi(1), qi(-1)) + &mono(qi(-2), qi(-3));
        assert!(sign_change_threshold(&c).is_none());
        let three = &(&mono(qi(-1), qi(0)) + &mono(qi(1), qi(-1))) + &mono(qi(1), qi(-2));
        assert!(sign_change_threshold(&three).is_none());
    }

    #[test]
    fn frozen_g_is_quarter_h_squared_on_the_paper_family() {
        for r in [2, 3, 4, 6, 9] {
            let c = q(2 * r, 3);
            let h = mono(c.clone(), qi(-1));
            let d = mono(qi(r), qi(-1));
            assert_eq!(frozen_g(&h, &h, &d), mono(&c * &c / qi(4), qi(-2)));
        }
    }

    #[test]
    fn principal_threshold_reproduces_closed_forms() {
        for (r, mu) in [(3, 1), (4, 1), (6, 1), (3, 2), (4, 2), (6, 2)] {
            let h = mono(q(2 * r, 3), qi(-1));
            let d = mono(qi(r), qi(-1));
            let th = principal_threshold(&h, &h, &d, &qi(mu)).unwrap();
            assert_eq!(th.pow_exact(2), Some(q(2 * r * r, 9 * mu)), "r={r} mu={mu}");
        }
        let h = mono(qi(2), q(-1, 2));
        let d = mono(qi(3), q(-1, 2));
        let th = principal_threshold(&h, &h, &d, &qi(1)).unwrap();
        assert_eq!(th.to_f64(), 2.0);
        assert_eq!(th.pow_exact(1), Some(qi(2)));
    }

    #[test]
    fn max_prefers_later_time() {
        let a = Threshold { base: qi(2), power: q(1, 2) };
        let b = Threshold { base: qi(3), power: q(1, 2) };
        assert_eq!(a.clone().max(b.clone()), b);
        assert_eq!(Threshold::always().max(a.clone()), a);
    }

    #[test]
    fn json_carries_root_index() {
        let th = Threshold { base: qi(8), power: q(1, 2) };
        let v = serde_json::to_value(&th).unwrap();
        assert_eq!(v["base"], serde_json::json!([8, 1]));
        assert_eq!(v["root_index"], 2);
        let back: Threshold = serde_json::from_value(v).unwrap();
        assert_eq!(back, th);
    }
}
