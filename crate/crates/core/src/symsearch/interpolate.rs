//! Recovers coefficient formulas in `r` from per-instance exact solves.

use std::collections::BTreeSet;
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use super::linsolve::solve;
use super::powersum::PowerSum;
use crate::error::{Error, Result};
use crate::rational::{display, RatioPair, Q};

/// Largest total degree `deg p + deg q` tried.
const MAX_TOTAL_DEGREE: usize = 8;

/// Polynomial with ascending coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly(pub Vec<Q>);

impl Poly {
    fn trimmed(mut c: Vec<Q>) -> Self {
        while c.last().is_some_and(|x| x.is_zero()) {
            c.pop();
        }
        Poly(c)
    }

    pub fn eval(&self, r: &Q) -> Q {
        self.0.iter().rev().fold(Q::zero(), |acc, c| acc * r + c)
    }

    pub fn degree(&self) -> Option<usize> {
        self.0.len().checked_sub(1)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, c) in self.0.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let mag = c.abs();
            let sep = match (first, c.is_negative()) {
                (true, true) => "-",
                (true, false) => "",
                (false, true) => " - ",
                (false, false) => " + ",
            };
            f.write_str(sep)?;
            let var = match k {
                0 => String::new(),
                1 => "r".into(),
                _ => format!("r^{k}"),
            };
            if k == 0 {
                f.write_str(&display(&mag))?;
            } else if mag.is_one() {
                f.write_str(&var)?;
            } else {
                write!(f, "{}*{var}", display(&mag))?;
            }
            first = false;
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}

impl Serialize for Poly {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<RatioPair> = self.0.iter().cloned().map(RatioPair).collect();
        v.serialize(ser)
    }
}

/// `p(r)/q(r)` with `q` monic.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RationalFunction {
    pub numer: Poly,
    pub denom: Poly,
}

impl RationalFunction {
    pub fn eval(&self, r: &Q) -> Option<Q> {
        let d = self.denom.eval(r);
        (!d.is_zero()).then(|| self.numer.eval(r) / d)
    }
}

impl fmt::Display for RationalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom.degree() == Some(0) {
            write!(f, "{}", self.numer)
        } else {
            write!(f, "({}) / ({})", self.numer, self.denom)
        }
    }
}

/// One coefficient of the reconstructed power sum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReconstructedTerm {
    pub exponent: RatioPair,
    pub formula: RationalFunction,
    /// Display form, e.g. `1/9*r^2 - 1/3*r`.
    pub text: String,
    /// Instances not used for fitting, with exact agreement.
    pub held_out: Vec<(RatioPair, bool)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParameterDependence {
    pub terms: Vec<ReconstructedTerm>,
}

impl ParameterDependence {
    /// The power sum at a parameter value, if every denominator is nonzero.
    pub fn instantiate(&self, r: &Q) -> Option<PowerSum> {
        let mut terms = Vec::new();
        for t in &self.terms {
            terms.push((t.formula.eval(r)?, t.exponent.0.clone()));
        }
        Some(PowerSum::from_terms(terms))
    }
}

/// Fits the lowest-degree `p/q` through the first points and checks the rest.
fn fit_values(points: &[(Q, Q)]) -> Option<(RationalFunction, usize)> {
    let n = points.len();
    for total in 0..=MAX_TOTAL_DEGREE {
        for dq in 0..=total {
            let dp = total - dq;
            let unknowns = dp + 1 + dq;
            if unknowns >= n {
                continue;
            }
            let fit = &points[..unknowns];
            // p(rᵢ) − vᵢ·(q₀ + … + q_{dq−1} rᵢ^{dq−1}) = vᵢ rᵢ^{dq}
            let mut a = Vec::with_capacity(unknowns);
            let mut b = Vec::with_capacity(unknowns);
            for (r, v) in fit {
                let mut row = Vec::with_capacity(unknowns);
                let mut pw = Q::one();
                for _ in 0..=dp {
                    row.push(pw.clone());
                    pw = &pw * r;
                }
                let mut pw = Q::one();
                for _ in 0..dq {
                    row.push(-(v * &pw));
                    pw = &pw * r;
                }
                a.push(row);
                b.push(v * &pw);
            }
            let Some(sol) = solve(a, b, unknowns) else {
                continue;
            };
            let mut denom = sol[dp + 1..].to_vec();
            denom.push(Q::one());
            let f = RationalFunction {
                numer: Poly::trimmed(sol[..=dp].to_vec()),
                denom: Poly(denom),
            };
            if points.iter().all(|(r, v)| f.eval(r).as_ref() == Some(v)) {
                return Some((f, unknowns));
            }
        }
    }
    None
}

/// Rational interpolation in `r` of every coefficient of a family of power
/// sums solved at distinct numeric `r`. Exponents missing from an instance
/// count as zero coefficients.
pub fn reconstruct_parameter_dependence(instances: &[(Q, PowerSum)]) -> Result<ParameterDependence> {
    let mut rs: Vec<&Q> = instances.iter().map(|(r, _)| r).collect();
    rs.sort();
    rs.dedup();
    if rs.len() != instances.len() {
        return Err(Error::Reconstruction("parameter values must be distinct".into()));
    }
    if instances.len() < 2 {
        return Err(Error::Reconstruction(
            "need at least two instances so one can be held out".into(),
        ));
    }
    let union: BTreeSet<&Q> = instances.iter().flat_map(|(_, p)| p.exponents()).collect();
    let widest = instances.iter().map(|(_, p)| p.len()).max().unwrap_or(0);
    if union.len() > widest {
        return Err(Error::Reconstruction(format!(
            "inconsistent exponent sets: {} distinct exponents but no instance has more than {widest}",
            union.len()
        )));
    }
    let mut sorted: Vec<&(Q, PowerSum)> = instances.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut terms = Vec::new();
    for p in union {
        let points: Vec<(Q, Q)> = sorted.iter().map(|(r, s)| (r.clone(), s.coeff_of(p))).collect();
        let (formula, used) = fit_values(&points).ok_or_else(|| {
            Error::Reconstruction(format!(
                "no rational function of total degree ≤ {MAX_TOTAL_DEGREE} fits the t^({}) coefficients",
                display(p)
            ))
        })?;
        let held_out = points[used..]
            .iter()
            .map(|(r, v)| (RatioPair(r.clone()), formula.eval(r).as_ref() == Some(v)))
            .collect();
        terms.push(ReconstructedTerm {
            exponent: RatioPair(p.clone()),
            text: formula.to_string(),
            formula,
            held_out,
        });
    }
    Ok(ParameterDependence { terms })
}
