//! Enumeration of ansatz coefficients over an exponent grid.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;

use super::collection::{derive_collection, derive_collection_frozen, DerivativeCollection};
use super::linsolve::solve;
use super::powersum::PowerSum;
use super::threshold::{frozen_g, principal_threshold, Threshold};
use crate::error::{Error, Result};
use crate::lyapunov::LyapunovSpec;
use crate::rational::{display, RatioPair, Q};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchOptions {
    /// Maximum number of terms in each of `γ′`, `g`, `h`.
    pub breadth: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { breadth: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Candidate {
    pub spec: LyapunovSpec,
    pub threshold: Threshold,
    /// `T²` when rational.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_squared: Option<RatioPair>,
    pub collection: DerivativeCollection,
}

impl Candidate {
    /// Leading (largest-exponent) term of `γ′`; a larger exponent, then a
    /// larger coefficient, means faster decay of `e^{−γ}`.
    pub fn decay(&self) -> Option<&(Q, Q)> {
        self.spec.gamma_prime.leading()
    }

    pub fn describe(&self) -> String {
        format!(
            "gamma' = {}, g = {}, h = {}, T = {}",
            self.spec.gamma_prime, self.spec.g, self.spec.h, self.threshold
        )
    }
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    let key = |c: &Candidate| c.decay().cloned();
    let (da, db) = (key(a), key(b));
    let by_decay = match (&da, &db) {
        (Some((ca, pa)), Some((cb, pb))) => pb.cmp(pa).then_with(|| cb.cmp(ca)),
        _ => Ordering::Equal,
    };
    by_decay
        .then_with(|| a.threshold.to_f64().total_cmp(&b.threshold.to_f64()))
        .then_with(|| lex_key(a).cmp(&lex_key(b)))
}

fn lex_key(c: &Candidate) -> Vec<(Q, Q)> {
    [&c.spec.gamma_prime, &c.spec.g, &c.spec.h]
        .iter()
        .flat_map(|p| p.terms().iter().map(|(c, e)| (e.clone(), c.clone())))
        .collect()
}

/// Nonempty subsets of `grid` with at most `k` elements, in a fixed order.
fn supports(grid: &[Q], k: usize, allow_empty: bool) -> Vec<Vec<Q>> {
    let mut out: Vec<Vec<Q>> = if allow_empty { vec![Vec::new()] } else { Vec::new() };
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..k {
        let mut next = Vec::new();
        for s in &frontier {
            let start = s.last().map_or(0, |&i| i + 1);
            for i in start..grid.len() {
                let mut t = s.clone();
                t.push(i);
                out.push(t.iter().map(|&j| grid[j].clone()).collect());
                next.push(t);
            }
        }
        frontier = next;
    }
    out
}

fn build(exps: &[Q], coeffs: &[Q]) -> PowerSum {
    PowerSum::from_terms(coeffs.iter().cloned().zip(exps.iter().cloned()))
}

/// Linear equations for the unknown coefficients, read off an affine map by
/// probing it at the origin and at each unit vector.
fn affine_solve(n_vars: usize, conditions: impl Fn(&[Q]) -> Vec<PowerSum>) -> Option<Vec<Q>> {
    let origin = vec![Q::zero(); n_vars];
    let base = conditions(&origin);
    let columns: Vec<Vec<PowerSum>> = (0..n_vars)
        .map(|k| {
            let mut e = origin.clone();
            e[k] = Q::from_integer(1.into());
            conditions(&e).iter().zip(&base).map(|(a, b)| a - b).collect()
        })
        .collect();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, c0) in base.iter().enumerate() {
        let mut exps: BTreeSet<Q> = c0.exponents().cloned().collect();
        for col in &columns {
            exps.extend(col[i].exponents().cloned());
        }
        for p in exps {
            a.push(columns.iter().map(|col| col[i].coeff_of(&p)).collect());
            b.push(-c0.coeff_of(&p));
        }
    }
    solve(a, b, n_vars)
}

/// `(γ′, h)` making the `‖v‖²` coefficient vanish and pairing the
/// `f − f_*` and `⟨∇f, z⟩` coefficients as `A(t)·(f − f_* − ⟨∇f, z⟩)`.
fn solve_rates(sg: &[Q], sh: &[Q], damping: &PowerSum) -> Option<(PowerSum, PowerSum)> {
    let n = sg.len() + sh.len();
    let sol = affine_solve(n, |u| {
        let gp = build(sg, &u[..sg.len()]);
        let h = build(sh, &u[sg.len()..]);
        let c = derive_collection(&gp, &PowerSum::zero(), &h, damping);
        vec![c.v_norm_sq.clone(), &c.gap + &c.grad_dot_z]
    })?;
    Some((build(sg, &sol[..sg.len()]), build(sh, &sol[sg.len()..])))
}

/// `g` making the `⟨z, v⟩` coefficient vanish.
fn solve_g(sg: &[Q], gp: &PowerSum, h: &PowerSum, damping: &PowerSum) -> Option<PowerSum> {
    let sol = affine_solve(sg.len(), |u| {
        vec![derive_collection(gp, &build(sg, u), h, damping).z_dot_v]
    })?;
    Some(build(sg, &sol))
}

fn accept(gp: PowerSum, g: PowerSum, h: PowerSum, damping: &PowerSum, mu: &Q) -> Option<Candidate> {
    let coll = derive_collection(&gp, &g, &h, damping);
    let exact = coll.v_norm_sq.is_zero()
        && coll.z_dot_v.is_zero()
        && coll.grad_dot_v.is_zero()
        && (&coll.gap + &coll.grad_dot_z).is_zero();
    if !exact || !coll.gap.all_positive() {
        return None;
    }
    let threshold = principal_threshold(&gp, &h, damping, mu)?;
    // The parts dropped by the quasi-static split must only help.
    let g0 = frozen_g(&gp, &h, damping);
    let frozen = derive_collection_frozen(&gp, &g0, &h, damping);
    if !(&coll.z_norm_sq - &frozen.z_norm_sq).termwise_nonpositive()
        || !(&g - &g0).termwise_nonpositive()
    {
        return None;
    }
    Some(Candidate {
        threshold_squared: threshold.pow_exact(2).map(RatioPair),
        threshold,
        spec: LyapunovSpec::discovered(gp, g, h),
        collection: coll,
    })
}

/// Searches `γ′`, `g`, `h` with at most `breadth` terms each over the
/// exponent grid for friction `damping = ρ t^{−β}` and modulus `μ`, and
/// returns the certified candidates, best first.
pub fn search(damping: &PowerSum, grid: &[Q], mu: &Q, opts: SearchOptions) -> Result<Vec<Candidate>> {
    match damping.terms() {
        [(rho, _)] if rho.is_positive() => {}
        _ => {
            return Err(Error::input(format!(
                "friction must be a single positive power of t, got {damping}"
            )))
        }
    }
    if !mu.is_positive() {
        return Err(Error::input(format!("mu must be positive, got {}", display(mu))));
    }
    let grid: Vec<Q> = grid.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if grid.is_empty() || opts.breadth == 0 {
        return Ok(Vec::new());
    }
    let rate_supports = supports(&grid, opts.breadth, false);
    let g_supports = supports(&grid, opts.breadth, true);
    let pairs: Vec<(&Vec<Q>, &Vec<Q>)> = rate_supports
        .iter()
        .flat_map(|a| rate_supports.iter().map(move |b| (a, b)))
        .collect();
    let found: Vec<Candidate> = pairs
        .par_iter()
        .filter_map(|(sg, sh)| solve_rates(sg, sh, damping))
        .flat_map_iter(|(gp, h)| {
            g_supports
                .iter()
                .filter_map(|sg| solve_g(sg, &gp, &h, damping))
                .filter_map(|g| accept(gp.clone(), g, h.clone(), damping, mu))
                .collect::<Vec<_>>()
        })
        .collect();
    let mut out: Vec<Candidate> = Vec::new();
    for c in found {
        if !out.iter().any(|o| o.spec == c.spec) {
            out.push(c);
        }
    }
    out.sort_by(rank);
    Ok(out)
}

/// Candidates sorted by `γ′`, `g`, `h` for set comparisons.
pub fn canonical_set(cands: &[Candidate]) -> Vec<(PowerSum, PowerSum, PowerSum)> {
    let mut v: Vec<_> = cands
        .iter()
        .map(|c| (c.spec.gamma_prime.clone(), c.spec.g.clone(), c.spec.h.clone()))
        .collect();
    v.sort_by(|a, b| {
        let k = |x: &(PowerSum, PowerSum, PowerSum)| {
            [&x.0, &x.1, &x.2]
                .iter()
                .map(|p| p.terms().to_vec())
                .collect::<Vec<_>>()
        };
        k(a).cmp(&k(b))
    });
    v
}
