use lyaplab::rational::{q, qi, to_f64, Q};
use lyaplab::symsearch::{
    derive_collection, reconstruct_parameter_dependence, search, Basis, BasisValues, PowerSum, SearchOptions,
};
use proptest::prelude::*;

fn exponent() -> impl Strategy<Value = Q> {
    (-8i64..=4, prop::sample::select(vec![1i64, 2, 3, 4])).prop_map(|(n, d)| q(n, d))
}

fn coeff() -> impl Strategy<Value = Q> {
    (-9i64..=9, 1i64..=5).prop_map(|(n, d)| q(n, d))
}

fn power_sum(max_terms: usize) -> impl Strategy<Value = PowerSum> {
    prop::collection::vec((coeff(), exponent()), 0..=max_terms).prop_map(PowerSum::from_terms)
}

/// `Σ c p t^{p−1}` straight from the terms.
fn derivative_at(p: &PowerSum, t: f64) -> f64 {
    p.terms().iter().map(|(c, e)| to_f64(c) * to_f64(e) * t.powf(to_f64(e) - 1.0)).sum()
}

fn magnitude(p: &PowerSum, t: f64) -> f64 {
    p.terms().iter().map(|(c, e)| (to_f64(c) * t.powf(to_f64(e))).abs()).sum::<f64>() + 1e-300
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn derivative_agrees_with_finite_differences(p in power_sum(4), t in 0.5f64..5.0) {
        let h = 1e-5 * t;
        let fd = (p.eval(t + h) - p.eval(t - h)) / (2.0 * h);
        let d = p.derivative();
        prop_assert!((d.eval(t) - fd).abs() <= 1e-6 * (magnitude(&d, t) + magnitude(&p, t) / t));
        prop_assert!((d.eval(t) - derivative_at(&p, t)).abs() <= 1e-12 * magnitude(&d, t));
    }

    #[test]
    fn leibniz_rule_is_exact(a in power_sum(3), b in power_sum(3)) {
        let lhs = (&a * &b).derivative();
        let rhs = &(&a.derivative() * &b) + &(&a * &b.derivative());
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn ring_laws(a in power_sum(3), b in power_sum(3), c in power_sum(2)) {
        prop_assert_eq!(&a + &b, &b + &a);
        prop_assert_eq!(&a * &b, &b * &a);
        prop_assert_eq!(&(&a + &b) * &c, &(&a * &c) + &(&b * &c));
        prop_assert!((&a - &a).is_zero());
    }

    #[test]
    fn antiderivative_differentiates_back(p in power_sum(3), t in 0.5f64..5.0) {
        let big = p.antiderivative();
        let h = 1e-5 * t;
        let fd = (big.eval(t + h) - big.eval(t - h)) / (2.0 * h);
        prop_assert!((fd - p.eval(t)).abs() <= 1e-5 * (magnitude(&p, t) + 1.0));
    }

    #[test]
    fn json_round_trip(p in power_sum(4)) {
        let s = serde_json::to_string(&p).unwrap();
        let back: PowerSum = serde_json::from_str(&s).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn collection_matches_chain_rule(
        gp in power_sum(2), g in power_sum(2), h in power_sum(2), d in power_sum(2),
        lam in prop::collection::vec(0.5f64..5.0, 1..3),
        raw in prop::collection::vec(-2.0f64..2.0, 4),
        t in 0.5f64..4.0,
    ) {
        let n = lam.len();
        let (x, v) = (&raw[..n], &raw[2..2 + n]);
        let (gpv, gv, hv, dv) = (gp.eval(t), g.eval(t), h.eval(t), d.eval(t));
        let (dg, dh) = (derivative_at(&g, t), derivative_at(&h, t));
        let mut vals = BasisValues::default();
        let mut terms = [0.0; 5];
        for i in 0..n {
            let grad = lam[i] * x[i];
            vals.gap += 0.5 * lam[i] * x[i] * x[i];
            vals.grad_dot_z += grad * x[i];
            vals.grad_dot_v += grad * v[i];
            vals.z_norm_sq += x[i] * x[i];
            vals.z_dot_v += x[i] * v[i];
            vals.v_norm_sq += v[i] * v[i];
            let w = v[i] + hv * x[i];
            terms[0] += gpv * (0.5 * lam[i] * x[i] * x[i] - gv * x[i] * x[i] + 0.5 * w * w);
            terms[1] += grad * v[i];
            terms[2] -= dg * x[i] * x[i];
            terms[3] -= 2.0 * gv * x[i] * v[i];
            terms[4] += w * (-dv * v[i] - grad + dh * x[i] + hv * v[i]);
        }
        let oracle: f64 = terms.iter().sum();
        let scale = terms.iter().map(|a| a.abs()).sum::<f64>() + 1e-300;
        let got = derive_collection(&gp, &g, &h, &d).to_numeric().eval(t, &vals);
        prop_assert!((got - oracle).abs() <= 1e-9 * scale, "{got} vs {oracle}");
    }
}

/// Every returned candidate has no velocity terms and a numerically
/// non-positive derivative after its threshold on random quadratics with the
/// searched modulus.
#[test]
fn search_results_are_numerically_sound() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let cases: Vec<(PowerSum, Vec<Q>, Q)> = vec![
        (PowerSum::monomial(qi(3), qi(-1)), vec![qi(-2), qi(-1), qi(0)], qi(1)),
        (PowerSum::monomial(qi(5), qi(-1)), vec![qi(-2), qi(-1), qi(0)], qi(2)),
        (PowerSum::monomial(qi(6), qi(-1)), vec![qi(-3), qi(-2), qi(-1), qi(0)], qi(1)),
        (PowerSum::monomial(qi(3), q(-1, 2)), vec![q(-3, 2), qi(-1), q(-1, 2), qi(0)], qi(1)),
        (PowerSum::monomial(qi(2), q(-3, 4)), vec![q(-5, 2), q(-7, 4), q(-3, 2), qi(-1), q(-3, 4), qi(0)], q(1, 2)),
    ];
    let mut checked = 0;
    for (damping, grid, mu) in cases {
        let cands = search(&damping, &grid, &mu, SearchOptions::default()).unwrap();
        assert!(!cands.is_empty(), "no candidate for damping {damping}");
        let muf = to_f64(&mu);
        for c in &cands {
            assert!(c.collection.get(Basis::VNormSq).is_zero());
            assert!(c.collection.get(Basis::ZDotV).is_zero());
            let coll = c.collection.to_numeric();
            let t_thr = c.threshold.to_f64();
            for _ in 0..400 {
                let t = t_thr.max(1e-3) * rng.gen_range(1.0..40.0);
                let n = 3;
                let lam: Vec<f64> = (0..n).map(|i| if i == 0 { muf } else { muf * rng.gen_range(1.0..20.0) }).collect();
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let mut vals = BasisValues::default();
                for i in 0..n {
                    vals.gap += 0.5 * lam[i] * x[i] * x[i];
                    vals.grad_dot_z += lam[i] * x[i] * x[i];
                    vals.z_norm_sq += x[i] * x[i];
                }
                let d = coll.eval(t, &vals);
                let scale = vals.gap + vals.z_norm_sq;
                assert!(d <= 1e-12 * scale, "{}: dE/dt = {d} at t = {t}", c.describe());
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn grid_order_and_duplicates_do_not_change_results() {
    let damping = PowerSum::monomial(qi(4), qi(-1));
    let a = search(&damping, &[qi(-2), qi(-1), qi(0)], &qi(1), SearchOptions::default()).unwrap();
    let b = search(&damping, &[qi(0), qi(-1), qi(-2), qi(-1)], &qi(1), SearchOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn reconstruction_holds_out_and_predicts_a_new_friction() {
    let mut inst = Vec::new();
    for r in [3, 4, 6, 9, 12] {
        let damping = PowerSum::monomial(qi(r), qi(-1));
        let top = search(&damping, &[qi(-2), qi(-1), qi(0)], &qi(1), SearchOptions::default()).unwrap().remove(0);
        inst.push((qi(r), top.spec.g));
    }
    let dep = reconstruct_parameter_dependence(&inst).unwrap();
    assert!(dep.terms.iter().all(|t| t.held_out.iter().all(|(_, ok)| *ok)));
    // (r² − 3r)/9 at r = 7
    assert_eq!(dep.instantiate(&qi(7)).unwrap(), PowerSum::monomial(q(28, 9), qi(-2)));
}
