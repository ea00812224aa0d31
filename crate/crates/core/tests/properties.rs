use proptest::prelude::*;
use sublinear_clt::dp::{upper_expectation_dp, DpOptions, GridSpec};
use sublinear_clt::paths::{sup_norm_distance, BrokenLine};
use sublinear_clt::prokhorov::{deficiency, one_sided_prokhorov, prokhorov_distance, EmpiricalMeasure};
use sublinear_clt::rules::FnRule;
use sublinear_clt::scenario::{moment_envelope, ScenarioFamily, ScenarioLaw};
use sublinear_clt::smoothfields::IntervalUnionSet;

fn line(n: usize) -> impl Strategy<Value = BrokenLine<f64>> {
    prop::collection::vec(-2.0..2.0f64, n).prop_map(|inc| BrokenLine::from_increments(inc).unwrap())
}

fn atoms(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-20i32..20).prop_map(|k| k as f64 / 8.0), 1..=max)
}

fn discrete_family() -> impl Strategy<Value = ScenarioFamily> {
    let law = prop::collection::btree_set(-16i32..16, 2..=3).prop_flat_map(|set| {
        let xs: Vec<f64> = set.into_iter().map(|k| k as f64 / 8.0).collect();
        let m = xs.len();
        (Just(xs), prop::collection::vec(1u32..10, m))
    });
    prop::collection::vec(law, 1..=2).prop_map(|laws| {
        ScenarioFamily::new(
            laws.into_iter()
                .map(|(xs, w)| {
                    let t: u32 = w.iter().sum();
                    ScenarioLaw::discrete(xs, w.iter().map(|&v| v as f64 / t as f64).collect()).unwrap()
                })
                .collect(),
        )
        .unwrap()
    })
}

fn dp(fam: &ScenarioFamily, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let rule = FnRule(|k: usize, w: f64| (0.1 * (w + k as f64).sin(), 1.0 + 0.2 * w.cos().abs()));
    let opts = DpOptions::new(GridSpec::new(-10.0, 10.0, 2001).unwrap());
    upper_expectation_dp(fam, &rule, n, f, &opts).unwrap().value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sup_norm_is_a_metric(x in line(5), y in line(5), z in line(5)) {
        let (dxy, dyz, dxz) = (sup_norm_distance(&x, &y), sup_norm_distance(&y, &z), sup_norm_distance(&x, &z));
        prop_assert_eq!(sup_norm_distance(&x, &x), 0.0);
        prop_assert_eq!(dxy, sup_norm_distance(&y, &x));
        prop_assert!(dxz <= dxy + dyz + 1e-12);
    }

    #[test]
    fn sup_norm_across_resolutions(x in line(3), y in line(6)) {
        let d = sup_norm_distance(&x, &y);
        for i in 0..=600 {
            let t = i as f64 / 600.0;
            prop_assert!((x.eval(t) - y.eval(t)).abs() <= d + 1e-12);
        }
    }

    #[test]
    fn prokhorov_symmetric_and_triangle(a in atoms(6), b in atoms(6), c in atoms(6)) {
        let (p, q, r) = (
            EmpiricalMeasure::from_reals(&a).unwrap(),
            EmpiricalMeasure::from_reals(&b).unwrap(),
            EmpiricalMeasure::from_reals(&c).unwrap(),
        );
        let pq = prokhorov_distance(&p, &q).unwrap();
        prop_assert_eq!(pq, prokhorov_distance(&q, &p).unwrap());
        let pr = prokhorov_distance(&p, &r).unwrap();
        let qr = prokhorov_distance(&q, &r).unwrap();
        prop_assert!(pr <= pq + qr + 1e-12);
        prop_assert!(one_sided_prokhorov(&p, &q).unwrap() <= pq);
        prop_assert!((0.0..=1.0).contains(&pq));
    }

    #[test]
    fn deficiency_nonincreasing_in_eps(a in atoms(8), b in atoms(8)) {
        let (p, q) = (EmpiricalMeasure::from_reals(&a).unwrap(), EmpiricalMeasure::from_reals(&b).unwrap());
        let mut prev = f64::INFINITY;
        for i in 0..=20 {
            let d = deficiency(&p, &q, i as f64 * 0.25).unwrap().deficiency;
            prop_assert!(d <= prev + 1e-15);
            prop_assert!((0.0..=1.0).contains(&d));
            prev = d;
        }
    }

    #[test]
    fn dp_is_monotone_and_sublinear(fam in discrete_family(), n in 1usize..4, s in 0.1..3.0f64, c in -1.0..1.0f64) {
        let f = |w: f64| (-(w * w)).exp();
        let g = |w: f64| 0.5 * (1.0 + w.tanh());
        let ef = dp(&fam, n, f);
        let eg = dp(&fam, n, g);
        prop_assert!(dp(&fam, n, |w| f(w) + g(w)) <= ef + eg + 1e-9);
        prop_assert!((dp(&fam, n, |w| s * f(w)) - s * ef).abs() <= 1e-9);
        prop_assert!((dp(&fam, n, |w| f(w) + c) - (ef + c)).abs() <= 1e-9);
        prop_assert!(dp(&fam, n, |w| f(w).min(g(w))) <= ef.min(eg) + 1e-9);
        prop_assert!(-dp(&fam, n, |w| -f(w)) <= ef + 1e-9);
    }

    #[test]
    fn envelope_orders_curves(means in prop::collection::vec(-1.0..1.0f64, 1..4), sds in prop::collection::vec(0.2..2.0f64, 4)) {
        let laws: Vec<ScenarioLaw> = means.iter().zip(&sds).map(|(&m, &s)| ScenarioLaw::gaussian(m, s).unwrap()).collect();
        let fam = ScenarioFamily::new(laws).unwrap();
        let env = moment_envelope(&fam, 64).unwrap();
        prop_assert!(env.mu_low <= env.mu_high);
        prop_assert!(env.sigma_low <= env.sigma_high);
        for i in 0..=10 {
            let mu = env.mu_low + (env.mu_high - env.mu_low) * i as f64 / 10.0;
            prop_assert!(env.sigma_low_at(mu) <= env.sigma_high_at(mu));
            prop_assert!(env.sigma_low_at(mu) >= env.sigma_low - 1e-9);
            prop_assert!(env.sigma_high_at(mu) <= env.sigma_high + 1e-9);
        }
    }

    #[test]
    fn interval_union_enlargement(lo in -3.0..3.0f64, w in 0.0..2.0f64, e in 0.0..1.0f64, x in -6.0..6.0f64) {
        let a = IntervalUnionSet::new(vec![(lo, lo + w)]).unwrap();
        let big = a.enlarge(e);
        prop_assert!(a.is_subset_of(&big));
        prop_assert_eq!(big.contains(x), a.distance(x) <= e + 1e-12);
    }
}
