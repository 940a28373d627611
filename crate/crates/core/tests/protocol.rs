use consensus_core::protocol::{
    epsilon_separation, validate_class_a, ClassAFunction, PRESET_NAMES,
};
use proptest::prelude::*;

const DOMAIN: (f64, f64) = (-10.0, 10.0);

fn arb_point(g: &ClassAFunction) -> impl Strategy<Value = f64> {
    // mix in breakpoints so interval endpoints are exercised
    let bps: Vec<f64> = g.breakpoints().iter().map(|b| b.at).collect();
    if bps.is_empty() {
        (DOMAIN.0..DOMAIN.1).boxed()
    } else {
        prop_oneof![3 => DOMAIN.0..DOMAIN.1, 1 => prop::sample::select(bps)].boxed()
    }
}

#[test]
fn presets_are_class_a() {
    for name in PRESET_NAMES {
        validate_class_a(&ClassAFunction::preset(name).unwrap()).unwrap();
    }
}

#[test]
fn monotone_selection_on_each_preset() {
    // every pair of selections obeys the same separation bound.
    use proptest::test_runner::{Config, TestRunner};
    for name in PRESET_NAMES {
        let g = ClassAFunction::preset(name).unwrap();
        let eps = epsilon_separation(&g, DOMAIN.0, DOMAIN.1).unwrap().epsilon;
        let mut runner = TestRunner::new(Config {
            cases: 1000,
            ..Config::default()
        });
        let strat = (arb_point(&g), arb_point(&g), 0.0..=1.0f64, 0.0..=1.0f64);
        runner
            .run(&strat, |(a, b, s, t)| {
                prop_assume!(a != b);
                let ia = g.eval_interval(a);
                let ib = g.eval_interval(b);
                let v1 = ia.lo + s * (ia.hi - ia.lo);
                let v2 = ib.lo + t * (ib.hi - ib.lo);
                let q = (v1 - v2) / (a - b);
                prop_assert!(q >= eps * (1.0 - 1e-12), "{name}: q = {q} < {eps}");
                Ok(())
            })
            .unwrap();
    }
}

proptest! {
    #[test]
    fn interval_is_ordered_and_strict_only_at_breakpoints(x in -10.0..10.0f64, pick in 0usize..3) {
        let g = ClassAFunction::preset(PRESET_NAMES[pick]).unwrap();
        let i = g.eval_interval(x);
        prop_assert!(i.lo <= i.hi);
        prop_assert_eq!(i.lo < i.hi, g.breakpoint_at(x).is_some());
        for b in g.breakpoints() {
            let j = g.eval_interval(b.at);
            prop_assert!(j.lo < j.hi);
        }
    }

    #[test]
    fn strictly_increasing_between_breakpoints(a in -10.0..10.0f64, b in -10.0..10.0f64, pick in 0usize..3) {
        let g = ClassAFunction::preset(PRESET_NAMES[pick]).unwrap();
        let (x, y) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(x < y);
        let crosses = g.breakpoints().iter().any(|bp| x <= bp.at && bp.at <= y);
        prop_assume!(!crosses);
        prop_assert!(g.value(x).unwrap() < g.value(y).unwrap());
    }
}

mod examples {
    use consensus_core::protocol::{
        epsilon_separation, Branch, ClassAFunction, Piece, ProtocolError,
    };

    #[test]
    fn unit_jump_intervals() {
        let g = ClassAFunction::preset("unit-jump").unwrap();
        let at_one = g.eval_interval(1.0);
        assert_eq!((at_one.lo, at_one.hi), (2.0, 2.0));
        let at_zero = g.eval_interval(0.0);
        assert_eq!((at_zero.lo, at_zero.hi), (0.0, 1.0));
        assert_eq!(epsilon_separation(&g, -10.0, 10.0).unwrap().epsilon, 1.0);
    }

    #[test]
    fn half_slope_separation_is_exact() {
        let inf = f64::INFINITY;
        let g = ClassAFunction::piecewise_affine(&[(-inf, inf, 0.5, 0.0)]).unwrap();
        let s = epsilon_separation(&g, -3.0, 3.0).unwrap();
        assert_eq!(s.epsilon, 0.5);
        assert!(s.exact);
    }

    #[test]
    fn cubic_fails_separation_but_shifted_cubic_passes() {
        let inf = f64::INFINITY;
        let cube = ClassAFunction::new(
            vec![Piece {
                lo: -inf,
                hi: inf,
                branch: Branch::monotone("x^3", |x| x * x * x),
            }],
            vec![],
        )
        .unwrap();
        assert!(matches!(
            epsilon_separation(&cube, -1.0, 1.0),
            Err(ProtocolError::SeparationUnverifiable { .. })
        ));
        // away from the origin the derivative is at least 3 * 0.5^2
        let s = epsilon_separation(&cube, 0.5, 2.0).unwrap();
        assert!(!s.exact);
        assert!(s.epsilon >= 0.75 && s.epsilon < 0.76, "{}", s.epsilon);

        let plus = ClassAFunction::new(
            vec![Piece {
                lo: -inf,
                hi: inf,
                branch: Branch::monotone("x^3+x", |x| x * x * x + x),
            }],
            vec![],
        )
        .unwrap();
        let e = epsilon_separation(&plus, -2.0, 2.0).unwrap().epsilon;
        assert!((e - 1.0).abs() < 1e-6, "{e}");
    }

    #[test]
    fn downward_jump_names_clause_three() {
        let inf = f64::INFINITY;
        let err = ClassAFunction::piecewise_affine(&[(-inf, 0.0, 1.0, 0.0), (0.0, inf, 1.0, -1.0)])
            .unwrap_err();
        assert!(err.to_string().contains("clause 3"), "{err}");
        let err = ClassAFunction::piecewise_affine(&[(-inf, inf, -1.0, 0.0)]).unwrap_err();
        assert!(err.to_string().contains("clause 2"), "{err}");
    }
}
