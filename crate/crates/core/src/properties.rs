use crate::analytics;
use crate::simulate::{
    path_rng, run_one_sided, simulate_free_segment, two_sided_refract, EngineParams, LowerRule,
    StopRule,
};
use crate::{ClaimMixture, LevyModel, ScaleContext, TaxRate, Theta};
use proptest::prelude::*;

fn mixture() -> impl Strategy<Value = ClaimMixture> {
    (0.05f64..0.95, 0.3f64..3.0, 3.5f64..12.0)
        .prop_map(|(w, r1, r2)| ClaimMixture::new(vec![(w, r1), (1.0 - w, r2)]).unwrap())
}

fn model() -> impl Strategy<Value = LevyModel> {
    (0.5f64..3.0, 0.2f64..3.0, mixture())
        .prop_map(|(c, lambda, claims)| LevyModel::new(c, lambda, claims).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn roots_solve_the_equation(m in model(), q in 0.001f64..2.0) {
        let roots = m.psi_roots(q).unwrap();
        prop_assert_eq!(roots.len(), 3);
        for r in &roots {
            prop_assert!((m.psi(*r) - q).abs() < 1e-9, "root {} residual {}", r, m.psi(*r) - q);
        }
        prop_assert!(roots[0] > 0.0);
    }

    #[test]
    fn scale_function_starts_at_one_over_c(m in model(), q in 0.001f64..2.0) {
        let ctx = ScaleContext::new(&m, q).unwrap();
        prop_assert!((ctx.w(0.0) - 1.0 / m.premium_rate()).abs() < 1e-9);
        let mut prev = ctx.w(0.0);
        for i in 1..40 {
            let w = ctx.w(i as f64 * 0.25);
            prop_assert!(w >= prev * (1.0 - 1e-12));
            prev = w;
        }
    }

    #[test]
    fn z_derivative_identity(m in model(), q in 0.001f64..1.0, theta in 0.0f64..5.0, x in 0.1f64..5.0) {
        let ctx = ScaleContext::new(&m, q).unwrap();
        let th = Theta::Finite(theta);
        let e = ctx.eval(th, x);
        let expected = theta * e.z - (m.psi(theta) - q) * e.w;
        prop_assert!((e.z_prime - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        prop_assert!(e.lambda >= 0.0);
    }

    #[test]
    fn power_identity_is_algebraic(
        m in model(),
        q in 0.001f64..1.0,
        theta in 0.0f64..5.0,
        x in 0.1f64..3.0,
        dy in 0.0f64..3.0,
        gamma in -1.0f64..0.95,
    ) {
        let ctx = ScaleContext::new(&m, q).unwrap();
        let th = Theta::Finite(theta);
        let base = analytics::reflected_passage_transform(&ctx, th, x, x + dy).unwrap();
        let taxed = analytics::taxed_passage_transform(&ctx, th, x, x + dy, gamma).unwrap();
        let lhs = taxed.ln();
        let rhs = base.ln() / (1.0 - gamma);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300) + 1e-15);
        prop_assert!((0.0..=1.0).contains(&taxed));
    }

    #[test]
    fn reflect_engine_reconstructs(seed in any::<u64>(), gamma in 0.0f64..1.0, x0 in 0.0f64..3.0) {
        let m = LevyModel::cramer_lundberg(0.8).unwrap();
        let fp = simulate_free_segment(&m, path_rng(seed, 0), x0, 40.0);
        let g = TaxRate::Constant(gamma);
        let out = run_one_sided(
            EngineParams {
                premium_rate: 1.0,
                gamma: &g,
                lower: LowerRule::Reflect,
                stop: StopRule::Horizon,
                q: 0.0,
                theta: 0.0,
                t_max: 40.0,
                weight_floor: 0.0,
                accrue_tax: false,
                record: true,
            },
            x0,
            &mut fp.replay(),
        );
        let path = out.path.unwrap();
        let mut top = f64::MIN;
        for e in &path.events {
            let x = fp.value_at(e.time);
            prop_assert!((x + e.l_total - gamma * e.u_total - e.post_value).abs() < 1e-10);
            prop_assert!(e.post_value >= 0.0);
            top = top.max(e.pre_value).max(e.post_value);
            prop_assert!((top - x0 - (1.0 - gamma) * e.u_total).abs() < 1e-10);
        }
    }

    #[test]
    fn two_sided_engine_reconstructs(
        seed in any::<u64>(),
        gamma_l in 0.0f64..=1.0,
        gamma_u in 0.0f64..=1.0,
        x0 in 0.0f64..1.0,
    ) {
        let m = LevyModel::cramer_lundberg(0.8).unwrap();
        let fp = simulate_free_segment(&m, path_rng(seed, 1), x0, 40.0);
        let path = two_sided_refract(&fp, gamma_l, gamma_u, 0.0, 1.0).unwrap();
        let (mut l, mut u) = (0.0, 0.0);
        for e in &path.events {
            let x = fp.value_at(e.time);
            prop_assert!((x + gamma_l * e.l_total - gamma_u * e.u_total - e.post_value).abs() < 1e-10);
            prop_assert!(e.l_total >= l && e.u_total >= u);
            l = e.l_total;
            u = e.u_total;
        }
    }
}
