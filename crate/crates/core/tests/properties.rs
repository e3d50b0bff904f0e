use drawdown_core::policy::{self, policy_dispatch, policy_optimal, FeedbackRule};
use drawdown_core::{DualFunction, MarketParams, PortfolioState, SolverError, StrategyKind};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Valid markets over a broad but realistic range.
fn markets() -> impl Strategy<Value = MarketParams> {
    (
        0.001..0.08f64,
        0.01..0.15f64,
        0.08..0.5f64,
        0.002..0.08f64,
        0.01..0.2f64,
        0.1..0.95f64,
    )
        .prop_map(|(r, premium, sigma, spread, lam, alpha)| {
            MarketParams::new(r, r + premium, sigma, r + spread, lam, alpha).unwrap()
        })
}

/// Markets whose boundary ratio is representable in floating point.
fn solved() -> impl Strategy<Value = (MarketParams, DualFunction)> {
    markets().prop_filter_map("boundary ratio out of range", |p| DualFunction::new(p).ok().map(|d| (p, d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn solve_succeeds_or_reports_range(p in markets()) {
        match DualFunction::new(p) {
            Ok(d) => prop_assert!(d.diagnostics().y1alpha_residual < 1e-12),
            Err(e) => prop_assert!(matches!(e, SolverError::BoundaryOutOfRange { .. }), "{e}"),
        }
    }

    #[test]
    fn root_identities((p, d) in solved()) {
        let (product, sum) = d.roots.vieta_residuals(&p);
        prop_assert!(product < 1e-12 && sum < 1e-12, "{product:e} {sum:e}");
        prop_assert!(d.roots.gamma1 > 0.0 && d.roots.gamma1 < 1.0);
        prop_assert!(d.roots.gamma2 < 0.0);
    }

    #[test]
    fn boundary_conditions_hold((_p, d) in solved()) {
        let g = d.diagnostics();
        prop_assert!(g.y1alpha_residual < 1e-12, "{g:?}");
        prop_assert!(g.continuity_rel < 1e-10, "{g:?}");
        prop_assert!(g.smooth_fit_slope_y1 < 1e-10, "{g:?}");
        prop_assert!(g.smooth_fit_curvature_y1 < 1e-10, "{g:?}");
        prop_assert!(g.slope_at_yalpha < 1e-10, "{g:?}");
        prop_assert!(g.y1 < g.yalpha);
    }

    #[test]
    fn dual_inversion_round_trips((_p, d) in solved()) {
        for i in 1..=200 {
            let z = i as f64 / 200.0;
            let y = d.invert_dual(z).unwrap();
            prop_assert!(y >= d.y1());
            let back = d.zeta_hat_y(y).unwrap();
            prop_assert!((back - z).abs() < 1e-11, "z={z} y={y} back={back}");
        }
    }

    #[test]
    fn explicit_value_matches_legendre_route((_p, d) in solved(), z in 0.001..1.0f64) {
        let explicit = policy::zeta(&d, z).unwrap();
        let dual = d.primal(z).unwrap().zeta;
        prop_assert!(rel(explicit, dual) < 1e-10, "{explicit} vs {dual}");
    }

    #[test]
    fn scale_invariance((_p, d) in solved(), z in 0.01..1.0f64, c in 0.01..100.0f64) {
        let (w, m) = (z * 3.0, 3.0);
        let pi = policy_optimal(&d, w, m).unwrap();
        let pi_scaled = policy_optimal(&d, c * w, c * m).unwrap();
        prop_assert!((pi_scaled - c * pi).abs() <= 1e-12 * (c * pi).abs() + 1e-14 * c * m);
        let psi = policy::value(&d, &PortfolioState::new(w, m, 0.5).unwrap()).unwrap();
        let psi_scaled = policy::value(&d, &PortfolioState::new(c * w, c * m, 0.5).unwrap()).unwrap();
        prop_assert!(rel(psi_scaled, psi) < 1e-12);
    }

    #[test]
    fn policy_ignores_common_boundary_scale((_p, d) in solved(), z in 0.01..1.0f64, c in 0.1..10.0f64) {
        let moved = d.with_scaled_boundaries(c);
        let a = policy_optimal(&d, z, 1.0).unwrap();
        let b = policy_optimal(&moved, z, 1.0).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs(), "{a} vs {b}");
    }

    #[test]
    fn feedback_form_consistency((p, d) in solved(), z in 0.01..0.999f64) {
        prop_assume!((z - p.alpha()).abs() > 1e-6);
        let pt = d.primal(z).unwrap();
        let feedback = -p.merton_ratio() * pt.zeta_z / pt.zeta_zz;
        let pi = policy_optimal(&d, z, 1.0).unwrap();
        prop_assert!((pi - feedback).abs() <= 1e-9 * pi.abs().max(1e-3), "{pi} vs {feedback}");
    }

    #[test]
    fn simulator_rule_matches_direct_policy((_p, d) in solved(), z in 0.001..1.0f64) {
        for kind in [StrategyKind::OptimalDrawdownTime, StrategyKind::RuinMin] {
            let rule = FeedbackRule::new(kind, d).unwrap();
            let fast = rule.amount(z, 1.0).unwrap();
            let slow = policy_dispatch(&kind, &d, z, 1.0).unwrap();
            prop_assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1e-3), "{kind} {fast} vs {slow}");
        }
    }
}
