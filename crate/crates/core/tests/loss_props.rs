use proptest::prelude::*;
use sada::losses::LossModel;

fn losses() -> impl Strategy<Value = LossModel> {
    prop_oneof![
        Just(LossModel::squared()),
        (0.05f64..2.0, 1.0f64..6.0, 0.05f64..3.0).prop_map(|(mu, ratio, delta)| LossModel::huberized(mu, mu * ratio, delta).unwrap()),
        (0.0f64..1.0).prop_map(|lam| LossModel::logistic_ridge(lam).unwrap()),
        (0.0f64..1.0).prop_map(|c| LossModel::squared().with_prediction_penalty(c)),
    ]
}

fn label(loss: &LossModel, raw: f64) -> f64 {
    if matches!(loss.kind, sada::losses::LossKind::Logistic) {
        if raw >= 0.0 { 1.0 } else { -1.0 }
    } else {
        raw
    }
}

/// Keeps `z` away from the huberized kinks `b ± δ`, where difference quotients straddle branches.
fn off_kink(loss: &LossModel, z: f64, b: f64, h: f64) -> bool {
    match loss.kind {
        sada::losses::LossKind::Huberized { delta, .. } => ((z - b).abs() - delta).abs() > 10.0 * h,
        _ => true,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn derivative_matches_centered_differences(loss in losses(), z in -8.0f64..8.0, raw in -5.0f64..5.0) {
        let b = label(&loss, raw);
        let h = 1e-6;
        prop_assume!(off_kink(&loss, z, b, h));
        let fd = (loss.value(z + h, b) - loss.value(z - h, b)) / (2.0 * h);
        let d = loss.deriv(z, b);
        prop_assert!((fd - d).abs() <= 1e-4 * d.abs().max(1.0), "fd {fd} vs {d}");
    }

    #[test]
    fn curvature_lies_in_the_declared_band(loss in losses(), z in -8.0f64..8.0, raw in -5.0f64..5.0) {
        let b = label(&loss, raw);
        let h = 1e-3;
        prop_assume!(off_kink(&loss, z, b, h));
        let second = (loss.value(z + h, b) - 2.0 * loss.value(z, b) + loss.value(z - h, b)) / (h * h);
        let tol = 1e-5 * (1.0 + loss.value(z, b).abs());
        prop_assert!(second >= loss.mu_loss() - tol && second <= loss.l_loss() + tol, "{second} outside [{}, {}]", loss.mu_loss(), loss.l_loss());
        let exact = loss.second_deriv(z, b);
        prop_assert!(exact >= loss.mu_loss() - 1e-15 && exact <= loss.l_loss() + 1e-15);
    }

    #[test]
    fn huberized_sandwich_and_monotone_slope(mu in 0.05f64..2.0, ratio in 1.0f64..6.0, delta in 0.05f64..3.0, r in -10.0f64..10.0, dr in 0.0f64..2.0) {
        let loss = LossModel::huberized(mu, mu * ratio, delta).unwrap();
        let v = loss.value(r, 0.0);
        prop_assert!(v >= 0.5 * mu * r * r * (1.0 - 1e-12));
        prop_assert!(v <= 0.5 * mu * ratio * r * r * (1.0 + 1e-12));
        prop_assert!(loss.deriv(r + dr, 0.0) >= loss.deriv(r, 0.0));
    }
}
