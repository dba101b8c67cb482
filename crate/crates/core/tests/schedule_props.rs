use proptest::prelude::*;
use sada::problem::ProblemConstants;
use sada::schedule::{
    inner_hyperparams, max_eta, minibatch_constants, outer_schedule, outer_schedule_with, resolve_schedule, unlabeled_constants, OuterRule,
    SchedulePolicy,
};

/// Random valid constants: `μ ≤ λ_max`, `κ̃ ∈ [1, κ]`, `α ≥ 1`.
fn constants() -> impl Strategy<Value = ProblemConstants> {
    (1usize..50, 1e-3f64..2.0, 1.0f64..100.0, 1.0f64..30.0, 0.0f64..1.0, 0.1f64..3.0, 1.0f64..8.0).prop_map(
        |(d, mu, spread, r_mult, kt_frac, mu_l, alpha)| {
            let lmax = mu * spread;
            let r_sq = r_mult * lmax * d as f64;
            let kappa = r_sq / mu;
            let kt = 1.0 + kt_frac * (kappa - 1.0);
            ProblemConstants::from_parts(d, r_sq, kt, mu, lmax, (mu_l, alpha * mu_l)).unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn inner_invariants(c in constants(), eta_frac in 0.01f64..=1.0, tk in 0.001f64..0.9) {
        let eta = eta_frac * max_eta(&c);
        let p = inner_hyperparams(&c, eta, tk).unwrap();
        let want = eta / (16.0 * c.kappa_tilde);
        prop_assert!((p.theta * p.gamma - want).abs() <= 4.0 * f64::EPSILON * want);
        prop_assert!(p.gamma >= eta);
        prop_assert!(p.t_min >= 2 && p.t_min % 2 == 0);
    }

    #[test]
    fn outer_invariants(c in constants(), t_half in 1usize..5000, k in 1usize..200, asymptotic in any::<bool>()) {
        let rule = if asymptotic { OuterRule::Asymptotic } else { OuterRule::Exact };
        let s = outer_schedule_with(&c, max_eta(&c), 2 * t_half, k, rule).unwrap();
        for w in s.theta_tilde.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        for i in 0..k {
            prop_assert!(s.h[i] <= 1.0 / (6.0 * c.l_loss) * (1.0 + 1e-12));
            prop_assert!((0.0..1.0).contains(&s.beta[i]));
            let tt = s.theta_tilde[i];
            prop_assert_eq!(s.h[i], 2.0 * c.alpha * tt * tt / c.l_loss);
            prop_assert_eq!(s.beta[i], (1.0 - tt) / (1.0 + tt));
        }
        prop_assert_eq!(s.theta_tilde[..s.phase_split()].iter().filter(|&&v| v != s.theta_tilde_max).count(), 0);
    }

    #[test]
    fn resolved_budget_fits(c in constants(), n in 4usize..2_000_000, batch in 1usize..4) {
        let s = resolve_schedule(&c, n, batch, SchedulePolicy { rule: OuterRule::Asymptotic, ..Default::default() }).unwrap();
        prop_assert!(s.t % 2 == 0 && s.k >= 1);
        if n >= 4 * batch {
            prop_assert!(s.samples(batch) <= n);
        }
    }

    #[test]
    fn variance_reduction_constants_are_monotone(c in constants(), b in 1usize..64, m in 0usize..64) {
        let b1 = minibatch_constants(&c, b).unwrap();
        let b2 = minibatch_constants(&c, b + 1).unwrap();
        prop_assert!(b2.kappa_tilde <= b1.kappa_tilde);
        let u1 = unlabeled_constants(&c, m);
        let u2 = unlabeled_constants(&c, m + 1);
        prop_assert!(u2.kappa_tilde <= u1.kappa_tilde);
        let bf = b as f64;
        prop_assert_eq!(b1.r_sq, if b == 1 { c.r_sq } else { (c.r_sq + (bf - 1.0) * c.lambda_max) / bf });
        let m1 = m as f64 + 1.0;
        prop_assert_eq!(u2.kappa_tilde, (c.kappa_tilde + m1) / (m1 + 1.0));
    }
}

#[test]
fn step_above_the_bound_is_refused() {
    let c = ProblemConstants::from_parts(5, 15.0, 15.0, 1.0, 1.0, (1.0, 1.0)).unwrap();
    assert!(outer_schedule(&c, 1.01 / 240.0, 10, 3).is_err());
    assert!(outer_schedule(&c, 1.0 / 240.0, 10, 3).is_ok());
}
