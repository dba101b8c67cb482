use sada::baselines::{run_erm, run_sgd_tail_avg, SgdConfig};
use sada::losses::LossModel;
use sada::problem::{DataDistribution, Design, LabelModel, ProblemInstance, SpectrumSpec};
use sada::stream::DistributionSource;
use sada::trace::NoProbe;

fn quadratic(d: usize) -> ProblemInstance {
    let x_star: Vec<f64> = (0..d).map(|i| (i as f64 - 4.5) / 3.0).collect();
    let dist = DataDistribution::new(Design::Gaussian(SpectrumSpec::identity(d).unwrap()), LabelModel::WellSpecified { x_star, noise_var: 1.0 }).unwrap();
    ProblemInstance::new(dist, LossModel::squared())
}

#[test]
fn erm_excess_risk_is_of_order_d_over_n() {
    let inst = quadratic(10);
    let min = inst.solve_population_minimizer(1e-10, 0, 0).unwrap();
    let eval = inst.risk_evaluator(&min, 0, 0).unwrap();
    let (n, reps) = (10_000usize, 50u64);
    let mean = (0..reps)
        .map(|r| {
            let mut src = DistributionSource::seeded(&inst.dist, 3, r);
            let out = run_erm(&inst.loss, n, 1e-10, 10_000, &mut src).unwrap();
            eval.evaluate(&out.x).0
        })
        .sum::<f64>()
        / reps as f64;
    let scale = 10.0 / n as f64;
    assert!(mean >= 0.3 * scale && mean <= 3.0 * scale, "{mean} vs σ²d/n = {scale}");
}

#[test]
fn sgd_traces_are_reproducible_and_report_at_budget() {
    let inst = quadratic(4);
    let cfg = SgdConfig::default_for(12.0, 500);
    let run = || {
        let mut src = DistributionSource::seeded(&inst.dist, 11, 0);
        let mut probe = |x: &[f64]| (x.iter().sum::<f64>(), 0.0);
        run_sgd_tail_avg(&inst.loss, &cfg, &[0.0; 4], &mut src, &mut probe).unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(a.rows.last().unwrap().samples, 500);
    assert!(a.rows.windows(2).all(|w| w[1].samples > w[0].samples));
}

#[test]
fn sgd_with_zero_step_is_inert() {
    let inst = quadratic(3);
    let cfg = SgdConfig { step: 0.0, ..SgdConfig::default_for(9.0, 100) };
    let mut src = DistributionSource::seeded(&inst.dist, 1, 0);
    let tr = run_sgd_tail_avg(&inst.loss, &cfg, &[0.5, -0.5, 2.0], &mut src, &mut NoProbe).unwrap();
    assert_eq!(tr.final_x, vec![0.5, -0.5, 2.0]);
}
