use sada::losses::LossModel;
use sada::problem::{DataDistribution, Design, LabelModel, Link, ProblemInstance, Rotation, SpectrumSpec};

#[test]
fn closed_form_risk_vanishes_at_the_minimizer() {
    let spec = SpectrumSpec::new(vec![3.0, 1.0, 0.2]).unwrap().with_rotation(Rotation::Seeded(4)).unwrap();
    let dist = DataDistribution::new(Design::Gaussian(spec), LabelModel::WellSpecified { x_star: vec![1.0, 2.0, 3.0], noise_var: 0.5 }).unwrap();
    let inst = ProblemInstance::new(dist, LossModel::squared());
    let min = inst.solve_population_minimizer(1e-10, 0, 0).unwrap();
    let eval = inst.risk_evaluator(&min, 0, 0).unwrap();
    assert_eq!(eval.evaluate(&min.x_star), (0.0, 0.0));
    assert!(eval.evaluate(&[0.0, 0.0, 0.0]).0 > 0.0);
}

#[test]
fn monte_carlo_risk_is_nonnegative_within_error() {
    let dist = DataDistribution::new(
        Design::Gaussian(SpectrumSpec::identity(4).unwrap()),
        LabelModel::Misspecified { link: Link::Logistic, x_star: vec![1.0, -0.5, 0.25, 0.0], noise_var: 0.0 },
    )
    .unwrap();
    let inst = ProblemInstance::new(dist, LossModel::logistic_ridge(0.0).unwrap()).regularized(0.0, 0.05);
    let min = inst.solve_population_minimizer(1e-10, 20_000, 2).unwrap();
    let again = inst.solve_population_minimizer(1e-10, 20_000, 2).unwrap();
    assert_eq!(min.x_star, again.x_star);
    let eval = inst.risk_evaluator(&min, 20_000, 9).unwrap();
    let (r, se) = eval.evaluate(&min.x_star);
    assert!(r >= -3.0 * se - 1e-15);
    let (r0, se0) = eval.evaluate(&[0.0; 4]);
    assert!(r0 > 3.0 * se0);
}
