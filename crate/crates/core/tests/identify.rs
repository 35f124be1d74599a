use lis0d::identify::{
    self,
    evaluate, fit, objective, synthetic_experiment, ExperimentalTrace, FitError, FitProblem, PsoConfig, SyntheticSpec,
};
use lis0d::similitude::ScaleFactor;
use lis0d::{nominal_parameters, ModelId, ParameterSet, SimulationConfig};

/// Model #3 with the identified parameters of the 1 A cell.
fn identified_m3() -> ParameterSet {
    let mut p = nominal_parameters(ModelId::M3);
    p.e0 = vec![2.467, 2.374, 2.342, 2.069];
    p.gamma = 0.483;
    p.omega = 0.613;
    p.m0[0] = 3.038;
    p
}

fn theta_star() -> Vec<f64> {
    vec![2.467, 2.374, 2.342, 2.069, 0.483, 0.613, 3.038]
}

fn mu() -> ScaleFactor {
    ScaleFactor::new(3.33e4).unwrap()
}

fn synthetic(noise: f64) -> (ExperimentalTrace, SimulationConfig) {
    let sim = identify::fit_sim_config();
    let spec = SyntheticSpec {
        model: ModelId::M3,
        params: identified_m3(),
        mu: mu(),
        current: 0.03e-3,
        samples: 120,
        noise,
        seed: 7,
        sim: sim.clone(),
    };
    (synthetic_experiment(&spec).unwrap(), sim)
}

fn problem(noise: f64) -> FitProblem {
    let (data, sim) = synthetic(noise);
    FitProblem { sim, ..FitProblem::new(ModelId::M3, data, mu()) }
}

#[test]
fn exact_parameters_reproduce_noise_free_data() {
    let p = problem(0.0);
    let e = evaluate(&p, &theta_star()).unwrap();
    assert!(e.j < 1e-10, "{:e}", e.j);
    // the final sample sits on the end of discharge itself
    assert!(e.n_min >= p.data.len() - 1);
    assert!(e.duration_err < 1e-3, "{}", e.duration_err);
}

#[test]
fn zero_alpha_leaves_the_squared_residuals() {
    let mut p = problem(0.002);
    p.alpha = 0.0;
    let mut theta = theta_star();
    theta[6] = 3.2;
    let e = evaluate(&p, &theta).unwrap();
    assert!(e.duration_err > 0.0);
    assert_eq!(e.j, e.sse);
}

#[test]
fn doubled_omega_scores_worse() {
    let p = problem(0.0);
    let mut theta = theta_star();
    theta[5] *= 2.0;
    let star = evaluate(&p, &theta_star()).unwrap();
    let off = evaluate(&p, &theta).unwrap();
    assert!(off.j > star.j);
    assert!(off.duration_err > 0.0);
    assert!(p.alpha * off.duration_err * off.duration_err > 0.0);
}

#[test]
fn objective_is_pure() {
    let p = problem(0.002);
    let theta = [2.45, 2.40, 2.33, 2.08, 0.6, 0.5, 2.9];
    let a = objective(&p, &theta).unwrap();
    let b = objective(&p, &theta).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn penalty_exceeds_any_completed_run() {
    let p = problem(0.002);
    // a uniform 5 V error is out of reach for a cell between 1.5 and 2.6 V
    let worst_real = p.data.len() as f64 * 1.2 * 1.2 + p.alpha * p.data.duration().powi(2);
    assert!(p.penalty() > worst_real);
    let mut theta = theta_star();
    theta[6] = 0.5;
    let e = evaluate(&p, &theta).unwrap();
    assert!(e.j < p.penalty());
}

#[test]
fn theta_errors_are_not_penalties() {
    let p = problem(0.0);
    assert!(matches!(evaluate(&p, &theta_star()[..3]), Err(FitError::ThetaLength { .. })));
    let mut theta = theta_star();
    theta[4] = 10.0;
    assert!(matches!(evaluate(&p, &theta), Err(FitError::OutOfBounds { .. })));
}

#[test]
fn small_fit_is_reproducible_and_monotone() {
    let mut p = problem(0.002);
    p.pso = PsoConfig { swarm_size: 8, max_iters: 6, ..PsoConfig::default() };
    let a = fit(&p).unwrap();
    let b = fit(&p).unwrap();
    assert_eq!(a.j.to_bits(), b.j.to_bits());
    assert_eq!(a.theta, b.theta);
    assert_eq!(a.history.len(), 6);
    assert!(a.history.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(a.evaluations, 48);
    let recomputed = objective(&p, &a.theta.iter().map(|t| t.1).collect::<Vec<_>>()).unwrap();
    assert!((recomputed - a.j).abs() <= 1e-12 * a.j.max(1.0));
}

#[test]
fn synthetic_data_is_seeded() {
    let (a, _) = synthetic(0.002);
    let (b, _) = synthetic(0.002);
    assert_eq!(a.voltages, b.voltages);
    let (clean, _) = synthetic(0.0);
    let rms = (a.voltages.iter().zip(&clean.voltages).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
    assert!((rms - 0.002).abs() < 0.0005, "{rms}");
    assert!((a.current - 0.03e-3).abs() < 1e-18);
}

#[test]
fn report_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = problem(0.002);
    p.pso = PsoConfig { swarm_size: 4, max_iters: 2, ..PsoConfig::default() };
    let result = fit(&p).unwrap();
    let files = identify::write_fit_report(&p, &result, dir.path()).unwrap();
    assert_eq!(files.len(), 4);
    let theta = std::fs::read_to_string(dir.path().join("theta.csv")).unwrap();
    assert_eq!(theta.lines().count(), 1 + 7);
    assert!(theta.lines().any(|l| l.starts_with("m0[S8],g,")));
}
