//! Least-squares identification of model parameters from a measured
//! discharge curve.
//!
//! The objective sums squared voltage residuals at the experimental
//! timestamps the simulation reaches and adds a weighted penalty on the
//! mismatch of discharge durations. The simulation is forced to step onto
//! every experimental timestamp, so simulated voltages are exact samples
//! rather than interpolants. Experimental currents are prototype scale and
//! are carried to model scale with the charge factor `mu`.

pub mod data;
pub mod pso;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::dae::{simulate, simulate_with_stops, SimulationConfig, SimulationTrace, Termination};
use crate::error::InvalidInput;
use crate::io::{format_float, write_trace_csv};
use crate::model::{build_model, ModelId};
use crate::params::{ParamPath, ParameterSet};
use crate::sensitivity::features::interpolate;
use crate::similitude::{scale_extensive, scale_parameters, Direction, ScaleFactor};

pub use data::{load_experiment, parse_experiment, ExperimentalTrace, IngestError, IngestOptions, TraceError};
pub use pso::{PsoConfig, Score};

/// Voltage residual assumed for every sample on the penalty path, V.
pub const PENALTY_VOLTAGE: f64 = 5.0;
/// Uniform voltage error that the default duration weight equates with a
/// duration error of `T`, V.
pub const DURATION_WEIGHT_VOLTAGE: f64 = 0.01;

/// One identified parameter and its search interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaBound {
    pub path: ParamPath,
    pub lower: f64,
    pub upper: f64,
}

/// Default search space: every `E0` within 0.2 V of `base`, `gamma`,
/// `omega` and the initial `S8` mass.
pub fn default_theta(base: &ParameterSet) -> Vec<ThetaBound> {
    let mut theta: Vec<ThetaBound> = base
        .e0
        .iter()
        .enumerate()
        .map(|(j, &e)| ThetaBound { path: ParamPath::E0(j), lower: e - 0.2, upper: e + 0.2 })
        .collect();
    theta.push(ThetaBound { path: ParamPath::Gamma, lower: 0.1, upper: 3.0 });
    theta.push(ThetaBound { path: ParamPath::Omega, lower: 0.01, upper: 2.0 });
    theta.push(ThetaBound { path: ParamPath::M0(0), lower: 0.5, upper: 6.0 });
    theta
}

/// Default duration weight `N (10 mV)^2 / T^2`, V^2/s^2.
pub fn default_alpha(data: &ExperimentalTrace) -> f64 {
    data.len() as f64 * DURATION_WEIGHT_VOLTAGE * DURATION_WEIGHT_VOLTAGE / (data.duration() * data.duration())
}

/// Integrator settings used while fitting: looser than the simulation
/// defaults, which keeps the thousands of objective evaluations affordable
/// while the truncation error stays far below measurement noise.
pub fn fit_sim_config() -> SimulationConfig {
    SimulationConfig { rtol: 1e-4, atol: 1e-7, dt_max: 1e3, ..SimulationConfig::new(1.0) }
}

#[derive(Debug, Clone)]
pub struct FitProblem {
    pub model: ModelId,
    pub data: ExperimentalTrace,
    pub theta: Vec<ThetaBound>,
    /// Values of every parameter that is not identified, model scale.
    pub fixed: ParameterSet,
    /// Duration weight, V^2/s^2.
    pub alpha: f64,
    pub mu: ScaleFactor,
    pub pso: PsoConfig,
    /// Integrator settings; the current is replaced by the scaled
    /// experimental current.
    pub sim: SimulationConfig,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error(transparent)]
    Invalid(#[from] InvalidInput),
    #[error("theta has {got} entries, expected {expected}")]
    ThetaLength { got: usize, expected: usize },
    #[error("{path} = {value} outside [{lower}, {upper}]")]
    OutOfBounds { path: String, value: f64, lower: f64, upper: f64 },
    #[error("every objective evaluation failed; check bounds and solver settings")]
    AllFailed,
}

impl FitProblem {
    /// A problem with the default search space, duration weight, swarm and
    /// fit integrator settings, starting from the nominal parameters.
    pub fn new(model: ModelId, data: ExperimentalTrace, mu: ScaleFactor) -> Self {
        let fixed = crate::params::nominal_parameters(model);
        FitProblem {
            model,
            theta: default_theta(&fixed),
            alpha: default_alpha(&data),
            data,
            fixed,
            mu,
            pso: PsoConfig::default(),
            sim: fit_sim_config(),
        }
    }

    /// Model-scale discharge current, A.
    pub fn model_current(&self) -> f64 {
        scale_extensive(self.data.effective_current(), self.mu, Direction::ProtoToModel)
    }

    fn sim_config(&self) -> SimulationConfig {
        SimulationConfig { current: self.model_current(), ..self.sim.clone() }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let model = build_model(self.model);
        self.fixed.validate(&model)?;
        self.pso.validate()?;
        self.sim_config().validate()?;
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(InvalidInput::new("alpha", "must be finite and non-negative").into());
        }
        if self.theta.is_empty() {
            return Err(InvalidInput::new("theta", "no parameters to identify").into());
        }
        for (k, b) in self.theta.iter().enumerate() {
            let name = b.path.display(&model).to_string();
            if !(b.lower.is_finite() && b.upper.is_finite() && b.lower < b.upper) {
                return Err(InvalidInput::new(name, format!("bounds [{}, {}] are not a finite interval", b.lower, b.upper)).into());
            }
            if self.theta[..k].iter().any(|o| o.path == b.path) {
                return Err(InvalidInput::new(name, "listed twice").into());
            }
            if let ParamPath::E0(j) | ParamPath::I0(j) = b.path {
                if j >= model.reaction_count() {
                    return Err(InvalidInput::new(name, "no such reaction").into());
                }
            }
            if let ParamPath::M0(i) = b.path {
                if i >= model.species_count() {
                    return Err(InvalidInput::new(name, "no such species").into());
                }
            }
        }
        Ok(())
    }

    /// `fixed` with the entries of `theta` substituted.
    pub fn parameters(&self, theta: &[f64]) -> Result<ParameterSet, FitError> {
        if theta.len() != self.theta.len() {
            return Err(FitError::ThetaLength { got: theta.len(), expected: self.theta.len() });
        }
        let mut params = self.fixed.clone();
        for (b, &x) in self.theta.iter().zip(theta) {
            if !(x >= b.lower && x <= b.upper) {
                let model = build_model(self.model);
                return Err(FitError::OutOfBounds {
                    path: b.path.display(&model).to_string(),
                    value: x,
                    lower: b.lower,
                    upper: b.upper,
                });
            }
            params.set(&b.path, x);
        }
        Ok(params)
    }

    /// Objective value on the penalty path, V^2.
    pub fn penalty(&self) -> f64 {
        let t = self.data.duration();
        self.data.len() as f64 * PENALTY_VOLTAGE * PENALTY_VOLTAGE + self.alpha * t * t
    }
}

/// Everything the objective computes for one parameter vector.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Objective value, V^2.
    pub j: f64,
    /// Sum of squared voltage residuals, V^2.
    pub sse: f64,
    /// Number of residuals: experimental timestamps inside the simulated run.
    pub n_min: usize,
    /// `|T_sim - T_exp|`, s.
    pub duration_err: f64,
    /// Absent on the penalty path.
    pub trace: Option<SimulationTrace>,
}

impl Evaluation {
    pub fn failed(&self) -> bool {
        self.trace.is_none()
    }

    /// Voltage RMSE over the residuals, V.
    pub fn rmse(&self) -> f64 {
        if self.n_min == 0 {
            0.0
        } else {
            (self.sse / self.n_min as f64).sqrt()
        }
    }
}

/// Evaluates the objective at `theta` and keeps the pieces.
///
/// Simulations that cannot start or that end in a solver failure take the
/// penalty path: `J = N (5 V)^2 + alpha T^2`, more than any run reaching
/// the end of discharge can score.
pub fn evaluate(problem: &FitProblem, theta: &[f64]) -> Result<Evaluation, FitError> {
    let params = problem.parameters(theta)?;
    let model = build_model(problem.model);
    let data = &problem.data;
    let penalty = Evaluation { j: problem.penalty(), sse: 0.0, n_min: 0, duration_err: data.duration(), trace: None };
    let trace = match simulate_with_stops(&model, &params, &problem.sim_config(), &data.times) {
        Ok(t) if t.termination != Termination::SolverFailure => t,
        _ => return Ok(penalty),
    };
    let t_end = trace.duration();
    let n_min = data.times.partition_point(|&t| t <= t_end);
    let (times, voltages) = (trace.times(), trace.voltages());
    let sse: f64 = data.times[..n_min]
        .iter()
        .zip(&data.voltages)
        .map(|(&t, &v)| {
            let r = interpolate(&times, &voltages, t) - v;
            r * r
        })
        .sum();
    let duration_err = (t_end - data.duration()).abs();
    let j = sse + problem.alpha * duration_err * duration_err;
    Ok(Evaluation { j, sse, n_min, duration_err, trace: Some(trace) })
}

/// Objective value at `theta`, V^2.
pub fn objective(problem: &FitProblem, theta: &[f64]) -> Result<f64, FitError> {
    evaluate(problem, theta).map(|e| e.j)
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Identified values, model scale, in the order of the problem's theta.
    pub theta: Vec<(ParamPath, f64)>,
    /// Full model-scale parameter set at the optimum.
    pub params: ParameterSet,
    /// Objective value, V^2.
    pub j: f64,
    pub sse: f64,
    pub rmse: f64,
    pub duration_err: f64,
    pub n_min: usize,
    pub trace: SimulationTrace,
    /// Best objective value after each swarm iteration.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub failed_evaluations: usize,
}

/// Identifies `problem.theta` by particle swarm minimisation.
pub fn fit(problem: &FitProblem) -> Result<FitResult, FitError> {
    problem.validate()?;
    let lower: Vec<f64> = problem.theta.iter().map(|b| b.lower).collect();
    let upper: Vec<f64> = problem.theta.iter().map(|b| b.upper).collect();
    let score = |x: &[f64]| match evaluate(problem, x) {
        Ok(e) => Score { value: e.j, failed: e.failed() },
        Err(_) => Score { value: problem.penalty(), failed: true },
    };
    let best = pso::minimize(score, &lower, &upper, &problem.pso);
    if best.failed_evaluations == best.evaluations {
        return Err(FitError::AllFailed);
    }
    let eval = evaluate(problem, &best.x)?;
    let trace = eval.trace.clone().ok_or(FitError::AllFailed)?;
    Ok(FitResult {
        theta: problem.theta.iter().map(|b| b.path).zip(best.x.iter().copied()).collect(),
        params: problem.parameters(&best.x)?,
        j: eval.j,
        sse: eval.sse,
        rmse: eval.rmse(),
        duration_err: eval.duration_err,
        n_min: eval.n_min,
        trace,
        history: best.history,
        evaluations: best.evaluations,
        failed_evaluations: best.failed_evaluations,
    })
}

/// Writes `theta.csv`, `summary.txt`, `history.csv` and `trace.csv` into
/// `dir`. Returns the files written.
pub fn write_fit_report(problem: &FitProblem, result: &FitResult, dir: &Path) -> io::Result<Vec<PathBuf>> {
    let model = build_model(problem.model);
    fs::create_dir_all(dir)?;
    let proto = scale_parameters(&result.params, problem.mu, Direction::ModelToProto);

    let theta_path = dir.join("theta.csv");
    let mut w = csv::Writer::from_path(&theta_path)?;
    w.write_record(["param", "unit", "model_scale", "prototype_scale"])?;
    for (path, value) in &result.theta {
        w.write_record([
            path.display(&model).to_string(),
            path.unit().to_string(),
            format_float(*value),
            format_float(proto.get(path)),
        ])?;
    }
    w.flush()?;

    let summary_path = dir.join("summary.txt");
    let summary = [
        ("model", problem.model.to_string()),
        ("J", format_float(result.j)),
        ("sse", format_float(result.sse)),
        ("rmse_V", format_float(result.rmse)),
        ("duration_err_s", format_float(result.duration_err)),
        ("n_min", result.n_min.to_string()),
        ("n_data", problem.data.len().to_string()),
        ("alpha", format_float(problem.alpha)),
        ("mu", format_float(problem.mu.value())),
        ("model_current_A", format_float(problem.model_current())),
        ("termination", result.trace.termination.to_string()),
        ("evaluations", result.evaluations.to_string()),
        ("failed_evaluations", result.failed_evaluations.to_string()),
        ("iterations", result.history.len().to_string()),
        ("seed", problem.pso.seed.to_string()),
    ];
    let text: String = summary.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    fs::write(&summary_path, text)?;

    let history_path = dir.join("history.csv");
    let mut w = csv::Writer::from_path(&history_path)?;
    w.write_record(["iteration", "best_J"])?;
    for (k, j) in result.history.iter().enumerate() {
        w.write_record([k.to_string(), format_float(*j)])?;
    }
    w.flush()?;

    let trace_path = dir.join("trace.csv");
    write_trace_csv(&result.trace, &model, fs::File::create(&trace_path)?)?;
    Ok(vec![theta_path, summary_path, history_path, trace_path])
}

/// Recipe for a synthetic measurement.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub model: ModelId,
    /// Model-scale parameters of the synthetic cell.
    pub params: ParameterSet,
    pub mu: ScaleFactor,
    /// Prototype-scale current, A.
    pub current: f64,
    /// Number of samples, evenly spaced in time, ending at the end of discharge.
    pub samples: usize,
    /// Standard deviation of the additive Gaussian voltage noise, V.
    pub noise: f64,
    pub seed: u64,
    pub sim: SimulationConfig,
}

/// Simulates `spec` and samples it like a cycler would.
pub fn synthetic_experiment(spec: &SyntheticSpec) -> Result<ExperimentalTrace, FitError> {
    let model = build_model(spec.model);
    let config = SimulationConfig {
        current: scale_extensive(spec.current, spec.mu, Direction::ProtoToModel),
        ..spec.sim.clone()
    };
    let invalid = |e: crate::dae::SimulationError| InvalidInput::new("synthetic", e.to_string());
    let end = simulate(&model, &spec.params, &config).map_err(invalid)?.duration();
    let n = spec.samples.max(data::MIN_SAMPLES);
    let grid: Vec<f64> = (1..n).map(|k| end * k as f64 / n as f64).collect();
    let trace = simulate_with_stops(&model, &spec.params, &config, &grid).map_err(invalid)?;
    let (times, voltages) = (trace.times(), trace.voltages());
    let mut t: Vec<f64> = grid.clone();
    t.push(trace.duration());
    let normal = Normal::new(0.0, spec.noise).map_err(|e| InvalidInput::new("noise", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let v: Vec<f64> = t.iter().map(|&s| interpolate(&times, &voltages, s) + normal.sample(&mut rng)).collect();
    let mut out = ExperimentalTrace::new(t, v, spec.current, 0.0).map_err(|e| InvalidInput::new("synthetic", e.to_string()))?;
    out.meta = vec![
        ("source".to_string(), format!("synthetic {}", spec.model)),
        ("noise_V".to_string(), format_float(spec.noise)),
        ("seed".to_string(), spec.seed.to_string()),
        ("mu".to_string(), format_float(spec.mu.value())),
    ];
    Ok(out)
}
