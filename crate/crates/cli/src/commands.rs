use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use lis0d::dae::{c_rate_current, simulate as run_simulation, SimulationError};
use lis0d::identify::{self, FitError, FitProblem, IngestOptions, ThetaBound};
use lis0d::io::{format_float, read_parameters, read_sim_config, write_parameters, write_sim_config, write_trace_csv};
use lis0d::sensitivity::{self, Perturbation, SweepSpec};
use lis0d::similitude::{scale_parameters, Direction, ScaleFactor};
use lis0d::{build_model, nominal_parameters, ParamPath, ParameterSet, ReactionModel, SimulationConfig, Termination};

use crate::manifest::Manifest;
use crate::{
    DirectionArg, Failure, FitArgs, LoadArgs, ModelArgs, RankArgs, ScaleArgs, SimulateArgs, Status, SweepArgs,
    WithStatus,
};

const DEFAULT_C_RATE: f64 = 0.3;

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display())).status(Status::Io)
}

fn write_file(path: PathBuf, text: &str) -> Result<PathBuf, Failure> {
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display())).status(Status::Io)?;
    Ok(path)
}

fn read_config_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).status(Status::Config)
}

/// Model, parameters and simulation settings resolved from the flags.
struct Setup {
    model: ReactionModel,
    params: ParameterSet,
    sim: SimulationConfig,
}

fn load_parameters(args: &ModelArgs) -> Result<ParameterSet, Failure> {
    if args.params == "nominal" {
        return Ok(nominal_parameters(args.model));
    }
    let path = Path::new(&args.params);
    let text = read_config_file(path)?;
    let (_, params) = read_parameters(&text, Some(args.model))
        .with_context(|| format!("in {}", path.display()))
        .status(Status::Config)?;
    Ok(params)
}

/// Defaults, then the config file, then `--c-rate` / `--current`; without
/// any current setting the discharge runs at 0.3C.
fn load_setup(args: &ModelArgs, load: Option<&LoadArgs>) -> Result<Setup, Failure> {
    let model = build_model(args.model);
    let params = load_parameters(args)?;
    params.validate(&model).status(Status::Config)?;
    let mut sim = SimulationConfig::for_c_rate(&params, DEFAULT_C_RATE);
    if let Some(path) = &args.config {
        sim = read_sim_config(&read_config_file(path)?, sim)
            .with_context(|| format!("in {}", path.display()))
            .status(Status::Config)?;
    }
    if let Some(load) = load {
        if let Some(c) = load.c_rate {
            sim.current = c_rate_current(params.s8_mass(), c);
        }
        if let Some(i) = load.current {
            sim.current = i;
        }
    }
    sim.validate().status(Status::Config)?;
    Ok(Setup { model, params, sim })
}

fn snapshot(manifest: &mut Manifest, setup: &Setup) {
    manifest.config("model", setup.model.id().to_string());
    manifest.config("parameters", write_parameters(&setup.model, &setup.params));
    manifest.config("simulation", write_sim_config(&setup.sim));
}

/// Writes the resolved inputs next to the outputs so they can be passed
/// back with `--params` and `--config`.
fn write_inputs(dir: &Path, setup: &Setup, manifest: &mut Manifest) -> Result<(), Failure> {
    manifest.output(write_file(dir.join("params.txt"), &write_parameters(&setup.model, &setup.params))?);
    manifest.output(write_file(dir.join("sim.txt"), &write_sim_config(&setup.sim))?);
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let setup = load_setup(&args.model, Some(&args.load))?;
    let dir = &args.out.out;
    create_dir(dir)?;
    let mut manifest = Manifest::start("simulate");
    snapshot(&mut manifest, &setup);
    write_inputs(dir, &setup, &mut manifest)?;
    let trace = match run_simulation(&setup.model, &setup.params, &setup.sim) {
        Ok(t) => t,
        Err(e @ SimulationError::Invalid(_)) => return Err(Failure::new(Status::Config, e)),
        Err(e) => {
            manifest.finish(dir).status(Status::Io)?;
            return Err(Failure::new(Status::Solver, e));
        }
    };
    let path = dir.join("trace.csv");
    let file = fs::File::create(&path).with_context(|| format!("cannot write {}", path.display())).status(Status::Io)?;
    write_trace_csv(&trace, &setup.model, file).status(Status::Io)?;
    manifest.output(path);
    manifest.config("termination", trace.termination.to_string());
    manifest.finish(dir).status(Status::Io)?;
    println!("termination: {}", trace.termination);
    println!("samples: {}", trace.samples.len());
    println!("duration: {:.1} s", trace.duration());
    println!("specific capacity: {:.1} mAh/g", trace.specific_capacity);
    if trace.termination == Termination::SolverFailure {
        return Err(Failure::new(Status::Solver, anyhow!("solver failure at t = {} s; partial trace written", trace.duration())));
    }
    Ok(())
}

fn parse_path(text: &str, model: &ReactionModel) -> Result<ParamPath, Failure> {
    ParamPath::parse(text, model).status(Status::Config)
}

pub fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let setup = load_setup(&args.model, Some(&args.load))?;
    let target = parse_path(&args.param, &setup.model)?;
    let mut spec = SweepSpec::new(args.model.model, target, setup.params.clone(), setup.sim.clone());
    if !args.offsets.is_empty() {
        spec.perturbations =
            args.offsets.iter().map(|s| s.parse::<Perturbation>()).collect::<Result<_, _>>().status(Status::Config)?;
    }
    let result = sensitivity::run_sweep(&spec).status(Status::Config)?;
    let dir = args.out.out.join(&args.name);
    create_dir(&dir)?;
    let mut manifest = Manifest::start("sweep");
    snapshot(&mut manifest, &setup);
    manifest.config("param", target.display(&setup.model).to_string());
    manifest.config("offsets", spec.perturbations.iter().map(|p| p.to_string()).collect::<Vec<_>>());
    manifest.outputs(sensitivity::write_sweep(&result, &dir).status(Status::Io)?);
    write_inputs(&dir, &setup, &mut manifest)?;
    manifest.finish(&dir).status(Status::Io)?;
    println!("{:<12} {:>14} {:>10} {:>10} {:>12} {:>12}", "offset", "value", "high V", "low V", "mAh/g", "duration s");
    for run in result.all_runs() {
        let f = run.features.as_ref();
        let cell = |x: Option<f64>, digits: usize| x.map_or("-".to_string(), |v| format!("{v:.digits$}"));
        println!(
            "{:<12} {:>14.6e} {:>10} {:>10} {:>12} {:>12}{}",
            run.label(),
            run.value,
            cell(f.map(|f| f.high_plateau_mean), 4),
            cell(f.and_then(|f| f.low_plateau_mean), 4),
            cell(f.map(|f| f.specific_capacity), 1),
            cell(f.map(|f| f.duration), 1),
            if run.failed() { "  FAILED" } else { "" }
        );
    }
    Ok(())
}

pub fn scale(args: ScaleArgs) -> Result<(), Failure> {
    let setup = load_setup(&args.model, None)?;
    let mu = ScaleFactor::new(args.mu).status(Status::Config)?;
    let direction = match args.direction {
        DirectionArg::ToModel => Direction::ProtoToModel,
        DirectionArg::ToProto => Direction::ModelToProto,
    };
    let scaled = scale_parameters(&setup.params, mu, direction);
    let text = write_parameters(&setup.model, &scaled);
    let dir = &args.out.out;
    create_dir(dir)?;
    let mut manifest = Manifest::start("scale");
    manifest.config("model", setup.model.id().to_string());
    manifest.config("parameters", write_parameters(&setup.model, &setup.params));
    manifest.config("mu", args.mu);
    manifest.config("direction", format!("{direction:?}"));
    manifest.output(write_file(dir.join("scaled_params.txt"), &text)?);
    manifest.finish(dir).status(Status::Io)?;
    print!("{text}");
    Ok(())
}

/// Parses `path = lower, upper` lines.
fn read_bounds(path: &Path, model: &ReactionModel) -> Result<Vec<ThetaBound>, Failure> {
    let text = read_config_file(path)?;
    let mut theta = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fail = |msg: String| Failure::new(Status::Config, anyhow!("{}:{}: {msg}", path.display(), k + 1));
        let (key, value) = line.split_once('=').ok_or_else(|| fail(format!("expected `path = lower, upper`, got `{line}`")))?;
        let p = ParamPath::parse(key, model).map_err(|e| fail(e.message))?;
        let (lo, hi) = value.split_once(',').ok_or_else(|| fail(format!("expected `lower, upper`, got `{}`", value.trim())))?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| fail(format!("`{}` is not a number", s.trim())));
        theta.push(ThetaBound { path: p, lower: num(lo)?, upper: num(hi)? });
    }
    Ok(theta)
}

pub fn fit(args: FitArgs) -> Result<(), Failure> {
    let model = build_model(args.model.model);
    let fixed = load_parameters(&args.model)?;
    fixed.validate(&model).status(Status::Config)?;
    let mu = ScaleFactor::new(args.mu).status(Status::Config)?;
    let options = IngestOptions { current: args.current, current_bias: args.bias };
    let data = identify::load_experiment(&args.data, options).status(Status::Ingestion)?;
    if data.charge_warning() {
        eprintln!(
            "warning: voltage rises in {:.1} % of the samples; the data may contain a charge segment",
            100.0 * data.rising_fraction()
        );
    }
    let mut problem = FitProblem::new(args.model.model, data, mu);
    problem.fixed = fixed;
    problem.theta = identify::default_theta(&problem.fixed);
    if let Some(path) = &args.model.config {
        problem.sim = read_sim_config(&read_config_file(path)?, problem.sim.clone())
            .with_context(|| format!("in {}", path.display()))
            .status(Status::Config)?;
    }
    if let Some(path) = &args.bounds {
        problem.theta = read_bounds(path, &model)?;
    }
    if let Some(alpha) = args.alpha {
        problem.alpha = alpha;
    }
    problem.pso.seed = args.seed;
    if let Some(n) = args.swarm_size {
        problem.pso.swarm_size = n;
    }
    if let Some(n) = args.max_iters {
        problem.pso.max_iters = n;
    }
    if let Some(n) = args.stall_iters {
        problem.pso.stall_iters = n;
    }
    problem.validate().status(Status::Config)?;

    let result = match identify::fit(&problem) {
        Ok(r) => r,
        Err(e @ FitError::AllFailed) => return Err(Failure::new(Status::AllFailed, e)),
        Err(e) => return Err(Failure::new(Status::Config, e)),
    };
    let dir = &args.out.out;
    create_dir(dir)?;
    let mut manifest = Manifest::start("fit");
    manifest.seed(args.seed);
    manifest.config("model", problem.model.to_string());
    manifest.config("data", args.data.display().to_string());
    manifest.config("prototype_current_A", problem.data.current);
    manifest.config("current_bias_A", problem.data.current_bias);
    manifest.config("mu", args.mu);
    manifest.config("model_current_A", problem.model_current());
    manifest.config("alpha", problem.alpha);
    manifest.config("fixed_parameters", write_parameters(&model, &problem.fixed));
    manifest.config("simulation", write_sim_config(&problem.sim));
    manifest.config(
        "bounds",
        problem
            .theta
            .iter()
            .map(|b| format!("{} = {}, {}", b.path.display(&model), format_float(b.lower), format_float(b.upper)))
            .collect::<Vec<_>>(),
    );
    manifest.config(
        "pso",
        serde_json::json!({
            "swarm_size": problem.pso.swarm_size,
            "max_iters": problem.pso.max_iters,
            "inertia": problem.pso.inertia,
            "cognitive": problem.pso.cognitive,
            "social": problem.pso.social,
            "v_max": problem.pso.v_max,
            "stall_iters": problem.pso.stall_iters,
        }),
    );
    manifest.outputs(identify::write_fit_report(&problem, &result, dir).status(Status::Io)?);
    manifest.finish(dir).status(Status::Io)?;

    let proto = scale_parameters(&result.params, mu, Direction::ModelToProto);
    println!("{:<10} {:>14} {:>14}  unit", "param", "model", "prototype");
    for (path, value) in &result.theta {
        println!("{:<10} {:>14.6e} {:>14.6e}  {}", path.display(&model).to_string(), value, proto.get(path), path.unit());
    }
    println!("J = {:.6e} V^2", result.j);
    println!("RMSE = {:.3} mV", 1e3 * result.rmse);
    println!("duration error = {:.1} s", result.duration_err);
    println!("evaluations = {} ({} failed)", result.evaluations, result.failed_evaluations);
    Ok(())
}

pub fn rank(args: RankArgs) -> Result<(), Failure> {
    let setup = load_setup(&args.model, Some(&args.load))?;
    let ranking =
        sensitivity::rank_parameters(args.model.model, &setup.params, &setup.sim, args.fraction).status(Status::Config)?;
    let dir = &args.out.out;
    create_dir(dir)?;
    let mut manifest = Manifest::start("rank");
    snapshot(&mut manifest, &setup);
    manifest.config("fraction", args.fraction);
    let mut csv = String::from("rank,param,score_V\n");
    for (k, inf) in ranking.iter().enumerate() {
        let name = inf.path.display(&setup.model).to_string();
        let score = inf.score.map(format_float).unwrap_or_default();
        csv.push_str(&format!("{},{name},{score}\n", k + 1));
        println!("{:>3}  {:<8} {}", k + 1, name, inf.score.map_or("failed".to_string(), |s| format!("{:.3} mV", 1e3 * s)));
    }
    manifest.output(write_file(dir.join("ranking.csv"), &csv)?);
    manifest.finish(dir).status(Status::Io)?;
    Ok(())
}
