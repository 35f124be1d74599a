//! One-at-a-time parameter sweeps and influence ranking.
//!
//! A sweep simulates the nominal parameter set and one perturbed copy per
//! offset, holding everything else (including the applied current) fixed.
//! Runs are independent and evaluated in parallel; results keep the order
//! of the requested offsets, so a sweep is deterministic.

pub mod features;

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::dae::{simulate, SimulationConfig, SimulationError, SimulationTrace, Termination};
use crate::error::InvalidInput;
use crate::io::{format_float, write_trace_csv};
use crate::model::{build_model, ModelId, ReactionModel};
use crate::params::{ParamPath, ParameterSet};

pub use features::{extract_features, plateau_end_steepness, CurveFeatures, Dip, FeatureError};

/// Offset applied to the nominal value of a parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    /// `value * (1 + r)`.
    Relative(f64),
    /// `value + d`, in the parameter's unit.
    Absolute(f64),
}

impl Perturbation {
    pub fn apply(&self, nominal: f64) -> f64 {
        match *self {
            Perturbation::Relative(r) => nominal * (1.0 + r),
            Perturbation::Absolute(d) => nominal + d,
        }
    }

    /// Default grid: ±25 and ±50 mV for standard potentials, ±10 % and
    /// ±20 % for everything else.
    pub fn default_grid(target: ParamPath) -> Vec<Perturbation> {
        match target {
            ParamPath::E0(_) => [-0.05, -0.025, 0.025, 0.05].map(Perturbation::Absolute).to_vec(),
            _ => [-0.2, -0.1, 0.1, 0.2].map(Perturbation::Relative).to_vec(),
        }
    }
}

/// File-name friendly label such as `rel+0.1` or `abs-0.025`.
impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, x) = match *self {
            Perturbation::Relative(r) => ("rel", r),
            Perturbation::Absolute(d) => ("abs", d),
        };
        let sign = if x.is_sign_negative() { '-' } else { '+' };
        write!(f, "{kind}{sign}{}", format_float(x.abs()))
    }
}

impl std::str::FromStr for Perturbation {
    type Err = InvalidInput;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || InvalidInput::new("perturbation", format!("`{s}` is not `<±x>`, `rel<±x>`, `abs<±x>` or `<±x>%`"));
        let t = s.trim();
        if let Some(pct) = t.strip_suffix('%') {
            return pct.parse::<f64>().map(|p| Perturbation::Relative(p / 100.0)).map_err(|_| bad());
        }
        let (ctor, rest): (fn(f64) -> Perturbation, &str) = if let Some(rest) = t.strip_prefix("rel") {
            (Perturbation::Relative, rest)
        } else if let Some(rest) = t.strip_prefix("abs") {
            (Perturbation::Absolute, rest)
        } else {
            (Perturbation::Relative, t)
        };
        rest.parse::<f64>().map(ctor).map_err(|_| bad())
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub model: ModelId,
    pub target: ParamPath,
    pub perturbations: Vec<Perturbation>,
    pub base: ParameterSet,
    pub config: SimulationConfig,
}

impl SweepSpec {
    /// A sweep over the default grid for `target`.
    pub fn new(model: ModelId, target: ParamPath, base: ParameterSet, config: SimulationConfig) -> Self {
        SweepSpec { model, target, perturbations: Perturbation::default_grid(target), base, config }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error(transparent)]
    Invalid(#[from] InvalidInput),
}

/// One simulated member of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    /// `None` for the nominal run.
    pub perturbation: Option<Perturbation>,
    /// Value of the swept parameter.
    pub value: f64,
    /// Absent when the initial state could not be solved.
    pub trace: Option<SimulationTrace>,
    pub features: Option<CurveFeatures>,
    pub error: Option<SimulationError>,
}

impl SweepRun {
    /// True when the simulation did not end at a physical stopping point.
    pub fn failed(&self) -> bool {
        match &self.trace {
            None => true,
            Some(t) => t.termination == Termination::SolverFailure,
        }
    }

    pub fn label(&self) -> String {
        self.perturbation.map_or_else(|| "nominal".to_string(), |p| p.to_string())
    }

    fn run(model: &ReactionModel, params: &ParameterSet, config: &SimulationConfig, target: ParamPath, p: Option<Perturbation>) -> Self {
        let value = params.get(&target);
        match simulate(model, params, config) {
            Ok(trace) => SweepRun {
                perturbation: p,
                value,
                features: extract_features(&trace, config.v_cutoff).ok(),
                trace: Some(trace),
                error: None,
            },
            Err(e) => SweepRun { perturbation: p, value, trace: None, features: None, error: Some(e) },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub model: ModelId,
    pub target: ParamPath,
    pub nominal: SweepRun,
    /// In the order of [`SweepSpec::perturbations`].
    pub runs: Vec<SweepRun>,
}

impl SweepResult {
    /// Nominal run followed by the perturbed ones.
    pub fn all_runs(&self) -> impl Iterator<Item = &SweepRun> {
        std::iter::once(&self.nominal).chain(&self.runs)
    }
}

fn perturbed(model: &ReactionModel, base: &ParameterSet, target: ParamPath, p: Perturbation) -> Result<ParameterSet, InvalidInput> {
    let mut params = base.clone();
    params.set(&target, p.apply(base.get(&target)));
    params.validate(model).map_err(|e| InvalidInput::new(e.field, format!("{} under {p}: {}", target.display(model), e.reason)))?;
    Ok(params)
}

/// Simulates the nominal set and every perturbation of `spec.target`.
///
/// Perturbations that break a parameter invariant are rejected up front.
/// Solver failures are kept per run and do not abort the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, SweepError> {
    let model = build_model(spec.model);
    spec.base.validate(&model)?;
    spec.config.validate()?;
    let mut jobs = vec![(None, spec.base.clone())];
    for &p in &spec.perturbations {
        jobs.push((Some(p), perturbed(&model, &spec.base, spec.target, p)?));
    }
    let mut runs: Vec<SweepRun> = jobs
        .par_iter()
        .map(|(p, params)| SweepRun::run(&model, params, &spec.config, spec.target, *p))
        .collect();
    let nominal = runs.remove(0);
    Ok(SweepResult { model: spec.model, target: spec.target, nominal, runs })
}

/// Largest voltage difference between two traces over their common
/// capacity range, evaluated at the samples of both, V.
pub fn voltage_distance(a: &SimulationTrace, b: &SimulationTrace) -> f64 {
    let (ca, va) = (a.capacities(), a.voltages());
    let (cb, vb) = (b.capacities(), b.voltages());
    let end = ca.last().copied().unwrap_or(0.0).min(cb.last().copied().unwrap_or(0.0));
    let gap = |xs: &[f64], ys: &[f64], other_x: &[f64], other_y: &[f64]| {
        xs.iter()
            .zip(ys)
            .filter(|(&c, _)| c <= end)
            .map(|(&c, &v)| (v - features::interpolate(other_x, other_y, c)).abs())
            .fold(0.0, f64::max)
    };
    gap(&ca, &va, &cb, &vb).max(gap(&cb, &vb, &ca, &va))
}

/// Influence of one parameter on the discharge curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Influence {
    pub path: ParamPath,
    /// Sup-norm voltage difference between the `+fraction` and `-fraction`
    /// runs, V. `None` if either run failed.
    pub score: Option<f64>,
}

/// Parameters ranked by [`rank_parameters`]: every `E0` and `i0`, the
/// precipitation and porosity parameters and the initial `S8` mass.
pub fn ranked_paths(model: &ReactionModel) -> Vec<ParamPath> {
    let p = model.reaction_count();
    let mut paths: Vec<ParamPath> = (0..p).map(ParamPath::E0).chain((0..p).map(ParamPath::I0)).collect();
    paths.extend([ParamPath::Gamma, ParamPath::Omega, ParamPath::Kp, ParamPath::SSat, ParamPath::M0(0)]);
    paths
}

/// Ranks parameters by how far a `±fraction` relative perturbation moves
/// the voltage-capacity curve.
///
/// Sorted by descending score, ties by path name; failed scores last.
pub fn rank_parameters(
    model_id: ModelId,
    base: &ParameterSet,
    config: &SimulationConfig,
    fraction: f64,
) -> Result<Vec<Influence>, SweepError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(InvalidInput::new("fraction", format!("must be in [0, 1), got {fraction}")).into());
    }
    let model = build_model(model_id);
    base.validate(&model)?;
    config.validate()?;
    let paths = ranked_paths(&model);
    let mut jobs = Vec::new();
    for &path in &paths {
        for r in [fraction, -fraction] {
            jobs.push((path, perturbed(&model, base, path, Perturbation::Relative(r))?));
        }
    }
    let runs: Vec<SweepRun> = jobs
        .par_iter()
        .map(|(path, params)| SweepRun::run(&model, params, config, *path, None))
        .collect();
    let mut ranking: Vec<(String, Influence)> = paths
        .iter()
        .zip(runs.chunks(2))
        .map(|(&path, pair)| {
            let score = match (&pair[0].trace, &pair[1].trace) {
                (Some(a), Some(b)) if !pair[0].failed() && !pair[1].failed() => Some(voltage_distance(a, b)),
                _ => None,
            };
            (path.display(&model).to_string(), Influence { path, score })
        })
        .collect();
    ranking.sort_by(|(na, a), (nb, b)| match (a.score, b.score) {
        (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| na.cmp(nb)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => na.cmp(nb),
    });
    Ok(ranking.into_iter().map(|(_, inf)| inf).collect())
}

const SUMMARY_HEADER: [&str; 15] = [
    "param",
    "offset",
    "value",
    "termination",
    "high_plateau_V",
    "low_plateau_V",
    "dip_V",
    "dip_capacity_mAh_per_g",
    "specific_capacity_mAh_per_g",
    "duration_s",
    "d_high_plateau_V",
    "d_low_plateau_V",
    "d_dip_V",
    "d_specific_capacity_mAh_per_g",
    "d_duration_s",
];

fn opt(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

/// Writes `<dir>/<param>/<offset>.csv` for every run with a trace, plus
/// `<dir>/<param>/summary.csv`. Returns the files written.
pub fn write_sweep(result: &SweepResult, dir: &Path) -> io::Result<Vec<PathBuf>> {
    let model = build_model(result.model);
    let param = result.target.display(&model).to_string();
    let sub = dir.join(&param);
    fs::create_dir_all(&sub)?;
    let mut written = Vec::new();
    for run in result.all_runs() {
        if let Some(trace) = &run.trace {
            let path = sub.join(format!("{}.csv", run.label()));
            write_trace_csv(trace, &model, fs::File::create(&path)?)?;
            written.push(path);
        }
    }
    let summary = sub.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary)?;
    w.write_record(SUMMARY_HEADER)?;
    let base = result.nominal.features;
    let delta = |f: &CurveFeatures, pick: fn(&CurveFeatures) -> Option<f64>| {
        base.as_ref().and_then(pick).zip(pick(f)).map(|(b, x)| x - b)
    };
    for run in result.all_runs() {
        let mut row = vec![param.clone(), run.label(), format_float(run.value)];
        row.push(run.trace.as_ref().map_or_else(|| "initialisation failed".to_string(), |t| t.termination.to_string()));
        match &run.features {
            Some(f) => {
                row.extend([
                    Some(f.high_plateau_mean),
                    f.low_plateau_mean,
                    f.dip.map(|d| d.voltage),
                    f.dip.map(|d| d.capacity),
                    Some(f.specific_capacity),
                    Some(f.duration),
                    delta(f, |g| Some(g.high_plateau_mean)),
                    delta(f, |g| g.low_plateau_mean),
                    delta(f, |g| g.dip.map(|d| d.voltage)),
                    delta(f, |g| Some(g.specific_capacity)),
                    delta(f, |g| Some(g.duration)),
                ]
                .map(opt));
            }
            None => row.extend(std::iter::repeat_n(String::new(), SUMMARY_HEADER.len() - 4)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    written.push(summary);
    Ok(written)
}
