//! Charge-based similitude between a model-scale cell and a prototype.
//!
//! Charge, and with it every mass and the current, is scaled by `mu`
//! (model over prototype). Lengths follow as `mu^(1/3)`, so the active area
//! scales as `mu^(2/3)`, the exchange current density as `mu^(1/3)` and the
//! volume as `mu`. The porosity and precipitation rates per gram scale as
//! `1/mu`. Concentrations, potentials and time are unchanged, which makes
//! `V(t)` identical at both scales.

use crate::dae::{simulate, simulate_with_stops, SimulationConfig, SimulationError, SimulationTrace};
use crate::error::InvalidInput;
use crate::model::{build_model, ModelId};
use crate::params::ParameterSet;

/// Charge scale factor, model over prototype.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleFactor(f64);

impl ScaleFactor {
    pub fn new(mu: f64) -> Result<Self, InvalidInput> {
        if mu.is_finite() && mu > 0.0 {
            Ok(ScaleFactor(mu))
        } else {
            Err(InvalidInput::new("mu", format!("must be finite and positive, got {mu}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ProtoToModel,
    ModelToProto,
}

/// Applies `x * mu^power` for [`Direction::ProtoToModel`] and the inverse
/// otherwise.
#[derive(Debug, Clone, Copy)]
struct Scaler {
    mu: f64,
    third: f64,
    up: bool,
}

impl Scaler {
    fn new(mu: ScaleFactor, direction: Direction) -> Self {
        Scaler { mu: mu.0, third: mu.0.cbrt(), up: direction == Direction::ProtoToModel }
    }

    fn by(&self, x: f64, factor: f64) -> f64 {
        if self.up {
            x * factor
        } else {
            x / factor
        }
    }

    fn mass(&self, x: f64) -> f64 {
        self.by(x, self.mu)
    }

    fn per_mass(&self, x: f64) -> f64 {
        if self.up {
            x / self.mu
        } else {
            x * self.mu
        }
    }

    fn length(&self, x: f64) -> f64 {
        self.by(x, self.third)
    }

    fn area(&self, x: f64) -> f64 {
        self.by(x, self.third * self.third)
    }
}

/// Scales a parameter set between prototype and model scale.
pub fn scale_parameters(params: &ParameterSet, mu: ScaleFactor, direction: Direction) -> ParameterSet {
    let s = Scaler::new(mu, direction);
    ParameterSet {
        e0: params.e0.clone(),
        i0: params.i0.iter().map(|&x| s.length(x)).collect(),
        a_v0: s.area(params.a_v0),
        volume: s.mass(params.volume),
        gamma: params.gamma,
        omega: s.per_mass(params.omega),
        k_p: s.per_mass(params.k_p),
        s_sat: s.mass(params.s_sat),
        m0: params.m0.iter().map(|&m| s.mass(m)).collect(),
        m_sp0: s.mass(params.m_sp0),
        constants: params.constants,
    }
}

/// Scales a current or a mass, A or g.
pub fn scale_extensive(x: f64, mu: ScaleFactor, direction: Direction) -> f64 {
    Scaler::new(mu, direction).mass(x)
}

/// Scales the applied current and the mass and current tolerances; time
/// settings, `rtol` and the limits on `V` and porosity are unchanged.
pub fn scale_config(config: &SimulationConfig, mu: ScaleFactor, direction: Direction) -> SimulationConfig {
    let s = Scaler::new(mu, direction);
    SimulationConfig {
        current: s.mass(config.current),
        atol: s.mass(config.atol),
        constraint_tol: s.mass(config.constraint_tol),
        ..config.clone()
    }
}

/// Points of the common time grid used by [`verify_similitude`].
pub const COMPARISON_POINTS: usize = 200;

/// Outcome of [`verify_similitude`].
#[derive(Debug, Clone)]
pub struct SimilitudeReport {
    pub mu: ScaleFactor,
    /// Largest `|V_model(t) - V_proto(t)|` over the common time grid, V.
    pub voltage_difference: f64,
    /// Allowed voltage difference: five times the integrator tolerance, V.
    pub voltage_tolerance: f64,
    /// Largest `|m_model - mu m_proto|` over all masses and grid times, in
    /// units of the model-scale error weight `rtol |m| + atol`.
    pub mass_difference: f64,
    /// `|T_model - T_proto|`, s.
    pub duration_difference: f64,
    /// Grid times present in both traces.
    pub compared_points: usize,
    pub model_trace: SimulationTrace,
    pub proto_trace: SimulationTrace,
}

impl SimilitudeReport {
    /// Both voltage and mass laws hold within five integrator tolerances.
    pub fn holds(&self) -> bool {
        self.voltage_difference <= self.voltage_tolerance && self.mass_difference <= 5.0
    }
}

/// Simulates `params` at model scale and its prototype image under `mu`,
/// and compares the two.
///
/// Both runs are forced to step onto a uniform grid of
/// [`COMPARISON_POINTS`] times spanning the unforced model-scale discharge,
/// so the comparison needs no interpolation.
pub fn verify_similitude(
    model_id: ModelId,
    params: &ParameterSet,
    config: &SimulationConfig,
    mu: ScaleFactor,
) -> Result<SimilitudeReport, SimulationError> {
    let model = build_model(model_id);
    let proto_params = scale_parameters(params, mu, Direction::ModelToProto);
    let proto_config = scale_config(config, mu, Direction::ModelToProto);
    let span = simulate(&model, params, config)?.duration();
    let grid: Vec<f64> = (1..=COMPARISON_POINTS).map(|k| span * k as f64 / (COMPARISON_POINTS + 1) as f64).collect();
    let model_trace = simulate_with_stops(&model, params, config, &grid)?;
    let proto_trace = simulate_with_stops(&model, &proto_params, &proto_config, &grid)?;

    let at_grid = |trace: &SimulationTrace| -> Vec<Option<usize>> {
        grid.iter().map(|&g| trace.samples.iter().position(|s| s.state.t == g)).collect()
    };
    let mut voltage_difference = 0.0f64;
    let mut mass_difference = 0.0f64;
    let mut compared_points = 0;
    for (a, b) in at_grid(&model_trace).into_iter().zip(at_grid(&proto_trace)) {
        let (Some(a), Some(b)) = (a, b) else { continue };
        let (a, b) = (&model_trace.samples[a], &proto_trace.samples[b]);
        compared_points += 1;
        voltage_difference = voltage_difference.max((a.outputs.voltage - b.outputs.voltage).abs());
        let model_masses = a.state.m.iter().chain([&a.state.m_sp]);
        let proto_masses = b.state.m.iter().chain([&b.state.m_sp]);
        for (&m, &p) in model_masses.zip(proto_masses) {
            let weight = config.rtol * m.abs() + config.atol;
            mass_difference = mass_difference.max((m - mu.0 * p).abs() / weight);
        }
    }
    let v_max = model_trace.voltages().into_iter().fold(0.0, f64::max);
    Ok(SimilitudeReport {
        mu,
        voltage_difference,
        voltage_tolerance: 5.0 * config.rtol * v_max,
        mass_difference,
        duration_difference: (model_trace.duration() - proto_trace.duration()).abs(),
        compared_points,
        model_trace,
        proto_trace,
    })
}
