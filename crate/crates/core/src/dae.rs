//! Constant-current discharge of the 0D cell: mass balances integrated with
//! the algebraic voltage constraint solved at every right-hand-side call.

use std::fmt;

use thiserror::Error;

use crate::error::InvalidInput;
use crate::kinetics::{AlgebraicOutputs, ConstraintError, Kinetics, ReactionTerms};
use crate::model::ReactionModel;
use crate::params::{CellState, ParameterSet};
use crate::radau::{OdeSystem, Radau5, StepFailure, ORDER};

/// Theoretical specific capacity of sulfur, mAh/g.
pub const THEORETICAL_CAPACITY: f64 = 1672.0;
/// Absolute error weight of the relative porosity.
const POROSITY_ATOL: f64 = 1e-9;
/// The local error test runs at this fraction of `rtol` and `atol`, which
/// keeps the global voltage error within a few `rtol |V|`.
pub const LOCAL_ERROR_FRACTION: f64 = 0.1;
/// Voltage tolerance for locating the cutoff crossing, V.
const EVENT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    /// Discharge current, A (positive).
    pub current: f64,
    /// Horizon, s.
    pub t_max: f64,
    /// Terminal voltage, V.
    pub v_cutoff: f64,
    /// Porosity floor.
    pub eps_min: f64,
    pub rtol: f64,
    /// Absolute tolerance on masses, g.
    pub atol: f64,
    /// Initial step, s.
    pub dt_init: f64,
    /// Largest step, s.
    pub dt_max: f64,
    /// Residual tolerance on the current sum, A.
    pub constraint_tol: f64,
}

impl SimulationConfig {
    pub fn new(current: f64) -> Self {
        SimulationConfig {
            current,
            t_max: 1e6,
            v_cutoff: 1.5,
            eps_min: 1e-3,
            rtol: 1e-6,
            atol: 1e-9,
            dt_init: 1e-2,
            dt_max: 20.0,
            constraint_tol: 1e-10,
        }
    }

    /// Config for a C-rate relative to the theoretical capacity of the
    /// initial `S8` loading in `params`.
    pub fn for_c_rate(params: &ParameterSet, c_rate: f64) -> Self {
        Self::new(c_rate_current(params.s8_mass(), c_rate))
    }

    pub fn validate(&self) -> Result<(), InvalidInput> {
        let pos = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(InvalidInput::new(field, format!("must be finite and > 0, got {v}")))
            }
        };
        pos("current", self.current)?;
        pos("t_max", self.t_max)?;
        pos("rtol", self.rtol)?;
        pos("atol", self.atol)?;
        pos("dt_init", self.dt_init)?;
        pos("dt_max", self.dt_max)?;
        pos("constraint_tol", self.constraint_tol)?;
        if !(self.eps_min > 0.0 && self.eps_min < 1.0) {
            return Err(InvalidInput::new("eps_min", format!("must lie in (0, 1), got {}", self.eps_min)));
        }
        if !self.v_cutoff.is_finite() || self.v_cutoff < 0.0 {
            return Err(InvalidInput::new("v_cutoff", format!("must be finite and >= 0, got {}", self.v_cutoff)));
        }
        Ok(())
    }
}

/// Discharge current for `c_rate` given an `S8` mass in grams, A.
pub fn c_rate_current(s8_mass: f64, c_rate: f64) -> f64 {
    c_rate * THEORETICAL_CAPACITY * s8_mass / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    VoltageCutoff,
    PorosityFloor,
    SpeciesDepleted,
    Horizon,
    SolverFailure,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::VoltageCutoff => "voltage cutoff",
            Termination::PorosityFloor => "porosity floor",
            Termination::SpeciesDepleted => "species depleted",
            Termination::Horizon => "horizon",
            Termination::SolverFailure => "solver failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: CellState,
    pub outputs: AlgebraicOutputs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub samples: Vec<Sample>,
    pub termination: Termination,
    /// Discharge current, A.
    pub current: f64,
    /// Initial `S8` mass the specific capacity refers to, g.
    pub s8_mass: f64,
    /// Charge delivered, Ah.
    pub discharged_capacity: f64,
    /// Charge delivered per gram of initial `S8`, mAh/g.
    pub specific_capacity: f64,
}

impl SimulationTrace {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.state.t).collect()
    }

    pub fn voltages(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.outputs.voltage).collect()
    }

    /// Specific capacity at each sample, mAh/g.
    pub fn capacities(&self) -> Vec<f64> {
        self.samples.iter().map(|s| self.capacity_at(s.state.t)).collect()
    }

    pub fn capacity_at(&self, t: f64) -> f64 {
        self.current * (t - self.samples[0].state.t) / 3.6 / self.s8_mass
    }

    /// Time of the last sample, s.
    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.state.t) - self.samples.first().map_or(0.0, |s| s.state.t)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Invalid(#[from] InvalidInput),
    #[error("initial state has no consistent voltage: {0}")]
    Initial(ConstraintError),
}

/// Time derivative of a [`CellState`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    /// Dissolved mass rates, g/s.
    pub m: Vec<f64>,
    /// Precipitation rate, g/s.
    pub m_sp: f64,
    /// Porosity rate, 1/s.
    pub eps: f64,
}

/// Maps reaction currents to mass rates.
#[derive(Debug, Clone)]
pub(crate) struct MassBalance {
    q: usize,
    p: usize,
    /// `n_S,i M_S s_ij / (n_j F)`, g/C, row-major over species.
    coeff: Vec<f64>,
    k_p: f64,
    s_sat: f64,
    omega: f64,
}

impl MassBalance {
    pub fn new(model: &ReactionModel, params: &ParameterSet) -> Self {
        let (q, p) = (model.species_count(), model.reaction_count());
        let c = &params.constants;
        let mut coeff = Vec::with_capacity(q * p);
        for i in 0..q {
            for j in 0..p {
                coeff.push(
                    model.sulfur_atoms(i) as f64 * c.sulfur_molar_mass * model.coefficient_f64(i, j)
                        / (model.electrons(j) as f64 * c.faraday),
                );
            }
        }
        MassBalance { q, p, coeff, k_p: params.k_p, s_sat: params.s_sat, omega: params.omega }
    }

    /// Writes `[dm.., dm_sp, deps]` into `dy`.
    pub fn derivative(&self, m: &[f64], m_sp: f64, currents: &[f64], dy: &mut [f64]) {
        let precip = self.k_p * m_sp * (m[self.q - 1] - self.s_sat);
        for i in 0..self.q {
            let row = &self.coeff[i * self.p..(i + 1) * self.p];
            dy[i] = row.iter().zip(currents).map(|(c, cur)| c * cur).sum();
        }
        dy[self.q - 1] -= precip;
        dy[self.q] = precip;
        dy[self.q + 1] = -self.omega * precip;
    }
}

/// Mass, precipitate and porosity rates for `state` given its algebraic outputs.
pub fn state_derivative(
    model: &ReactionModel,
    params: &ParameterSet,
    state: &CellState,
    alg: &AlgebraicOutputs,
) -> StateDerivative {
    let q = model.species_count();
    let mut dy = vec![0.0; q + 2];
    MassBalance::new(model, params).derivative(&state.m, state.m_sp, &alg.currents, &mut dy);
    StateDerivative { m: dy[..q].to_vec(), m_sp: dy[q], eps: dy[q + 1] }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("reaction {reaction}: mass of {species} is {mass:e} g, below {min_mass:e} g")]
pub struct Degenerate {
    pub reaction: usize,
    pub species: String,
    pub mass: f64,
    pub min_mass: f64,
}

/// Rate of change of each reduction potential, V/s.
///
/// Differentiating the Nernst relation gives
/// `dE_j/dt = -(RT / (n_j F)) sum_i s_ij (dm_i/dt) / m_i`; the volume and
/// molar-mass factors inside the concentration cancel in the logarithmic
/// derivative. Fails when a species taking part in reaction `j` has mass
/// below `min_mass`.
pub fn potential_rate(
    model: &ReactionModel,
    params: &ParameterSet,
    state: &CellState,
    dstate: &StateDerivative,
    min_mass: f64,
) -> Result<Vec<f64>, Degenerate> {
    let rt_f = 1.0 / params.constants.f_over_rt();
    (0..model.reaction_count())
        .map(|j| {
            let mut sum = 0.0;
            for i in model.participants(j) {
                let m = state.m[i];
                if m < min_mass {
                    return Err(Degenerate {
                        reaction: j + 1,
                        species: model.species()[i].name.to_string(),
                        mass: m,
                        min_mass,
                    });
                }
                sum += model.coefficient_f64(i, j) * dstate.m[i] / m;
            }
            Ok(-rt_f / model.electrons(j) as f64 * sum)
        })
        .collect()
}

/// The cell as an ODE in `[m.., m_sp, eps]` with the voltage eliminated.
struct CellOde {
    kin: Kinetics,
    balance: MassBalance,
    q: usize,
    current: f64,
    tol: f64,
    terms: ReactionTerms,
    currents: Vec<f64>,
}

impl CellOde {
    fn new(model: &ReactionModel, params: &ParameterSet, current: f64, tol: f64) -> Self {
        let kin = Kinetics::new(model, params);
        CellOde {
            terms: kin.scratch(),
            currents: vec![0.0; kin.reaction_count()],
            kin,
            balance: MassBalance::new(model, params),
            q: model.species_count(),
            current,
            tol,
        }
    }

    fn solve(&mut self, y: &[f64]) -> Result<f64, ConstraintError> {
        let q = self.q;
        self.kin.currents_at(&y[..q], y[q + 1], self.current, self.tol, &mut self.terms, &mut self.currents)
    }

    fn outputs(&mut self, y: &[f64]) -> Result<AlgebraicOutputs, ConstraintError> {
        let voltage = self.solve(y)?;
        Ok(AlgebraicOutputs {
            voltage,
            potentials: self.terms.potentials.clone(),
            overpotentials: self.terms.potentials.iter().map(|e| voltage - e).collect(),
            currents: self.currents.clone(),
            active_area: self.terms.active_area,
        })
    }
}

impl OdeSystem for CellOde {
    type Error = ConstraintError;

    fn dim(&self) -> usize {
        self.q + 2
    }

    fn rhs(&mut self, y: &[f64], dy: &mut [f64]) -> Result<(), ConstraintError> {
        self.solve(y)?;
        self.balance.derivative(&y[..self.q], y[self.q], &self.currents, dy);
        Ok(())
    }
}

/// Why the last attempted step was refused.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Refusal {
    /// Constraint unsolvable or a mass went negative.
    Depletion,
    /// Newton divergence or error-test failure.
    Numerical,
}

/// Integrates a constant-current discharge from the initial state of `params`.
///
/// Steps are accepted only if every dissolved mass stays within the reach
/// of the concentration floor continuation, the precipitate stays above
/// `-atol`, the voltage
/// constraint is solvable and the local error test passes. The run ends at
/// the voltage cutoff or porosity floor (located to within a small
/// tolerance), at the horizon, or when the step size collapses; a collapse
/// caused by unsolvable constraints or negative masses is reported as
/// [`Termination::SpeciesDepleted`], any other as
/// [`Termination::SolverFailure`]. The partial trace is returned in every
/// case.
pub fn simulate(
    model: &ReactionModel,
    params: &ParameterSet,
    config: &SimulationConfig,
) -> Result<SimulationTrace, SimulationError> {
    simulate_with_stops(model, params, config, &[])
}

/// [`simulate`], with steps shortened so that every time in `stops`
/// (ascending, s) reached before termination is a sample of the trace.
pub fn simulate_with_stops(
    model: &ReactionModel,
    params: &ParameterSet,
    config: &SimulationConfig,
    stops: &[f64],
) -> Result<SimulationTrace, SimulationError> {
    params.validate(model)?;
    config.validate()?;
    let q = model.species_count();
    let n = q + 2;
    let mut ode = CellOde::new(model, params, config.current, config.constraint_tol);
    let rtol = LOCAL_ERROR_FRACTION * config.rtol;
    let mut atol = vec![LOCAL_ERROR_FRACTION * config.atol; n];
    atol[q + 1] = LOCAL_ERROR_FRACTION * POROSITY_ATOL;
    let solver = Radau5::new(rtol, atol);
    let mass_limits: Vec<f64> = ode.kin.depletion_limits().iter().map(|l| l.min(-config.atol)).collect();

    let mut y = CellState::initial(params).to_vector();
    let mut t = 0.0;
    let first = ode.outputs(&y).map_err(SimulationError::Initial)?;
    let mut samples = vec![Sample { state: CellState::from_vector(&y, t), outputs: first }];
    let mut f0 = vec![0.0; n];
    let mut h = config.dt_init.min(config.dt_max);
    let mut refusal = Refusal::Numerical;
    let mut next_stop = 0;

    let termination = loop {
        let remaining = config.t_max - t;
        if remaining <= 1e-12 * config.t_max {
            break Termination::Horizon;
        }
        h = h.min(config.dt_max).min(remaining);
        if h < 64.0 * f64::EPSILON * t.max(1.0) {
            break match refusal {
                Refusal::Depletion => Termination::SpeciesDepleted,
                Refusal::Numerical => Termination::SolverFailure,
            };
        }
        while stops.get(next_stop).is_some_and(|&s| s <= t) {
            next_stop += 1;
        }
        let stop = stops.get(next_stop).copied().filter(|&s| s - t <= h);
        if let Some(s) = stop {
            h = s - t;
        }
        if ode.rhs(&y, &mut f0).is_err() {
            break Termination::SpeciesDepleted;
        }
        let jac = match solver.jacobian(&mut ode, &y, &f0) {
            Ok(j) => j,
            Err(_) => {
                refusal = Refusal::Depletion;
                h *= 0.25;
                continue;
            }
        };
        let step = match solver.doubled_step(&mut ode, &y, h, &jac) {
            Ok(s) => s,
            Err(StepFailure::Rhs(_)) => {
                refusal = Refusal::Depletion;
                h *= 0.25;
                continue;
            }
            Err(_) => {
                refusal = Refusal::Numerical;
                h *= 0.25;
                continue;
            }
        };
        if step.error > 1.0 {
            refusal = Refusal::Numerical;
            h *= Radau5::step_factor(step.error).min(0.9);
            continue;
        }
        if negative_mass(&step.y, &mass_limits, config.atol) {
            refusal = Refusal::Depletion;
            h *= 0.25;
            continue;
        }
        let (out, v_full) = match (ode.outputs(&step.y), ode.solve(&step.full)) {
            (Ok(o), Ok(v)) => (o, v),
            _ => {
                refusal = Refusal::Depletion;
                h *= 0.25;
                continue;
            }
        };
        // The voltage is the observed output; near depletion it reacts
        // strongly to masses far below `atol`, so it joins the error test.
        let v_error = (out.voltage - v_full).abs() / (2f64.powi(ORDER) - 1.0) / (rtol * out.voltage.abs());
        let error = step.error.max(v_error);
        if error > 1.0 {
            refusal = Refusal::Numerical;
            h *= Radau5::step_factor(error).min(0.9);
            continue;
        }
        let below_cutoff = out.voltage < config.v_cutoff;
        let below_floor = step.y[q + 1] < config.eps_min;
        if below_cutoff || below_floor {
            let event = Event { voltage: below_cutoff, cutoff: config.v_cutoff, eps_min: config.eps_min, q };
            if let Some((dt, y_event, out_event)) = event.locate(&solver, &mut ode, &y, h, &jac) {
                t += dt;
                samples.push(Sample { state: CellState::from_vector(&y_event, t), outputs: out_event });
            }
            break if below_cutoff { Termination::VoltageCutoff } else { Termination::PorosityFloor };
        }
        t = stop.unwrap_or(t + h);
        y = step.y;
        samples.push(Sample { state: CellState::from_vector(&y, t), outputs: out });
        h *= Radau5::step_factor(error);
    };

    let t_end = samples.last().map_or(0.0, |s| s.state.t);
    let discharged_capacity = config.current * t_end / 3600.0;
    Ok(SimulationTrace {
        samples,
        termination,
        current: config.current,
        s8_mass: params.s8_mass(),
        discharged_capacity,
        specific_capacity: discharged_capacity * 1000.0 / params.s8_mass(),
    })
}

/// True if a dissolved mass is below its depletion limit, the precipitate
/// is below `-atol` or the porosity is not positive.
fn negative_mass(y: &[f64], limits: &[f64], atol: f64) -> bool {
    let q = limits.len();
    y[..q].iter().zip(limits).any(|(&m, &l)| m < l) || y[q] < -atol || !(y[q + 1] > 0.0)
}

/// Terminal event inside one step.
struct Event {
    /// Voltage cutoff when true, porosity floor otherwise.
    voltage: bool,
    cutoff: f64,
    eps_min: f64,
    q: usize,
}

impl Event {
    /// Signed distance to the event; positive before it.
    fn distance(&self, y: &[f64], out: &AlgebraicOutputs) -> f64 {
        if self.voltage {
            out.voltage - self.cutoff
        } else {
            y[self.q + 1] - self.eps_min
        }
    }

    /// Illinois search for the sub-step that lands on the event.
    fn locate(
        &self,
        solver: &Radau5,
        ode: &mut CellOde,
        y0: &[f64],
        h: f64,
        jac: &nalgebra::DMatrix<f64>,
    ) -> Option<(f64, Vec<f64>, AlgebraicOutputs)> {
        let start = ode.outputs(y0).ok()?;
        let (mut lo, mut g_lo) = (0.0, self.distance(y0, &start));
        let (mut hi, mut g_hi) = (h, None::<f64>);
        let mut best: Option<(f64, Vec<f64>, AlgebraicOutputs)> = None;
        let tol = if self.voltage { EVENT_TOL } else { 1e-12 };
        let mut side = 0i8;
        for _ in 0..60 {
            let secant = g_hi.map(|gh| lo + g_lo * (hi - lo) / (g_lo - gh));
            let dt = match secant {
                Some(dt) if dt > lo && dt < hi => dt,
                _ => 0.5 * (lo + hi),
            };
            let trial = solver
                .doubled_step(ode, y0, dt, jac)
                .ok()
                .and_then(|s| ode.outputs(&s.y).ok().map(|o| (s.y, o)));
            match trial {
                Some((y, out)) => {
                    let g = self.distance(&y, &out);
                    if g <= 0.0 {
                        hi = dt;
                        g_hi = Some(g);
                        if side == -1 {
                            g_lo *= 0.5;
                        }
                        side = -1;
                        let done = g > -tol;
                        best = Some((dt, y, out));
                        if done {
                            break;
                        }
                    } else {
                        lo = dt;
                        g_lo = g;
                        if side == 1 {
                            g_hi = g_hi.map(|gh| gh * 0.5);
                        }
                        side = 1;
                        if g < tol {
                            best = Some((dt, y, out));
                            break;
                        }
                    }
                }
                None => {
                    hi = dt;
                    g_hi = None;
                }
            }
            if hi - lo <= 1e-13 * h {
                break;
            }
        }
        best
    }
}
