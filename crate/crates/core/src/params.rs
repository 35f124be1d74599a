//! Physical parameters, cell state and parameter paths.
//!
//! Units throughout: masses in grams, volume in litres, currents in amperes,
//! areas in square metres, potentials in volts, time in seconds.

use std::fmt;

use crate::error::{InvalidInput, ParseError};
use crate::model::{ModelId, ReactionModel};

/// Default initial mass of dissolved `S8` at model scale, g.
pub const NOMINAL_S8_MASS: f64 = 2.8;
/// Initial mass of each polysulfide intermediate relative to `S8`.
pub const INTERMEDIATE_MASS_FRACTION: f64 = 1e-4;
/// Initial dissolved `S^2-` relative to the saturation mass.
pub const SULFIDE_SATURATION_FRACTION: f64 = 0.1;
/// Default precipitate nucleation seed at model scale, g.
pub const SEED_PRECIPITATE_MASS: f64 = 1e-6;

/// Constants that are known a priori.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Faraday constant, C/mol.
    pub faraday: f64,
    /// Gas constant, J/(K mol).
    pub gas_constant: f64,
    /// Temperature, K.
    pub temperature: f64,
    /// Molar mass of sulfur, g/mol.
    pub sulfur_molar_mass: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            faraday: 9.649e4,
            gas_constant: 8.3145,
            temperature: 298.0,
            sulfur_molar_mass: 32.065,
        }
    }
}

impl PhysicalConstants {
    /// `F / (R T)`, 1/V.
    #[inline]
    pub fn f_over_rt(&self) -> f64 {
        self.faraday / (self.gas_constant * self.temperature)
    }
}

/// All tunable parameters of one reaction-chain model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    /// Standard reduction potentials, V (one per reaction).
    pub e0: Vec<f64>,
    /// Exchange current densities, A/m^2 (one per reaction).
    pub i0: Vec<f64>,
    /// Initial active reaction area, m^2.
    pub a_v0: f64,
    /// Cell volume, L.
    pub volume: f64,
    /// Exponent of the relative porosity in the active area.
    pub gamma: f64,
    /// Relative porosity change rate, 1/g.
    pub omega: f64,
    /// Precipitation rate constant, 1/(g s).
    pub k_p: f64,
    /// Saturation mass of `S^2-`, g.
    pub s_sat: f64,
    /// Initial dissolved masses, g (one per species).
    pub m0: Vec<f64>,
    /// Initial precipitate mass, g.
    pub m_sp0: f64,
    pub constants: PhysicalConstants,
}

/// Table values for the standard potentials and exchange current densities.
fn nominal_kinetics(id: ModelId) -> (Vec<f64>, Vec<f64>) {
    match id {
        ModelId::M1 => (vec![2.40, 2.10], vec![2.00, 0.02]),
        ModelId::M2 => (vec![2.40, 2.30, 2.10], vec![2.00, 0.02, 0.02]),
        ModelId::M3 => (vec![2.46, 2.38, 2.30, 2.10], vec![2.00, 0.02, 0.02, 0.02]),
        ModelId::M4 => (vec![2.46, 2.38, 2.30, 2.15, 1.98], vec![2.00, 0.02, 0.02, 0.02, 0.02]),
    }
}

/// Initial dissolved masses for a given `S8` loading.
///
/// Intermediates start at [`INTERMEDIATE_MASS_FRACTION`] of the `S8` mass;
/// dissolved `S^2-` starts below saturation at
/// [`SULFIDE_SATURATION_FRACTION`] of `s_sat`.
pub fn default_initial_masses(species_count: usize, s8_mass: f64, s_sat: f64) -> Vec<f64> {
    let mut m0 = vec![INTERMEDIATE_MASS_FRACTION * s8_mass; species_count];
    m0[0] = s8_mass;
    m0[species_count - 1] = SULFIDE_SATURATION_FRACTION * s_sat;
    m0
}

/// Nominal parameters of model `id` at model scale.
pub fn nominal_parameters(id: ModelId) -> ParameterSet {
    let (e0, i0) = nominal_kinetics(id);
    let q = e0.len() + 1;
    let s_sat = 1e-4;
    ParameterSet {
        e0,
        i0,
        a_v0: 1.0,
        volume: 0.0114,
        gamma: 1.5,
        omega: 0.1,
        k_p: 22.0,
        s_sat,
        m0: default_initial_masses(q, NOMINAL_S8_MASS, s_sat),
        m_sp0: SEED_PRECIPITATE_MASS,
        constants: PhysicalConstants::default(),
    }
}

fn positive(field: impl Into<String>, value: f64) -> Result<(), InvalidInput> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(InvalidInput::new(field, format!("must be finite and > 0, got {value}")))
    }
}

impl ParameterSet {
    /// Checks the parameter invariants against the shape of `model`.
    pub fn validate(&self, model: &ReactionModel) -> Result<(), InvalidInput> {
        let p = model.reaction_count();
        let q = model.species_count();
        if self.e0.len() != p {
            return Err(InvalidInput::new("E0", format!("expected {p} entries, got {}", self.e0.len())));
        }
        if self.i0.len() != p {
            return Err(InvalidInput::new("i0", format!("expected {p} entries, got {}", self.i0.len())));
        }
        if self.m0.len() != q {
            return Err(InvalidInput::new("m0", format!("expected {q} entries, got {}", self.m0.len())));
        }
        for (j, &e) in self.e0.iter().enumerate() {
            if !(e > 1.0 && e < 3.0) {
                return Err(InvalidInput::new(format!("E0[{}]", j + 1), format!("must lie in (1, 3) V, got {e}")));
            }
        }
        for (j, &v) in self.i0.iter().enumerate() {
            positive(format!("i0[{}]", j + 1), v)?;
        }
        for (i, &v) in self.m0.iter().enumerate() {
            positive(format!("m0[{}]", model.species()[i].name), v)?;
        }
        positive("a_v0", self.a_v0)?;
        positive("v", self.volume)?;
        positive("gamma", self.gamma)?;
        positive("omega", self.omega)?;
        positive("k_p", self.k_p)?;
        positive("S_sat", self.s_sat)?;
        positive("m_Sp0", self.m_sp0)?;
        positive("F", self.constants.faraday)?;
        positive("R", self.constants.gas_constant)?;
        positive("T", self.constants.temperature)?;
        positive("M_S", self.constants.sulfur_molar_mass)?;
        Ok(())
    }

    /// Initial mass of elemental `S8`, g.
    pub fn s8_mass(&self) -> f64 {
        self.m0[0]
    }

    /// Total sulfur mass (dissolved plus precipitated) at t = 0, g.
    pub fn total_sulfur(&self) -> f64 {
        self.m0.iter().sum::<f64>() + self.m_sp0
    }

    /// Reads the value addressed by `path`.
    pub fn get(&self, path: &ParamPath) -> f64 {
        match *path {
            ParamPath::E0(j) => self.e0[j],
            ParamPath::I0(j) => self.i0[j],
            ParamPath::ActiveArea => self.a_v0,
            ParamPath::Volume => self.volume,
            ParamPath::Gamma => self.gamma,
            ParamPath::Omega => self.omega,
            ParamPath::Kp => self.k_p,
            ParamPath::SSat => self.s_sat,
            ParamPath::M0(i) => self.m0[i],
            ParamPath::MSp0 => self.m_sp0,
            ParamPath::Faraday => self.constants.faraday,
            ParamPath::GasConstant => self.constants.gas_constant,
            ParamPath::Temperature => self.constants.temperature,
            ParamPath::SulfurMolarMass => self.constants.sulfur_molar_mass,
        }
    }

    /// Overwrites the value addressed by `path`.
    pub fn set(&mut self, path: &ParamPath, value: f64) {
        let slot = match *path {
            ParamPath::E0(j) => &mut self.e0[j],
            ParamPath::I0(j) => &mut self.i0[j],
            ParamPath::ActiveArea => &mut self.a_v0,
            ParamPath::Volume => &mut self.volume,
            ParamPath::Gamma => &mut self.gamma,
            ParamPath::Omega => &mut self.omega,
            ParamPath::Kp => &mut self.k_p,
            ParamPath::SSat => &mut self.s_sat,
            ParamPath::M0(i) => &mut self.m0[i],
            ParamPath::MSp0 => &mut self.m_sp0,
            ParamPath::Faraday => &mut self.constants.faraday,
            ParamPath::GasConstant => &mut self.constants.gas_constant,
            ParamPath::Temperature => &mut self.constants.temperature,
            ParamPath::SulfurMolarMass => &mut self.constants.sulfur_molar_mass,
        };
        *slot = value;
    }

    /// Every path addressable for `model`, in config-file order.
    pub fn paths(model: &ReactionModel) -> Vec<ParamPath> {
        let p = model.reaction_count();
        let q = model.species_count();
        let mut out: Vec<ParamPath> = (0..p).map(ParamPath::E0).collect();
        out.extend((0..p).map(ParamPath::I0));
        out.extend([
            ParamPath::ActiveArea,
            ParamPath::Volume,
            ParamPath::Gamma,
            ParamPath::Omega,
            ParamPath::Kp,
            ParamPath::SSat,
        ]);
        out.extend((0..q).map(ParamPath::M0));
        out.extend([
            ParamPath::MSp0,
            ParamPath::Faraday,
            ParamPath::GasConstant,
            ParamPath::Temperature,
            ParamPath::SulfurMolarMass,
        ]);
        out
    }
}

/// Address of one scalar inside a [`ParameterSet`].
///
/// Reaction indices are stored 0-based and written 1-based (`E0[1]` is the
/// first reaction); species are written by name (`m0[S8]`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamPath {
    E0(usize),
    I0(usize),
    ActiveArea,
    Volume,
    Gamma,
    Omega,
    Kp,
    SSat,
    M0(usize),
    MSp0,
    Faraday,
    GasConstant,
    Temperature,
    SulfurMolarMass,
}

impl ParamPath {
    /// Parses a textual path such as `E0[2]`, `gamma` or `m0[S8]`.
    pub fn parse(text: &str, model: &ReactionModel) -> Result<ParamPath, ParseError> {
        let t = text.trim();
        let indexed = |prefix: &str| -> Option<&str> {
            t.strip_prefix(prefix).and_then(|rest| rest.strip_prefix('[')).and_then(|rest| rest.strip_suffix(']'))
        };
        let reaction = |idx: &str| -> Result<usize, ParseError> {
            let j: usize = idx
                .trim()
                .parse()
                .map_err(|_| ParseError::new(format!("bad reaction index in `{t}`")))?;
            if j == 0 || j > model.reaction_count() {
                return Err(ParseError::new(format!(
                    "reaction index {j} out of range 1..={} in `{t}`",
                    model.reaction_count()
                )));
            }
            Ok(j - 1)
        };
        if let Some(idx) = indexed("E0") {
            return Ok(ParamPath::E0(reaction(idx)?));
        }
        if let Some(idx) = indexed("i0") {
            return Ok(ParamPath::I0(reaction(idx)?));
        }
        if let Some(name) = indexed("m0") {
            return model
                .species_index(name.trim())
                .map(ParamPath::M0)
                .ok_or_else(|| ParseError::new(format!("unknown species `{name}` for {}", model.id())));
        }
        Ok(match t {
            "a_v0" => ParamPath::ActiveArea,
            "v" => ParamPath::Volume,
            "gamma" => ParamPath::Gamma,
            "omega" => ParamPath::Omega,
            "k_p" => ParamPath::Kp,
            "S_sat" => ParamPath::SSat,
            "m_Sp0" => ParamPath::MSp0,
            "F" => ParamPath::Faraday,
            "R" => ParamPath::GasConstant,
            "T" => ParamPath::Temperature,
            "M_S" => ParamPath::SulfurMolarMass,
            _ => return Err(ParseError::new(format!("unknown parameter `{t}`"))),
        })
    }

    /// Display form bound to a model, so species paths carry their names.
    pub fn display<'a>(&'a self, model: &'a ReactionModel) -> PathDisplay<'a> {
        PathDisplay { path: self, model }
    }

    /// Units string used in config-file comments.
    pub fn unit(&self) -> &'static str {
        match self {
            ParamPath::E0(_) => "V",
            ParamPath::I0(_) => "A/m^2",
            ParamPath::ActiveArea => "m^2",
            ParamPath::Volume => "L",
            ParamPath::Gamma => "-",
            ParamPath::Omega => "1/g",
            ParamPath::Kp => "1/(g s)",
            ParamPath::SSat | ParamPath::M0(_) | ParamPath::MSp0 => "g",
            ParamPath::Faraday => "C/mol",
            ParamPath::GasConstant => "J/(K mol)",
            ParamPath::Temperature => "K",
            ParamPath::SulfurMolarMass => "g/mol",
        }
    }
}

pub struct PathDisplay<'a> {
    path: &'a ParamPath,
    model: &'a ReactionModel,
}

impl fmt::Display for PathDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self.path {
            ParamPath::E0(j) => write!(f, "E0[{}]", j + 1),
            ParamPath::I0(j) => write!(f, "i0[{}]", j + 1),
            ParamPath::ActiveArea => f.write_str("a_v0"),
            ParamPath::Volume => f.write_str("v"),
            ParamPath::Gamma => f.write_str("gamma"),
            ParamPath::Omega => f.write_str("omega"),
            ParamPath::Kp => f.write_str("k_p"),
            ParamPath::SSat => f.write_str("S_sat"),
            ParamPath::M0(i) => write!(f, "m0[{}]", self.model.species()[i].name),
            ParamPath::MSp0 => f.write_str("m_Sp0"),
            ParamPath::Faraday => f.write_str("F"),
            ParamPath::GasConstant => f.write_str("R"),
            ParamPath::Temperature => f.write_str("T"),
            ParamPath::SulfurMolarMass => f.write_str("M_S"),
        }
    }
}

/// Time-varying state of the cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    /// Dissolved species masses, g.
    pub m: Vec<f64>,
    /// Precipitated sulfur mass, g.
    pub m_sp: f64,
    /// Relative porosity.
    pub eps: f64,
    /// Time, s.
    pub t: f64,
}

impl CellState {
    pub fn initial(params: &ParameterSet) -> CellState {
        CellState { m: params.m0.clone(), m_sp: params.m_sp0, eps: 1.0, t: 0.0 }
    }

    /// Dissolved plus precipitated sulfur, g.
    pub fn total_sulfur(&self) -> f64 {
        self.m.iter().sum::<f64>() + self.m_sp
    }

    /// Packs `[m.., m_sp, eps]` into a flat vector.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.m.len() + 2);
        y.extend_from_slice(&self.m);
        y.push(self.m_sp);
        y.push(self.eps);
        y
    }

    /// Inverse of [`CellState::to_vector`].
    pub fn from_vector(y: &[f64], t: f64) -> CellState {
        let q = y.len() - 2;
        CellState { m: y[..q].to_vec(), m_sp: y[q], eps: y[q + 1], t }
    }
}
