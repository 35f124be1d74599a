//! Zero-dimensional lithium-sulfur discharge models: simulation,
//! sensitivity sweeps, similitude scaling and parameter identification.

pub mod dae;
pub mod error;
pub mod identify;
pub mod io;
pub mod kinetics;
pub mod model;
pub mod params;
pub mod radau;
pub mod root;
pub mod sensitivity;
pub mod similitude;

pub use dae::{simulate, SimulationConfig, SimulationTrace, Termination};
pub use error::{InvalidInput, ParseError};
pub use kinetics::{solve_constraints, AlgebraicOutputs};
pub use model::{build_model, ModelId, ReactionModel};
pub use params::{nominal_parameters, CellState, ParamPath, ParameterSet};
