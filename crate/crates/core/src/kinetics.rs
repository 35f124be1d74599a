//! Algebraic layer: Nernst potentials, Butler-Volmer currents and the
//! current-sum constraint that fixes the cell voltage.
//!
//! For a given state every reaction current is an explicit function of the
//! cell voltage `V`, and the sum of currents is strictly decreasing in `V`
//! (more polarization, more reduction current). The constraint
//! `sum_j i_j(V) = I` therefore has a unique root, which is found with a
//! bracketed, safeguarded Newton iteration on `[0, 5] V`.
//!
//! Because every Butler-Volmer term uses the same symmetric exponent
//! `F / (2RT)`, the current sum collapses to `Q e^{-fV/2} - P e^{fV/2}`.
//! The positive root of that quadratic in `e^{fV/2}` seeds the Newton
//! iteration, which then usually accepts it on the first residual check.
//!
//! Below the concentration floor the logarithm is continued by its tangent
//! at the floor, `ln(m) ~ ln(m_f) + (m - m_f) / m_f`. The continuation is
//! finite for zero and slightly negative masses, keeps the currents
//! continuously differentiable, and keeps a nearly depleted reactant
//! self-limiting: its consuming branch keeps shrinking as the mass falls.

use thiserror::Error;

use crate::model::ReactionModel;
use crate::params::{CellState, ParameterSet};
use crate::root::{safeguarded_newton, RootError, Tolerance};

/// Lower clamp applied to concentrations inside logarithms and mass ratios, mol/L.
pub const CONCENTRATION_FLOOR: f64 = 1e-12;
/// Depth of the tangent continuation, in multiples of the floor mass, that a
/// mass may reach below zero before the species counts as depleted. Each
/// floor mass below the floor lowers the continued logarithm by one.
pub const FLOOR_REACH: f64 = 1e3;
/// Voltage search interval for the current-sum constraint, V.
pub const VOLTAGE_BRACKET: (f64, f64) = (0.0, 5.0);

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ConstraintError {
    /// The current cannot be delivered by any voltage in the search interval.
    #[error("current-sum root not bracketed in [0, 5] V (residuals {residual_lo:e} A, {residual_hi:e} A)")]
    NoBracket { residual_lo: f64, residual_hi: f64 },
    /// An exponential or logarithm overflowed.
    #[error("non-finite value in the algebraic layer")]
    NonFinite,
}

/// Algebraic variables consistent with one state.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraicOutputs {
    /// Cell voltage, V.
    pub voltage: f64,
    /// Reduction potentials per reaction, V.
    pub potentials: Vec<f64>,
    /// Overpotentials `V - E_j`, V.
    pub overpotentials: Vec<f64>,
    /// Reaction currents, A (reduction positive).
    pub currents: Vec<f64>,
    /// Active reaction area, m^2.
    pub active_area: f64,
}

impl AlgebraicOutputs {
    pub fn current_sum(&self) -> f64 {
        self.currents.iter().sum()
    }
}

/// Per-model constants for the algebraic layer, precomputed once.
#[derive(Debug, Clone)]
pub(crate) struct Kinetics {
    p: usize,
    q: usize,
    f: f64,
    /// Flattened `s[i][j]`, row-major over species.
    stoich: Vec<f64>,
    electrons: Vec<f64>,
    /// Mass of species `i` at the concentration floor, g.
    floor_mass: Vec<f64>,
    ln_floor_mass: Vec<f64>,
    ln_unit_mass: Vec<f64>,
    ln_m0: Vec<f64>,
    e0: Vec<f64>,
    ln_i0: Vec<f64>,
    i0: Vec<f64>,
    a_v0: f64,
    gamma: f64,
}

/// Scratch values for one state: `E_j` and the mass-ratio exponents `a_j`.
#[derive(Debug, Clone)]
pub(crate) struct ReactionTerms {
    pub potentials: Vec<f64>,
    pub log_ratio: Vec<f64>,
    pub active_area: f64,
}

/// `ln(m)` above `floor`, continued linearly below it.
#[inline]
fn floored_ln(m: f64, floor: f64, ln_floor: f64) -> f64 {
    if m >= floor {
        m.ln()
    } else {
        ln_floor + (m - floor) / floor
    }
}

impl Kinetics {
    /// Most negative admissible mass per species, g.
    pub fn depletion_limits(&self) -> Vec<f64> {
        self.floor_mass.iter().map(|f| -FLOOR_REACH * f).collect()
    }

    pub fn new(model: &ReactionModel, params: &ParameterSet) -> Kinetics {
        let p = model.reaction_count();
        let q = model.species_count();
        let c = &params.constants;
        // mass of species `i` at 1 mol/L
        let unit_mass: Vec<f64> =
            (0..q).map(|i| model.sulfur_atoms(i) as f64 * c.sulfur_molar_mass * params.volume).collect();
        let mut stoich = Vec::with_capacity(p * q);
        for i in 0..q {
            for j in 0..p {
                stoich.push(model.coefficient_f64(i, j));
            }
        }
        Kinetics {
            p,
            q,
            f: c.f_over_rt(),
            stoich,
            electrons: (0..p).map(|j| model.electrons(j) as f64).collect(),
            floor_mass: unit_mass.iter().map(|u| u * CONCENTRATION_FLOOR).collect(),
            ln_floor_mass: unit_mass.iter().map(|u| (u * CONCENTRATION_FLOOR).ln()).collect(),
            ln_unit_mass: unit_mass.iter().map(|u| u.ln()).collect(),
            ln_m0: params.m0.iter().map(|m| m.ln()).collect(),
            e0: params.e0.clone(),
            ln_i0: params.i0.iter().map(|i| i.ln()).collect(),
            i0: params.i0.clone(),
            a_v0: params.a_v0,
            gamma: params.gamma,
        }
    }

    #[inline]
    fn s(&self, i: usize, j: usize) -> f64 {
        self.stoich[i * self.p + j]
    }

    pub fn reaction_count(&self) -> usize {
        self.p
    }

    /// Nernst potentials and mass-ratio exponents for dissolved masses `m`.
    pub fn terms(&self, m: &[f64], eps: f64, out: &mut ReactionTerms) {
        out.potentials.clear();
        out.log_ratio.clear();
        for j in 0..self.p {
            out.potentials.push(self.e0[j]);
            out.log_ratio.push(0.0);
        }
        for i in 0..self.q {
            let ln_m = floored_ln(m[i], self.floor_mass[i], self.ln_floor_mass[i]);
            let ln_c = ln_m - self.ln_unit_mass[i];
            let ln_r = ln_m - self.ln_m0[i];
            for j in 0..self.p {
                let s = self.s(i, j);
                if s != 0.0 {
                    out.potentials[j] -= s * ln_c / (self.electrons[j] * self.f);
                    out.log_ratio[j] += s * ln_r;
                }
            }
        }
        out.active_area = self.a_v0 * eps.max(0.0).powf(self.gamma);
    }

    /// Current of reaction `j` at voltage `v`, A.
    #[inline]
    pub fn current(&self, terms: &ReactionTerms, j: usize, v: f64) -> f64 {
        let z = terms.log_ratio[j] + 0.5 * self.f * (v - terms.potentials[j]);
        -2.0 * terms.active_area * self.i0[j] * z.sinh()
    }

    /// `sum_j i_j(v) - target` and its derivative in `v`.
    fn residual(&self, terms: &ReactionTerms, v: f64, target: f64) -> (f64, f64) {
        let mut sum = 0.0;
        let mut slope = 0.0;
        for j in 0..self.p {
            let z = terms.log_ratio[j] + 0.5 * self.f * (v - terms.potentials[j]);
            sum += self.i0[j] * z.sinh();
            slope += self.i0[j] * z.cosh();
        }
        let a = terms.active_area;
        (-2.0 * a * sum - target, -a * self.f * slope)
    }

    /// Closed-form root of the current sum, used as the Newton seed.
    fn voltage_seed(&self, terms: &ReactionTerms, target: f64) -> f64 {
        let half_f = 0.5 * self.f;
        // ln P and ln Q via log-sum-exp
        let lse = |sign: f64| -> f64 {
            let vals = (0..self.p)
                .map(|j| self.ln_i0[j] + sign * (terms.log_ratio[j] - half_f * terms.potentials[j]));
            let max = vals.clone().fold(f64::NEG_INFINITY, f64::max);
            max + vals.map(|x| (x - max).exp()).sum::<f64>().ln()
        };
        let ln_a = terms.active_area.ln();
        let ln_p = ln_a + lse(1.0);
        let ln_q = ln_a + lse(-1.0);
        // u = 2Q / (I + sqrt(I^2 + 4PQ)), V = 2 ln(u) / f
        let w = ln_p + ln_q + 4f64.ln() - 2.0 * target.ln();
        let ln_denominator = if w > 700.0 {
            target.ln() + 0.5 * w
        } else {
            target.ln() + (1.0 + (1.0 + w.exp()).sqrt()).ln()
        };
        (2f64.ln() + ln_q - ln_denominator) / half_f
    }

    /// Solves the current-sum constraint for the cell voltage.
    pub fn solve_voltage(&self, terms: &ReactionTerms, target: f64, tol: f64) -> Result<f64, ConstraintError> {
        let seed = self.voltage_seed(terms, target);
        let (lo, hi) = VOLTAGE_BRACKET;
        let tolerance = Tolerance { ftol: tol, xtol: 1e-13, max_iter: 100 };
        match safeguarded_newton(|v| self.residual(terms, v, target), lo, hi, seed, tolerance) {
            Ok(v) => Ok(v),
            Err(RootError::NoBracket { f_lo, f_hi, .. }) => {
                Err(ConstraintError::NoBracket { residual_lo: f_lo, residual_hi: f_hi })
            }
            Err(_) => Err(ConstraintError::NonFinite),
        }
    }

    /// Solves the constraint and writes the reaction currents into `currents`.
    pub fn currents_at(
        &self,
        m: &[f64],
        eps: f64,
        target: f64,
        tol: f64,
        terms: &mut ReactionTerms,
        currents: &mut [f64],
    ) -> Result<f64, ConstraintError> {
        self.terms(m, eps, terms);
        if !(terms.active_area > 0.0) {
            return Err(ConstraintError::NoBracket { residual_lo: -target, residual_hi: -target });
        }
        let v = self.solve_voltage(terms, target, tol)?;
        for (j, c) in currents.iter_mut().enumerate() {
            *c = self.current(terms, j, v);
        }
        if currents.iter().any(|c| !c.is_finite()) {
            return Err(ConstraintError::NonFinite);
        }
        Ok(v)
    }

    pub fn scratch(&self) -> ReactionTerms {
        ReactionTerms {
            potentials: Vec::with_capacity(self.p),
            log_ratio: Vec::with_capacity(self.p),
            active_area: 0.0,
        }
    }
}

/// Solves the algebraic constraints for `state` under discharge current `current`.
///
/// Potentials follow the Nernst relation on concentrations
/// `m_i / (n_S,i M_S v)` in mol/L, currents follow Butler-Volmer kinetics
/// scaled by the active area `a_v0 eps^gamma`, and the returned voltage
/// satisfies `|sum_j i_j - current| <= tol`.
pub fn solve_constraints(
    model: &ReactionModel,
    params: &ParameterSet,
    state: &CellState,
    current: f64,
    tol: f64,
) -> Result<AlgebraicOutputs, ConstraintError> {
    let kin = Kinetics::new(model, params);
    let mut terms = kin.scratch();
    let mut currents = vec![0.0; kin.reaction_count()];
    let voltage = kin.currents_at(&state.m, state.eps, current, tol, &mut terms, &mut currents)?;
    let overpotentials = terms.potentials.iter().map(|e| voltage - e).collect();
    Ok(AlgebraicOutputs {
        voltage,
        potentials: terms.potentials,
        overpotentials,
        currents,
        active_area: terms.active_area,
    })
}

/// Reduction potentials from the Nernst relation alone, V.
pub fn reduction_potentials(model: &ReactionModel, params: &ParameterSet, m: &[f64]) -> Vec<f64> {
    let kin = Kinetics::new(model, params);
    let mut terms = kin.scratch();
    kin.terms(m, 1.0, &mut terms);
    terms.potentials
}

/// Current-sum at an arbitrary voltage, A. Exposed for diagnostics and tests.
pub fn current_sum_at(model: &ReactionModel, params: &ParameterSet, state: &CellState, voltage: f64) -> f64 {
    let kin = Kinetics::new(model, params);
    let mut terms = kin.scratch();
    kin.terms(&state.m, state.eps, &mut terms);
    (0..kin.reaction_count()).map(|j| kin.current(&terms, j, voltage)).sum()
}
