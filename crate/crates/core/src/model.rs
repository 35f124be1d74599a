//! Reaction-chain catalog for the four zero-dimensional discharge models.
//!
//! Each model is a chain of one-electron reductions taking elemental `S8`
//! down to `S^2-` through a different set of polysulfide intermediates.
//! Stoichiometric coefficients are stored as exact rationals so the
//! per-reaction sulfur balance can be checked without rounding.

use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;

use crate::error::ParseError;

/// Identifier of one of the four catalog reaction chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelId {
    /// `S8 -> S4^2- -> S^2-`
    M1,
    /// `S8 -> S6^2- -> S4^2- -> S^2-`
    M2,
    /// `S8 -> S8^2- -> S6^2- -> S4^2- -> S^2-`
    M3,
    /// `S8 -> S8^2- -> S6^2- -> S4^2- -> S2^2- -> S^2-`
    M4,
}

impl ModelId {
    pub const ALL: [ModelId; 4] = [ModelId::M1, ModelId::M2, ModelId::M3, ModelId::M4];

    /// 1-based model number.
    pub fn number(self) -> u8 {
        match self {
            ModelId::M1 => 1,
            ModelId::M2 => 2,
            ModelId::M3 => 3,
            ModelId::M4 => 4,
        }
    }

    pub fn from_number(n: u8) -> Option<ModelId> {
        match n {
            1 => Some(ModelId::M1),
            2 => Some(ModelId::M2),
            3 => Some(ModelId::M3),
            4 => Some(ModelId::M4),
            _ => None,
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M{}", self.number())
    }
}

impl FromStr for ModelId {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let digits = t.strip_prefix('M').or_else(|| t.strip_prefix('m')).unwrap_or(t);
        digits
            .parse::<u8>()
            .ok()
            .and_then(ModelId::from_number)
            .ok_or_else(|| ParseError::new(format!("unknown model `{s}` (expected 1-4 or M1-M4)")))
    }
}

/// A dissolved sulfur species.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Species {
    pub name: &'static str,
    /// Sulfur atoms per formula unit.
    pub sulfur_atoms: u8,
}

const S8: Species = Species { name: "S8", sulfur_atoms: 8 };
const S8_2: Species = Species { name: "S8^2-", sulfur_atoms: 8 };
const S6_2: Species = Species { name: "S6^2-", sulfur_atoms: 6 };
const S4_2: Species = Species { name: "S4^2-", sulfur_atoms: 4 };
const S2_2: Species = Species { name: "S2^2-", sulfur_atoms: 2 };
const S_2: Species = Species { name: "S^2-", sulfur_atoms: 1 };

/// Immutable description of one reaction chain.
///
/// `stoich[i][j]` is the signed coefficient of species `i` in reaction `j`
/// written in the reduction direction: reactants negative, products
/// positive. Every reaction exchanges `electrons[j]` electrons.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionModel {
    id: ModelId,
    species: Vec<Species>,
    stoich: Vec<Vec<Rational64>>,
    stoich_f64: Vec<Vec<f64>>,
    electrons: Vec<u32>,
}

fn r(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

/// Builds the catalog reaction chain for `id`.
pub fn build_model(id: ModelId) -> ReactionModel {
    // (reactant, coefficient, product, coefficient) per reaction, in chain order.
    let (species, reactions): (Vec<Species>, Vec<(usize, Rational64, usize, Rational64)>) = match id {
        ModelId::M1 => (
            vec![S8, S4_2, S_2],
            vec![(0, r(1, 4), 1, r(1, 2)), (1, r(1, 6), 2, r(2, 3))],
        ),
        ModelId::M2 => (
            vec![S8, S6_2, S4_2, S_2],
            vec![
                (0, r(3, 8), 1, r(1, 2)),
                (1, r(1, 1), 2, r(3, 2)),
                (2, r(1, 6), 3, r(2, 3)),
            ],
        ),
        ModelId::M3 => (
            vec![S8, S8_2, S6_2, S4_2, S_2],
            vec![
                (0, r(1, 2), 1, r(1, 2)),
                (1, r(3, 2), 2, r(2, 1)),
                (2, r(1, 1), 3, r(3, 2)),
                (3, r(1, 6), 4, r(2, 3)),
            ],
        ),
        ModelId::M4 => (
            vec![S8, S8_2, S6_2, S4_2, S2_2, S_2],
            vec![
                (0, r(1, 2), 1, r(1, 2)),
                (1, r(3, 2), 2, r(2, 1)),
                (2, r(1, 1), 3, r(3, 2)),
                (3, r(1, 2), 4, r(1, 1)),
                (4, r(1, 2), 5, r(1, 1)),
            ],
        ),
    };
    let q = species.len();
    let p = reactions.len();
    let mut stoich = vec![vec![Rational64::from_integer(0); p]; q];
    for (j, &(reactant, a, product, b)) in reactions.iter().enumerate() {
        stoich[reactant][j] = -a;
        stoich[product][j] = b;
    }
    ReactionModel::from_parts(id, species, stoich, vec![1; p])
}

impl ReactionModel {
    fn from_parts(
        id: ModelId,
        species: Vec<Species>,
        stoich: Vec<Vec<Rational64>>,
        electrons: Vec<u32>,
    ) -> Self {
        let stoich_f64 = stoich
            .iter()
            .map(|row| row.iter().map(|c| *c.numer() as f64 / *c.denom() as f64).collect())
            .collect();
        ReactionModel { id, species, stoich, stoich_f64, electrons }
    }

    pub fn id(&self) -> ModelId {
        self.id
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    /// Number of dissolved species `q`.
    pub fn species_count(&self) -> usize {
        self.species.len()
    }

    /// Number of reactions `p`.
    pub fn reaction_count(&self) -> usize {
        self.electrons.len()
    }

    /// Exact coefficient of species `i` in reaction `j`.
    pub fn coefficient(&self, i: usize, j: usize) -> Rational64 {
        self.stoich[i][j]
    }

    /// Floating-point coefficient of species `i` in reaction `j`.
    #[inline]
    pub fn coefficient_f64(&self, i: usize, j: usize) -> f64 {
        self.stoich_f64[i][j]
    }

    pub fn electrons(&self, j: usize) -> u32 {
        self.electrons[j]
    }

    pub fn sulfur_atoms(&self, i: usize) -> u8 {
        self.species[i].sulfur_atoms
    }

    /// Index of a species by name.
    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    /// Net sulfur atoms created by reaction `j`; zero for every catalog reaction.
    pub fn sulfur_balance(&self, j: usize) -> Rational64 {
        (0..self.species_count())
            .map(|i| self.stoich[i][j] * Rational64::from_integer(self.species[i].sulfur_atoms as i64))
            .sum()
    }

    /// Species consumed by reaction `j` (negative coefficient).
    pub fn reactants(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.species_count()).filter(move |&i| self.stoich_f64[i][j] < 0.0)
    }

    /// Species with a non-zero coefficient in reaction `j`.
    pub fn participants(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.species_count()).filter(move |&i| self.stoich_f64[i][j] != 0.0)
    }
}
