//! Reaction networks with stochastic mass-action hazards.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Molecule counts, one entry per species.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpeciesState(pub Vec<i64>);

impl SpeciesState {
    pub fn new(counts: Vec<i64>) -> Result<Self> {
        if counts.iter().any(|&c| c < 0) {
            return Err(Error::Invalid(format!("negative count in {counts:?}")));
        }
        Ok(Self(counts))
    }

    pub fn zeros(u: usize) -> Self {
        Self(vec![0; u])
    }

    pub fn counts(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<&[i64]> for SpeciesState {
    fn from(c: &[i64]) -> Self {
        Self(c.to_vec())
    }
}

/// Per-reaction rate constants θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateParameters(Vec<f64>);

impl RateParameters {
    /// Rates must be finite and nonnegative. Zero is allowed so that a
    /// reaction can be switched off; samplers only ever produce `exp(log θ)`.
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if let Some(bad) = theta.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(Error::Invalid(format!(
                "rate constant {bad} is not a finite nonnegative value"
            )));
        }
        Ok(Self(theta))
    }

    pub fn from_log(log_theta: &[f64]) -> Result<Self> {
        Self::new(log_theta.iter().map(|l| l.exp()).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn to_log(&self) -> Vec<f64> {
        self.0.iter().map(|t| t.ln()).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HazardKind {
    MassAction,
}

/// Hazards at one state, with their sum h₀.
#[derive(Debug, Clone, PartialEq)]
pub struct Hazards {
    pub values: Vec<f64>,
    pub total: f64,
}

/// Species/reaction structure: reactant matrix P, product matrix Q and the
/// stoichiometry S = (Q − P)ᵀ.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    species: Vec<String>,
    reactants: Vec<Vec<u32>>,
    products: Vec<Vec<u32>>,
    stoichiometry: Vec<Vec<i64>>,
    hazard_kind: HazardKind,
    // (species, order) pairs with order > 0, per reaction
    reactant_terms: Vec<Vec<(usize, u32)>>,
    // (species, change) pairs with change != 0, per reaction
    changes: Vec<Vec<(usize, i64)>>,
}

/// Builds a mass-action network from integer reactant and product matrices,
/// each with one row per reaction and one column per species.
pub fn build_network(reactants: &[Vec<i64>], products: &[Vec<i64>], names: &[&str]) -> Result<ReactionNetwork> {
    let v = reactants.len();
    let u = names.len();
    if v == 0 || u == 0 {
        return Err(Error::Shape(format!(
            "need at least one species and one reaction, got u={u}, v={v}"
        )));
    }
    if products.len() != v {
        return Err(Error::Shape(format!(
            "reactant matrix has {v} rows but product matrix has {}",
            products.len()
        )));
    }
    let to_u32 = |m: &[Vec<i64>], which: &str| -> Result<Vec<Vec<u32>>> {
        m.iter()
            .enumerate()
            .map(|(i, row)| {
                if row.len() != u {
                    return Err(Error::Shape(format!(
                        "{which} row {i} has {} columns, expected {u}",
                        row.len()
                    )));
                }
                row.iter()
                    .map(|&x| {
                        u32::try_from(x)
                            .map_err(|_| Error::Invalid(format!("{which} entry {x} in row {i} is negative")))
                    })
                    .collect()
            })
            .collect()
    };
    let p = to_u32(reactants, "reactant")?;
    let q = to_u32(products, "product")?;

    let stoichiometry: Vec<Vec<i64>> = (0..u)
        .map(|j| (0..v).map(|i| i64::from(q[i][j]) - i64::from(p[i][j])).collect())
        .collect();
    let reactant_terms = p
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(j, &k)| (j, k))
                .collect()
        })
        .collect();
    let changes = (0..v)
        .map(|i| {
            (0..u)
                .filter(|&j| stoichiometry[j][i] != 0)
                .map(|j| (j, stoichiometry[j][i]))
                .collect()
        })
        .collect();

    Ok(ReactionNetwork {
        species: names.iter().map(|s| s.to_string()).collect(),
        reactants: p,
        products: q,
        stoichiometry,
        hazard_kind: HazardKind::MassAction,
        reactant_terms,
        changes,
    })
}

/// Binomial coefficient C(x, k) in floating point; zero when x < k.
#[inline]
pub(crate) fn falling_choose(x: i64, k: u32) -> f64 {
    match k {
        0 => 1.0,
        1 => x as f64,
        2 => {
            let x = x as f64;
            x * (x - 1.0) / 2.0
        }
        3 => {
            let x = x as f64;
            x * (x - 1.0) * (x - 2.0) / 6.0
        }
        _ => {
            if x < i64::from(k) {
                return 0.0;
            }
            let mut acc = 1.0;
            for r in 0..k {
                acc *= (x - i64::from(r)) as f64 / f64::from(r + 1);
            }
            acc
        }
    }
}

impl ReactionNetwork {
    pub fn num_species(&self) -> usize {
        self.species.len()
    }

    pub fn num_reactions(&self) -> usize {
        self.reactants.len()
    }

    pub fn species_names(&self) -> &[String] {
        &self.species
    }

    pub fn reactant_matrix(&self) -> &[Vec<u32>] {
        &self.reactants
    }

    pub fn product_matrix(&self) -> &[Vec<u32>] {
        &self.products
    }

    /// S, u rows by v columns. Column j is the state change of reaction j.
    pub fn stoichiometry(&self) -> &[Vec<i64>] {
        &self.stoichiometry
    }

    pub fn hazard_kind(&self) -> HazardKind {
        self.hazard_kind
    }

    /// Nonzero state changes caused by reaction `j`.
    pub fn changes(&self, j: usize) -> &[(usize, i64)] {
        &self.changes[j]
    }

    /// Mass-action hazards h_i = θ_i Π_j C(x_j, p_ij) and their total.
    pub fn evaluate_hazards(&self, x: &SpeciesState, theta: &RateParameters) -> Result<Hazards> {
        self.check_dims(x.counts(), theta)?;
        let mut values = vec![0.0; self.num_reactions()];
        let total = self.hazards_into(x.counts(), theta.values(), &mut values);
        if !total.is_finite() {
            return Err(Error::HazardOverflow(format!("h0 = {total} at state {:?}", x.counts())));
        }
        Ok(Hazards { values, total })
    }

    pub(crate) fn check_dims(&self, x: &[i64], theta: &RateParameters) -> Result<()> {
        if x.len() != self.num_species() {
            return Err(Error::Shape(format!(
                "state has {} species, network has {}",
                x.len(),
                self.num_species()
            )));
        }
        if theta.len() != self.num_reactions() {
            return Err(Error::Shape(format!(
                "{} rate constants for {} reactions",
                theta.len(),
                self.num_reactions()
            )));
        }
        Ok(())
    }

    /// Hot-path hazard evaluation without dimension checks.
    #[inline]
    pub(crate) fn hazards_into(&self, x: &[i64], theta: &[f64], out: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for (i, terms) in self.reactant_terms.iter().enumerate() {
            let mut h = theta[i];
            for &(j, k) in terms {
                let xj = x[j];
                if xj < i64::from(k) {
                    h = 0.0;
                    break;
                }
                h *= falling_choose(xj, k);
            }
            out[i] = h;
            total += h;
        }
        total
    }

    /// Applies reaction `j` to `x` in place.
    #[inline]
    pub(crate) fn apply(&self, x: &mut [i64], j: usize) {
        for &(s, d) in &self.changes[j] {
            x[s] += d;
        }
    }

    /// Loads a network from its JSON model definition.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let def: ModelDefinition = serde_json::from_str(text)?;
        def.to_network()
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_definition(&self) -> ModelDefinition {
        let side = |m: &[Vec<u32>], i: usize| {
            m[i].iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(j, &k)| (self.species[j].clone(), k))
                .collect()
        };
        ModelDefinition {
            species: self.species.clone(),
            reactions: (0..self.num_reactions())
                .map(|i| ReactionDefinition {
                    reactants: side(&self.reactants, i),
                    products: side(&self.products, i),
                })
                .collect(),
        }
    }
}

/// On-disk model definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDefinition {
    pub species: Vec<String>,
    pub reactions: Vec<ReactionDefinition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionDefinition {
    #[serde(default)]
    pub reactants: BTreeMap<String, u32>,
    #[serde(default)]
    pub products: BTreeMap<String, u32>,
}

impl ModelDefinition {
    pub fn to_network(&self) -> Result<ReactionNetwork> {
        let index = |name: &str| -> Result<usize> {
            self.species
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| Error::Parse(format!("unknown species '{name}'")))
        };
        let u = self.species.len();
        let mut p = vec![vec![0i64; u]; self.reactions.len()];
        let mut q = vec![vec![0i64; u]; self.reactions.len()];
        for (i, r) in self.reactions.iter().enumerate() {
            for (name, &k) in &r.reactants {
                p[i][index(name)?] = i64::from(k);
            }
            for (name, &k) in &r.products {
                q[i][index(name)?] = i64::from(k);
            }
        }
        let names: Vec<&str> = self.species.iter().map(String::as_str).collect();
        build_network(&p, &q, &names)
    }
}
