//! Truncated state spaces and sparse CTMC generators.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::model::{RateParameters, ReactionNetwork, SpeciesState};

pub const DEFAULT_STATE_CAP: usize = 200_000;

/// States reachable from the start states inside per-species upper bounds,
/// in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedStateSpace {
    states: Vec<SpeciesState>,
    index: HashMap<SpeciesState, usize>,
    bounds: Vec<i64>,
}

impl TruncatedStateSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[SpeciesState] {
        &self.states
    }

    pub fn index_of(&self, x: &SpeciesState) -> Option<usize> {
        self.index.get(x).copied()
    }

    pub fn bounds(&self) -> &[i64] {
        &self.bounds
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.iter().zip(&self.bounds).all(|(&c, &b)| c >= 0 && c <= b)
    }
}

/// Sparse generator over a truncated space. Rates that leave the truncation
/// appear only on the diagonal, so such rows sum to a negative value.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    /// Off-diagonal `(target, rate)` pairs per row, targets ascending.
    rows: Vec<Vec<(usize, f64)>>,
    diagonal: Vec<f64>,
    /// Rate of leaving the truncation, per row.
    leak: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn len(&self) -> usize {
        self.diagonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagonal.is_empty()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn leak(&self) -> &[f64] {
        &self.leak
    }

    /// True when some transition leaves the truncation.
    pub fn is_leaky(&self) -> bool {
        self.leak.iter().any(|&l| l > 0.0)
    }

    /// Largest exit rate, the uniformization constant.
    pub fn max_exit_rate(&self) -> f64 {
        self.diagonal.iter().fold(0.0, |m, d| m.max(-d))
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diagonal[i];
        }
        self.rows[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .map(|p| self.rows[i][p].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        nalgebra::DMatrix::from_fn(n, n, |i, j| self.entry(i, j))
    }
}

/// Enumerates the truncated space reachable from `starts` and assembles the
/// generator at rates `theta`.
pub fn build_generator(
    net: &ReactionNetwork,
    theta: &RateParameters,
    bounds: &[i64],
    starts: &[SpeciesState],
    cap: usize,
) -> Result<(TruncatedStateSpace, GeneratorMatrix)> {
    let u = net.num_species();
    if bounds.len() != u {
        return Err(Error::Shape(format!("{} bounds for {u} species", bounds.len())));
    }
    let within = |x: &[i64]| x.iter().zip(bounds).all(|(&c, &b)| c >= 0 && c <= b);
    let mut seen: HashSet<SpeciesState> = HashSet::new();
    let mut queue = VecDeque::new();
    for s in starts {
        net.check_dims(s.counts(), theta)?;
        if !within(s.counts()) {
            return Err(Error::Invalid(format!(
                "start state {:?} lies outside the bounds",
                s.counts()
            )));
        }
        if seen.insert(s.clone()) {
            queue.push_back(s.clone());
        }
    }
    let v = net.num_reactions();
    let mut hazards = vec![0.0; v];
    while let Some(x) = queue.pop_front() {
        net.hazards_into(x.counts(), theta.values(), &mut hazards);
        for (j, &h) in hazards.iter().enumerate() {
            if h <= 0.0 {
                continue;
            }
            let mut y = x.0.clone();
            net.apply(&mut y, j);
            if within(&y) {
                let y = SpeciesState(y);
                if !seen.contains(&y) {
                    if seen.len() >= cap {
                        return Err(Error::StateSpaceTooLarge {
                            states: seen.len() + 1,
                            cap,
                        });
                    }
                    seen.insert(y.clone());
                    queue.push_back(y);
                }
            }
        }
    }

    let mut states: Vec<SpeciesState> = seen.into_iter().collect();
    states.sort();
    let index: HashMap<SpeciesState, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();

    let n = states.len();
    let mut rows = Vec::with_capacity(n);
    let mut diagonal = vec![0.0; n];
    let mut leak = vec![0.0; n];
    for (i, x) in states.iter().enumerate() {
        net.hazards_into(x.counts(), theta.values(), &mut hazards);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for (j, &h) in hazards.iter().enumerate() {
            if h <= 0.0 {
                continue;
            }
            let mut y = x.0.clone();
            net.apply(&mut y, j);
            if y == x.0 {
                // null reaction: no state change, no generator entry
                continue;
            }
            diagonal[i] -= h;
            match index.get(&SpeciesState(y)) {
                Some(&k) => match row.iter_mut().find(|(t, _)| *t == k) {
                    Some(entry) => entry.1 += h,
                    None => row.push((k, h)),
                },
                None => leak[i] += h,
            }
        }
        row.sort_by_key(|&(k, _)| k);
        rows.push(row);
    }

    Ok((
        TruncatedStateSpace {
            states,
            index,
            bounds: bounds.to_vec(),
        },
        GeneratorMatrix { rows, diagonal, leak },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_network;

    fn death() -> ReactionNetwork {
        build_network(&[vec![1]], &[vec![0]], &["X"]).unwrap()
    }

    #[test]
    fn pure_death_bidiagonal() {
        let theta = RateParameters::new(vec![0.7]).unwrap();
        let (space, gen) =
            build_generator(&death(), &theta, &[3], &[SpeciesState(vec![3])], DEFAULT_STATE_CAP).unwrap();
        assert_eq!(space.len(), 4);
        let g = gen.to_dense();
        let expected = [
            [0.0, 0.0, 0.0, 0.0],
            [0.7, -0.7, 0.0, 0.0],
            [0.0, 1.4, -1.4, 0.0],
            [0.0, 0.0, 2.1, -2.1],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((g[(i, j)] - expected[i][j]).abs() < 1e-15, "({i},{j})");
            }
        }
        assert!(!gen.is_leaky());
    }

    #[test]
    fn zero_rates_give_zero_matrix() {
        let theta = RateParameters::new(vec![0.0]).unwrap();
        let (space, gen) =
            build_generator(&death(), &theta, &[3], &[SpeciesState(vec![3])], DEFAULT_STATE_CAP).unwrap();
        assert_eq!(space.len(), 1);
        assert!(gen.to_dense().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn immigration_death_tridiagonal() {
        let net = build_network(&[vec![0], vec![1]], &[vec![1], vec![0]], &["X"]).unwrap();
        let (alpha, beta) = (2.0, 0.5);
        let theta = RateParameters::new(vec![alpha, beta]).unwrap();
        let (space, gen) = build_generator(&net, &theta, &[2], &[SpeciesState(vec![0])], DEFAULT_STATE_CAP).unwrap();
        assert_eq!(space.len(), 3);
        let g = gen.to_dense();
        let expected = [
            [-alpha, alpha, 0.0],
            [beta, -(alpha + beta), alpha],
            // immigration out of the bound leaks, so the diagonal keeps it
            [0.0, 2.0 * beta, -(alpha + 2.0 * beta)],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!((g[(i, j)] - expected[i][j]).abs() < 1e-15);
            }
        }
        assert!(gen.is_leaky());
        assert_eq!(gen.leak(), &[0.0, 0.0, alpha]);
    }

    #[test]
    fn generator_rows_sum_to_minus_leak() {
        let net = build_network(
            &[vec![1, 0], vec![1, 1], vec![0, 1]],
            &[vec![2, 0], vec![0, 2], vec![0, 0]],
            &["prey", "predator"],
        )
        .unwrap();
        let theta = RateParameters::new(vec![1.0, 0.1, 0.6]).unwrap();
        let (_, gen) = build_generator(&net, &theta, &[8, 8], &[SpeciesState(vec![3, 3])], DEFAULT_STATE_CAP).unwrap();
        for i in 0..gen.len() {
            let off: f64 = gen.row(i).iter().map(|&(_, r)| r).sum();
            assert!(gen.row(i).iter().all(|&(_, r)| r >= 0.0));
            assert!((off + gen.diagonal()[i] + gen.leak()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let net = build_network(&[vec![0, 0], vec![0, 0]], &[vec![1, 0], vec![0, 1]], &["a", "b"]).unwrap();
        let theta = RateParameters::new(vec![1.0, 1.0]).unwrap();
        let err = build_generator(&net, &theta, &[100, 100], &[SpeciesState(vec![0, 0])], 50);
        assert!(matches!(err, Err(Error::StateSpaceTooLarge { cap: 50, .. })));
    }
}
