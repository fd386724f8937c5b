//! Transition probabilities exp(Gt) by uniformization.
//!
//! exp(Gt) = Σ_k Pois(k; qt) Aᵏ with A = I + G/q and q the largest exit rate.
//! Long horizons are split into substeps with qΔt ≤ 32 so the Poisson
//! weights never underflow, and the truncation tolerance is shared evenly
//! across substeps.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::oracle::space::GeneratorMatrix;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
const MAX_RATE_PER_STEP: f64 = 32.0;
const TERM_CAP: usize = 100_000;

/// v ↦ v A, with A = I + G/q.
fn step(gen: &GeneratorMatrix, q: f64, v: &[f64], out: &mut [f64]) {
    for (o, (&vi, &d)) in out.iter_mut().zip(v.iter().zip(gen.diagonal())) {
        *o = vi * (1.0 + d / q);
    }
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for &(j, r) in gen.row(i) {
            out[j] += vi * r / q;
        }
    }
}

/// Row vector `v` times exp(Gt), truncation error below `tol` in total
/// variation.
pub fn propagate(gen: &GeneratorMatrix, v: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Invalid(format!("time {t} must be finite and nonnegative")));
    }
    if !(tol > 0.0) {
        return Err(Error::Invalid(format!("tolerance {tol} must be positive")));
    }
    let q = gen.max_exit_rate();
    if t == 0.0 || q == 0.0 {
        return Ok(v.to_vec());
    }
    let substeps = (q * t / MAX_RATE_PER_STEP).ceil().max(1.0) as usize;
    let lambda = q * t / substeps as f64;
    let step_tol = tol / substeps as f64;

    let n = v.len();
    let mut current = v.to_vec();
    let mut power = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..substeps {
        power.copy_from_slice(&current);
        let mut weight = (-lambda).exp();
        let mut acc: Vec<f64> = power.iter().map(|p| weight * p).collect();
        let mut k = 0usize;
        loop {
            // Poisson tail bound beyond k once k+1 > λ:
            //   Σ_{j>k} p_j ≤ p_k · r / (1 − r),  r = λ/(k+2)
            let r = lambda / (k as f64 + 2.0);
            let tail = weight * (lambda / (k as f64 + 1.0)) / (1.0 - r).max(f64::MIN_POSITIVE);
            if (k as f64 + 2.0) > lambda && tail < step_tol {
                break;
            }
            k += 1;
            if k > TERM_CAP {
                return Err(Error::UniformizationCap { tol, cap: TERM_CAP });
            }
            step(gen, q, &power, &mut next);
            std::mem::swap(&mut power, &mut next);
            weight *= lambda / k as f64;
            for (a, p) in acc.iter_mut().zip(&power) {
                *a += weight * p;
            }
        }
        current = acc;
    }
    Ok(current)
}

/// Dense exp(Gt), row by row.
pub fn transition_probabilities(gen: &GeneratorMatrix, t: f64, tol: f64) -> Result<DMatrix<f64>> {
    let n = gen.len();
    let mut out = DMatrix::zeros(n, n);
    let mut basis = vec![0.0; n];
    for i in 0..n {
        basis[i] = 1.0;
        let row = propagate(gen, &basis, t, tol)?;
        basis[i] = 0.0;
        for (j, p) in row.into_iter().enumerate() {
            out[(i, j)] = p;
        }
    }
    Ok(out)
}
