//! Power iteration for operator norms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::haar::dot;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    /// Running maximum of `‖A x_k‖` over unit iterates.
    pub value: f64,
    /// Estimate after each iteration.
    pub history: Vec<f64>,
}

/// Estimates `‖A‖` by power iteration on `AᵀA` from a seeded random start.
///
/// Vectors are compared in the Euclidean norm, which matches the `L²` norm
/// whenever input and output cells carry equal volumes.
pub fn power_norm<A, B>(dim: usize, apply: A, adjoint: B, iters: usize, seed: u64) -> NormEstimate
where
    A: Fn(&[f64]) -> Vec<f64>,
    B: Fn(&[f64]) -> Vec<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut history = Vec::with_capacity(iters);
    let mut best: f64 = 0.0;
    let nx = dot(&x, &x).sqrt();
    if nx == 0.0 {
        return NormEstimate { value: 0.0, history };
    }
    x.iter_mut().for_each(|v| *v /= nx);
    for _ in 0..iters.max(1) {
        let y = apply(&x);
        let ny = dot(&y, &y).sqrt();
        best = best.max(ny);
        history.push(best);
        if ny == 0.0 {
            break;
        }
        let z = adjoint(&y);
        let nz = dot(&z, &z).sqrt();
        if nz == 0.0 {
            break;
        }
        x = z.into_iter().map(|v| v / nz).collect();
    }
    NormEstimate {
        value: best,
        history,
    }
}

/// Norm of a dense row-major `rows × cols` matrix.
pub fn matrix_norm(m: &[f64], rows: usize, cols: usize, iters: usize, seed: u64) -> NormEstimate {
    assert_eq!(m.len(), rows * cols);
    power_norm(
        cols,
        |x| {
            (0..rows)
                .map(|r| m[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum())
                .collect()
        },
        |y| {
            let mut out = vec![0.0; cols];
            for (r, &yr) in y.iter().enumerate() {
                for (o, a) in out.iter_mut().zip(&m[r * cols..(r + 1) * cols]) {
                    *o += a * yr;
                }
            }
            out
        },
        iters,
        seed,
    )
}
