//! Streaming robust PCA: decide whether the stream matrix splits as a
//! rank-<=k part plus an r-sparse part, and recover both.
//!
//! The solver is principal-component pursuit by alternating proximal
//! steps; all structural claims (rank, sparsity, bounds) are re-checked
//! on the rounded integer pair and the sum is verified against the SIS
//! sketch, so the solver is never trusted for soundness.


use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lowrank::{
    materialize_operator, reshape, round_matrix, shrink_singular_values, vec_of, IntMatrix,
    SolverConfig,
};
use crate::oracle::MatrixId;
use crate::params::{ceil_log2, SketchParams};
use crate::sketch::{RealSketch, SisSketch, StreamUpdate};
use crate::{RecoveryOutcome, RecoveryStats};

/// Witness pair for a robust-PCA acceptance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RpcaDecomposition {
    /// Low-rank part, rank <= k by exact rational elimination.
    pub low_rank: IntMatrix,
    /// Sparse part, at most r nonzeros.
    pub sparse: IntMatrix,
}

impl RpcaDecomposition {
    pub fn sum(&self) -> Result<IntMatrix> {
        self.low_rank.add(&self.sparse)
    }
}

/// Measurement count for rank-k plus r-sparse recovery of an n x n matrix.
pub fn measurement_count(n: usize, k: usize, r: usize, c: f64) -> usize {
    let log = f64::from(ceil_log2(n.max(2)));
    (c * (n * k.max(1) + r) as f64 * log).ceil() as usize
}

/// Default l1 weight: the standard principal-component-pursuit scaling.
pub fn default_lambda(n: usize) -> f64 {
    1.0 / (n as f64).sqrt()
}

/// Result of the convex split, before rounding.
pub struct PcpResult {
    pub low_rank: DMatrix<f64>,
    pub sparse: DMatrix<f64>,
    pub converged: bool,
    pub iterations: u64,
}

fn soft_threshold(x: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    x.map(|v| {
        if v > tau {
            v - tau
        } else if v < -tau {
            v + tau
        } else {
            0.0
        }
    })
}

/// min ||L||_* + lambda * ||S||_1 s.t. A vec(L+S) = w, by alternating
/// proximal steps with a shared gradient and a halve-on-stagnation
/// continuation on the shrink level.
pub fn pcp_solve(
    w: &RealSketch,
    n: usize,
    _k: usize,
    _r: usize,
    lambda: f64,
    config: &SolverConfig,
) -> Result<PcpResult> {
    if w.params.dim() != n * n {
        return Err(Error::ShapeMismatch("sketch dimension is not n^2".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::Parameter("lambda must be positive".into()));
    }
    let b = nalgebra::DVector::from_column_slice(w.measurements());
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(PcpResult {
            low_rank: DMatrix::zeros(n, n),
            sparse: DMatrix::zeros(n, n),
            converged: true,
            iterations: 0,
        });
    }
    let a = materialize_operator(w)?;
    let smax = a.clone().svd(false, false).singular_values[0];
    // the joint operator (L,S) -> A vec(L+S) has squared norm 2 sigma_max^2
    let mu = match config.step_mu {
        Some(m) => m,
        None => 1.0 / (2.0 * smax * smax),
    };
    let at = a.transpose();
    let mut l = DMatrix::zeros(n, n);
    let mut s = DMatrix::zeros(n, n);
    let mut l_prev = l.clone();
    let mut s_prev = s.clone();
    let first_gradient = reshape(&(&at * &b), n);
    let mut level = config.lambda_factor * first_gradient.svd(false, false).singular_values[0];
    let mut best = f64::INFINITY;
    let mut since_improvement = 0u32;
    let mut iterations = 0u64;
    let mut converged = false;
    let mut momentum = 1.0f64;
    while iterations < config.max_iters {
        iterations += 1;
        // FISTA extrapolation point
        let theta = (momentum - 1.0) / {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            momentum = next;
            next
        };
        let ly = &l + theta * (&l - &l_prev);
        let sy = &s + theta * (&s - &s_prev);
        let residual = &a * vec_of(&(&ly + &sy)) - &b;
        let relative = (&a * vec_of(&(&l + &s)) - &b).norm() / b_norm;
        if relative <= config.tolerance {
            converged = true;
            break;
        }
        if relative < 0.999 * best {
            best = relative;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= 40 {
                level *= 0.5;
                since_improvement = 0;
                momentum = 1.0; // restart momentum at each continuation step
            }
        }
        let g = reshape(&(&at * &residual), n);
        l_prev = l;
        s_prev = s;
        l = shrink_singular_values(&(&ly - mu * &g), mu * level);
        s = soft_threshold(&(&sy - mu * &g), mu * level * lambda);
    }
    // The measurement constraint pins down only the sum X = L + S; the split
    // lives in a null direction of the quadratic and can settle slowly.
    // Refine it by solving min ||L||_* + lambda ||S||_1 s.t. L + S = X on the
    // recovered sum with augmented-Lagrangian proximal steps.
    let x = &l + &s;
    let refined = split_refine(&x, lambda, config.max_iters);
    l = refined.0;
    s = refined.1;
    converged = converged && refined.2;
    Ok(PcpResult { low_rank: l, sparse: s, converged, iterations })
}

/// Exact-constraint principal-component pursuit on a fully known matrix:
/// alternating SVT / soft-threshold proximal steps with a dual gradient
/// step on the residual X - L - S.
fn split_refine(x: &DMatrix<f64>, lambda: f64, max_iters: u64) -> (DMatrix<f64>, DMatrix<f64>, bool) {
    let n = x.nrows();
    let x_norm = x.norm();
    if x_norm == 0.0 {
        return (DMatrix::zeros(n, n), DMatrix::zeros(n, n), true);
    }
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    let rho = (n * n) as f64 / (4.0 * l1.max(f64::MIN_POSITIVE));
    let mut l = DMatrix::zeros(n, n);
    let mut s = DMatrix::zeros(n, n);
    let mut y = DMatrix::zeros(n, n);
    for _ in 0..max_iters {
        let l_next = shrink_singular_values(&(x - &s + &y / rho), 1.0 / rho);
        let s_next = soft_threshold(&(x - &l_next + &y / rho), lambda / rho);
        let step = (&l_next - &l).norm() + (&s_next - &s).norm();
        l = l_next;
        s = s_next;
        let residual = x - &l - &s;
        // require both feasibility and a settled split (dual convergence)
        if residual.norm() <= 1e-9 * x_norm && step <= 1e-9 * x_norm {
            // absorb the leftover residual so the sum matches X exactly
            s += residual;
            return (l, s, true);
        }
        y += rho * residual;
    }
    (l, s, false)
}

/// The paired stream state for robust PCA.
#[derive(Debug, Clone)]
pub struct RpcaRecovery {
    pub sis: SisSketch,
    pub real: RealSketch,
}

impl RpcaRecovery {
    pub fn new(
        n: usize,
        k: usize,
        r: usize,
        beta: u64,
        max_updates: u64,
        seed: [u8; 32],
        c: f64,
    ) -> Result<Self> {
        let params = SketchParams::for_rpca(n, k, r, beta, max_updates, seed)?;
        let alpha = measurement_count(n, k, r, c);
        let real = RealSketch::new(params.clone(), MatrixId::BernoulliA, alpha)?;
        Ok(RpcaRecovery { sis: SisSketch::new(params), real })
    }

    pub fn n(&self) -> usize {
        self.sis.params.shape[0]
    }

    pub fn update(&mut self, u: &StreamUpdate) -> Result<()> {
        self.sis.update(u)?;
        self.real.update(u)
    }

    pub fn finalize(&mut self) {
        self.sis.finalize();
        self.real.finalize();
    }
}

/// Full recovery: split, round, re-check rank/sparsity/bounds on the
/// integer pair, verify the sum against the SIS sketch.
pub fn rpca_recover(
    sis: &SisSketch,
    w: &RealSketch,
    k: usize,
    r: usize,
    beta: u64,
    lambda: Option<f64>,
    config: &SolverConfig,
) -> Result<RecoveryOutcome<RpcaDecomposition>> {
    if sis.update_count() != w.update_count() {
        return Err(Error::StreamMismatch(format!(
            "SIS sketch saw {} updates, real sketch saw {}",
            sis.update_count(),
            w.update_count()
        )));
    }
    let n = sis.params.shape[0];
    let lambda = lambda.unwrap_or_else(|| default_lambda(n));
    let solved = pcp_solve(w, n, k, r, lambda, config)?;
    let low_rank = round_matrix(&solved.low_rank);
    let sparse = round_matrix(&solved.sparse);
    let stats = RecoveryStats {
        iterations: solved.iterations,
        candidates_tried: 1,
    };
    let sum = low_rank.add(&sparse)?;
    let accepted = low_rank.exact_rank() <= k
        && sparse.nnz() <= r
        && low_rank.max_abs() <= beta as i64
        && sparse.max_abs() <= beta as i64
        && sum.max_abs() <= beta as i64
        && sis.verify(&sum.nonzeros())?;
    if accepted {
        Ok(RecoveryOutcome::Recovered(RpcaDecomposition { low_rank, sparse }, stats))
    } else {
        Ok(RecoveryOutcome::NotInClass(stats))
    }
}
