//! Low-rank matrix recovery and the rank-decision query.
//!
//! The completeness side is a proximal-gradient solver with singular-value
//! soft-thresholding on the Bernoulli measurement sketch; the soundness
//! side is the SIS verification of the rounded integer candidate, so a
//! solver failure can only cost completeness, never a wrong acceptance.


use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::oracle::MatrixId;
use crate::params::{ceil_log2, SketchParams};
use crate::sketch::{RealSketch, SisSketch, StreamUpdate};
use crate::{RecoveryOutcome, RecoveryStats};

/// Dense signed-integer square matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    pub n: usize,
    pub data: Vec<i64>,
}

impl IntMatrix {
    pub fn zero(n: usize) -> Self {
        IntMatrix { n, data: vec![0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch("matrix must be square".into()));
        }
        Ok(IntMatrix { n, data: rows.iter().flatten().copied().collect() })
    }

    pub fn get(&self, row: usize, col: usize) -> i64 {
        self.data[row * self.n + col]
    }

    pub fn max_abs(&self) -> i64 {
        self.data.iter().map(|v| v.abs()).max().unwrap_or(0)
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Nonzero entries as (flat index, value), the form `SisSketch::verify`
    /// takes.
    pub fn nonzeros(&self) -> Vec<(usize, i64)> {
        self.data
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v != 0)
            .map(|(i, &v)| (i, v))
            .collect()
    }

    pub fn add(&self, other: &IntMatrix) -> Result<IntMatrix> {
        if self.n != other.n {
            return Err(Error::ShapeMismatch("matrix sizes differ".into()));
        }
        Ok(IntMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    /// Exact rank over the rationals by fraction-free (Bareiss) Gaussian
    /// elimination in i128.
    pub fn exact_rank(&self) -> usize {
        let n = self.n;
        let mut m: Vec<i128> = self.data.iter().map(|&v| v as i128).collect();
        let mut rank = 0usize;
        let mut prev_pivot: i128 = 1;
        let mut row = 0usize;
        for col in 0..n {
            let Some(pivot_row) = (row..n).find(|&r| m[r * n + col] != 0) else {
                continue;
            };
            if pivot_row != row {
                for c in 0..n {
                    m.swap(row * n + c, pivot_row * n + c);
                }
            }
            let pivot = m[row * n + col];
            for r in row + 1..n {
                for c in col + 1..n {
                    m[r * n + c] =
                        (pivot * m[r * n + c] - m[r * n + col] * m[row * n + c]) / prev_pivot;
                }
                m[r * n + col] = 0;
            }
            prev_pivot = pivot;
            rank += 1;
            row += 1;
            if row == n {
                break;
            }
        }
        rank
    }
}

/// Rounds a real iterate to the nearest integer matrix.
pub fn round_matrix(x: &DMatrix<f64>) -> IntMatrix {
    let n = x.nrows();
    let mut data = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            data.push(x[(r, c)].round() as i64);
        }
    }
    IntMatrix { n, data }
}

/// Solver knobs for the convex recovery programs.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Gradient step size; None derives 1/sigma_max(A)^2.
    pub step_mu: Option<f64>,
    /// Initial shrink level as a fraction of the first gradient image's
    /// top singular value.
    pub lambda_factor: f64,
    pub max_iters: u64,
    /// Relative residual stopping tolerance.
    pub tolerance: f64,
    /// Measurement-count multiplier c in alpha = ceil(c * n * k * log2 n).
    pub measurement_multiplier: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            step_mu: None,
            lambda_factor: 0.1,
            max_iters: 4000,
            tolerance: 1e-10,
            measurement_multiplier: 3.0,
        }
    }
}

/// Measurement count for rank-k recovery of an n x n matrix.
pub fn measurement_count(n: usize, k: usize, c: f64) -> usize {
    let log = f64::from(ceil_log2(n.max(2)));
    (c * n as f64 * k.max(1) as f64 * log).ceil() as usize
}

/// Materializes the measurement operator column by column from the oracle.
/// The stream itself never stores it; this runs only in post-processing.
pub(crate) fn materialize_operator(w: &RealSketch) -> Result<DMatrix<f64>> {
    let dim = w.params.dim();
    let mut a = DMatrix::zeros(w.alpha, dim);
    for col in 0..dim {
        let column = w.column(col)?;
        for (row, &v) in column.iter().enumerate() {
            a[(row, col)] = v;
        }
    }
    Ok(a)
}

pub(crate) struct SvtOutcome {
    pub x: DMatrix<f64>,
    pub converged: bool,
    pub iterations: u64,
}

/// Singular-value soft-thresholding: the proximal operator of tau * ||.||_*.
pub(crate) fn shrink_singular_values(x: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let mut s = svd.singular_values.clone();
    for v in s.iter_mut() {
        *v = (*v - tau).max(0.0);
    }
    u * DMatrix::from_diagonal(&s) * vt
}

/// min ||X||_* s.t. A vec(X) = w, by proximal gradient with singular-value
/// soft-thresholding and a halve-on-stagnation shrink schedule.
pub fn nuclear_min(w: &RealSketch, n: usize, config: &SolverConfig) -> Result<SvtResult> {
    if w.params.dim() != n * n {
        return Err(Error::ShapeMismatch("sketch dimension is not n^2".into()));
    }
    let a = materialize_operator(w)?;
    let b = nalgebra::DVector::from_column_slice(w.measurements());
    let out = svt_solve(&a, &b, n, config)?;
    Ok(SvtResult { estimate: out.x, converged: out.converged, iterations: out.iterations })
}

/// Result of the convex solve, before rounding.
pub struct SvtResult {
    pub estimate: DMatrix<f64>,
    pub converged: bool,
    pub iterations: u64,
}

pub(crate) fn svt_solve(
    a: &DMatrix<f64>,
    b: &nalgebra::DVector<f64>,
    n: usize,
    config: &SolverConfig,
) -> Result<SvtOutcome> {
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(SvtOutcome { x: DMatrix::zeros(n, n), converged: true, iterations: 0 });
    }
    let mu = match config.step_mu {
        Some(m) => m,
        None => {
            let smax = a.clone().svd(false, false).singular_values[0];
            1.0 / (smax * smax)
        }
    };
    let at = a.transpose();
    let mut x = DMatrix::zeros(n, n);
    let first_gradient = reshape(&(&at * b), n);
    let mut lambda =
        config.lambda_factor * first_gradient.clone().svd(false, false).singular_values[0];
    let mut best = f64::INFINITY;
    let mut since_improvement = 0u32;
    let mut iterations = 0u64;
    let mut converged = false;
    while iterations < config.max_iters {
        iterations += 1;
        let residual = a * vec_of(&x) - b;
        let relative = residual.norm() / b_norm;
        if relative <= config.tolerance {
            converged = true;
            break;
        }
        if relative < 0.999 * best {
            best = relative;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= 25 {
                lambda *= 0.5; // stagnation: relax the shrinkage
                since_improvement = 0;
            }
        }
        let gradient = reshape(&(&at * &residual), n);
        let y = &x - mu * gradient;
        x = if lambda > 0.0 {
            shrink_singular_values(&y, mu * lambda)
        } else {
            y
        };
    }
    Ok(SvtOutcome { x, converged, iterations })
}

pub(crate) fn vec_of(x: &DMatrix<f64>) -> nalgebra::DVector<f64> {
    // row-major flattening to match the stream's index convention
    let n = x.nrows();
    let mut v = nalgebra::DVector::zeros(n * x.ncols());
    for r in 0..n {
        for c in 0..x.ncols() {
            v[r * x.ncols() + c] = x[(r, c)];
        }
    }
    v
}

pub(crate) fn reshape(v: &nalgebra::DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            m[(r, c)] = v[r * n + c];
        }
    }
    m
}

/// The paired stream state for low-rank matrix recovery.
#[derive(Debug, Clone)]
pub struct MatrixRecovery {
    pub sis: SisSketch,
    pub real: RealSketch,
}

impl MatrixRecovery {
    pub fn new(n: usize, k: usize, beta: u64, max_updates: u64, seed: [u8; 32], c: f64) -> Result<Self> {
        let params = SketchParams::for_matrix(n, k, beta, max_updates, seed)?;
        let alpha = measurement_count(n, k, c);
        let real = RealSketch::new(params.clone(), MatrixId::BernoulliA, alpha)?;
        Ok(MatrixRecovery { sis: SisSketch::new(params), real })
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

/// Numerical rank: singular values above 1e-6 * sigma_max.
pub fn numerical_rank(x: &DMatrix<f64>) -> usize {
    let s = x.clone().svd(false, false).singular_values;
    let smax = s[0];
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > 1e-6 * smax).count()
}

/// Full recovery: solve, round, check rank (numerically, then confirmed by
/// exact elimination), check bounds, verify against the SIS sketch.
pub fn recover_matrix(
    sis: &SisSketch,
    w: &RealSketch,
    k: usize,
    beta: u64,
    config: &SolverConfig,
) -> Result<RecoveryOutcome<IntMatrix>> {
    if sis.update_count() != w.update_count() {
        return Err(Error::StreamMismatch(format!(
            "SIS sketch saw {} updates, real sketch saw {}",
            sis.update_count(),
            w.update_count()
        )));
    }
    let n = sis.params.shape[0];
    let solved = nuclear_min(w, n, config)?;
    let candidate = round_matrix(&solved.estimate);
    let stats = RecoveryStats {
        iterations: solved.iterations,
        candidates_tried: 1,
    };
    let float_rank = numerical_rank(&solved.estimate.map(|v| v.round()));
    let exact = candidate.exact_rank();
    debug_assert_eq!(float_rank, exact);
    if exact <= k
        && candidate.max_abs() <= beta as i64
        && sis.verify(&candidate.nonzeros())?
    {
        Ok(RecoveryOutcome::Recovered(candidate, stats))
    } else {
        Ok(RecoveryOutcome::NotInClass(stats))
    }
}

/// Verdict of the rank-decision query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RankDecision {
    /// rank <= k, with the recovered matrix as witness.
    RankAtMost(usize, IntMatrix),
    RankGreater(usize),
}

pub fn rank_decision(
    sis: &SisSketch,
    w: &RealSketch,
    k: usize,
    beta: u64,
    config: &SolverConfig,
) -> Result<RankDecision> {
    Ok(match recover_matrix(sis, w, k, beta, config)? {
        RecoveryOutcome::Recovered(x, _) => RankDecision::RankAtMost(k, x),
        RecoveryOutcome::NotInClass(_) => RankDecision::RankGreater(k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ByteStream;

    fn upd(r: usize, c: usize, d: i64) -> StreamUpdate {
        StreamUpdate::new(vec![r, c], d)
    }

    fn stream_matrix(state: &mut MatrixRecovery, m: &IntMatrix) {
        for r in 0..m.n {
            for c in 0..m.n {
                let v = m.get(r, c);
                if v != 0 {
                    state.update(&upd(r, c, v)).unwrap();
                }
            }
        }
    }

    fn outer_product(u: &[i64], v: &[i64]) -> IntMatrix {
        let n = u.len();
        let mut data = Vec::with_capacity(n * n);
        for &a in u {
            for &b in v {
                data.push(a * b);
            }
        }
        IntMatrix { n, data }
    }

    #[test]
    fn exact_rank_cases() {
        let id = IntMatrix::from_rows(&[
            vec![1, 0, 0],
            vec![0, 1, 0],
            vec![0, 0, 1],
        ])
        .unwrap();
        assert_eq!(id.exact_rank(), 3);
        assert_eq!(IntMatrix::zero(4).exact_rank(), 0);
        let r1 = outer_product(&[1, 2, -1], &[3, 0, 1]);
        assert_eq!(r1.exact_rank(), 1);
        // rank 2: sum of two independent outer products
        let r2 = outer_product(&[1, 0, 0], &[1, 0, 0])
            .add(&outer_product(&[0, 1, 0], &[0, 1, 0]))
            .unwrap();
        assert_eq!(r2.exact_rank(), 2);
    }

    #[test]
    fn nuclear_min_zero_measurements() {
        let state = MatrixRecovery::new(8, 2, 9, 512, [31; 32], 3.0).unwrap();
        let solved = nuclear_min(&state.real, 8, &SolverConfig::default()).unwrap();
        assert!(solved.converged);
        assert_eq!(round_matrix(&solved.estimate), IntMatrix::zero(8));
    }

    #[test]
    fn nuclear_min_recovers_planted_rank_one() {
        let mut stream = ByteStream::new(&[77; 32], b"lowrank-unit");
        let mut hits = 0;
        for trial in 0..10u8 {
            let mut state = MatrixRecovery::new(8, 2, 9, 512, [trial; 32], 3.0).unwrap();
            let u: Vec<i64> = (0..8).map(|_| (stream.next_u64() % 7) as i64 - 3).collect();
            let v: Vec<i64> = (0..8).map(|_| (stream.next_u64() % 7) as i64 - 3).collect();
            let planted = outer_product(&u, &v);
            stream_matrix(&mut state, &planted);
            let solved = nuclear_min(&state.real, 8, &SolverConfig::default()).unwrap();
            let err: f64 = (0..64)
                .map(|i| {
                    let d = solved.estimate[(i / 8, i % 8)] - planted.data[i] as f64;
                    d * d
                })
                .sum::<f64>()
                .sqrt();
            if err <= 1e-6 {
                hits += 1;
            }
        }
        assert!(hits >= 9, "only {hits}/10 solves reached 1e-6");
    }

    #[test]
    fn recover_matrix_zero_stream() {
        let state = MatrixRecovery::new(8, 2, 9, 512, [1; 32], 3.0).unwrap();
        let out = recover_matrix(&state.sis, &state.real, 2, 9, &SolverConfig::default()).unwrap();
        assert_eq!(out.recovered().unwrap(), &IntMatrix::zero(8));
    }

    #[test]
    fn recover_matrix_planted_and_identity() {
        let mut state = MatrixRecovery::new(8, 2, 9, 512, [2; 32], 3.0).unwrap();
        let planted = outer_product(&[1, -2, 0, 3, 1, 0, -1, 2], &[2, 1, 0, -1, 3, 0, 1, -2]);
        assert!(planted.max_abs() <= 9);
        stream_matrix(&mut state, &planted);
        let out = recover_matrix(&state.sis, &state.real, 2, 9, &SolverConfig::default()).unwrap();
        assert_eq!(out.recovered().unwrap(), &planted);

        // identity has rank 8 > 3: must be rejected
        let mut dense = MatrixRecovery::new(8, 3, 9, 512, [3; 32], 3.0).unwrap();
        for i in 0..8 {
            dense.update(&upd(i, i, 1)).unwrap();
        }
        let out = recover_matrix(&dense.sis, &dense.real, 3, 9, &SolverConfig::default()).unwrap();
        assert!(out.recovered().is_none());
    }

    #[test]
    fn recover_matrix_rejects_stream_mismatch() {
        let mut state = MatrixRecovery::new(4, 1, 3, 64, [4; 32], 3.0).unwrap();
        state.sis.update(&upd(0, 0, 1)).unwrap();
        assert!(matches!(
            recover_matrix(&state.sis, &state.real, 1, 3, &SolverConfig::default()),
            Err(Error::StreamMismatch(_))
        ));
    }

    #[test]
    fn rank_decision_examples() {
        // zero matrix, k=0
        let zero = MatrixRecovery::new(8, 0, 3, 512, [5; 32], 3.0).unwrap();
        match rank_decision(&zero.sis, &zero.real, 0, 3, &SolverConfig::default()).unwrap() {
            RankDecision::RankAtMost(0, w) => assert_eq!(w, IntMatrix::zero(8)),
            other => panic!("unexpected {other:?}"),
        }
        // identity with k=7
        let mut id = MatrixRecovery::new(8, 7, 3, 512, [6; 32], 3.0).unwrap();
        for i in 0..8 {
            id.update(&upd(i, i, 1)).unwrap();
        }
        assert_eq!(
            rank_decision(&id.sis, &id.real, 7, 3, &SolverConfig::default()).unwrap(),
            RankDecision::RankGreater(7)
        );
        // diag(1,1,0,...,0) with k=2
        let mut diag = MatrixRecovery::new(8, 2, 3, 512, [7; 32], 3.0).unwrap();
        diag.update(&upd(0, 0, 1)).unwrap();
        diag.update(&upd(1, 1, 1)).unwrap();
        match rank_decision(&diag.sis, &diag.real, 2, 3, &SolverConfig::default()).unwrap() {
            RankDecision::RankAtMost(2, w) => {
                assert_eq!(w.get(0, 0), 1);
                assert_eq!(w.get(1, 1), 1);
                assert_eq!(w.nnz(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
