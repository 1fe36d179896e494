//! Streamed linear sketches: the Z_q SIS sketch v = H*x mod q and the
//! real-valued measurement sketch w = A*x. Columns of H and A come from the
//! oracle module on demand; no matrix is ever materialized during the
//! stream.

use crate::error::{Error, Result};
use crate::oracle::{self, MatrixId, OracleTag, GAUSSIAN_PRECISION};
use crate::params::{add_mod, mul_mod, reduce_signed, SketchParams};

/// One coordinate update: a multi-index and a signed integer delta.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamUpdate {
    pub index: Vec<usize>,
    pub delta: i64,
}

impl StreamUpdate {
    pub fn new(index: Vec<usize>, delta: i64) -> Self {
        StreamUpdate { index, delta }
    }
}

/// The SIS fingerprint of the stream: v = H*x mod q plus update counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SisSketch {
    pub params: SketchParams,
    v: Vec<u64>,
    update_count: u64,
    frozen: bool,
}

impl SisSketch {
    pub fn new(params: SketchParams) -> Self {
        let rows = params.rows;
        SisSketch { params, v: vec![0; rows], update_count: 0, frozen: false }
    }

    pub fn residues(&self) -> &[u64] {
        &self.v
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Freezes the sketch; recovery runs on frozen state only.
    pub fn finalize(&mut self) {
        self.frozen = true;
    }

    /// Number of dynamically stored machine words (the residue vector).
    pub fn stored_words(&self) -> usize {
        self.v.len()
    }

    pub fn update(&mut self, u: &StreamUpdate) -> Result<()> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        let flat = self.params.flatten_index(&u.index)?;
        let cap = self.params.entry_bound_beta as i128 * self.params.dim() as i128;
        if (u.delta as i128).abs() > cap {
            return Err(Error::Parameter(format!(
                "delta {} exceeds the beta*dim safety cap {cap}",
                u.delta
            )));
        }
        self.update_count += 1;
        let q = self.params.modulus_q;
        let d = reduce_signed(u.delta as i128, q);
        if d != 0 {
            let tag = OracleTag::new(self.params.oracle_seed, MatrixId::SisH, flat as u64);
            let col = oracle::sis_column(&tag, self.params.rows, q);
            for (vi, ci) in self.v.iter_mut().zip(col) {
                *vi = add_mod(*vi, mul_mod(d, ci, q), q);
            }
        }
        Ok(())
    }

    /// Componentwise sum mod q; equals the sketch of the concatenated
    /// streams.
    pub fn merge(&self, other: &SisSketch) -> Result<SisSketch> {
        if self.params != other.params {
            return Err(Error::MergeMismatch("sketch parameters differ".into()));
        }
        let q = self.params.modulus_q;
        let v = self
            .v
            .iter()
            .zip(&other.v)
            .map(|(&a, &b)| add_mod(a, b, q))
            .collect();
        Ok(SisSketch {
            params: self.params.clone(),
            v,
            update_count: self.update_count + other.update_count,
            frozen: self.frozen || other.frozen,
        })
    }

    /// Checks H * vectorize(candidate) == v (mod q) by streaming the
    /// candidate's nonzeros through oracle columns. `candidate` lists
    /// (flat index, signed value) pairs.
    pub fn verify(&self, candidate: &[(usize, i64)]) -> Result<bool> {
        let q = self.params.modulus_q;
        let dim = self.params.dim();
        let beta = self.params.entry_bound_beta as i64;
        let mut acc = vec![0u64; self.params.rows];
        for &(idx, value) in candidate {
            if idx >= dim {
                return Err(Error::ShapeMismatch(format!(
                    "candidate index {idx} outside dimension {dim}"
                )));
            }
            if value.abs() > beta {
                return Err(Error::ShapeMismatch(format!(
                    "candidate entry {value} exceeds beta = {beta}"
                )));
            }
            if value == 0 {
                continue;
            }
            let d = reduce_signed(value as i128, q);
            let tag = OracleTag::new(self.params.oracle_seed, MatrixId::SisH, idx as u64);
            let col = oracle::sis_column(&tag, self.params.rows, q);
            for (ai, ci) in acc.iter_mut().zip(col) {
                *ai = add_mod(*ai, mul_mod(d, ci, q), q);
            }
        }
        Ok(acc == self.v)
    }

    /// Serializes the sketch: params header followed by little-endian
    /// 64-bit residues. Used to expose internal state to the adversary.
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::new();
        out.extend_from_slice(b"WBSK");
        out.push(1); // version
        out.push(p.shape.len() as u8);
        for &s in &p.shape {
            out.extend_from_slice(&(s as u64).to_le_bytes());
        }
        out.extend_from_slice(&(p.sparsity_k as u64).to_le_bytes());
        out.extend_from_slice(&p.entry_bound_beta.to_le_bytes());
        out.extend_from_slice(&p.modulus_q.to_le_bytes());
        out.extend_from_slice(&(p.rows as u64).to_le_bytes());
        out.extend_from_slice(&p.row_multiplier.to_le_bytes());
        out.extend_from_slice(&p.max_updates.to_le_bytes());
        out.extend_from_slice(&p.oracle_seed);
        out.extend_from_slice(&self.update_count.to_le_bytes());
        out.push(self.frozen as u8);
        for &r in &self.v {
            out.extend_from_slice(&r.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<SisSketch> {
        let err = |m: &str| Error::Serialization(m.into());
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(err("truncated sketch"));
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        let u64_at = |bytes: &[u8]| u64::from_le_bytes(bytes.try_into().unwrap());
        if take(4)? != b"WBSK" {
            return Err(err("bad magic"));
        }
        if take(1)?[0] != 1 {
            return Err(err("unsupported version"));
        }
        let shape_len = take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(shape_len);
        for _ in 0..shape_len {
            shape.push(u64_at(take(8)?) as usize);
        }
        let sparsity_k = u64_at(take(8)?) as usize;
        let entry_bound_beta = u64_at(take(8)?);
        let modulus_q = u64_at(take(8)?);
        let rows = u64_at(take(8)?) as usize;
        let row_multiplier = u64_at(take(8)?);
        let max_updates = u64_at(take(8)?);
        let mut oracle_seed = [0u8; 32];
        oracle_seed.copy_from_slice(take(32)?);
        let update_count = u64_at(take(8)?);
        let frozen = take(1)?[0] != 0;
        let mut v = Vec::with_capacity(rows);
        for _ in 0..rows {
            v.push(u64_at(take(8)?));
        }
        if !cur.is_empty() {
            return Err(err("trailing bytes"));
        }
        Ok(SisSketch {
            params: SketchParams {
                shape,
                sparsity_k,
                entry_bound_beta,
                modulus_q,
                rows,
                row_multiplier,
                max_updates,
                oracle_seed,
            },
            v,
            update_count,
            frozen,
        })
    }
}

/// The real compressed-sensing sketch w = A*x, accumulated in double
/// precision with compensated summation.
#[derive(Debug, Clone)]
pub struct RealSketch {
    pub params: SketchParams,
    pub kind: MatrixId,
    pub alpha: usize,
    w: Vec<f64>,
    comp: Vec<f64>,
    update_count: u64,
    frozen: bool,
}

impl RealSketch {
    pub fn new(params: SketchParams, kind: MatrixId, alpha: usize) -> Result<Self> {
        if !matches!(kind, MatrixId::BernoulliA | MatrixId::GaussianA) {
            return Err(Error::Parameter("real sketch kind must be Bernoulli or Gaussian".into()));
        }
        Ok(RealSketch {
            params,
            kind,
            alpha,
            w: vec![0.0; alpha],
            comp: vec![0.0; alpha],
            update_count: 0,
            frozen: false,
        })
    }

    pub fn measurements(&self) -> &[f64] {
        &self.w
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    pub fn finalize(&mut self) {
        self.frozen = true;
    }

    pub fn stored_words(&self) -> usize {
        self.w.len()
    }

    /// One column of the measurement operator for a flat coordinate.
    pub fn column(&self, flat: usize) -> Result<Vec<f64>> {
        let tag = OracleTag::new(self.params.oracle_seed, self.kind, flat as u64);
        match self.kind {
            MatrixId::BernoulliA => Ok(oracle::bernoulli_column(&tag, self.alpha, self.alpha)),
            MatrixId::GaussianA => oracle::gaussian_column(&tag, self.alpha, GAUSSIAN_PRECISION),
            MatrixId::SisH => unreachable!(),
        }
    }

    pub fn update(&mut self, u: &StreamUpdate) -> Result<()> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        let flat = self.params.flatten_index(&u.index)?;
        self.update_count += 1;
        if u.delta == 0 {
            return Ok(());
        }
        let col = self.column(flat)?;
        let d = u.delta as f64;
        for i in 0..self.alpha {
            // Kahan step
            let y = d * col[i] - self.comp[i];
            let t = self.w[i] + y;
            self.comp[i] = (t - self.w[i]) - y;
            self.w[i] = t;
        }
        Ok(())
    }
}
