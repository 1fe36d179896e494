//! Deterministic random-oracle stand-in.
//!
//! Matrix columns are produced on demand from a keyed SHA-256 stream over a
//! domain-separated tag, so no sketching matrix is ever stored. Identical
//! tags always produce identical bytes; the generators are pure functions
//! and safe for concurrent use.

use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Which lazily generated matrix a tag addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixId {
    SisH = 1,
    BernoulliA = 2,
    GaussianA = 3,
}

/// Addresses one block of one column of one session matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleTag {
    pub seed: [u8; 32],
    pub matrix_id: MatrixId,
    pub column_index: u64,
    pub row_block: u64,
}

impl OracleTag {
    pub fn new(seed: [u8; 32], matrix_id: MatrixId, column_index: u64) -> Self {
        OracleTag { seed, matrix_id, column_index, row_block: 0 }
    }
}

/// Entries generated per row block. Blocks are independently keyed so column
/// generation is order-insensitive.
const BLOCK_LEN: usize = 64;

/// Fixed grid for discretized Gaussians: 2^32 steps per unit.
pub const GAUSSIAN_PRECISION: u64 = 1 << 32;

/// Deterministic byte stream keyed by a seed and a domain label.
///
/// Output block i is SHA-256(seed || domain || i), consumed sequentially.
pub struct ByteStream {
    prefix: Vec<u8>,
    counter: u64,
    buf: [u8; 32],
    pos: usize,
}

impl ByteStream {
    pub fn new(seed: &[u8; 32], domain: &[u8]) -> Self {
        let mut prefix = Vec::with_capacity(32 + domain.len());
        prefix.extend_from_slice(seed);
        prefix.extend_from_slice(domain);
        ByteStream { prefix, counter: 0, buf: [0; 32], pos: 32 }
    }

    fn refill(&mut self) {
        let mut h = Sha256::new();
        h.update(&self.prefix);
        h.update(self.counter.to_le_bytes());
        self.buf.copy_from_slice(&h.finalize());
        self.counter += 1;
        self.pos = 0;
    }

    pub fn next_byte(&mut self) -> u8 {
        if self.pos >= 32 {
            self.refill();
        }
        let b = self.buf[self.pos];
        self.pos += 1;
        b
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut bytes = [0u8; 8];
        for b in &mut bytes {
            *b = self.next_byte();
        }
        u64::from_le_bytes(bytes)
    }

    /// Uniform residue in {0, .., q-1} by rejection sampling on 64-bit words.
    pub fn next_residue(&mut self, q: u64) -> u64 {
        debug_assert!(q >= 1);
        let zone = (1u128 << 64) / q as u128 * q as u128;
        loop {
            let w = self.next_u64();
            if (w as u128) < zone {
                return w % q;
            }
        }
    }

    /// Uniform double in the open interval (0, 1).
    pub fn next_unit_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

fn block_stream(tag: &OracleTag, block: u64) -> ByteStream {
    let mut domain = Vec::with_capacity(17);
    domain.push(tag.matrix_id as u8);
    domain.extend_from_slice(&tag.column_index.to_le_bytes());
    domain.extend_from_slice(&block.to_le_bytes());
    ByteStream::new(&tag.seed, &domain)
}

fn generate<T>(tag: &OracleTag, rows: usize, mut entry: impl FnMut(&mut ByteStream) -> T) -> Vec<T> {
    let mut out = Vec::with_capacity(rows);
    let mut block = 0u64;
    while out.len() < rows {
        let mut stream = block_stream(tag, block);
        let take = BLOCK_LEN.min(rows - out.len());
        for _ in 0..take {
            out.push(entry(&mut stream));
        }
        block += 1;
    }
    out
}

/// One column of the Z_q SIS matrix H: `rows` uniform residues.
pub fn sis_column(tag: &OracleTag, rows: usize, q: u64) -> Vec<u64> {
    debug_assert_eq!(tag.matrix_id, MatrixId::SisH);
    generate(tag, rows, |s| s.next_residue(q))
}

/// One column of the symmetric Bernoulli measurement matrix: entries
/// +-1/sqrt(alpha), each sign from one unbiased pseudorandom bit.
pub fn bernoulli_column(tag: &OracleTag, rows: usize, alpha: usize) -> Vec<f64> {
    debug_assert_eq!(tag.matrix_id, MatrixId::BernoulliA);
    let scale = 1.0 / (alpha as f64).sqrt();
    let mut bit_buf = 0u8;
    let mut bits_left = 0u8;
    generate(tag, rows, |s| {
        if bits_left == 0 {
            bit_buf = s.next_byte();
            bits_left = 8;
        }
        let bit = bit_buf & 1;
        bit_buf >>= 1;
        bits_left -= 1;
        if bit == 1 {
            scale
        } else {
            -scale
        }
    })
}

/// One column of the discretized Gaussian measurement matrix: standard
/// normal samples (inverse CDF on a 64-bit uniform) rounded to integer
/// multiples of 1/precision, scaled by 1/sqrt(rows).
pub fn gaussian_column(tag: &OracleTag, rows: usize, precision: u64) -> Result<Vec<f64>> {
    debug_assert_eq!(tag.matrix_id, MatrixId::GaussianA);
    if precision < 1 << 16 {
        return Err(Error::Parameter(format!("gaussian precision {precision} < 2^16")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let scale = 1.0 / (rows as f64).sqrt();
    Ok(generate(tag, rows, |s| {
        let z = normal.inverse_cdf(s.next_unit_open());
        let grid = (z * precision as f64).round() / precision as f64;
        grid * scale
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(b: u8) -> [u8; 32] {
        let mut s = [0u8; 32];
        s[0] = b;
        s
    }

    #[test]
    fn repeated_queries_are_byte_identical() {
        let tag = OracleTag::new(seed(7), MatrixId::SisH, 42);
        let first = sis_column(&tag, 100, 1009);
        for _ in 0..100 {
            assert_eq!(sis_column(&tag, 100, 1009), first);
        }
    }

    #[test]
    fn distinct_columns_differ() {
        let q = (1u64 << 31) - 1;
        let mut collisions = 0;
        for c in 0..1000u64 {
            let a = sis_column(&OracleTag::new(seed(1), MatrixId::SisH, 2 * c), 32, q);
            let b = sis_column(&OracleTag::new(seed(1), MatrixId::SisH, 2 * c + 1), 32, q);
            if a == b {
                collisions += 1;
            }
        }
        assert_eq!(collisions, 0);
    }

    #[test]
    fn sis_entries_pass_chi_square_uniformity() {
        // 1e5 draws mod q=17; chi-square with 16 dof, alpha = 0.001
        // critical value 39.25 (frozen from standard tables).
        let q = 17u64;
        let draws = 100_000usize;
        let mut counts = [0u64; 17];
        let cols = draws / 50;
        for c in 0..cols as u64 {
            for e in sis_column(&OracleTag::new(seed(2), MatrixId::SisH, c), 50, q) {
                counts[e as usize] += 1;
            }
        }
        let expected = (cols * 50) as f64 / q as f64;
        let chi2: f64 = counts.iter().map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        }).sum();
        assert!(chi2 < 39.25, "chi-square statistic {chi2} too large");
    }

    #[test]
    fn bernoulli_normalization_and_balance() {
        let tag = OracleTag::new(seed(3), MatrixId::BernoulliA, 0);
        let col = bernoulli_column(&tag, 100_000, 4);
        assert!(col.iter().all(|&e| e == 0.5 || e == -0.5));
        let positives = col.iter().filter(|&&e| e > 0.0).count() as f64;
        // 3 sigma of Binomial(1e5, 1/2)
        let sigma = (100_000.0f64 * 0.25).sqrt();
        assert!((positives - 50_000.0).abs() < 3.0 * sigma, "positives = {positives}");
        assert_eq!(bernoulli_column(&tag, 100_000, 4), col);
    }

    #[test]
    fn gaussian_moments_and_grid() {
        let rows = 100_000usize;
        let tag = OracleTag::new(seed(4), MatrixId::GaussianA, 0);
        let col = gaussian_column(&tag, rows, GAUSSIAN_PRECISION).unwrap();
        let scale = (rows as f64).sqrt();
        let unscaled: Vec<f64> = col.iter().map(|e| e * scale).collect();
        let mean = unscaled.iter().sum::<f64>() / rows as f64;
        assert!(mean.abs() < 3.0 / scale, "mean = {mean}");
        let var = unscaled.iter().map(|z| z * z).sum::<f64>() / rows as f64 - mean * mean;
        assert!((0.95..=1.05).contains(&var), "variance = {var}");
        for (e, z) in col.iter().zip(&unscaled) {
            let steps = z * GAUSSIAN_PRECISION as f64;
            assert!((steps - steps.round()).abs() < 1e-4, "entry {e} off grid");
        }
    }

    #[test]
    fn gaussian_rejects_coarse_precision() {
        let tag = OracleTag::new(seed(5), MatrixId::GaussianA, 0);
        assert!(gaussian_column(&tag, 4, 1 << 10).is_err());
    }

    #[test]
    fn access_order_does_not_matter() {
        // Interleaved vs sequential generation of a 3-column matrix.
        let q = 101u64;
        let col = |c: u64| sis_column(&OracleTag::new(seed(6), MatrixId::SisH, c), 200, q);
        let sequential: Vec<_> = (0..3).map(col).collect();
        let interleaved: Vec<_> = [2u64, 0, 1, 1, 2, 0].iter().map(|&c| col(c)).collect();
        assert_eq!(interleaved[1], sequential[0]);
        assert_eq!(interleaved[3], sequential[1]);
        assert_eq!(interleaved[0], sequential[2]);
    }
}
