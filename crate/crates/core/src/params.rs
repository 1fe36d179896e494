//! SIS/sketch parameters, modulus selection, and signed-residue arithmetic
//! over Z_q.
//!
//! The row-count rule is fixed to `rows = f(k) * ceil(log2 dim)` with
//! `f(k) = k * ceil(log2 max(dim, 4))` for vector sketches, and the matrix,
//! robust-PCA and tensor variants scale it by the side lengths so that the
//! stored word counts track the intended space bounds exactly.

use crate::error::{Error, Result};

/// All integer parameters of one sketching session.
///
/// Immutable after construction; freely shareable across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchParams {
    /// Declared index shape (1 component for vectors, 2 for matrices, d for
    /// tensors). The ambient dimension is the product of the components.
    pub shape: Vec<usize>,
    /// Structural bound: sparsity, rank, or CP-rank.
    pub sparsity_k: usize,
    /// Maximum absolute entry value of in-class inputs.
    pub entry_bound_beta: u64,
    /// Prime sketch modulus.
    pub modulus_q: u64,
    /// Number of sketch rows.
    pub rows: usize,
    /// The f(k) value that entered the row-count formula.
    pub row_multiplier: u64,
    /// Assumed cap on the number of stream updates (enters modulus choice).
    pub max_updates: u64,
    /// 32-byte session seed for the column oracle.
    pub oracle_seed: [u8; 32],
}

/// ceil(log2 x) for x >= 1.
pub fn ceil_log2(x: usize) -> u32 {
    debug_assert!(x >= 1);
    if x <= 1 {
        0
    } else {
        usize::BITS - (x - 1).leading_zeros()
    }
}

/// f(k) = k * ceil(log2 max(dim, 4)).
fn row_multiplier(k: usize, dim: usize) -> u64 {
    k as u64 * u64::from(ceil_log2(dim.max(4)))
}

impl SketchParams {
    fn validate(&self) -> Result<()> {
        if self.rows < 1 {
            return Err(Error::Parameter("rows must be >= 1".into()));
        }
        if self.entry_bound_beta < 1 {
            return Err(Error::Parameter("beta must be >= 1".into()));
        }
        let dim = self.dim() as u64;
        let floor = (self.rows as u64)
            .checked_mul(self.entry_bound_beta)
            .ok_or_else(|| Error::Parameter("rows*beta overflows".into()))?;
        if self.modulus_q < floor {
            return Err(Error::Parameter(format!(
                "q = {} violates q >= rows*beta = {}",
                self.modulus_q, floor
            )));
        }
        let wrap = 2u64
            .checked_mul(self.entry_bound_beta)
            .and_then(|v| v.checked_mul(dim))
            .and_then(|v| v.checked_mul(self.max_updates))
            .ok_or_else(|| Error::Parameter("wraparound bound overflows".into()))?;
        if self.modulus_q <= wrap {
            return Err(Error::Parameter(format!(
                "q = {} must exceed 2*beta*dim*max_updates = {}",
                self.modulus_q, wrap
            )));
        }
        if !is_prime(self.modulus_q) {
            return Err(Error::Parameter(format!("q = {} is not prime", self.modulus_q)));
        }
        Ok(())
    }

    fn build(
        shape: Vec<usize>,
        k: usize,
        beta: u64,
        rows: usize,
        f_k: u64,
        max_updates: u64,
        seed: [u8; 32],
    ) -> Result<Self> {
        let dim: usize = shape.iter().product();
        if dim == 0 {
            return Err(Error::Parameter("shape components must be >= 1".into()));
        }
        let rows = rows.max(1);
        let q = choose_modulus(rows as u64, beta, dim as u64, max_updates)?;
        let params = SketchParams {
            shape,
            sparsity_k: k,
            entry_bound_beta: beta,
            modulus_q: q,
            rows,
            row_multiplier: f_k,
            max_updates,
            oracle_seed: seed,
        };
        params.validate()?;
        Ok(params)
    }

    /// Parameters for a length-`n` vector sketch: rows = f(k) * ceil(log2 n).
    pub fn for_vector(n: usize, k: usize, beta: u64, max_updates: u64, seed: [u8; 32]) -> Result<Self> {
        let f_k = row_multiplier(k, n);
        let rows = (f_k as usize) * ceil_log2(n.max(2)) as usize;
        Self::build(vec![n], k, beta, rows, f_k, max_updates, seed)
    }

    /// Parameters for an n x n matrix sketch: rows = f(k) * n * ceil(log2 n).
    pub fn for_matrix(n: usize, k: usize, beta: u64, max_updates: u64, seed: [u8; 32]) -> Result<Self> {
        let f_k = row_multiplier(k, n * n);
        let rows = (f_k as usize) * n * ceil_log2(n.max(2)) as usize;
        Self::build(vec![n, n], k, beta, rows, f_k, max_updates, seed)
    }

    /// Parameters for robust PCA: rows = (f(k) * n + r) * ceil(log2 n).
    pub fn for_rpca(
        n: usize,
        k: usize,
        r: usize,
        beta: u64,
        max_updates: u64,
        seed: [u8; 32],
    ) -> Result<Self> {
        let f_k = row_multiplier(k, n * n);
        let rows = ((f_k as usize) * n + r) * ceil_log2(n.max(2)) as usize;
        Self::build(vec![n, n], k, beta, rows, f_k, max_updates, seed)
    }

    /// Parameters for an order-d tensor sketch:
    /// rows = f(k) * (n_1 + ... + n_d) * ceil(log2 prod(n_i)).
    pub fn for_tensor(dims: &[usize], k: usize, beta: u64, max_updates: u64, seed: [u8; 32]) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Parameter("tensor order must be >= 2".into()));
        }
        let dim: usize = dims.iter().product();
        let side_sum: usize = dims.iter().sum();
        let f_k = row_multiplier(k, dim);
        let rows = (f_k as usize) * side_sum * ceil_log2(dim.max(2)) as usize;
        Self::build(dims.to_vec(), k, beta, rows, f_k, max_updates, seed)
    }

    /// Builds parameters without the modulus sanity checks. Intended for
    /// deliberately weak toy instances in the adversary harness; honest
    /// sessions should use the `for_*` constructors.
    pub fn unchecked(
        shape: Vec<usize>,
        k: usize,
        beta: u64,
        modulus_q: u64,
        rows: usize,
        max_updates: u64,
        seed: [u8; 32],
    ) -> Self {
        SketchParams {
            shape,
            sparsity_k: k,
            entry_bound_beta: beta,
            modulus_q,
            rows,
            row_multiplier: k as u64,
            max_updates,
            oracle_seed: seed,
        }
    }

    /// Ambient dimension: the product of the shape components.
    pub fn dim(&self) -> usize {
        self.shape.iter().product()
    }

    /// Flattens a multi-index (row-major, 0-based) after a bounds check.
    pub fn flatten_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len()
            || index.iter().zip(&self.shape).any(|(i, s)| i >= s)
        {
            return Err(Error::UpdateOutOfShape {
                index: index.to_vec(),
                shape: self.shape.clone(),
            });
        }
        let mut flat = 0usize;
        for (i, s) in index.iter().zip(&self.shape) {
            flat = flat * s + i;
        }
        Ok(flat)
    }

    /// Parses a plain-text `key=value` config (`dim=`, `k=`, `beta=`, `rows=`,
    /// `seed=` as 64 hex chars, optional `q=` and `max_updates=`).
    pub fn from_config(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut k = None;
        let mut beta = None;
        let mut rows = None;
        let mut q = None;
        let mut seed = None;
        let mut max_updates = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Parse {
                line: lineno + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            let bad = |message: String| Error::Parse { line: lineno + 1, message };
            match key.trim() {
                "dim" => dim = Some(value.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "k" => k = Some(value.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "beta" => beta = Some(value.trim().parse::<u64>().map_err(|e| bad(e.to_string()))?),
                "rows" => rows = Some(value.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "q" => q = Some(value.trim().parse::<u64>().map_err(|e| bad(e.to_string()))?),
                "max_updates" => {
                    max_updates = Some(value.trim().parse::<u64>().map_err(|e| bad(e.to_string()))?)
                }
                "seed" => seed = Some(parse_seed_hex(value.trim()).map_err(|e| bad(e.to_string()))?),
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        let dim = dim.ok_or_else(|| Error::Parameter("config missing dim=".into()))?;
        let k = k.ok_or_else(|| Error::Parameter("config missing k=".into()))?;
        let beta = beta.ok_or_else(|| Error::Parameter("config missing beta=".into()))?;
        let seed = seed.ok_or_else(|| Error::Parameter("config missing seed=".into()))?;
        let max_updates = max_updates.unwrap_or(dim as u64);
        let mut params = Self::for_vector(dim, k, beta, max_updates, seed)?;
        if let Some(rows) = rows {
            params.rows = rows;
            params.modulus_q = choose_modulus(rows as u64, beta, dim as u64, max_updates)?;
        }
        if let Some(q) = q {
            params.modulus_q = q;
        }
        params.validate()?;
        Ok(params)
    }
}

/// Parses a 64-hex-char seed string into 32 bytes.
pub fn parse_seed_hex(s: &str) -> std::result::Result<[u8; 32], String> {
    if s.len() != 64 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(format!("seed must be 64 hex chars, got {} chars", s.len()));
    }
    let mut out = [0u8; 32];
    for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
        let hi = (chunk[0] as char).to_digit(16).unwrap() as u8;
        let lo = (chunk[1] as char).to_digit(16).unwrap() as u8;
        out[i] = hi << 4 | lo;
    }
    Ok(out)
}

/// Smallest prime >= max(rows*beta, 2*beta*dim*max_updates + 1).
pub fn choose_modulus(rows: u64, beta: u64, dim: u64, max_updates: u64) -> Result<u64> {
    if rows < 1 || beta < 1 || dim < 1 || max_updates < 1 {
        return Err(Error::Parameter("choose_modulus inputs must be >= 1".into()));
    }
    let a = rows
        .checked_mul(beta)
        .ok_or_else(|| Error::Parameter("rows*beta overflows u64".into()))?;
    let b = 2u64
        .checked_mul(beta)
        .and_then(|v| v.checked_mul(dim))
        .and_then(|v| v.checked_mul(max_updates))
        .and_then(|v| v.checked_add(1))
        .ok_or_else(|| Error::Parameter("2*beta*dim*max_updates overflows u64".into()))?;
    let target = a.max(b);
    next_prime(target).ok_or_else(|| Error::Parameter("no prime within u64 range".into()))
}

fn next_prime(mut n: u64) -> Option<u64> {
    if n <= 2 {
        return Some(2);
    }
    if n % 2 == 0 {
        n += 1;
    }
    loop {
        if is_prime(n) {
            return Some(n);
        }
        n = n.checked_add(2)?;
    }
}

/// Deterministic Miller-Rabin for u64 inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0u32;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    // This witness set is deterministic for all n < 2^64.
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a % n, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Lifts a residue class to its representative in (-q/2, q/2].
pub fn signed_residue(value: i128, q: u64) -> i64 {
    debug_assert!(q >= 2);
    let r = value.rem_euclid(q as i128) as u64;
    if 2 * r > q {
        r as i64 - q as i64
    } else {
        r as i64
    }
}

/// Canonical non-negative residue of a signed delta.
pub fn reduce_signed(value: i128, q: u64) -> u64 {
    value.rem_euclid(q as i128) as u64
}

pub fn add_mod(a: u64, b: u64, q: u64) -> u64 {
    ((a as u128 + b as u128) % q as u128) as u64
}

pub fn sub_mod(a: u64, b: u64, q: u64) -> u64 {
    ((a as u128 + (q - b) as u128) % q as u128) as u64
}

pub fn mul_mod(a: u64, b: u64, q: u64) -> u64 {
    ((a as u128 * b as u128) % q as u128) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, q: u64) -> u64 {
    let mut acc = 1 % q;
    base %= q;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, q);
        }
        base = mul_mod(base, base, q);
        exp >>= 1;
    }
    acc
}

/// Multiplicative inverse modulo a prime q.
pub fn inv_mod(a: u64, q: u64) -> u64 {
    debug_assert!(a % q != 0);
    pow_mod(a, q - 2, q)
}
