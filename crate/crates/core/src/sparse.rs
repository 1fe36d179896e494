//! k-sparse vector recovery and l0 estimation.
//!
//! Two recovery routes are kept in parallel: the SIS sketch provides the
//! verification that makes a "not k-sparse" verdict trustworthy, while a
//! deterministic Reed-Solomon syndrome scheme (power sums over a prime
//! field, Berlekamp-Massey, Chien search) provides the fast recovery path.


use crate::error::{Error, Result};
use crate::params::{
    add_mod, ceil_log2, inv_mod, is_prime, mul_mod, pow_mod, reduce_signed, signed_residue,
    sub_mod,
};
use crate::sketch::{SisSketch, StreamUpdate};
use crate::{RecoveryOutcome, RecoveryStats};

/// A sparse integer vector: sorted (index, nonzero value) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseVector {
    pub dim: usize,
    pub entries: Vec<(usize, i64)>,
}

impl SparseVector {
    pub fn new(dim: usize, mut entries: Vec<(usize, i64)>) -> Result<Self> {
        entries.retain(|&(_, v)| v != 0);
        entries.sort_unstable();
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::ShapeMismatch(format!("duplicate index {}", w[0].0)));
            }
        }
        if entries.last().is_some_and(|&(i, _)| i >= dim) {
            return Err(Error::ShapeMismatch("entry index out of dimension".into()));
        }
        Ok(SparseVector { dim, entries })
    }

    pub fn zero(dim: usize) -> Self {
        SparseVector { dim, entries: Vec::new() }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn max_abs(&self) -> i64 {
        self.entries.iter().map(|&(_, v)| v.abs()).max().unwrap_or(0)
    }
}

/// Exhaustive recovery: returns the lexicographically first y with
/// H*y == v (mod q) and nnz(y) <= k, or NotInClass when none exists.
///
/// Enumeration order is by support size, supports lexicographic, then
/// values lexicographic in -beta..=beta skipping zero.
pub fn enumerate_recover(
    sketch: &SisSketch,
    k: usize,
    beta: u64,
) -> Result<RecoveryOutcome<SparseVector>> {
    let n = sketch.params.dim();
    let cost = k as u64 * (u64::from(ceil_log2(n.max(2))) + u64::from(ceil_log2((2 * beta + 1) as usize)));
    if cost > 40 {
        return Err(Error::Capacity(format!(
            "k*(log2 n + log2(2*beta+1)) = {cost} exceeds the enumeration guard of 40; use fast_recover"
        )));
    }
    let mut candidates = 0u64;
    let values: Vec<i64> = (-(beta as i64)..=beta as i64).filter(|&v| v != 0).collect();
    for size in 0..=k.min(n) {
        let mut support: Vec<usize> = (0..size).collect();
        loop {
            // odometer over the value assignment for this support
            let mut assignment = vec![0usize; size];
            loop {
                candidates += 1;
                let candidate: Vec<(usize, i64)> = support
                    .iter()
                    .zip(&assignment)
                    .map(|(&i, &a)| (i, values[a]))
                    .collect();
                if sketch.verify(&candidate)? {
                    let stats = RecoveryStats {
                        iterations: 0,
                        candidates_tried: candidates,
                    };
                    return Ok(RecoveryOutcome::Recovered(
                        SparseVector::new(n, candidate)?,
                        stats,
                    ));
                }
                // advance values, last position fastest
                let mut pos = size;
                loop {
                    if pos == 0 {
                        break;
                    }
                    pos -= 1;
                    assignment[pos] += 1;
                    if assignment[pos] < values.len() {
                        break;
                    }
                    assignment[pos] = 0;
                }
                if size == 0 || (pos == 0 && assignment[0] == 0) {
                    break;
                }
            }
            // advance support to the next lexicographic combination
            if size == 0 {
                break;
            }
            let mut pos = size;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                support[pos] += 1;
                if support[pos] <= n - (size - pos) {
                    for j in pos + 1..size {
                        support[j] = support[j - 1] + 1;
                    }
                    break;
                }
            }
            if support[0] > n - size {
                break;
            }
        }
    }
    Ok(RecoveryOutcome::NotInClass(RecoveryStats {
        iterations: 0,
        candidates_tried: candidates,
    }))
}

/// Deterministic syndrome state: 2k power sums s_j = sum_i x_i * g^(i*j)
/// over GF(p).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyndromeState {
    pub n: usize,
    pub k: usize,
    pub beta: u64,
    pub prime: u64,
    pub generator: u64,
    syndromes: Vec<u64>,
    update_count: u64,
}

impl SyndromeState {
    /// Chooses the smallest usable prime p > max(n+1, 2*beta*max_updates+1)
    /// and a primitive root of GF(p).
    pub fn new(n: usize, k: usize, beta: u64, max_updates: u64) -> Result<Self> {
        let bound = (n as u64 + 1).max(2 * beta * max_updates + 1);
        let mut p = bound + 1;
        while !is_prime(p) {
            p += 1;
        }
        let g = primitive_root(p);
        Self::with_field(n, k, beta, p, g)
    }

    /// Uses an explicit prime field and generator. The generator's
    /// multiplicative order must be at least n so that locations are
    /// distinct powers.
    pub fn with_field(n: usize, k: usize, beta: u64, prime: u64, generator: u64) -> Result<Self> {
        if !is_prime(prime) {
            return Err(Error::Parameter(format!("{prime} is not prime")));
        }
        if prime <= n as u64 + 1 {
            return Err(Error::Parameter("prime must exceed n+1".into()));
        }
        if generator % prime == 0 || order_at_least(generator, prime, n as u64) < n as u64 {
            return Err(Error::Parameter("generator order below n".into()));
        }
        Ok(SyndromeState {
            n,
            k,
            beta,
            prime,
            generator,
            syndromes: vec![0; 2 * k],
            update_count: 0,
        })
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    pub fn stored_words(&self) -> usize {
        self.syndromes.len()
    }

    /// Serializes the syndrome state for transcript exposure.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"WBSY");
        for v in [
            self.n as u64,
            self.k as u64,
            self.beta,
            self.prime,
            self.generator,
            self.update_count,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &s in &self.syndromes {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    /// Folds one update into the power sums.
    pub fn det_update(&mut self, u: &StreamUpdate) -> Result<()> {
        if u.index.len() != 1 || u.index[0] >= self.n {
            return Err(Error::UpdateOutOfShape { index: u.index.clone(), shape: vec![self.n] });
        }
        self.update_count += 1;
        let p = self.prime;
        let d = reduce_signed(u.delta as i128, p);
        if d == 0 {
            return Ok(());
        }
        let base = pow_mod(self.generator, u.index[0] as u64, p);
        let mut power = 1u64; // g^(i*j)
        for s in &mut self.syndromes {
            *s = add_mod(*s, mul_mod(d, power, p), p);
            power = mul_mod(power, base, p);
        }
        Ok(())
    }

    /// Deterministic decode: Berlekamp-Massey for the locator, Chien search
    /// over g^i for i < n, transposed Vandermonde solve for the values,
    /// signed lift. Returns None on any structural failure; a wrong None is
    /// possible only for inputs that are not k-sparse, which the caller's
    /// SIS verification handles.
    pub fn det_decode(&self) -> Option<SparseVector> {
        let p = self.prime;
        if self.syndromes.iter().all(|&s| s == 0) {
            return Some(SparseVector::zero(self.n));
        }
        let locator = berlekamp_massey(&self.syndromes, p);
        let degree = locator.len() - 1;
        if degree == 0 || degree > self.k {
            return None;
        }
        // Chien search: roots of the locator at x = g^(-i), i < n
        let g_inv = inv_mod(self.generator, p);
        let mut locations = Vec::new();
        let mut x = 1u64; // g^(-i)
        for i in 0..self.n {
            let mut acc = 0u64;
            let mut xp = 1u64;
            for &c in &locator {
                acc = add_mod(acc, mul_mod(c, xp, p), p);
                xp = mul_mod(xp, x, p);
            }
            if acc == 0 {
                locations.push(i);
            }
            x = mul_mod(x, g_inv, p);
        }
        if locations.len() != degree {
            return None;
        }
        // Solve sum_l y_l * (g^(i_l))^j = s_j for j = 0..degree-1.
        let cols: Vec<u64> = locations
            .iter()
            .map(|&i| pow_mod(self.generator, i as u64, p))
            .collect();
        let mut system: Vec<Vec<u64>> = Vec::with_capacity(degree);
        let mut power_row = vec![1u64; degree];
        for j in 0..degree {
            let mut row = power_row.clone();
            row.push(self.syndromes[j]);
            system.push(row);
            for (pr, &c) in power_row.iter_mut().zip(&cols) {
                *pr = mul_mod(*pr, c, p);
            }
        }
        let values = solve_mod(&mut system, p)?;
        let mut entries = Vec::with_capacity(degree);
        for (&i, &v) in locations.iter().zip(&values) {
            let lifted = signed_residue(v as i128, p);
            if lifted == 0 || lifted.unsigned_abs() > self.beta {
                return None;
            }
            entries.push((i, lifted));
        }
        SparseVector::new(self.n, entries).ok()
    }
}

/// Berlekamp-Massey over GF(p): the minimal connection polynomial
/// (constant term 1) of the syndrome sequence.
fn berlekamp_massey(syndromes: &[u64], p: u64) -> Vec<u64> {
    let mut current = vec![1u64]; // C(x)
    let mut previous = vec![1u64]; // B(x)
    let mut length = 0usize;
    let mut shift = 1usize;
    let mut prev_discrepancy = 1u64;
    for (n, &s_n) in syndromes.iter().enumerate() {
        let mut discrepancy = s_n;
        for i in 1..=length {
            if i < current.len() {
                discrepancy = add_mod(discrepancy, mul_mod(current[i], syndromes[n - i], p), p);
            }
        }
        if discrepancy == 0 {
            shift += 1;
        } else if 2 * length <= n {
            let temp = current.clone();
            let coeff = mul_mod(discrepancy, inv_mod(prev_discrepancy, p), p);
            if current.len() < previous.len() + shift {
                current.resize(previous.len() + shift, 0);
            }
            for (i, &b) in previous.iter().enumerate() {
                current[i + shift] = sub_mod(current[i + shift], mul_mod(coeff, b, p), p);
            }
            length = n + 1 - length;
            previous = temp;
            prev_discrepancy = discrepancy;
            shift = 1;
        } else {
            let coeff = mul_mod(discrepancy, inv_mod(prev_discrepancy, p), p);
            if current.len() < previous.len() + shift {
                current.resize(previous.len() + shift, 0);
            }
            for (i, &b) in previous.iter().enumerate() {
                current[i + shift] = sub_mod(current[i + shift], mul_mod(coeff, b, p), p);
            }
            shift += 1;
        }
    }
    current.truncate(length + 1);
    current
}

/// Gaussian elimination mod p on an augmented system; None if singular.
fn solve_mod(system: &mut [Vec<u64>], p: u64) -> Option<Vec<u64>> {
    let n = system.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| system[r][col] != 0)?;
        system.swap(col, pivot);
        let inv = inv_mod(system[col][col], p);
        for j in col..=n {
            system[col][j] = mul_mod(system[col][j], inv, p);
        }
        for r in 0..n {
            if r != col && system[r][col] != 0 {
                let factor = system[r][col];
                for j in col..=n {
                    let sub = mul_mod(factor, system[col][j], p);
                    system[r][j] = sub_mod(system[r][j], sub, p);
                }
            }
        }
    }
    Some(system.iter().map(|row| row[n]).collect())
}

fn order_at_least(g: u64, p: u64, n: u64) -> u64 {
    // Smallest t <= n with g^t == 1, or n if the order exceeds n.
    let mut x = g % p;
    for t in 1..=n {
        if x == 1 {
            return t;
        }
        x = mul_mod(x, g, p);
    }
    n
}

/// Smallest primitive root of GF(p).
fn primitive_root(p: u64) -> u64 {
    if p == 2 {
        return 1;
    }
    let mut factors = Vec::new();
    let mut m = p - 1;
    let mut d = 2u64;
    while d * d <= m {
        if m % d == 0 {
            factors.push(d);
            while m % d == 0 {
                m /= d;
            }
        }
        d += 1;
    }
    if m > 1 {
        factors.push(m);
    }
    'outer: for g in 2..p {
        for &f in &factors {
            if pow_mod(g, (p - 1) / f, p) == 1 {
                continue 'outer;
            }
        }
        return g;
    }
    unreachable!("every prime field has a primitive root");
}

/// The paired stream state for fast k-sparse recovery: the SIS fingerprint
/// plus the deterministic syndrome decoder, fed identical updates.
#[derive(Debug, Clone)]
pub struct VectorRecovery {
    pub sis: SisSketch,
    pub det: SyndromeState,
}

impl VectorRecovery {
    pub fn new(sis: SisSketch, det: SyndromeState) -> Result<Self> {
        if sis.params.dim() != det.n {
            return Err(Error::ShapeMismatch("sketch and decoder dimensions differ".into()));
        }
        Ok(VectorRecovery { sis, det })
    }

    pub fn update(&mut self, u: &StreamUpdate) -> Result<()> {
        self.sis.update(u)?;
        self.det.det_update(u)
    }

    pub fn finalize(&mut self) {
        self.sis.finalize();
    }
}

/// Fast recovery: decode the syndrome state, then accept only candidates
/// that are k-sparse, beta-bounded, and match the SIS sketch.
pub fn fast_recover(
    sis: &SisSketch,
    det: &SyndromeState,
    k: usize,
    beta: u64,
) -> Result<RecoveryOutcome<SparseVector>> {
    if sis.update_count() != det.update_count() {
        return Err(Error::StreamMismatch(format!(
            "SIS state saw {} updates, syndrome state saw {}",
            sis.update_count(),
            det.update_count()
        )));
    }
    let stats = |candidates| RecoveryStats {
        iterations: 0,
        candidates_tried: candidates,
    };
    if let Some(y) = det.det_decode() {
        if y.nnz() <= k
            && y.max_abs() <= beta as i64
            && sis.verify(&y.entries)?
        {
            return Ok(RecoveryOutcome::Recovered(y, stats(1)));
        }
    }
    Ok(RecoveryOutcome::NotInClass(stats(1)))
}

/// k = floor(n^(1 - eps)) for a rational eps = num/den in (0, 1),
/// computed exactly via an integer root.
pub fn sparsity_for_eps(n: usize, eps_num: u64, eps_den: u64) -> Result<usize> {
    if eps_den == 0 || eps_num == 0 || eps_num >= eps_den {
        return Err(Error::Parameter("eps must be a rational in (0, 1)".into()));
    }
    use num_bigint::BigUint;
    let power = BigUint::from(n).pow((eps_den - eps_num) as u32);
    let root = power.nth_root(eps_den as u32);
    let k: usize = root
        .try_into()
        .map_err(|_| Error::Parameter("n^(1-eps) exceeds usize".into()))?;
    Ok(k)
}

/// l0 estimate: exact when fast recovery succeeds at k = floor(n^(1-eps)),
/// otherwise k itself (an n^eps-factor estimate).
pub fn estimate_l0(sis: &SisSketch, det: &SyndromeState, beta: u64) -> Result<u64> {
    let k = det.k;
    match fast_recover(sis, det, k, beta)? {
        RecoveryOutcome::Recovered(y, _) => Ok(y.nnz() as u64),
        RecoveryOutcome::NotInClass(_) => Ok(k as u64),
    }
}
