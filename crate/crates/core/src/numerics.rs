//! Sampling and linear-algebra primitives: stable softmax, Dirichlet draws,
//! an incrementally extended Cholesky factor and a lazily sampled Gaussian
//! process over fixed-length symbol sequences.

use std::fmt::Write as _;
use std::io::Write;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Writes `exp(l - max) / sum` into `out`.
///
/// Components are floored at the smallest positive normal so that every
/// action keeps a strictly positive probability even for extreme logit gaps.
pub fn softmax_stable(logits: &[f64], out: &mut [f64]) -> Result<()> {
    debug_assert_eq!(logits.len(), out.len());
    let mut max = f64::NEG_INFINITY;
    for (index, &l) in logits.iter().enumerate() {
        if !l.is_finite() {
            return Err(Error::NonFinite { index, value: l });
        }
        max = max.max(l);
    }
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o = (*o / sum).max(f64::MIN_POSITIVE);
    }
    Ok(())
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; logits.len()];
    softmax_stable(logits, &mut out)?;
    Ok(out)
}

/// Draws from `Dir(alpha)` through per-component Gamma variates.
pub fn sample_dirichlet(alpha: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::InvalidArgument("empty Dirichlet parameter".into()));
    }
    let gammas = alpha
        .iter()
        .map(|&a| {
            if a > 0.0 && a.is_finite() {
                Gamma::new(a, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))
            } else {
                Err(Error::InvalidArgument(format!(
                    "Dirichlet concentration must be positive, got {a}"
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    loop {
        let mut draw: Vec<f64> = gammas.iter().map(|g| g.sample(rng)).collect();
        let sum: f64 = draw.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            draw.iter_mut().for_each(|p| *p /= sum);
            let resid: f64 = draw.iter().sum();
            draw.iter_mut().for_each(|p| *p /= resid);
            return Ok(draw);
        }
    }
}

pub fn standard_normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Samples an index from a probability vector with a single uniform draw.
pub fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Sample mean and standard error (`sd / sqrt(n)`, `0` when `n < 2`).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Lower-triangular Cholesky factor that grows one row at a time.
///
/// Rows are stored packed: row `i` holds `i + 1` entries.
#[derive(Clone, Debug, Default)]
pub struct IncrementalCholesky {
    n: usize,
    packed: Vec<f64>,
}

impl IncrementalCholesky {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        IncrementalCholesky {
            n: 0,
            packed: Vec::with_capacity(n * (n + 1) / 2),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.packed[start..start + i + 1]
    }

    /// Solves `L y = cross` and returns `(y, diag - |y|^2)`, i.e. the new row
    /// and the squared pivot that appending the point would produce.
    pub fn project(&self, cross: &[f64], diag: f64) -> (Vec<f64>, f64) {
        debug_assert_eq!(cross.len(), self.n);
        let mut y = Vec::with_capacity(self.n);
        let mut sq = 0.0;
        for (j, &c) in cross.iter().enumerate() {
            let row = self.row(j);
            let dot: f64 = row[..j].iter().zip(&y).map(|(a, b)| a * b).sum();
            let v = (c - dot) / row[j];
            sq += v * v;
            y.push(v);
        }
        (y, diag - sq)
    }

    /// Appends a point given its covariances with the existing points and its
    /// own variance. Returns the squared pivot; a non-positive pivot leaves the
    /// factor untouched and is reported as an error.
    pub fn push(&mut self, cross: &[f64], diag: f64) -> Result<f64> {
        let (y, pivot_sq) = self.project(cross, diag);
        if !(pivot_sq > 1e-12) {
            return Err(Error::Invariant(format!(
                "kernel matrix is not positive definite (pivot^2 = {pivot_sq:e})"
            )));
        }
        self.packed.extend_from_slice(&y);
        self.packed.push(pivot_sq.sqrt());
        self.n += 1;
        Ok(pivot_sq)
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.n);
        for (i, &bi) in b.iter().enumerate().take(self.n) {
            let row = self.row(i);
            let dot: f64 = row[..i].iter().zip(&y).map(|(a, c)| a * c).sum();
            y.push((bi - dot) / row[i]);
        }
        y
    }

    /// Row-major dense copy of `L`.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            out[i * self.n..i * self.n + i + 1].copy_from_slice(self.row(i));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GpConfig {
    /// `k(s, s') = exp(-hamming(s, s') / length_scale)`.
    pub length_scale: f64,
    /// New points are conditioned only on sampled points within this distance.
    pub cutoff: usize,
    /// At most this many nearest neighbours are conditioned on.
    pub max_neighbors: usize,
    /// Domains with at most this many sequences are sampled jointly and exactly
    /// on first use.
    pub eager_limit: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            length_scale: 2.0,
            cutoff: 6,
            max_neighbors: 64,
            eager_limit: 1024,
        }
    }
}

/// Zero-mean, unit-variance Gaussian process over sequences of `len` symbols
/// drawn from `0..n_symbols`, sampled lazily and memoized.
///
/// Each point's standard-normal innovation comes from a stream keyed by the
/// sequence itself. Small domains are sampled jointly in lexicographic order,
/// which makes every value independent of the order of queries. Large domains
/// condition each new point on its nearest previously sampled neighbours.
#[derive(Clone, Debug)]
pub struct LazyGpField {
    seed: u64,
    n_symbols: usize,
    len: usize,
    config: GpConfig,
    bits: u32,
    words: usize,
    packed: Vec<u64>,
    values: Vec<f64>,
    index: FxHashMap<Box<[u64]>, u32>,
    kernel_by_distance: Vec<f64>,
    eager: bool,
}

impl LazyGpField {
    pub fn new(seed: u64, n_symbols: usize, len: usize, config: GpConfig) -> Result<Self> {
        if n_symbols == 0 || n_symbols > 256 || len == 0 {
            return Err(Error::InvalidArgument(format!(
                "GP field needs 1..=256 symbols and a positive length, got {n_symbols} / {len}"
            )));
        }
        if !(config.length_scale > 0.0) {
            return Err(Error::config("gp.length_scale", "must be positive"));
        }
        let bits = if n_symbols <= 16 { 4 } else { 8 };
        let per_word = 64 / bits as usize;
        let words = len.div_ceil(per_word);
        let kernel_by_distance = (0..=len)
            .map(|d| (-(d as f64) / config.length_scale).exp())
            .collect();
        let domain = (n_symbols as f64).powi(len as i32);
        let eager = domain <= config.eager_limit as f64;
        let mut field = LazyGpField {
            seed,
            n_symbols,
            len,
            config,
            bits,
            words,
            packed: Vec::new(),
            values: Vec::new(),
            index: FxHashMap::default(),
            kernel_by_distance,
            eager,
        };
        if eager {
            field.materialize_all(domain as usize)?;
        }
        Ok(field)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_eager(&self) -> bool {
        self.eager
    }

    pub fn sequence_len(&self) -> usize {
        self.len
    }

    pub fn kernel(&self, a: &[usize], b: &[usize]) -> f64 {
        let d = a.iter().zip(b).filter(|(x, y)| x != y).count();
        self.kernel_by_distance[d]
    }

    fn pack(&self, seq: &[usize]) -> Vec<u64> {
        let per_word = 64 / self.bits as usize;
        let mut out = vec![0u64; self.words];
        for (i, &s) in seq.iter().enumerate() {
            out[i / per_word] |= (s as u64) << ((i % per_word) as u32 * self.bits);
        }
        out
    }

    fn unpack(&self, words: &[u64]) -> Vec<usize> {
        let per_word = 64 / self.bits as usize;
        let mask = (1u64 << self.bits) - 1;
        (0..self.len)
            .map(|i| ((words[i / per_word] >> ((i % per_word) as u32 * self.bits)) & mask) as usize)
            .collect()
    }

    #[inline]
    fn distance_packed(&self, a: &[u64], b: &[u64]) -> usize {
        let mut d = 0;
        for (x, y) in a.iter().zip(b) {
            let mut v = x ^ y;
            if self.bits == 4 {
                v |= v >> 2;
                v |= v >> 1;
                v &= 0x1111_1111_1111_1111;
            } else {
                v |= v >> 4;
                v |= v >> 2;
                v |= v >> 1;
                v &= 0x0101_0101_0101_0101;
            }
            d += v.count_ones() as usize;
        }
        d
    }

    fn innovation(&self, key: &[u64]) -> f64 {
        let mut r = rng::keyed(self.seed, rng::domain::GP, key.iter().copied());
        standard_normal(&mut r)
    }

    fn validate(&self, seq: &[usize]) -> Result<()> {
        if seq.len() != self.len {
            return Err(Error::InvalidArgument(format!(
                "GP query of length {} on a field of length {}",
                seq.len(),
                self.len
            )));
        }
        if let Some(&s) = seq.iter().find(|&&s| s >= self.n_symbols) {
            return Err(Error::InvalidArgument(format!("symbol {s} out of range")));
        }
        Ok(())
    }

    fn insert(&mut self, key: Vec<u64>, value: f64) {
        self.index.insert(key.clone().into_boxed_slice(), self.values.len() as u32);
        self.packed.extend_from_slice(&key);
        self.values.push(value);
    }

    fn materialize_all(&mut self, domain: usize) -> Result<()> {
        let mut chol = IncrementalCholesky::with_capacity(domain);
        let mut innovations = Vec::with_capacity(domain);
        let mut seq = vec![0usize; self.len];
        let mut keys: Vec<Vec<u64>> = Vec::with_capacity(domain);
        for _ in 0..domain {
            let key = self.pack(&seq);
            let cross: Vec<f64> = keys
                .iter()
                .map(|k| self.kernel_by_distance[self.distance_packed(k, &key)])
                .collect();
            chol.push(&cross, 1.0)?;
            innovations.push(self.innovation(&key));
            keys.push(key);
            // Odometer increment, first position slowest.
            for pos in (0..self.len).rev() {
                seq[pos] += 1;
                if seq[pos] < self.n_symbols {
                    break;
                }
                seq[pos] = 0;
            }
        }
        for (i, key) in keys.into_iter().enumerate() {
            let row = chol.row(i);
            let value = row.iter().zip(&innovations).map(|(l, e)| l * e).sum();
            self.insert(key, value);
        }
        Ok(())
    }

    /// Value of the field at `seq`, sampling it on first access.
    pub fn query(&mut self, seq: &[usize]) -> Result<f64> {
        self.validate(seq)?;
        let key = self.pack(seq);
        if let Some(&i) = self.index.get(key.as_slice()) {
            return Ok(self.values[i as usize]);
        }
        let value = self.sample_conditional(&key);
        self.insert(key, value);
        Ok(value)
    }

    /// Memoized value without sampling.
    pub fn peek(&self, seq: &[usize]) -> Option<f64> {
        if seq.len() != self.len || seq.iter().any(|&s| s >= self.n_symbols) {
            return None;
        }
        let key = self.pack(seq);
        self.index.get(key.as_slice()).map(|&i| self.values[i as usize])
    }

    /// Fixes the value at an unsampled `seq`. Later draws condition on it.
    pub fn pin(&mut self, seq: &[usize], value: f64) -> Result<()> {
        self.validate(seq)?;
        let key = self.pack(seq);
        if self.index.contains_key(key.as_slice()) {
            return Err(Error::InvalidArgument("GP point already sampled".into()));
        }
        self.insert(key, value);
        Ok(())
    }

    fn sample_conditional(&self, key: &[u64]) -> f64 {
        let cutoff = self.config.cutoff;
        let mut near: Vec<(usize, usize)> = Vec::new();
        for (i, other) in self.packed.chunks_exact(self.words).enumerate() {
            let d = self.distance_packed(other, key);
            if d <= cutoff {
                near.push((d, i));
            }
        }
        if near.len() > self.config.max_neighbors {
            near.select_nth_unstable(self.config.max_neighbors);
            near.truncate(self.config.max_neighbors);
        }
        near.sort_unstable();

        let mut chol = IncrementalCholesky::with_capacity(near.len());
        let mut kept: Vec<usize> = Vec::with_capacity(near.len());
        for &(_, i) in &near {
            let ki = &self.packed[i * self.words..(i + 1) * self.words];
            let cross: Vec<f64> = kept
                .iter()
                .map(|&j| {
                    let kj = &self.packed[j * self.words..(j + 1) * self.words];
                    self.kernel_by_distance[self.distance_packed(ki, kj)]
                })
                .collect();
            if chol.push(&cross, 1.0).is_ok() {
                kept.push(i);
            }
        }
        let observed: Vec<f64> = kept.iter().map(|&i| self.values[i]).collect();
        let cross: Vec<f64> = kept
            .iter()
            .map(|&i| {
                let ki = &self.packed[i * self.words..(i + 1) * self.words];
                self.kernel_by_distance[self.distance_packed(ki, key)]
            })
            .collect();
        let (weights, var) = chol.project(&cross, 1.0);
        let whitened = chol.solve_lower(&observed);
        let mean: f64 = weights.iter().zip(&whitened).map(|(a, b)| a * b).sum();
        mean + var.max(0.0).sqrt() * self.innovation(key)
    }

    /// Writes `sequence value` rows in sampling order, symbols joined by `.`.
    pub fn dump(&self, mut out: impl Write) -> Result<()> {
        let mut line = String::new();
        for (i, value) in self.values.iter().enumerate() {
            line.clear();
            let seq = self.unpack(&self.packed[i * self.words..(i + 1) * self.words]);
            for (k, s) in seq.iter().enumerate() {
                if k > 0 {
                    line.push('.');
                }
                let _ = write!(line, "{s}");
            }
            writeln!(out, "{line} {value:.17e}")?;
        }
        Ok(())
    }
}
