//! Commuting phase-polynomial (IQP) circuits and their exact simulation.
//!
//! A circuit is a list of generators `(s, theta_s)` over subsets of the `n`
//! lines. Its output distribution is
//!
//! ```text
//! p(z) = | 2^-n * sum_x (-1)^(z.x) * exp(i * phi(x)) |^2,
//! phi(x) = sum_s theta_s * chi_s(x),
//! ```
//!
//! i.e. the squared modulus of the Walsh–Hadamard transform of the phase
//! function, so the whole dense simulation is two fast transforms (one real
//! for the phase table, one complex for the amplitudes). Pauli-Z expectation
//! values for every subset at once are a third transform of the probability
//! vector. All of it is exact and deterministic, capped at `n <= 20` lines.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::{canonical_cmp, masks_of_order, subsets_up_to_order};
use crate::datasets::BitDataset;
use crate::error::{Error, Result};
use crate::stats::KahanSum;
use crate::wht::wht_in_place;
use crate::Scalar;

/// Dense simulation cap: `2^n` complex amplitudes.
pub const SIM_LIMIT: usize = 20;

/// Angle range for freshly drawn random circuits: uniform on
/// `[-PI/8, PI/8]`, small enough to start near the uniform distribution.
pub const INIT_ANGLE: f64 = std::f64::consts::PI / 8.0;

/// One commuting generator: a subset mask and its angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqpGenerator<T> {
    pub mask: u64,
    pub theta: T,
}

/// An IQP circuit over `n <= 64` lines. Generators have distinct subset
/// masks; when `canonical` is set they are sorted by ascending Hamming
/// weight, then lexicographically on the index lists, which is the ordering
/// the latent-block partition is defined on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqpCircuit<T> {
    n: usize,
    generators: Vec<IqpGenerator<T>>,
    canonical: bool,
}

impl<T: Scalar> IqpCircuit<T> {
    pub fn new(n: usize, generators: Vec<IqpGenerator<T>>) -> Result<Self> {
        if n == 0 || n > 64 {
            return Err(Error::Config(format!("line count must be in 1..=64, got {n}")));
        }
        let limit = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        let mut seen = std::collections::HashSet::with_capacity(generators.len());
        for g in &generators {
            if g.mask & !limit != 0 {
                return Err(Error::Config(format!(
                    "generator mask {:#x} exceeds width {n}",
                    g.mask
                )));
            }
            if !seen.insert(g.mask) {
                return Err(Error::Config(format!(
                    "duplicate generator mask {:#x}",
                    g.mask
                )));
            }
        }
        Ok(IqpCircuit {
            n,
            generators,
            canonical: false,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> &[IqpGenerator<T>] {
        &self.generators
    }

    pub fn gate_count(&self) -> usize {
        self.generators.len()
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    /// Sorts generators into the canonical order and marks the flag.
    pub fn canonicalize(&mut self) {
        self.generators
            .sort_by(|a, b| canonical_cmp(a.mask, b.mask));
        self.canonical = true;
    }

    /// Current angle vector in generator order.
    pub fn thetas(&self) -> Vec<T> {
        self.generators.iter().map(|g| g.theta).collect()
    }

    /// Replaces the angle vector, preserving masks and ordering.
    pub fn set_thetas(&mut self, thetas: &[T]) -> Result<()> {
        if thetas.len() != self.generators.len() {
            return Err(Error::Shape(format!(
                "expected {} angles, got {}",
                self.generators.len(),
                thetas.len()
            )));
        }
        for (g, &t) in self.generators.iter_mut().zip(thetas.iter()) {
            g.theta = t;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String
    where
        T: serde::Serialize,
    {
        serde_json::to_string(self).expect("circuit serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self>
    where
        T: serde::de::DeserializeOwned,
    {
        let parsed: IqpCircuit<T> =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("circuit json: {e}")))?;
        let mut rebuilt = IqpCircuit::new(parsed.n, parsed.generators)?;
        rebuilt.canonical = parsed.canonical;
        Ok(rebuilt)
    }
}

/// Draws `gate_count` distinct subsets uniformly from the nonempty subsets
/// of size at most `max_locality`, with angles uniform on
/// `[-INIT_ANGLE, INIT_ANGLE]`. The result is canonicalized. Errors when the
/// family does not contain that many subsets.
pub fn random_circuit<T: Scalar>(
    n: usize,
    gate_count: usize,
    max_locality: usize,
    seed: u64,
) -> Result<IqpCircuit<T>> {
    if n == 0 || n > 64 {
        return Err(Error::Config(format!("line count must be in 1..=64, got {n}")));
    }
    if max_locality == 0 {
        return Err(Error::Config("gate locality must be at least 1".into()));
    }
    let available = subsets_up_to_order(n, max_locality);
    if (gate_count as u128) > available {
        return Err(Error::Config(format!(
            "requested {gate_count} distinct gates but only {available} subsets of size <= {} exist over {n} lines",
            max_locality.min(n)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<u64> = Vec::with_capacity(available.min(1 << 22) as usize);
    for k in 1..=max_locality.min(n) {
        pool.extend(masks_of_order(n, k));
    }
    for i in 0..gate_count {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(gate_count);
    let generators = pool
        .into_iter()
        .map(|mask| IqpGenerator {
            mask,
            theta: T::from_f64_const((rng.random::<f64>() * 2.0 - 1.0) * INIT_ANGLE),
        })
        .collect();
    let mut c = IqpCircuit::new(n, generators)?;
    c.canonicalize();
    Ok(c)
}

/// Dense output distribution over `2^n` outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDistribution<T> {
    n: usize,
    probs: Vec<T>,
}

impl<T: Scalar> OutputDistribution<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn total(&self) -> T {
        let mut acc = KahanSum::new();
        for &p in &self.probs {
            acc.add(p);
        }
        acc.total()
    }

    /// Total variation distance to another distribution of the same width.
    pub fn tv_to(&self, other: &OutputDistribution<T>) -> Result<T> {
        if self.n != other.n {
            return Err(Error::WidthMismatch {
                left: self.n,
                right: other.n,
            });
        }
        let mut acc = KahanSum::new();
        for (&a, &b) in self.probs.iter().zip(other.probs.iter()) {
            acc.add((a - b).abs());
        }
        Ok(T::from_f64_const(0.5) * acc.total())
    }
}

/// Intermediates of the dense forward pass, reused by the analytic loss
/// gradient.
pub(crate) struct Forward<T> {
    pub phase: Vec<T>,
    pub amplitude: Vec<Complex<T>>,
    pub probs: Vec<T>,
}

pub(crate) fn forward<T: Scalar>(c: &IqpCircuit<T>) -> Result<Forward<T>> {
    let n = c.n;
    if n > SIM_LIMIT {
        return Err(Error::capacity("dense circuit simulation", n, SIM_LIMIT));
    }
    let len = 1usize << n;
    // phi = WHT of the sparse angle vector.
    let mut phase = vec![T::zero(); len];
    for g in &c.generators {
        phase[g.mask as usize] += g.theta;
    }
    wht_in_place(&mut phase);

    let mut amplitude: Vec<Complex<T>> = phase
        .iter()
        .map(|&phi| Complex::from_polar(T::one(), phi))
        .collect();
    wht_in_place(&mut amplitude);
    let scale = T::from_f64_const(len as f64);
    let mut probs = Vec::with_capacity(len);
    for a in amplitude.iter_mut() {
        *a = Complex::new(a.re / scale, a.im / scale);
        probs.push(a.norm_sqr());
    }
    Ok(Forward {
        phase,
        amplitude,
        probs,
    })
}

/// Exact output distribution of the circuit.
pub fn exact_distribution<T: Scalar>(c: &IqpCircuit<T>) -> Result<OutputDistribution<T>> {
    let f = forward(c)?;
    let dist = OutputDistribution {
        n: c.n,
        probs: f.probs,
    };
    // Non-finite angles flow through so training loops can report them.
    debug_assert!(
        !dist.total().is_finite() || (dist.total() - T::one()).abs() < T::from_f64_const(1e-9),
        "distribution normalization drifted"
    );
    Ok(dist)
}

/// Draws `shots` i.i.d. outcomes from the exact distribution by inverse CDF.
pub fn sample<T: Scalar>(c: &IqpCircuit<T>, shots: usize, seed: u64) -> Result<BitDataset> {
    if shots == 0 {
        return Err(Error::Config("shot count must be at least 1".into()));
    }
    let dist = exact_distribution(c)?;
    sample_from_distribution(&dist, shots, seed)
}

/// Inverse-CDF sampler over an explicit dense distribution.
pub fn sample_from_distribution<T: Scalar>(
    dist: &OutputDistribution<T>,
    shots: usize,
    seed: u64,
) -> Result<BitDataset> {
    let mut cdf = Vec::with_capacity(dist.probs.len());
    let mut acc = T::zero();
    for &p in &dist.probs {
        acc += p;
        cdf.push(acc.to_f64().expect("probability fits f64"));
    }
    let top = *cdf.last().expect("distribution is nonempty");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words = Vec::with_capacity(shots);
    for _ in 0..shots {
        let u = rng.random::<f64>() * top;
        let idx = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        words.push(idx as u64);
    }
    BitDataset::from_words(dist.n, words, shots)
}

/// `<Z_s>` for every subset mask at once: one transform of the probability
/// vector. Entry 0 (the empty subset) is always 1.
pub fn all_z_expectations<T: Scalar>(c: &IqpCircuit<T>) -> Result<Vec<T>> {
    let dist = exact_distribution(c)?;
    let mut buf = dist.probs;
    wht_in_place(&mut buf);
    Ok(buf)
}
