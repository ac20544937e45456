//! Walsh–Hadamard power spectra and the spectral correlation indicator.
//!
//! For a probability mass function `p` on `{0,1}^n`, the normalized squared
//! parity power is
//!
//! ```text
//! P(s) = | 2^-n * sum_x p(x) * chi_s(x) |^2,   chi_s(x) = (-1)^(xor of x over s)
//! ```
//!
//! Aggregating `P(s)` by subset size `k = |s|` and normalizing gives the
//! order spectrum `m = (m_0, ..., m_n)`. For i.i.d. fair bits the sampled
//! order spectrum matches the binomial reference `b_k = C(n,k) / 2^n`, so the
//! Jensen–Shannon divergence `D_JS(m || b)` (the QCLI value) measures how far
//! the parity power distribution strays from unstructured noise. It is
//! bounded in `[0, 1]`, permutation-invariant and comparable across widths.
//!
//! Note the indicator is defined on *sampled* data: the exact uniform pmf has
//! all its power at order 0 (`m = (1, 0, ..., 0)`), while finite i.i.d.
//! samples of it spread residual power binomially. Null statements about the
//! indicator always refer to the sampled regime.
//!
//! Widths above [`DENSE_SPECTRUM_LIMIT`] cannot materialize the `2^n` power
//! table; [`qcli_mc`] estimates the order spectrum instead by sampling
//! subsets per order without replacement and reweighting by
//! `C(n,k) / count_k`, with the budget split equally across orders (capped
//! by stratum size, leftover granted to the largest uncapped strata first).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

use crate::bits::{binomial, indices_to_words, ln_binomial, masked_parity, unrank_subset, words_for};
use crate::datasets::{empirical_pmf, BitDataset, EmpiricalPmf};
use crate::error::{Error, Result};
use crate::stats::{kahan_sum, KahanSum};
use crate::wht::wht_in_place;
use crate::Scalar;

/// Dense power tables keep `2^n` entries; this caps `n`.
pub const DENSE_SPECTRUM_LIMIT: usize = 24;

/// Clipping floor applied to order spectra before divergence evaluation.
pub const JS_CLIP_EPSILON: f64 = 1e-12;

/// Default subset budget for the Monte-Carlo estimator.
pub const DEFAULT_MC_BUDGET: usize = 20_000;

/// Power fraction per interaction order; entries are nonnegative and sum
/// to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSpectrum<T> {
    n: usize,
    m: Vec<T>,
}

impl<T: Scalar> OrderSpectrum<T> {
    pub fn new(n: usize, m: Vec<T>) -> Result<Self> {
        if m.len() != n + 1 {
            return Err(Error::Shape(format!(
                "order spectrum for width {} needs {} entries, got {}",
                n,
                n + 1,
                m.len()
            )));
        }
        let mut total = T::zero();
        for &v in &m {
            if v < T::zero() {
                return Err(Error::Format("order spectrum entries must be nonnegative".into()));
            }
            total += v;
        }
        let tol = T::from_f64_const(1e-9).max(T::epsilon() * T::from_f64_const(8.0 * m.len() as f64));
        if (total - T::one()).abs() > tol {
            return Err(Error::Format(format!(
                "order spectrum sums to {total}, expected 1"
            )));
        }
        Ok(OrderSpectrum { n, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn fractions(&self) -> &[T] {
        &self.m
    }

    /// Entries clipped below at `JS_CLIP_EPSILON` and renormalized; the form
    /// divergences are evaluated on.
    pub fn clipped(&self) -> Vec<T> {
        let eps = T::from_f64_const(JS_CLIP_EPSILON);
        let clipped: Vec<T> = self.m.iter().map(|&v| v.max(eps)).collect();
        let total: T = clipped.iter().copied().sum();
        clipped.into_iter().map(|v| v / total).collect()
    }
}

/// Dense table of `P(s)` for every subset mask `s` of `[n]`.
#[derive(Debug, Clone)]
pub struct WalshPowerTable<T> {
    n: usize,
    p: Vec<T>,
}

impl<T: Scalar> WalshPowerTable<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Power of the subset with the given mask.
    pub fn power(&self, mask: u64) -> T {
        self.p[mask as usize]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.p
    }

    pub fn total(&self) -> T {
        kahan_sum(self.p.iter().copied())
    }

    /// The `count` strongest subsets, descending by power (ties broken by
    /// mask for determinism). The sparse view used in diagnostics.
    pub fn dominant_subsets(&self, count: usize) -> Vec<SubsetPower<T>> {
        let mut all: Vec<SubsetPower<T>> = self
            .p
            .iter()
            .enumerate()
            .map(|(mask, &power)| SubsetPower {
                mask: mask as u64,
                power,
            })
            .collect();
        all.sort_by(|a, b| {
            b.power
                .partial_cmp(&a.power)
                .expect("powers are finite")
                .then(a.mask.cmp(&b.mask))
        });
        all.truncate(count);
        all
    }
}

/// One subset's normalized power; the sparse counterpart of the dense table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetPower<T> {
    pub mask: u64,
    pub power: T,
}

/// Parity expectations `E_p[chi_s]` for every mask, from the dense pmf.
/// This is the plain WHT of the mass vector and the bridge into the
/// parity-basis MMD.
pub fn parity_expectations<T: Scalar>(pmf: &EmpiricalPmf<T>) -> Result<Vec<T>> {
    let n = pmf.n();
    let dense = pmf.dense().ok_or_else(|| {
        Error::capacity_hint(
            "parity expectation table",
            n,
            DENSE_SPECTRUM_LIMIT,
            "; use the Monte-Carlo estimator qcli_mc for wider data",
        )
    })?;
    let mut buf = dense.to_vec();
    wht_in_place(&mut buf);
    Ok(buf)
}

/// Full `P(s)` table via one fast transform. Dense regime only.
pub fn walsh_power<T: Scalar>(pmf: &EmpiricalPmf<T>) -> Result<WalshPowerTable<T>> {
    let n = pmf.n();
    if n > DENSE_SPECTRUM_LIMIT {
        return Err(Error::capacity_hint(
            "dense Walsh power table",
            n,
            DENSE_SPECTRUM_LIMIT,
            "; use the Monte-Carlo estimator qcli_mc for wider data",
        ));
    }
    let mut buf = parity_expectations(pmf)?;
    let scale = T::from_f64_const((1u64 << n) as f64);
    for v in buf.iter_mut() {
        let normalized = *v / scale;
        *v = normalized * normalized;
    }
    Ok(WalshPowerTable { n, p: buf })
}

/// Aggregates subset powers into order fractions.
pub fn order_spectrum<T: Scalar>(powers: &WalshPowerTable<T>) -> Result<OrderSpectrum<T>> {
    let n = powers.n;
    let mut sums = vec![KahanSum::<T>::new(); n + 1];
    for (mask, &p) in powers.p.iter().enumerate() {
        sums[mask.count_ones() as usize].add(p);
    }
    let by_order: Vec<T> = sums.iter().map(|s| s.total()).collect();
    let total: T = by_order.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::UndefinedSpectrum);
    }
    let m: Vec<T> = by_order.into_iter().map(|v| (v / total).max(T::zero())).collect();
    OrderSpectrum::new(n, m)
}

/// Binomial reference spectrum `b_k = C(n,k) / 2^n` of i.i.d. fair bits.
pub fn binomial_baseline<T: Scalar>(n: usize) -> OrderSpectrum<T> {
    assert!(n >= 1);
    let mut m = Vec::with_capacity(n + 1);
    // Multiplicative recurrence keeps every entry finite for n up to 64+.
    let mut v = T::from_f64_const(0.5).powi(n as i32);
    m.push(v);
    for k in 0..n {
        v = v * T::from_f64_const((n - k) as f64) / T::from_f64_const((k + 1) as f64);
        m.push(v);
    }
    OrderSpectrum { n, m }
}

/// Jensen–Shannon divergence between two order spectra, base-2 logs, after
/// clipping and renormalization. Symmetric, bounded in `[0, 1]`.
pub fn js_divergence<T: Scalar>(a: &OrderSpectrum<T>, b: &OrderSpectrum<T>) -> Result<T> {
    if a.n != b.n {
        return Err(Error::WidthMismatch { left: a.n, right: b.n });
    }
    let (pa, pb) = (a.clipped(), b.clipped());
    let half = T::from_f64_const(0.5);
    let ln2 = T::from_f64_const(std::f64::consts::LN_2);
    let mut acc = KahanSum::new();
    for (&x, &y) in pa.iter().zip(pb.iter()) {
        let mid = half * (x + y);
        acc.add(half * x * (x / mid).ln() / ln2);
        acc.add(half * y * (y / mid).ln() / ln2);
    }
    Ok(acc.total().max(T::zero()))
}

/// Quadratic (small-deviation) approximation of the divergence:
/// `sum_k (m_k - b_k)^2 / b_k / (8 ln 2)`.
pub fn second_order_js<T: Scalar>(a: &OrderSpectrum<T>, b: &OrderSpectrum<T>) -> Result<T> {
    if a.n != b.n {
        return Err(Error::WidthMismatch { left: a.n, right: b.n });
    }
    let eps = T::from_f64_const(JS_CLIP_EPSILON);
    let mut acc = KahanSum::new();
    for (&x, &y) in a.m.iter().zip(b.m.iter()) {
        let d = x - y;
        acc.add(d * d / y.max(eps));
    }
    let scale = T::from_f64_const(8.0 * std::f64::consts::LN_2);
    Ok(acc.total() / scale)
}

/// Total variation distance between two order spectra.
pub fn tv_distance<T: Scalar>(a: &OrderSpectrum<T>, b: &OrderSpectrum<T>) -> Result<T> {
    if a.n != b.n {
        return Err(Error::WidthMismatch { left: a.n, right: b.n });
    }
    let mut acc = KahanSum::new();
    for (&x, &y) in a.m.iter().zip(b.m.iter()) {
        acc.add((x - y).abs());
    }
    Ok(T::from_f64_const(0.5) * acc.total())
}

/// Exact spectral indicator of a dataset: empirical pmf, dense power table,
/// order aggregation, divergence from the binomial reference.
pub fn qcli_exact<T: Scalar>(d: &BitDataset) -> Result<T> {
    let spectrum = order_spectrum_exact::<T>(d)?;
    js_divergence(&spectrum, &binomial_baseline(d.n()))
}

/// Exact order spectrum of a dataset (dense regime).
pub fn order_spectrum_exact<T: Scalar>(d: &BitDataset) -> Result<OrderSpectrum<T>> {
    let pmf = empirical_pmf::<T>(d);
    let powers = walsh_power(&pmf)?;
    order_spectrum(&powers)
}

/// Monte-Carlo estimate of the indicator together with its order spectrum
/// and the per-order subset counts actually used (for auditability).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QcliMcEstimate<T> {
    pub value: T,
    pub spectrum: OrderSpectrum<T>,
    pub subsets_per_order: Vec<usize>,
}

/// Splits `budget` across the `n + 1` orders: equal shares capped at the
/// stratum size, leftover granted to the largest uncapped strata first
/// (ties to the lower order).
fn allocate_budget(n: usize, budget: usize) -> Vec<usize> {
    let sizes: Vec<u128> = (0..=n).map(|k| binomial(n, k)).collect();
    let base = (budget / (n + 1)) as u128;
    let mut alloc: Vec<u128> = sizes.iter().map(|&c| c.min(base)).collect();
    let mut leftover = budget as u128 - alloc.iter().sum::<u128>();
    while leftover > 0 {
        let mut best: Option<(usize, u128)> = None;
        for k in 0..=n {
            let room = sizes[k] - alloc[k];
            if room > 0 && best.map(|(_, r)| room > r).unwrap_or(true) {
                best = Some((k, room));
            }
        }
        match best {
            Some((k, room)) => {
                let grant = leftover.min(room);
                alloc[k] += grant;
                leftover -= grant;
            }
            None => break, // every stratum exhausted; surplus budget unused
        }
    }
    alloc.iter().map(|&a| a as usize).collect()
}

/// Draws `count` distinct subsets of size `k` from `[n]`, uniformly without
/// replacement, as packed mask words. Selection works on combinadic ranks,
/// so it is independent of the width's word count.
fn sample_subsets(
    n: usize,
    k: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<u64>> {
    let total = binomial(n, k);
    debug_assert!((count as u128) <= total);
    if total == u128::MAX {
        // The stratum size saturates the exact arithmetic; collisions are
        // astronomically unlikely, so draw sorted index sets directly.
        let mut seen: HashSet<Vec<u32>> = HashSet::with_capacity(count);
        let mut pool: Vec<u32> = (0..n as u32).collect();
        while seen.len() < count {
            for i in 0..k {
                let j = rng.random_range(i..pool.len());
                pool.swap(i, j);
            }
            let mut subset: Vec<u32> = pool[..k].to_vec();
            subset.sort_unstable();
            seen.insert(subset);
        }
        let mut subsets: Vec<Vec<u32>> = seen.into_iter().collect();
        subsets.sort_unstable();
        return subsets
            .into_iter()
            .map(|s| indices_to_words(&s, n))
            .collect();
    }
    let mut ranks: Vec<u128> = if count as u128 == total {
        (0..total).collect()
    } else if total <= 2 * count as u128 {
        // Dense stratum (count fits in memory by construction): enumerate
        // ranks and take a seeded partial shuffle.
        let mut pool: Vec<u128> = (0..total).collect();
        for i in 0..count {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    } else {
        // Sparse stratum: rejection on ranks stays cheap since count is
        // below half the stratum.
        let mut seen = HashSet::with_capacity(count);
        while seen.len() < count {
            seen.insert(rng.random_range(0..total));
        }
        seen.into_iter().collect()
    };
    ranks.sort_unstable();
    ranks
        .into_iter()
        .map(|r| indices_to_words(&unrank_subset(n, k, r), n))
        .collect()
}

/// Monte-Carlo spectral indicator for any width. Subset powers are always
/// evaluated from the samples themselves (never a dense pmf), so the cost is
/// `O(budget * M)` parities. Deterministic in `seed`, including under
/// parallel evaluation: every order stratum derives its own generator.
pub fn qcli_mc<T: Scalar>(d: &BitDataset, budget: usize, seed: u64) -> Result<QcliMcEstimate<T>> {
    let n = d.n();
    if budget < n + 1 {
        return Err(Error::BudgetTooSmall {
            budget,
            min: n + 1,
        });
    }
    let alloc = allocate_budget(n, budget);

    // Collapse to unique samples so each parity costs support-size work.
    let wps = words_for(n);
    let mut uniques: HashMap<&[u64], f64> = HashMap::new();
    for s in d.iter() {
        *uniques.entry(s).or_insert(0.0) += 1.0;
    }
    let inv_m = 1.0 / d.len() as f64;
    let support: Vec<(&[u64], f64)> = {
        let mut v: Vec<(&[u64], f64)> = uniques.into_iter().collect();
        v.sort_unstable_by(|a, b| a.0.cmp(b.0));
        v.into_iter().map(|(s, c)| (s, c * inv_m)).collect()
    };

    // sum_x p(x) chi_s(x) squared, scaled to match the dense table.
    let pow_scale = 0.25f64.powi(n as i32); // 4^-n; finite for any realistic n
    let estimate_power = |mask: &[u64]| -> f64 {
        let mut acc = KahanSum::<f64>::new();
        for (sample, weight) in &support {
            if masked_parity(sample, mask) {
                acc.add(-*weight);
            } else {
                acc.add(*weight);
            }
        }
        let e = acc.total();
        e * e * pow_scale
    };

    let per_order: Vec<(usize, f64)> = (0..=n)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed ^ (k as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            );
            let count = alloc[k];
            let masks = sample_subsets(n, k, count, &mut rng);
            debug_assert!(masks.iter().all(|m| m.len() == wps));
            let sum: f64 = kahan_sum(masks.par_iter().map(|m| estimate_power(m)).collect::<Vec<_>>());
            let stratum = binomial(n, k);
            let reweight = if stratum == u128::MAX {
                (ln_binomial(n, k) - (count as f64).ln()).exp()
            } else {
                stratum as f64 / count as f64
            };
            (count, reweight * sum)
        })
        .collect();

    let subsets_per_order: Vec<usize> = per_order.iter().map(|(c, _)| *c).collect();
    let totals: Vec<f64> = per_order.iter().map(|(_, a)| *a).collect();
    let grand: f64 = kahan_sum(totals.iter().copied());
    if !(grand > 0.0) {
        return Err(Error::UndefinedSpectrum);
    }
    let m: Vec<T> = totals
        .iter()
        .map(|a| T::from_f64_const((a / grand).max(0.0)))
        .collect();
    let spectrum = OrderSpectrum::new(n, m)?;
    let value = js_divergence(&spectrum, &binomial_baseline(n))?;
    Ok(QcliMcEstimate {
        value,
        spectrum,
        subsets_per_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{even_parity, iid_uniform};
    use proptest::prelude::*;

    /// Brute-force evaluation of the defining power formula; the oracle for
    /// the fast path.
    fn walsh_power_direct(pmf: &EmpiricalPmf<f64>) -> Vec<f64> {
        let n = pmf.n();
        let dense = pmf.dense().unwrap();
        let scale = (1u64 << n) as f64;
        (0..1usize << n)
            .map(|s| {
                let mut sum = 0.0;
                for (x, &p) in dense.iter().enumerate() {
                    let sign = if (x & s).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
                    sum += sign * p;
                }
                (sum / scale).powi(2)
            })
            .collect()
    }

    fn uniform_pmf(n: usize) -> EmpiricalPmf<f64> {
        let len = 1usize << n;
        EmpiricalPmf::from_dense(n, vec![1.0 / len as f64; len]).unwrap()
    }

    fn even_parity_pmf(n: usize) -> EmpiricalPmf<f64> {
        let len = 1usize << n;
        let mut mass = vec![0.0; len];
        let support = len / 2;
        for (x, m) in mass.iter_mut().enumerate() {
            if x.count_ones() % 2 == 0 {
                *m = 1.0 / support as f64;
            }
        }
        EmpiricalPmf::from_dense(n, mass).unwrap()
    }

    #[test]
    fn uniform_pmf_power_sits_at_empty_set() {
        let p = uniform_pmf(2);
        let table = walsh_power(&p).unwrap();
        assert!((table.power(0) - 1.0 / 16.0).abs() < 1e-15);
        for mask in 1..4u64 {
            assert!(table.power(mask).abs() < 1e-18);
        }
    }

    #[test]
    fn point_mass_power_is_flat() {
        for n in [2usize, 3, 5] {
            let len = 1usize << n;
            let mut mass = vec![0.0; len];
            mass[0] = 1.0;
            let p = EmpiricalPmf::from_dense(n, mass).unwrap();
            let table = walsh_power(&p).unwrap();
            let expect = 0.25f64.powi(n as i32);
            for mask in 0..len as u64 {
                assert!((table.power(mask) - expect).abs() < 1e-15);
            }
            // Flat power aggregates to the binomial baseline exactly.
            let m = order_spectrum(&table).unwrap();
            let b = binomial_baseline::<f64>(n);
            for (x, y) in m.fractions().iter().zip(b.fractions()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn even_parity_matches_brute_force() {
        let p = even_parity_pmf(3);
        let table = walsh_power(&p).unwrap();
        let direct = walsh_power_direct(&p);
        for (mask, want) in direct.iter().enumerate() {
            assert!((table.power(mask as u64) - want).abs() < 1e-15);
        }
        // The two structured subsets dominate the sparse view.
        let top = table.dominant_subsets(2);
        let masks: Vec<u64> = top.iter().map(|s| s.mask).collect();
        assert_eq!(masks, vec![0b000, 0b111]);
        assert!((table.power(0) - 1.0 / 64.0).abs() < 1e-15);
        assert!((table.power(0b111) - 1.0 / 64.0).abs() < 1e-15);
        let m = order_spectrum(&table).unwrap();
        assert_eq!(m.fractions().len(), 4);
        assert!((m.fractions()[0] - 0.5).abs() < 1e-12);
        assert!(m.fractions()[1].abs() < 1e-12);
        assert!(m.fractions()[2].abs() < 1e-12);
        assert!((m.fractions()[3] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exact_uniform_spectrum_is_order_zero() {
        let p = uniform_pmf(4);
        let m = order_spectrum(&walsh_power(&p).unwrap()).unwrap();
        assert!((m.fractions()[0] - 1.0).abs() < 1e-12);
        for v in &m.fractions()[1..] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn baseline_small_cases() {
        let b2 = binomial_baseline::<f64>(2);
        assert_eq!(b2.fractions(), &[0.25, 0.5, 0.25]);
        let b1 = binomial_baseline::<f64>(1);
        assert_eq!(b1.fractions(), &[0.5, 0.5]);
        for n in 1..=64usize {
            let b = binomial_baseline::<f64>(n);
            let total: f64 = kahan_sum(b.fractions().iter().copied());
            assert!((total - 1.0).abs() < 1e-9, "n = {n}: {total}");
        }
    }

    #[test]
    fn js_zero_on_identical_and_symmetric() {
        let b = binomial_baseline::<f64>(8);
        assert!(js_divergence(&b, &b).unwrap().abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let raw: Vec<f64> = (0..9).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            let m = OrderSpectrum::new(8, raw.into_iter().map(|v| v / total).collect()).unwrap();
            let ab = js_divergence(&m, &b).unwrap();
            let ba = js_divergence(&b, &m).unwrap();
            assert!((ab - ba).abs() < 1e-14);
            assert!((0.0..=1.0).contains(&ab));
        }
    }

    /// Independent direct-summation evaluation of the clipped divergence,
    /// kept free of the production code path.
    fn js_direct(m: &[f64], b: &[f64]) -> f64 {
        let clip = |v: &[f64]| {
            let c: Vec<f64> = v.iter().map(|x| x.max(JS_CLIP_EPSILON)).collect();
            let t: f64 = c.iter().sum();
            c.into_iter().map(|x| x / t).collect::<Vec<f64>>()
        };
        let (m, b) = (clip(m), clip(b));
        let mut acc = 0.0;
        for (x, y) in m.iter().zip(b.iter()) {
            let mid = 0.5 * (x + y);
            acc += 0.5 * x * (x / mid).log2() + 0.5 * y * (y / mid).log2();
        }
        acc
    }

    #[test]
    fn js_regression_order_zero_vs_binomial_n16() {
        let mut m = vec![0.0; 17];
        m[0] = 1.0;
        let spectrum = OrderSpectrum::new(16, m.clone()).unwrap();
        let b = binomial_baseline::<f64>(16);
        let got = js_divergence(&spectrum, &b).unwrap();
        let oracle = js_direct(&m, b.fractions());
        assert!((got - oracle).abs() < 1e-12);
        // Frozen from the direct-summation oracle above.
        let frozen = 0.999_866_922_435_188_6;
        assert!(
            (got - frozen).abs() < 1e-9,
            "regression value drifted: {got} vs {frozen}"
        );
    }

    #[test]
    fn quadratic_form_tracks_js_for_small_deviations() {
        let n = 16;
        let b = binomial_baseline::<f64>(n);
        let b_min = b.fractions().iter().copied().fold(f64::INFINITY, f64::min);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let m = perturbed_spectrum(&b, b_min, &mut rng);
            let js = js_divergence(&m, &b).unwrap();
            let quad = second_order_js(&m, &b).unwrap();
            assert!(js > 0.0);
            assert!((js - quad).abs() / js <= 0.05, "js {js} quad {quad}");
            let tv = tv_distance(&m, &b).unwrap();
            let bound = (2.0 * std::f64::consts::LN_2 * js).sqrt() * 1.05;
            assert!(tv <= bound, "tv {tv} bound {bound}");
        }
    }

    /// Zero-sum perturbation with every component at most `0.01 * b_min`.
    pub(super) fn perturbed_spectrum(
        b: &OrderSpectrum<f64>,
        b_min: f64,
        rng: &mut ChaCha8Rng,
    ) -> OrderSpectrum<f64> {
        let len = b.fractions().len();
        let mut delta: Vec<f64> = (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let mean = delta.iter().sum::<f64>() / len as f64;
        for d in delta.iter_mut() {
            *d -= mean;
        }
        let max = delta.iter().map(|d| d.abs()).fold(0.0, f64::max);
        let scale = 0.01 * b_min / max;
        let m: Vec<f64> = b
            .fractions()
            .iter()
            .zip(delta.iter())
            .map(|(v, d)| v + d * scale)
            .collect();
        OrderSpectrum::new(b.n(), m).unwrap()
    }

    #[test]
    fn both_distances_vanish_on_identical() {
        let b = binomial_baseline::<f64>(10);
        assert_eq!(second_order_js(&b, &b).unwrap(), 0.0);
        assert_eq!(tv_distance(&b, &b).unwrap(), 0.0);
    }

    #[test]
    fn sampled_null_sits_below_structured_data() {
        let n = 8;
        let m = 10_000;
        let null: f64 = qcli_exact(&iid_uniform(n, m, 17)).unwrap();
        let structured: f64 = qcli_exact(&even_parity(n, m, 17)).unwrap();
        assert!(null < structured, "null {null} structured {structured}");
        assert!((0.0..=1.0).contains(&null));
        assert!((0.0..=1.0).contains(&structured));
    }

    #[test]
    fn null_spectrum_tracks_baseline_per_order() {
        // In the regime 2^n >> M the sampled null spectrum tracks the
        // binomial reference order by order for k >= 1, up to the plug-in
        // estimator's finite-M normalization (< 1% here): the k >= 1 means
        // sit at b_k * 2^n / (2^n - 1 + M), and the order-0 entry carries
        // the systematic share 1 / (1 + (2^n - 1) / M).
        let n = 16;
        let m = 500;
        let seeds = 50;
        let mut per_order: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
        for seed in 0..seeds {
            let spec = order_spectrum_exact::<f64>(&iid_uniform(n, m, 40 + seed)).unwrap();
            for (k, &v) in spec.fractions().iter().enumerate() {
                per_order[k].push(v);
            }
        }
        let b = binomial_baseline::<f64>(n);
        let correction = (1u64 << n) as f64 / (((1u64 << n) - 1) as f64 + m as f64);
        for k in 1..=n {
            let vals = &per_order[k];
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (vals.len() - 1) as f64)
                .sqrt();
            let se = sd / (vals.len() as f64).sqrt();
            let center = b.fractions()[k] * correction;
            let dev = (mean - center).abs();
            assert!(dev <= 4.0 * se, "order {k}: |{mean} - {center}| > 4 se ({se})");
            // And the uncorrected reference is still within noise + 1%.
            assert!(
                (mean - b.fractions()[k]).abs() <= 4.0 * se + 0.01 * b.fractions()[k],
                "order {k}: {mean} strays from reference {}",
                b.fractions()[k]
            );
        }
        let expected_m0 = 1.0 / (1.0 + ((1u64 << n) - 1) as f64 / m as f64);
        let m0 = per_order[0].iter().sum::<f64>() / seeds as f64;
        assert!((m0 - expected_m0).abs() / expected_m0 < 0.2, "m0 {m0} vs {expected_m0}");
    }

    #[test]
    fn qcli_is_permutation_invariant() {
        let d = even_parity(9, 4000, 23);
        let perm = vec![4, 7, 0, 8, 2, 6, 1, 5, 3];
        let permuted = d.permute_bits(&perm).unwrap();
        let a: f64 = qcli_exact(&d).unwrap();
        let b: f64 = qcli_exact(&permuted).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn parseval_identity_holds() {
        let d = iid_uniform(6, 500, 9);
        let pmf = empirical_pmf::<f64>(&d);
        let table = walsh_power(&pmf).unwrap();
        let total = table.total();
        let direct: f64 = pmf
            .dense()
            .unwrap()
            .iter()
            .map(|p| p * p)
            .sum::<f64>()
            / (1u64 << 6) as f64;
        assert!((total - direct).abs() < 1e-15);
    }

    #[test]
    fn budget_allocation_caps_and_redistributes() {
        let n = 14;
        let alloc = allocate_budget(n, 20_000);
        // 2^14 = 16384 < 20000: every stratum is fully enumerated.
        for (k, &a) in alloc.iter().enumerate() {
            assert_eq!(a as u128, binomial(n, k));
        }

        let n = 16;
        let alloc = allocate_budget(n, 20_000);
        assert_eq!(alloc.iter().sum::<usize>(), 20_000);
        for (k, &a) in alloc.iter().enumerate() {
            assert!(a as u128 <= binomial(n, k));
            assert!(a >= 1);
        }
    }

    #[test]
    fn mc_exhaustive_budget_reproduces_exact_spectrum() {
        let d = even_parity(10, 2000, 31);
        let exact = order_spectrum_exact::<f64>(&d).unwrap();
        let est = qcli_mc::<f64>(&d, 2000, 5).unwrap();
        // 2^10 = 1024 <= 2000: exhaustive, so the spectra agree to rounding.
        for (a, b) in est.spectrum.fractions().iter().zip(exact.fractions()) {
            assert!((a - b).abs() < 1e-10);
        }
        let exact_val: f64 = qcli_exact(&d).unwrap();
        assert!((est.value - exact_val).abs() < 1e-10);
        assert_eq!(
            est.subsets_per_order.iter().map(|&c| c as u128).collect::<Vec<_>>(),
            (0..=10).map(|k| binomial(10, k)).collect::<Vec<_>>()
        );
    }

    #[test]
    fn mc_is_deterministic_per_seed() {
        let d = iid_uniform(16, 3000, 2);
        let a = qcli_mc::<f64>(&d, 3000, 77).unwrap();
        let b = qcli_mc::<f64>(&d, 3000, 77).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.subsets_per_order, b.subsets_per_order);
        let c = qcli_mc::<f64>(&d, 3000, 78).unwrap();
        assert_ne!(a.value.to_bits(), c.value.to_bits());
    }

    #[test]
    fn mc_tracks_exact_value_under_subsampling() {
        // n = 16 with budget 20000 < 2^16 exercises true subset sampling.
        let mut gaps = Vec::new();
        for seed in 0..4 {
            let d = even_parity(16, 2000, 100 + seed);
            let exact: f64 = qcli_exact(&d).unwrap();
            let est = qcli_mc::<f64>(&d, DEFAULT_MC_BUDGET, seed).unwrap();
            gaps.push((est.value - exact).abs());
        }
        let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
        assert!(mean_gap <= 0.02, "mean gap {mean_gap}");
    }

    #[test]
    fn mc_budget_below_orders_errors() {
        let d = iid_uniform(10, 50, 0);
        assert!(matches!(
            qcli_mc::<f64>(&d, 10, 0),
            Err(Error::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn wide_data_dense_path_errors_with_mc_hint() {
        let line: String = std::iter::repeat_n('0', 30).collect();
        let d = BitDataset::from_lines(&[line.as_str()]).unwrap();
        let err = qcli_exact::<f64>(&d).unwrap_err();
        match err {
            Error::Capacity { hint, .. } => assert!(hint.contains("qcli_mc")),
            other => panic!("unexpected error {other:?}"),
        }
        // The MC path handles the same dataset.
        let est = qcli_mc::<f64>(&d, 100, 1).unwrap();
        assert!((0.0..=1.0).contains(&est.value));
    }

    #[test]
    fn mc_handles_saturated_stratum_sizes() {
        // At width 200 the middle strata exceed exact 128-bit arithmetic;
        // the estimator switches to direct index-set sampling and log-space
        // reweighting and still produces a valid spectrum.
        let d = iid_uniform(200, 150, 11);
        let est = qcli_mc::<f64>(&d, 402, 3).unwrap();
        assert!((0.0..=1.0).contains(&est.value));
        assert_eq!(est.subsets_per_order.len(), 201);
        assert_eq!(est.subsets_per_order.iter().sum::<usize>(), 402);
        let again = qcli_mc::<f64>(&d, 402, 3).unwrap();
        assert_eq!(est.value.to_bits(), again.value.to_bits());
    }

    #[test]
    fn mc_handles_widths_beyond_one_word() {
        // 70-bit samples exercise the multi-word parity path end to end.
        let d = iid_uniform(70, 400, 5);
        let est = qcli_mc::<f64>(&d, 710, 9).unwrap();
        assert!((0.0..=1.0).contains(&est.value));
        assert_eq!(est.subsets_per_order.len(), 71);
        assert!(est.value < 0.2, "wide null should be small, got {}", est.value);
        let again = qcli_mc::<f64>(&d, 710, 9).unwrap();
        assert_eq!(est.value.to_bits(), again.value.to_bits());
    }

    #[test]
    fn all_zero_spectrum_is_rejected() {
        let table = WalshPowerTable::<f64> {
            n: 3,
            p: vec![0.0; 8],
        };
        assert!(matches!(
            order_spectrum(&table),
            Err(Error::UndefinedSpectrum)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn spectrum_bounds_hold(seed in 0u64..500, n in 2usize..9) {
            let d = iid_uniform(n, 200, seed);
            let v: f64 = qcli_exact(&d).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            let m = order_spectrum_exact::<f64>(&d).unwrap();
            let total: f64 = m.fractions().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
