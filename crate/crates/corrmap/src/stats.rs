//! Small numeric helpers: compensated summation, rank statistics and the
//! centered moving average shared by the envelope estimators.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::Scalar;

/// Kahan–Babuska compensated accumulator.
#[derive(Debug, Clone, Copy)]
pub struct KahanSum<T> {
    sum: T,
    carry: T,
}

impl<T: Scalar> Default for KahanSum<T> {
    fn default() -> Self {
        KahanSum {
            sum: T::zero(),
            carry: T::zero(),
        }
    }
}

impl<T: Scalar> KahanSum<T> {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: T) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.carry += (self.sum - t) + value;
        } else {
            self.carry += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> T {
        self.sum + self.carry
    }
}

/// Sums with compensation.
pub fn kahan_sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let mut acc = KahanSum::new();
    for v in values {
        acc.add(v);
    }
    acc.total()
}

/// Centered moving average with the window shrinking symmetrically at the
/// edges. `window` is forced odd by extending even values downward.
pub fn moving_average<T: Scalar>(values: &[T], window: usize) -> Vec<T> {
    if values.is_empty() || window <= 1 {
        return values.to_vec();
    }
    let half = (window - 1) / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(values.len() - 1);
            let count = T::from_f64_const((hi - lo + 1) as f64);
            values[lo..=hi].iter().copied().sum::<T>() / count
        })
        .collect()
}

/// Average ranks (1-based, ties averaged).
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Two-sided permutation p-value for the Spearman correlation: the fraction
/// of seeded rank permutations whose |rho| reaches the observed |rho|, with
/// the +1 correction so the estimate is never exactly zero.
pub fn spearman_perm_pvalue(x: &[f64], y: &[f64], permutations: usize, seed: u64) -> f64 {
    let rx = average_ranks(x);
    let mut ry = average_ranks(y);
    let observed = pearson(&rx, &ry).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..permutations {
        ry.shuffle(&mut rng);
        if pearson(&rx, &ry).abs() >= observed {
            hits += 1;
        }
    }
    (hits + 1) as f64 / (permutations + 1) as f64
}
