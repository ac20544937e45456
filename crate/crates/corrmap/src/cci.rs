//! Total correlation, pairwise mutual information, the Chow–Liu tree and
//! the beyond-pairwise complexity indicator.
//!
//! The indicator is `cci = 1 - tree_tc / total_tc`, where `total_tc` is the
//! total correlation `sum_i H(X_i) - H(X)` and `tree_tc` the weight of the
//! maximum spanning tree over pairwise mutual information. Everything uses
//! plug-in (maximum likelihood) entropies with base-2 logs and the
//! convention `0 log 0 = 0`; when the total correlation is numerically zero
//! there is no dependence to explain and the indicator reports 0.
//!
//! The one identity that pins all three estimators together is
//! `D_KL(p || p_T) = total_tc - tree_tc` for the tree distribution `p_T`
//! built from `p`'s own marginals; [`tree_kl_check`] evaluates both sides
//! directly and is the module's primary correctness oracle.

use serde::{Deserialize, Serialize};

use crate::datasets::{empirical_pmf, BitDataset, EmpiricalPmf, PmfStorage};
use crate::error::{Error, Result};
use crate::stats::KahanSum;
use crate::Scalar;

/// Joint entropies materialize `2^n` tables up to this width.
pub const DENSE_ENTROPY_LIMIT: usize = 24;

/// Explicit tree distributions are materialized up to this width.
pub const TREE_CHECK_LIMIT: usize = 16;

/// Symmetric matrix of pairwise mutual information in bits. Diagonal
/// entries are unused and kept at zero; tiny negative estimates are clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct MutualInfoMatrix<T> {
    n: usize,
    mi: Vec<T>,
}

impl<T: Scalar> MutualInfoMatrix<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.mi[i * self.n + j]
    }

    fn set_sym(&mut self, i: usize, j: usize, v: T) {
        self.mi[i * self.n + j] = v;
        self.mi[j * self.n + i] = v;
    }
}

/// Spanning tree over the variables with mutual-information edge weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel<T> {
    /// Edges `(i, j, weight)` with `i < j`.
    pub edges: Vec<(usize, usize, T)>,
    /// Total correlation captured by the tree: the sum of edge weights.
    pub tree_tc: T,
}

/// Indicator report. Sample count and observed support size are included so
/// users can judge how much to trust the plug-in entropies behind the
/// numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CciReport<T> {
    pub total_tc: T,
    pub tree_tc: T,
    pub cci: T,
    pub sample_count: usize,
    pub support_size: usize,
}

fn entropy_term<T: Scalar>(p: T) -> T {
    if p > T::zero() {
        -p * p.log2()
    } else {
        T::zero()
    }
}

fn mi_from_table<T: Scalar>(joint: &[T; 4], pi1: T, pj1: T) -> T {
    // I(X;Y) = H(X) + H(Y) - H(X,Y), all plug-in.
    let hx = entropy_term(T::one() - pi1) + entropy_term(pi1);
    let hy = entropy_term(T::one() - pj1) + entropy_term(pj1);
    let hxy: T = joint.iter().map(|&p| entropy_term(p)).sum();
    (hx + hy - hxy).max(T::zero())
}

/// Pairwise mutual information from sample counts.
pub fn mutual_info_matrix<T: Scalar>(d: &BitDataset) -> MutualInfoMatrix<T> {
    let n = d.n();
    let m = d.len() as f64;
    let mut ones = vec![0u64; n];
    let mut both = vec![0u64; n * n]; // upper triangle used
    for sample in d.iter() {
        let mut set = Vec::with_capacity(n);
        for (w, word) in sample.iter().enumerate() {
            let mut rest = *word;
            while rest != 0 {
                let b = w * 64 + rest.trailing_zeros() as usize;
                set.push(b);
                rest &= rest - 1;
            }
        }
        for (a, &i) in set.iter().enumerate() {
            ones[i] += 1;
            for &j in &set[a + 1..] {
                both[i * n + j] += 1;
            }
        }
    }
    let mut out = MutualInfoMatrix {
        n,
        mi: vec![T::zero(); n * n],
    };
    for i in 0..n {
        let pi1 = ones[i] as f64 / m;
        for j in i + 1..n {
            let pj1 = ones[j] as f64 / m;
            let p11 = both[i * n + j] as f64 / m;
            let p10 = pi1 - p11;
            let p01 = pj1 - p11;
            let p00 = 1.0 - p11 - p10 - p01;
            let joint = [
                T::from_f64_const(p00.max(0.0)),
                T::from_f64_const(p01.max(0.0)),
                T::from_f64_const(p10.max(0.0)),
                T::from_f64_const(p11.max(0.0)),
            ];
            let v = mi_from_table(&joint, T::from_f64_const(pi1), T::from_f64_const(pj1));
            out.set_sym(i, j, v);
        }
    }
    out
}

/// Pairwise mutual information from an explicit pmf (marginalizing over the
/// support). Agrees with [`mutual_info_matrix`] on the dataset's empirical
/// pmf.
pub fn mutual_info_from_pmf<T: Scalar>(pmf: &EmpiricalPmf<T>) -> MutualInfoMatrix<T> {
    let n = pmf.n();
    let mut ones = vec![T::zero(); n];
    let mut both = vec![T::zero(); n * n];
    let mut accumulate = |bits: &[u64], p: T| {
        let mut set = Vec::with_capacity(n);
        for (w, word) in bits.iter().enumerate() {
            let mut rest = *word;
            while rest != 0 {
                set.push(w * 64 + rest.trailing_zeros() as usize);
                rest &= rest - 1;
            }
        }
        for (a, &i) in set.iter().enumerate() {
            ones[i] += p;
            for &j in &set[a + 1..] {
                both[i * n + j] += p;
            }
        }
    };
    match pmf.storage() {
        PmfStorage::Dense(v) => {
            for (x, &p) in v.iter().enumerate() {
                if p > T::zero() {
                    accumulate(&[x as u64], p);
                }
            }
        }
        PmfStorage::Sparse(map) => {
            for (k, &p) in map.iter() {
                accumulate(k, p);
            }
        }
    }
    let mut out = MutualInfoMatrix {
        n,
        mi: vec![T::zero(); n * n],
    };
    for i in 0..n {
        for j in i + 1..n {
            let p11 = both[i * n + j];
            let p10 = (ones[i] - p11).max(T::zero());
            let p01 = (ones[j] - p11).max(T::zero());
            let p00 = (T::one() - p11 - p10 - p01).max(T::zero());
            let v = mi_from_table(&[p00, p01, p10, p11], ones[i], ones[j]);
            out.set_sym(i, j, v);
        }
    }
    out
}

/// Maximum-weight spanning tree over the mutual-information graph
/// (Kruskal). Among equal weights the lexicographically smallest `(i, j)`
/// edge wins, so the output is deterministic.
pub fn chow_liu_tree<T: Scalar>(mi: &MutualInfoMatrix<T>) -> TreeModel<T> {
    let n = mi.n();
    assert!(n >= 2, "spanning tree needs at least two variables");
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            edges.push((i, j));
        }
    }
    edges.sort_by(|&(ai, aj), &(bi, bj)| {
        mi.get(bi, bj)
            .partial_cmp(&mi.get(ai, aj))
            .expect("mutual information is finite")
            .then(ai.cmp(&bi))
            .then(aj.cmp(&bj))
    });

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    let mut chosen = Vec::with_capacity(n - 1);
    let mut total = KahanSum::new();
    for (i, j) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            chosen.push((i, j, mi.get(i, j)));
            total.add(mi.get(i, j));
            if chosen.len() == n - 1 {
                break;
            }
        }
    }
    TreeModel {
        edges: chosen,
        tree_tc: total.total(),
    }
}

/// Joint plug-in entropy in bits.
fn joint_entropy<T: Scalar>(pmf: &EmpiricalPmf<T>) -> T {
    let mut acc = KahanSum::new();
    match pmf.storage() {
        PmfStorage::Dense(v) => {
            for &p in v {
                acc.add(entropy_term(p));
            }
        }
        PmfStorage::Sparse(map) => {
            for &p in map.values() {
                acc.add(entropy_term(p));
            }
        }
    }
    acc.total()
}

fn marginal_one_probs<T: Scalar>(pmf: &EmpiricalPmf<T>) -> Vec<T> {
    let n = pmf.n();
    let mut ones = vec![T::zero(); n];
    match pmf.storage() {
        PmfStorage::Dense(v) => {
            for (x, &p) in v.iter().enumerate() {
                if p > T::zero() {
                    for (b, o) in ones.iter_mut().enumerate() {
                        if x >> b & 1 == 1 {
                            *o += p;
                        }
                    }
                }
            }
        }
        PmfStorage::Sparse(map) => {
            for (k, &p) in map.iter() {
                for (b, o) in ones.iter_mut().enumerate() {
                    if k[b / 64] >> (b % 64) & 1 == 1 {
                        *o += p;
                    }
                }
            }
        }
    }
    ones
}

/// Total correlation `sum_i H(X_i) - H(X)` in bits.
pub fn total_correlation<T: Scalar>(pmf: &EmpiricalPmf<T>) -> Result<T> {
    let n = pmf.n();
    if n > DENSE_ENTROPY_LIMIT {
        return Err(Error::capacity("exact joint entropy", n, DENSE_ENTROPY_LIMIT));
    }
    let h_joint = joint_entropy(pmf);
    let mut acc = KahanSum::new();
    for p1 in marginal_one_probs(pmf) {
        acc.add(entropy_term(p1) + entropy_term(T::one() - p1));
    }
    Ok((acc.total() - h_joint).max(T::zero()))
}

/// Below this many bits of total correlation the data is treated as
/// independent and the indicator reports 0.
pub const DEGENERATE_TC: f64 = 1e-9;

/// Full indicator pipeline for a dataset.
pub fn cci<T: Scalar>(d: &BitDataset) -> Result<CciReport<T>> {
    let pmf = empirical_pmf::<T>(d);
    cci_from_pmf(&pmf, d.len())
}

/// Indicator from an explicit pmf; `sample_count` is carried into the
/// report for estimator context (0 when unknown).
pub fn cci_from_pmf<T: Scalar>(pmf: &EmpiricalPmf<T>, sample_count: usize) -> Result<CciReport<T>> {
    let total_tc = total_correlation(pmf)?;
    let tree_tc = if pmf.n() >= 2 {
        chow_liu_tree(&mutual_info_from_pmf(pmf)).tree_tc
    } else {
        T::zero()
    };
    let cci = if total_tc > T::from_f64_const(DEGENERATE_TC) {
        (T::one() - tree_tc / total_tc).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    Ok(CciReport {
        total_tc,
        tree_tc,
        cci,
        sample_count,
        support_size: pmf.support_size(),
    })
}

/// Materializes the tree distribution `p_T` from `p`'s marginals, evaluates
/// `D_KL(p || p_T)` directly, and returns `(kl, |kl - (total_tc - tree_tc)|)`.
pub fn tree_kl_check<T: Scalar>(pmf: &EmpiricalPmf<T>, tree: &TreeModel<T>) -> Result<(T, T)> {
    let n = pmf.n();
    if n > TREE_CHECK_LIMIT {
        return Err(Error::capacity("explicit tree distribution", n, TREE_CHECK_LIMIT));
    }
    let dense = pmf
        .dense()
        .ok_or_else(|| Error::capacity("explicit tree distribution", n, TREE_CHECK_LIMIT))?;

    let ones = marginal_one_probs(pmf);
    // Pairwise tables for tree edges only.
    let mut pair: Vec<[T; 4]> = vec![[T::zero(); 4]; tree.edges.len()];
    for (x, &p) in dense.iter().enumerate() {
        if p > T::zero() {
            for (e, &(i, j, _)) in tree.edges.iter().enumerate() {
                let idx = ((x >> i & 1) << 1) | (x >> j & 1);
                pair[e][idx] += p;
            }
        }
    }

    let mut kl = KahanSum::new();
    for (x, &p) in dense.iter().enumerate() {
        if !(p > T::zero()) {
            continue;
        }
        // log2 p_T(x) = sum_i log2 p_i(x_i) + sum_(i,j) log2 (p_ij / (p_i p_j))
        let mut log_pt = T::zero();
        for (b, &p1) in ones.iter().enumerate() {
            let pb = if x >> b & 1 == 1 { p1 } else { T::one() - p1 };
            log_pt += pb.log2();
        }
        for (e, &(i, j, _)) in tree.edges.iter().enumerate() {
            let pij = pair[e][((x >> i & 1) << 1) | (x >> j & 1)];
            let pi = if x >> i & 1 == 1 { ones[i] } else { T::one() - ones[i] };
            let pj = if x >> j & 1 == 1 { ones[j] } else { T::one() - ones[j] };
            log_pt += (pij / (pi * pj)).log2();
        }
        kl.add(p * (p.log2() - log_pt));
    }
    let kl = kl.total();
    let total_tc = total_correlation(pmf)?;
    let gap = (kl - (total_tc - tree.tree_tc)).abs();
    Ok((kl, gap))
}
