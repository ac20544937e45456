//! Subset and bit-level helpers shared by the spectral and circuit code.
//!
//! Conventions used throughout the crate:
//!
//! * A sample of width `n` is packed into `ceil(n/64)` little-endian words;
//!   bit `i` of the sample (the `i`-th character of its text form) lives at
//!   word `i / 64`, bit `i % 64`.
//! * A subset `s` of `[n]` with `n <= 64` is a `u64` mask with bit `i` set
//!   iff `i` is in `s`. Wider subsets use the same packed-word layout.
//! * The parity character is `chi_s(x) = (-1)^(popcount(x & s) mod 2)`.

use std::cmp::Ordering;

/// Number of 64-bit words needed for `n` bits.
pub fn words_for(n: usize) -> usize {
    n.div_ceil(64)
}

/// Mask selecting the valid bits of the last word of an `n`-bit row.
pub fn last_word_mask(n: usize) -> u64 {
    match n % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// Parity of `popcount(sample & mask)` over packed rows: `false` for even.
#[inline]
pub fn masked_parity(sample: &[u64], mask: &[u64]) -> bool {
    debug_assert_eq!(sample.len(), mask.len());
    let mut ones = 0u32;
    for (a, b) in sample.iter().zip(mask.iter()) {
        ones ^= (a & b).count_ones();
    }
    ones & 1 == 1
}

/// `chi_s(x)` as `+1.0 / -1.0`.
#[inline]
pub fn parity_sign(sample: &[u64], mask: &[u64]) -> f64 {
    if masked_parity(sample, mask) {
        -1.0
    } else {
        1.0
    }
}

/// Binomial coefficient, saturating at `u128::MAX` when the value (or an
/// intermediate product) would overflow. Exact for every `n <= 64`; exact
/// up to widths around 128 in general.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        match acc.checked_mul((n - i) as u128) {
            Some(prod) => acc = prod / (i + 1) as u128,
            None => return u128::MAX,
        }
    }
    acc
}

/// Natural log of the binomial coefficient; usable at widths where the
/// exact value saturates.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (0..k)
        .map(|i| ((n - i) as f64 / (i + 1) as f64).ln())
        .sum()
}

/// Count of nonempty subsets of `[n]` with size at most `max_order`.
pub fn subsets_up_to_order(n: usize, max_order: usize) -> u128 {
    (1..=max_order.min(n)).map(|k| binomial(n, k)).sum()
}

/// Iterates all `u64` masks of popcount `k` over `[n]` in ascending numeric
/// order (Gosper's hack). Requires `n <= 64`.
pub fn masks_of_order(n: usize, k: usize) -> MaskIter {
    assert!(n <= 64, "mask iteration needs n <= 64");
    let remaining = binomial(n, k);
    let first = if k == 0 { 0 } else { (1u128 << k) - 1 };
    MaskIter {
        current: first,
        remaining,
    }
}

pub struct MaskIter {
    current: u128,
    remaining: u128,
}

impl Iterator for MaskIter {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let out = self.current as u64;
        if self.remaining > 0 {
            // Gosper: next larger integer with the same popcount.
            let c = self.current;
            let lowest = c & c.wrapping_neg();
            let ripple = c + lowest;
            self.current = (((c ^ ripple) >> 2) / lowest) | ripple;
        }
        out.into()
    }
}

/// The `rank`-th `k`-subset of `[n]` in lexicographic order of the sorted
/// index lists, returned as ascending indices. `rank < binomial(n, k)`.
pub fn unrank_subset(n: usize, k: usize, mut rank: u128) -> Vec<u32> {
    debug_assert!(rank < binomial(n, k));
    let mut out = Vec::with_capacity(k);
    let mut next = 0usize;
    for chosen in 0..k {
        loop {
            let with_next = binomial(n - 1 - next, k - 1 - chosen);
            if rank < with_next {
                out.push(next as u32);
                next += 1;
                break;
            }
            rank -= with_next;
            next += 1;
        }
    }
    out
}

/// Packs ascending indices into mask words of the given width.
pub fn indices_to_words(indices: &[u32], n: usize) -> Vec<u64> {
    let mut words = vec![0u64; words_for(n)];
    for &i in indices {
        words[i as usize / 64] |= 1u64 << (i % 64);
    }
    words
}

/// Set-bit indices of a `u64` mask, ascending.
pub fn mask_indices(mask: u64) -> Vec<u32> {
    let mut out = Vec::with_capacity(mask.count_ones() as usize);
    let mut rest = mask;
    while rest != 0 {
        let i = rest.trailing_zeros();
        out.push(i);
        rest &= rest - 1;
    }
    out
}

/// Canonical generator order: ascending Hamming weight, then lexicographic
/// on the sorted index lists (so `{0,3}` sorts before `{1,2}`).
pub fn canonical_cmp(a: u64, b: u64) -> Ordering {
    let (wa, wb) = (a.count_ones(), b.count_ones());
    if wa != wb {
        return wa.cmp(&wb);
    }
    let (mut ra, mut rb) = (a, b);
    while ra != 0 && rb != 0 {
        let (ia, ib) = (ra.trailing_zeros(), rb.trailing_zeros());
        if ia != ib {
            return ia.cmp(&ib);
        }
        ra &= ra - 1;
        rb &= rb - 1;
    }
    Ordering::Equal
}

/// FNV-1a over little-endian bytes; used for cheap parameter checksums.
pub fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Checksum of a float parameter vector (exact on the bit pattern).
pub fn param_checksum<T: crate::Scalar>(params: &[T]) -> u64 {
    fnv1a64(
        params
            .iter()
            .flat_map(|p| p.to_f64().unwrap_or(f64::NAN).to_le_bits_bytes()),
    )
}

trait ToLeBitsBytes {
    fn to_le_bits_bytes(self) -> [u8; 8];
}

impl ToLeBitsBytes for f64 {
    fn to_le_bits_bytes(self) -> [u8; 8] {
        self.to_bits().to_le_bytes()
    }
}
