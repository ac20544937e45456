//! Invertible float-to-bitstring quantization.
//!
//! A value `v` in `[a, b]` maps to the bin index `k(v) = floor(2^N (v-a)/(b-a)) + 1`,
//! clamped into `{1, ..., 2^N}`, and the bit pattern written out is the
//! standard `N`-bit encoding of `k - 1` with the most significant bit first:
//! index 1 is the all-zeros string and index `2^N` the all-ones string.
//! Decoding returns the bin center `a + (k - 1/2) * delta` with
//! `delta = (b-a)/2^N`, so a roundtrip moves a value by at most `delta / 2`
//! and the map is a bijection on bin centers.
//!
//! Inputs outside `[a, b]` are clamped before quantization; dataset-level
//! encoders count how often that happened so callers can spot range
//! mismatches between training and test data.

use serde::{Deserialize, Serialize};

use crate::datasets::{BitDataset, FloatDataset};
use crate::error::{Error, Result};
use crate::Scalar;

/// Uniform quantizer configuration: `N` bits per coordinate over explicit
/// per-coordinate ranges. Serialized as JSON next to encoded datasets so the
/// bits stay self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec<T> {
    /// Bits per coordinate (`N >= 1`).
    pub bits_per_coord: u32,
    /// Per-coordinate `[a, b]`, one entry per coordinate.
    pub ranges: Vec<(T, T)>,
}

impl<T: Scalar> QuantizerSpec<T> {
    pub fn new(bits_per_coord: u32, ranges: Vec<(T, T)>) -> Result<Self> {
        if bits_per_coord == 0 || bits_per_coord > 32 {
            return Err(Error::Config(format!(
                "bits per coordinate must be in 1..=32, got {bits_per_coord}"
            )));
        }
        if ranges.is_empty() {
            return Err(Error::Config("quantizer needs at least one coordinate".into()));
        }
        for (a, b) in &ranges {
            if !(*b > *a) {
                return Err(Error::Config("quantizer range must satisfy b > a".into()));
            }
        }
        Ok(QuantizerSpec {
            bits_per_coord,
            ranges,
        })
    }

    /// Spec for `(x, y, z)` data with ranges taken from the dataset.
    pub fn for_float_dataset(d: &FloatDataset<T>, bits_per_coord: u32) -> Result<Self> {
        QuantizerSpec::new(bits_per_coord, d.ranges.to_vec())
    }

    pub fn coords(&self) -> usize {
        self.ranges.len()
    }

    /// Total encoded width `coords * N`.
    pub fn total_width(&self) -> usize {
        self.coords() * self.bits_per_coord as usize
    }

    /// Bin width for one coordinate.
    pub fn delta(&self, coord: usize) -> T {
        let (a, b) = self.ranges[coord];
        (b - a) / T::from_f64_const((1u64 << self.bits_per_coord) as f64)
    }
}

/// Quantizes one value to its zero-based bin index `k(v) - 1` in
/// `0..2^bits`. Out-of-range values clamp to the boundary bins.
pub fn encode_index<T: Scalar>(v: T, range: (T, T), bits: u32) -> u64 {
    let (a, b) = range;
    let top = (1u64 << bits) - 1;
    let v = v.max(a).min(b);
    let scaled = T::from_f64_const((1u64 << bits) as f64) * (v - a) / (b - a);
    let k = scaled.floor().to_f64().unwrap_or(0.0) as i64;
    (k.max(0) as u64).min(top)
}

/// MSB-first bit pattern of the bin index, as a text string of `'0'`/`'1'`.
pub fn encode_value<T: Scalar>(v: T, range: (T, T), bits: u32) -> String {
    let idx = encode_index(v, range, bits);
    (0..bits)
        .map(|j| {
            if idx >> (bits - 1 - j) & 1 == 1 {
                '1'
            } else {
                '0'
            }
        })
        .collect()
}

/// Decodes a zero-based bin index to the bin center.
pub fn decode_index<T: Scalar>(idx: u64, range: (T, T), bits: u32) -> T {
    let (a, b) = range;
    let delta = (b - a) / T::from_f64_const((1u64 << bits) as f64);
    a + (T::from_f64_const(idx as f64) + T::from_f64_const(0.5)) * delta
}

/// Decodes an MSB-first bit string to the bin center.
pub fn decode_bits<T: Scalar>(bits_str: &str, range: (T, T), bits: u32) -> Result<T> {
    if bits_str.len() != bits as usize {
        return Err(Error::Shape(format!(
            "expected {} bits, got {}",
            bits,
            bits_str.len()
        )));
    }
    let mut idx = 0u64;
    for ch in bits_str.bytes() {
        idx = (idx << 1)
            | match ch {
                b'0' => 0,
                b'1' => 1,
                other => {
                    return Err(Error::Parse(format!(
                        "character {:?} outside {{0,1}}",
                        other as char
                    )))
                }
            };
    }
    Ok(decode_index(idx, range, bits))
}

/// Encodes one `(x, y, z)` sample to a packed bit row (coordinate `c`'s
/// MSB-first pattern occupies bits `c*N .. (c+1)*N`).
pub fn encode_sample<T: Scalar>(p: [T; 3], spec: &QuantizerSpec<T>) -> Result<Vec<u64>> {
    if spec.coords() != 3 {
        return Err(Error::Shape(format!(
            "sample has 3 coordinates but spec declares {}",
            spec.coords()
        )));
    }
    let n = spec.total_width();
    let mut words = vec![0u64; n.div_ceil(64)];
    let bits = spec.bits_per_coord;
    for (c, v) in p.iter().enumerate() {
        let idx = encode_index(*v, spec.ranges[c], bits);
        for j in 0..bits {
            if idx >> (bits - 1 - j) & 1 == 1 {
                let pos = c * bits as usize + j as usize;
                words[pos / 64] |= 1u64 << (pos % 64);
            }
        }
    }
    Ok(words)
}

/// Inverse of [`encode_sample`] on a packed row of width `coords * N`.
pub fn decode_sample<T: Scalar>(row: &[u64], spec: &QuantizerSpec<T>) -> Result<[T; 3]> {
    if spec.coords() != 3 {
        return Err(Error::Shape(format!(
            "sample has 3 coordinates but spec declares {}",
            spec.coords()
        )));
    }
    let bits = spec.bits_per_coord;
    let mut out = [T::zero(); 3];
    for (c, slot) in out.iter_mut().enumerate() {
        let mut idx = 0u64;
        for j in 0..bits {
            let pos = c * bits as usize + j as usize;
            idx = (idx << 1) | (row[pos / 64] >> (pos % 64) & 1);
        }
        *slot = decode_index(idx, spec.ranges[c], bits);
    }
    Ok(out)
}

/// Result of a dataset-level encode, carrying the clamp counter.
#[derive(Debug, Clone)]
pub struct EncodedDataset {
    pub bits: BitDataset,
    /// Number of coordinate values that fell outside their declared range
    /// and were clamped.
    pub clamped: usize,
}

/// Encodes a float dataset to a `3N`-bit dataset.
pub fn encode_dataset<T: Scalar>(
    d: &FloatDataset<T>,
    spec: &QuantizerSpec<T>,
) -> Result<EncodedDataset> {
    let n = spec.total_width();
    let wps = n.div_ceil(64);
    let mut words = Vec::with_capacity(wps * d.samples.len());
    let mut clamped = 0usize;
    for s in &d.samples {
        for (c, v) in s.iter().enumerate() {
            let (a, b) = spec.ranges[c];
            if *v < a || *v > b {
                clamped += 1;
            }
        }
        words.extend_from_slice(&encode_sample(*s, spec)?);
    }
    Ok(EncodedDataset {
        bits: BitDataset::from_words(n, words, d.samples.len())?,
        clamped,
    })
}

/// Decodes a `3N`-bit dataset back to bin-center coordinates.
pub fn decode_dataset<T: Scalar>(
    d: &BitDataset,
    spec: &QuantizerSpec<T>,
) -> Result<FloatDataset<T>> {
    if d.n() != spec.total_width() {
        return Err(Error::Shape(format!(
            "dataset width {} does not match quantizer width {} ({} coords x {} bits)",
            d.n(),
            spec.total_width(),
            spec.coords(),
            spec.bits_per_coord
        )));
    }
    let mut samples = Vec::with_capacity(d.len());
    for row in d.iter() {
        samples.push(decode_sample(row, spec)?);
    }
    FloatDataset::new(samples, Some([spec.ranges[0], spec.ranges[1], spec.ranges[2]]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn boundary_values_hit_extreme_bins() {
        for bits in [1u32, 2, 6, 10] {
            assert_eq!(encode_value(0.0f64, (0.0, 1.0), bits), "0".repeat(bits as usize));
            assert_eq!(encode_value(1.0f64, (0.0, 1.0), bits), "1".repeat(bits as usize));
        }
    }

    #[test]
    fn msb_first_bin_indexing() {
        // floor(4 * 0.6) + 1 = 3, encoded as BinaryEncode_2(2) = "10".
        assert_eq!(encode_value(0.6f64, (0.0, 1.0), 2), "10");
    }

    #[test]
    fn decode_is_bin_center() {
        // Oracle: enumerate the 4 bins of [0,1] at N=2 directly.
        let centers = [0.125, 0.375, 0.625, 0.875];
        for (idx, want) in centers.iter().enumerate() {
            let s = format!("{:02b}", idx);
            let got: f64 = decode_bits(&s, (0.0, 1.0), 2).unwrap();
            assert!((got - want).abs() < 1e-15);
        }
        assert!((decode_bits::<f64>("00", (0.0, 1.0), 2).unwrap() - 0.125).abs() < 1e-15);
        assert!((decode_bits::<f64>("11", (0.0, 1.0), 2).unwrap() - 0.875).abs() < 1e-15);
    }

    #[test]
    fn roundtrip_error_bounded_by_half_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let range = (-2.0f64, 3.0);
        let bits = 6;
        let delta = (range.1 - range.0) / 64.0;
        for _ in 0..10_000 {
            let v = range.0 + (range.1 - range.0) * rng.random::<f64>();
            let back: f64 = decode_bits(&encode_value(v, range, bits), range, bits).unwrap();
            assert!((back - v).abs() <= delta / 2.0 + 1e-12);
        }
    }

    #[test]
    fn bijective_on_bin_centers() {
        let range = (0.0f64, 1.0);
        let bits = 6;
        let mut seen = std::collections::HashSet::new();
        for idx in 0..64u64 {
            let center: f64 = decode_index(idx, range, bits);
            let pattern = encode_value(center, range, bits);
            assert_eq!(u64::from_str_radix(&pattern, 2).unwrap(), idx);
            assert!(seen.insert(pattern));
        }
        assert_eq!(seen.len(), 64);
    }

    #[test]
    fn encode_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let range = (0.0f64, 2.0);
        for _ in 0..2000 {
            let v1 = 2.0 * rng.random::<f64>();
            let v2 = 2.0 * rng.random::<f64>();
            let (lo, hi) = if v1 < v2 { (v1, v2) } else { (v2, v1) };
            assert!(encode_index(lo, range, 5) <= encode_index(hi, range, 5));
        }
    }

    #[test]
    fn sample_concatenation_and_width() {
        let spec =
            QuantizerSpec::new(6, vec![(0.0f64, 1.0), (0.0, 1.0), (-1.0, 1.0)]).unwrap();
        assert_eq!(spec.total_width(), 18);
        let row = encode_sample([0.0, 1.0, -1.0], &spec).unwrap();
        let d = BitDataset::from_words(18, row.clone(), 1).unwrap();
        // x = a -> zeros, y = b -> ones, z = a -> zeros.
        assert_eq!(d.sample_string(0), format!("{}{}{}", "0".repeat(6), "1".repeat(6), "0".repeat(6)));
        let back = decode_sample(&row, &spec).unwrap();
        for (c, v) in back.iter().enumerate() {
            let delta = spec.delta(c);
            let orig = [0.0, 1.0, -1.0][c];
            assert!((*v - orig).abs() <= delta / 2.0 + 1e-12);
        }
    }

    #[test]
    fn decode_encode_decode_is_stable() {
        let spec = QuantizerSpec::new(6, vec![(0.0f64, 1.0); 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let mut row = vec![rng.random::<u64>() & ((1 << 18) - 1)];
            let once = decode_sample(&row, &spec).unwrap();
            row = encode_sample(once, &spec).unwrap();
            let twice = decode_sample(&row, &spec).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn dataset_encode_counts_clamps() {
        let d = FloatDataset::new(
            vec![[0.5f64, 0.5, 0.5], [1.5, 0.5, -0.5]],
            Some([(0.0, 1.0); 3]),
        )
        .unwrap();
        let spec = QuantizerSpec::for_float_dataset(&d, 4).unwrap();
        let enc = encode_dataset(&d, &spec).unwrap();
        assert_eq!(enc.bits.n(), 12);
        assert_eq!(enc.clamped, 2);
        let dec = decode_dataset(&enc.bits, &spec).unwrap();
        assert_eq!(dec.samples.len(), 2);
    }

    #[test]
    fn width_mismatch_is_shape_error() {
        let spec = QuantizerSpec::new(6, vec![(0.0f64, 1.0); 3]).unwrap();
        let d = BitDataset::from_lines(&["0101010"]).unwrap();
        assert!(matches!(
            decode_dataset(&d, &spec).unwrap_err(),
            Error::Shape(_)
        ));
    }
}
