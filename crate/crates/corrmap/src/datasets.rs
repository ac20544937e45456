//! Bitstring datasets, file formats, empirical probability estimation and
//! the synthetic generators used as null references.
//!
//! Samples are packed rows of little-endian `u64` words (bit `i` of a sample
//! is the `i`-th character of its text form, see [`crate::bits`]). Sample
//! order is preserved by every loader but never carries meaning: the
//! indicators built on top are distributional.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::{fnv1a64, last_word_mask, words_for};
use crate::error::{Error, Result};
use crate::Scalar;

/// Widths up to this bound materialize dense probability vectors of length
/// `2^n`; wider data keeps sparse, hash-keyed mass functions.
pub const DENSE_PMF_LIMIT: usize = 24;

/// On-disk representations understood by [`BitDataset::read`] /
/// [`BitDataset::write`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    /// One sample per line, characters `'0'`/`'1'`, first character = bit 0.
    TextLines,
    /// Magic `CMB1`, `n` as u32 LE, `M` as u64 LE, then `ceil(n/8)` bytes per
    /// sample with bit `i` at byte `i/8`, bit `i%8`.
    PackedBinary,
    /// One sample per row, `n` comma-separated `0`/`1` cells.
    Csv,
}

const PACKED_MAGIC: &[u8; 4] = b"CMB1";

/// An ordered collection of `M >= 1` fixed-width bitstrings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitDataset {
    n: usize,
    len: usize,
    words_per_sample: usize,
    words: Vec<u64>,
}

impl BitDataset {
    /// Builds a dataset from pre-packed rows. Rows must already be masked to
    /// `n` bits.
    pub fn from_words(n: usize, rows: Vec<u64>, len: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Format("bit width must be at least 1".into()));
        }
        if len == 0 {
            return Err(Error::Format("dataset must contain at least one sample".into()));
        }
        let wps = words_for(n);
        if rows.len() != wps * len {
            return Err(Error::Shape(format!(
                "expected {} words for {} samples of width {}, got {}",
                wps * len,
                len,
                n,
                rows.len()
            )));
        }
        Ok(BitDataset {
            n,
            len,
            words_per_sample: wps,
            words: rows,
        })
    }

    /// Parses text lines (`'0'`/`'1'` characters, equal widths).
    pub fn from_lines<S: AsRef<str>>(lines: &[S]) -> Result<Self> {
        let mut builder = Builder::new();
        for (row, line) in lines.iter().enumerate() {
            builder.push_text_row(line.as_ref(), row)?;
        }
        builder.finish()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of samples `M`.
    pub fn len(&self) -> usize {
        self.len
    }

    /// Always false: construction enforces `M >= 1`.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words_per_sample(&self) -> usize {
        self.words_per_sample
    }

    /// Packed words of sample `i`.
    #[inline]
    pub fn sample(&self, i: usize) -> &[u64] {
        let start = i * self.words_per_sample;
        &self.words[start..start + self.words_per_sample]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[u64]> + '_ {
        self.words.chunks_exact(self.words_per_sample)
    }

    #[inline]
    pub fn bit(&self, sample: usize, bit: usize) -> bool {
        self.sample(sample)[bit / 64] >> (bit % 64) & 1 == 1
    }

    /// Dense table index of sample `i`; valid when `n <= 63`.
    #[inline]
    pub fn dense_index(&self, i: usize) -> usize {
        debug_assert!(self.n < 64);
        self.sample(i)[0] as usize
    }

    /// Text form of sample `i` (bit 0 first).
    pub fn sample_string(&self, i: usize) -> String {
        (0..self.n)
            .map(|b| if self.bit(i, b) { '1' } else { '0' })
            .collect()
    }

    /// Applies a bit permutation to every sample: output bit `perm[i]` takes
    /// the value of input bit `i`. Used by the permutation-invariance checks.
    pub fn permute_bits(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::Shape(format!(
                "permutation length {} != width {}",
                perm.len(),
                self.n
            )));
        }
        let wps = self.words_per_sample;
        let mut words = vec![0u64; self.words.len()];
        for (i, sample) in self.iter().enumerate() {
            let out = &mut words[i * wps..(i + 1) * wps];
            for (src, &dst) in perm.iter().enumerate() {
                if sample[src / 64] >> (src % 64) & 1 == 1 {
                    out[dst / 64] |= 1u64 << (dst % 64);
                }
            }
        }
        BitDataset::from_words(self.n, words, self.len)
    }

    pub fn read(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        match format {
            DatasetFormat::TextLines => Self::read_text(&mut reader),
            DatasetFormat::Csv => Self::read_csv(&mut reader),
            DatasetFormat::PackedBinary => Self::read_packed(&mut reader),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>, format: DatasetFormat) -> Result<()> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let res = match format {
            DatasetFormat::TextLines => self.write_text(&mut file),
            DatasetFormat::Csv => self.write_csv(&mut file),
            DatasetFormat::PackedBinary => self.write_packed(&mut file),
        };
        res.map_err(|e| Error::io(path, e))
    }

    fn read_text(reader: &mut impl BufRead) -> Result<Self> {
        let mut builder = Builder::new();
        for (row, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse(format!("line {}: {e}", row + 1)))?;
            if line.is_empty() {
                continue;
            }
            builder.push_text_row(&line, row)?;
        }
        builder.finish()
    }

    fn read_csv(reader: &mut impl BufRead) -> Result<Self> {
        let mut builder = Builder::new();
        for (row, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse(format!("row {}: {e}", row + 1)))?;
            if line.is_empty() {
                continue;
            }
            let compact: String = line.split(',').map(str::trim).collect();
            builder.push_text_row(&compact, row)?;
        }
        builder.finish()
    }

    fn read_packed(reader: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        reader
            .read_exact(&mut magic)
            .map_err(|e| Error::Format(format!("packed header: {e}")))?;
        if &magic != PACKED_MAGIC {
            return Err(Error::Format("packed header magic mismatch".into()));
        }
        let mut nb = [0u8; 4];
        reader
            .read_exact(&mut nb)
            .map_err(|e| Error::Format(format!("packed header: {e}")))?;
        let n = u32::from_le_bytes(nb) as usize;
        let mut mb = [0u8; 8];
        reader
            .read_exact(&mut mb)
            .map_err(|e| Error::Format(format!("packed header: {e}")))?;
        let m = u64::from_le_bytes(mb) as usize;
        if n == 0 || m == 0 {
            return Err(Error::Format("packed header declares an empty dataset".into()));
        }
        let bytes_per_sample = n.div_ceil(8);
        let mut payload = vec![0u8; bytes_per_sample * m];
        reader
            .read_exact(&mut payload)
            .map_err(|e| Error::Format(format!("packed payload: {e}")))?;
        let mut trailing = [0u8; 1];
        if reader.read(&mut trailing).map_err(|e| Error::Format(e.to_string()))? != 0 {
            return Err(Error::Format("trailing bytes after packed payload".into()));
        }
        let wps = words_for(n);
        let mask = last_word_mask(n);
        let mut words = vec![0u64; wps * m];
        for (i, chunk) in payload.chunks_exact(bytes_per_sample).enumerate() {
            let row = &mut words[i * wps..(i + 1) * wps];
            for (b, byte) in chunk.iter().enumerate() {
                row[b / 8] |= (*byte as u64) << (8 * (b % 8));
            }
            if row[wps - 1] & !mask != 0 {
                return Err(Error::Format(format!(
                    "sample {i} has bits set beyond declared width {n}"
                )));
            }
        }
        BitDataset::from_words(n, words, m)
    }

    fn write_text(&self, w: &mut impl Write) -> std::io::Result<()> {
        for i in 0..self.len {
            writeln!(w, "{}", self.sample_string(i))?;
        }
        Ok(())
    }

    fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        for i in 0..self.len {
            let row: Vec<&str> = (0..self.n)
                .map(|b| if self.bit(i, b) { "1" } else { "0" })
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    fn write_packed(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(PACKED_MAGIC)?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&(self.len as u64).to_le_bytes())?;
        let bytes_per_sample = self.n.div_ceil(8);
        let mut buf = vec![0u8; bytes_per_sample];
        for sample in self.iter() {
            buf.fill(0);
            for (b, out) in buf.iter_mut().enumerate() {
                *out = (sample[b / 8] >> (8 * (b % 8)) & 0xff) as u8;
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    /// FNV-1a checksum over the packed content, recorded in manifests.
    pub fn checksum(&self) -> u64 {
        fnv1a64(
            (self.n as u64)
                .to_le_bytes()
                .into_iter()
                .chain((self.len as u64).to_le_bytes())
                .chain(self.words.iter().flat_map(|w| w.to_le_bytes())),
        )
    }
}

struct Builder {
    n: Option<usize>,
    len: usize,
    words: Vec<u64>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            n: None,
            len: 0,
            words: Vec::new(),
        }
    }

    fn push_text_row(&mut self, line: &str, row: usize) -> Result<()> {
        let width = line.len();
        match self.n {
            None => self.n = Some(width),
            Some(n) if n != width => {
                return Err(Error::Format(format!(
                    "ragged rows: row {} has width {}, expected {}",
                    row + 1,
                    width,
                    n
                )))
            }
            _ => {}
        }
        let wps = words_for(width);
        let start = self.words.len();
        self.words.resize(start + wps, 0);
        for (i, ch) in line.bytes().enumerate() {
            match ch {
                b'0' => {}
                b'1' => self.words[start + i / 64] |= 1u64 << (i % 64),
                other => {
                    return Err(Error::Parse(format!(
                        "row {}, column {}: character {:?} outside {{0,1}}",
                        row + 1,
                        i + 1,
                        other as char
                    )))
                }
            }
        }
        self.len += 1;
        Ok(())
    }

    fn finish(self) -> Result<BitDataset> {
        let n = self
            .n
            .ok_or_else(|| Error::Format("dataset must contain at least one sample".into()))?;
        BitDataset::from_words(n, self.words, self.len)
    }
}

/// Loads a bit dataset from a file, inferring `n` from the row width.
pub fn load_bit_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<BitDataset> {
    BitDataset::read(path, format)
}

/// Deterministic i.i.d. fair-bit dataset; the null reference of the
/// spectral indicator.
pub fn iid_uniform(n: usize, m: usize, seed: u64) -> BitDataset {
    assert!(n >= 1 && m >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wps = words_for(n);
    let mask = last_word_mask(n);
    let mut words = vec![0u64; wps * m];
    for row in words.chunks_exact_mut(wps) {
        for w in row.iter_mut() {
            *w = rng.random::<u64>();
        }
        row[wps - 1] &= mask;
    }
    BitDataset::from_words(n, words, m).expect("generator invariants")
}

/// Uniform samples from the even-parity subspace: `n - 1` fair bits with the
/// last bit fixing overall parity to even. A structured reference whose
/// spectral mass sits at orders 0 and `n`.
pub fn even_parity(n: usize, m: usize, seed: u64) -> BitDataset {
    assert!(n >= 2 && m >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wps = words_for(n);
    let mut words = vec![0u64; wps * m];
    for row in words.chunks_exact_mut(wps) {
        let mut parity = 0u32;
        for b in 0..n - 1 {
            if rng.random::<bool>() {
                row[b / 64] |= 1u64 << (b % 64);
                parity ^= 1;
            }
        }
        if parity == 1 {
            let b = n - 1;
            row[b / 64] |= 1u64 << (b % 64);
        }
    }
    BitDataset::from_words(n, words, m).expect("generator invariants")
}

/// Empirical probability mass function of a bit dataset.
///
/// Dense (a `2^n` vector) for `n <= DENSE_PMF_LIMIT`, sparse beyond. Masses
/// are counts over `M`, so they are nonnegative and sum to one up to
/// rounding.
#[derive(Debug, Clone)]
pub struct EmpiricalPmf<T> {
    n: usize,
    storage: PmfStorage<T>,
}

#[derive(Debug, Clone)]
pub enum PmfStorage<T> {
    Dense(Vec<T>),
    Sparse(HashMap<Box<[u64]>, T>),
}

impl<T: Scalar> EmpiricalPmf<T> {
    /// Plug-in estimate `mass(x) = count(x) / M`.
    pub fn from_dataset(d: &BitDataset) -> Self {
        let n = d.n();
        let inv_m = T::one() / T::from_f64_const(d.len() as f64);
        if n <= DENSE_PMF_LIMIT {
            let mut dense = vec![T::zero(); 1usize << n];
            for i in 0..d.len() {
                dense[d.dense_index(i)] += inv_m;
            }
            EmpiricalPmf {
                n,
                storage: PmfStorage::Dense(dense),
            }
        } else {
            let mut sparse: HashMap<Box<[u64]>, T> = HashMap::new();
            for sample in d.iter() {
                *sparse.entry(sample.into()).or_insert_with(T::zero) += inv_m;
            }
            EmpiricalPmf {
                n,
                storage: PmfStorage::Sparse(sparse),
            }
        }
    }

    /// Wraps an explicit dense mass vector; validates nonnegativity and
    /// normalization.
    pub fn from_dense(n: usize, mass: Vec<T>) -> Result<Self> {
        if n > DENSE_PMF_LIMIT {
            return Err(Error::capacity("dense pmf", n, DENSE_PMF_LIMIT));
        }
        if mass.len() != 1usize << n {
            return Err(Error::Shape(format!(
                "dense pmf of width {} needs {} entries, got {}",
                n,
                1usize << n,
                mass.len()
            )));
        }
        let mut total = T::zero();
        for &p in &mass {
            if p < T::zero() {
                return Err(Error::Format("pmf mass must be nonnegative".into()));
            }
            total += p;
        }
        let tol = normalization_tol::<T>(mass.len());
        if (total - T::one()).abs() > tol {
            return Err(Error::Format(format!(
                "pmf mass sums to {total}, expected 1"
            )));
        }
        Ok(EmpiricalPmf {
            n,
            storage: PmfStorage::Dense(mass),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dense(&self) -> Option<&[T]> {
        match &self.storage {
            PmfStorage::Dense(v) => Some(v),
            PmfStorage::Sparse(_) => None,
        }
    }

    pub fn storage(&self) -> &PmfStorage<T> {
        &self.storage
    }

    /// Number of outcomes with nonzero mass.
    pub fn support_size(&self) -> usize {
        match &self.storage {
            PmfStorage::Dense(v) => v.iter().filter(|p| **p > T::zero()).count(),
            PmfStorage::Sparse(m) => m.len(),
        }
    }

    /// Mass of a packed outcome.
    pub fn mass(&self, sample: &[u64]) -> T {
        match &self.storage {
            PmfStorage::Dense(v) => v[sample[0] as usize],
            PmfStorage::Sparse(m) => m.get(sample).copied().unwrap_or_else(T::zero),
        }
    }

    pub fn total(&self) -> T {
        match &self.storage {
            PmfStorage::Dense(v) => v.iter().copied().sum(),
            PmfStorage::Sparse(m) => m.values().copied().sum(),
        }
    }

    /// Iterates `(packed outcome, mass)` over the support.
    pub fn iter_support(&self) -> Box<dyn Iterator<Item = (Box<[u64]>, T)> + '_> {
        match &self.storage {
            PmfStorage::Dense(v) => Box::new(
                v.iter()
                    .enumerate()
                    .filter(|(_, p)| **p > T::zero())
                    .map(|(i, p)| (vec![i as u64].into_boxed_slice(), *p)),
            ),
            PmfStorage::Sparse(m) => Box::new(m.iter().map(|(k, p)| (k.clone(), *p))),
        }
    }
}

fn normalization_tol<T: Scalar>(len: usize) -> T {
    let eps_scaled = T::epsilon() * T::from_f64_const(8.0 * len as f64);
    T::from_f64_const(1e-12).max(eps_scaled)
}

/// Convenience wrapper matching the pipeline naming.
pub fn empirical_pmf<T: Scalar>(d: &BitDataset) -> EmpiricalPmf<T> {
    EmpiricalPmf::from_dataset(d)
}

/// Continuous samples of `(x, y, z)` triplets with per-coordinate ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatDataset<T> {
    pub samples: Vec<[T; 3]>,
    /// Per-coordinate `[a, b]`; `b > a`.
    pub ranges: [(T, T); 3],
}

impl<T: Scalar> FloatDataset<T> {
    /// Wraps samples, computing ranges from the data unless supplied.
    pub fn new(samples: Vec<[T; 3]>, ranges: Option<[(T, T); 3]>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Format("float dataset must contain at least one sample".into()));
        }
        for s in &samples {
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse("non-finite coordinate in float dataset".into()));
            }
        }
        let ranges = match ranges {
            Some(r) => {
                for (a, b) in &r {
                    if !(*b > *a) {
                        return Err(Error::Config("range must satisfy b > a".into()));
                    }
                }
                r
            }
            None => {
                let mut r = [(T::infinity(), T::neg_infinity()); 3];
                for s in &samples {
                    for c in 0..3 {
                        r[c].0 = r[c].0.min(s[c]);
                        r[c].1 = r[c].1.max(s[c]);
                    }
                }
                for (a, b) in r.iter_mut() {
                    if !(*b > *a) {
                        // Degenerate coordinate: widen so the quantizer stays valid.
                        *b = *a + T::one();
                    }
                }
                r
            }
        };
        Ok(FloatDataset { samples, ranges })
    }

    /// Reads `x,y,z` rows from a CSV file.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut samples = Vec::new();
        for (row, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse(format!("row {}: {e}", row + 1)))?;
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != 3 {
                return Err(Error::Format(format!(
                    "row {}: expected 3 coordinates, got {}",
                    row + 1,
                    cells.len()
                )));
            }
            let mut triple = [T::zero(); 3];
            for (c, cell) in cells.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|e| {
                    Error::Parse(format!("row {}, column {}: {e}", row + 1, c + 1))
                })?;
                triple[c] = T::from_f64_const(v);
            }
            samples.push(triple);
        }
        FloatDataset::new(samples, None)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for s in &self.samples {
            writeln!(
                file,
                "{},{},{}",
                s[0].to_f64().unwrap(),
                s[1].to_f64().unwrap(),
                s[2].to_f64().unwrap()
            )
            .map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Sidecar record describing a dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub n: usize,
    pub samples: usize,
    pub source: String,
    /// FNV-1a over the packed sample content (hex).
    pub checksum: String,
}

impl DatasetManifest {
    pub fn describe(d: &BitDataset, source: impl Into<String>) -> Self {
        DatasetManifest {
            n: d.n(),
            samples: d.len(),
            source: source.into(),
            checksum: format!("{:016x}", d.checksum()),
        }
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}
