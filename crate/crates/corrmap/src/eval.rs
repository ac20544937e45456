//! Distributional metrics for comparing sets of 2D field snapshots.
//!
//! Two complementary scores, both zero on identical inputs:
//!
//! * [`pdf_js`]: Jensen–Shannon divergence (bits) between the pooled
//!   pixel-intensity histograms of the two sides, over their joint range.
//! * [`feature_mmd`]: biased Gaussian-kernel MMD between snapshot feature
//!   vectors produced by a fixed randomly initialized convolutional encoder
//!   (three conv+rectifier blocks, stride 2, global average pooling), with
//!   the bandwidth set by the median heuristic on pooled pairwise feature
//!   distances.
//!
//! The encoder's widths, kernel size and weight scale are configuration,
//! not canon: scores are comparable only under an identical encoder config,
//! which callers should record alongside results.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::KahanSum;
use crate::Scalar;

/// Default histogram bin count for the intensity divergence.
pub const DEFAULT_PDF_BINS: usize = 50;
/// Histogram smoothing floor added to every bin before renormalization.
pub const HISTOGRAM_EPSILON: f64 = 1e-12;
/// Smallest grid edge accepted by the encoder (three stride-2 reductions).
pub const MIN_FIELD_EDGE: usize = 8;

const FIELD_MAGIC: &[u8; 4] = b"CMF1";

/// A single 2D field of finite values, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot<T> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> FieldSnapshot<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::Shape(format!(
                "field of {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse("non-finite field value".into()));
        }
        Ok(FieldSnapshot {
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    /// Reads a CSV grid (one row per line).
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut data = Vec::new();
        let mut width = None;
        let mut height = 0;
        for (r, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse(format!("row {}: {e}", r + 1)))?;
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            match width {
                None => width = Some(cells.len()),
                Some(w) if w != cells.len() => {
                    return Err(Error::Format(format!(
                        "ragged grid: row {} has {} cells, expected {w}",
                        r + 1,
                        cells.len()
                    )))
                }
                _ => {}
            }
            for (c, cell) in cells.iter().enumerate() {
                let v: f64 = cell
                    .parse()
                    .map_err(|e| Error::Parse(format!("row {}, col {}: {e}", r + 1, c + 1)))?;
                data.push(T::from_f64_const(v));
            }
            height += 1;
        }
        let width = width.ok_or_else(|| Error::Format("empty grid file".into()))?;
        FieldSnapshot::new(height, width, data)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for r in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|c| format!("{}", self.at(r, c).to_f64().unwrap()))
                .collect();
            writeln!(file, "{}", row.join(",")).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    /// Reads the packed form: magic, height/width as u32 LE, f64 LE grid.
    pub fn read_packed(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut magic = [0u8; 4];
        file.read_exact(&mut magic)
            .map_err(|e| Error::Format(format!("field header: {e}")))?;
        if &magic != FIELD_MAGIC {
            return Err(Error::Format("field header magic mismatch".into()));
        }
        let mut word = [0u8; 4];
        file.read_exact(&mut word)
            .map_err(|e| Error::Format(format!("field header: {e}")))?;
        let height = u32::from_le_bytes(word) as usize;
        file.read_exact(&mut word)
            .map_err(|e| Error::Format(format!("field header: {e}")))?;
        let width = u32::from_le_bytes(word) as usize;
        let mut payload = vec![0u8; height * width * 8];
        file.read_exact(&mut payload)
            .map_err(|e| Error::Format(format!("field payload: {e}")))?;
        let data = payload
            .chunks_exact(8)
            .map(|c| T::from_f64_const(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        FieldSnapshot::new(height, width, data)
    }

    pub fn write_packed(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let io = |e| Error::io(path, e);
        file.write_all(FIELD_MAGIC).map_err(io)?;
        file.write_all(&(self.height as u32).to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
        file.write_all(&(self.width as u32).to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
        for v in &self.data {
            file.write_all(&v.to_f64().unwrap().to_le_bytes())
                .map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Intensity-histogram divergence result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdfJs<T> {
    pub value: T,
    /// Set when every pixel on both sides shares one value, which makes the
    /// histogram range degenerate; the score is 0 by convention.
    pub degenerate: bool,
}

/// Pooled pixel-intensity Jensen–Shannon divergence in bits.
pub fn pdf_js<T: Scalar>(
    real: &[FieldSnapshot<T>],
    gen: &[FieldSnapshot<T>],
    bins: usize,
) -> Result<PdfJs<T>> {
    if real.is_empty() || gen.is_empty() {
        return Err(Error::InsufficientData(
            "both snapshot lists must be nonempty".into(),
        ));
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for f in real.iter().chain(gen.iter()) {
        for &v in &f.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !(hi > lo) {
        return Ok(PdfJs {
            value: T::zero(),
            degenerate: true,
        });
    }
    let histogram = |side: &[FieldSnapshot<T>]| -> Vec<T> {
        let mut counts = vec![T::zero(); bins];
        let span = hi - lo;
        let nb = T::from_f64_const(bins as f64);
        for f in side {
            for &v in &f.data {
                let idx = ((v - lo) / span * nb)
                    .floor()
                    .to_usize()
                    .unwrap_or(0)
                    .min(bins - 1);
                counts[idx] += T::one();
            }
        }
        let eps = T::from_f64_const(HISTOGRAM_EPSILON);
        let total: T = counts.iter().copied().sum();
        let smoothed: Vec<T> = counts.iter().map(|&c| c / total + eps).collect();
        let norm: T = smoothed.iter().copied().sum();
        smoothed.into_iter().map(|c| c / norm).collect()
    };
    let p = histogram(real);
    let q = histogram(gen);
    let half = T::from_f64_const(0.5);
    let mut acc = KahanSum::new();
    for (&a, &b) in p.iter().zip(q.iter()) {
        let mid = half * (a + b);
        acc.add(half * a * (a / mid).log2());
        acc.add(half * b * (b / mid).log2());
    }
    Ok(PdfJs {
        value: acc.total().max(T::zero()),
        degenerate: false,
    })
}

/// One convolution block's shape; the encoder is a fixed stack of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlockSpec {
    pub in_channels: usize,
    pub out_channels: usize,
}

/// Encoder configuration, recorded in run outputs so scores stay
/// comparable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub seed: u64,
    pub channel_widths: Vec<usize>,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Fixed random convolutional encoder: per block, a 3x3 stride-2 padded
/// convolution followed by a rectifier; a global average pool produces the
/// feature vector. Weights are zero-mean Gaussian scaled by
/// `1/sqrt(fan_in)`, biases are zero (so the map is positively homogeneous),
/// and everything is drawn once from the seed.
#[derive(Debug, Clone)]
pub struct RandomConvEncoder<T> {
    config: EncoderConfig,
    blocks: Vec<ConvBlockSpec>,
    /// Per block: `out_ch * in_ch * k * k` weights, row-major.
    weights: Vec<Vec<T>>,
}

impl<T: Scalar> RandomConvEncoder<T> {
    /// Encoder with the default widths (8, 16, 32).
    pub fn new(seed: u64) -> Self {
        Self::with_widths(seed, &[8, 16, 32])
    }

    pub fn with_widths(seed: u64, widths: &[usize]) -> Self {
        assert!(!widths.is_empty());
        let config = EncoderConfig {
            seed,
            channel_widths: widths.to_vec(),
            kernel_size: 3,
            stride: 2,
            padding: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::new();
        let mut weights = Vec::new();
        let mut in_ch = 1usize;
        for &out_ch in widths {
            let fan_in = in_ch * 9;
            let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).unwrap();
            let w: Vec<T> = (0..out_ch * in_ch * 9)
                .map(|_| T::from_f64_const(normal.sample(&mut rng)))
                .collect();
            blocks.push(ConvBlockSpec {
                in_channels: in_ch,
                out_channels: out_ch,
            });
            weights.push(w);
            in_ch = out_ch;
        }
        RandomConvEncoder {
            config,
            blocks,
            weights,
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Feature dimensionality (the last block's channel count).
    pub fn feature_dim(&self) -> usize {
        *self.config.channel_widths.last().unwrap()
    }

    /// Deterministic forward pass to a feature vector.
    pub fn encode(&self, field: &FieldSnapshot<T>) -> Result<Vec<T>> {
        if field.height < MIN_FIELD_EDGE || field.width < MIN_FIELD_EDGE {
            return Err(Error::Shape(format!(
                "encoder needs at least {MIN_FIELD_EDGE}x{MIN_FIELD_EDGE} grids, got {}x{}",
                field.height, field.width
            )));
        }
        let mut channels: Vec<Vec<T>> = vec![field.data.clone()];
        let mut h = field.height;
        let mut w = field.width;
        for (block, weights) in self.blocks.iter().zip(self.weights.iter()) {
            let out_h = h.div_ceil(2);
            let out_w = w.div_ceil(2);
            let mut next: Vec<Vec<T>> = Vec::with_capacity(block.out_channels);
            for oc in 0..block.out_channels {
                let mut plane = vec![T::zero(); out_h * out_w];
                for ic in 0..block.in_channels {
                    let base = (oc * block.in_channels + ic) * 9;
                    let input = &channels[ic];
                    for oy in 0..out_h {
                        for ox in 0..out_w {
                            let mut acc = plane[oy * out_w + ox];
                            // 3x3 window at stride 2 with padding 1.
                            for ky in 0..3usize {
                                let iy = (oy * 2 + ky) as isize - 1;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..3usize {
                                    let ix = (ox * 2 + kx) as isize - 1;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    acc += weights[base + ky * 3 + kx]
                                        * input[iy as usize * w + ix as usize];
                                }
                            }
                            plane[oy * out_w + ox] = acc;
                        }
                    }
                }
                for v in plane.iter_mut() {
                    *v = v.max(T::zero()); // rectifier, zero bias
                }
                next.push(plane);
            }
            channels = next;
            h = out_h;
            w = out_w;
        }
        let count = T::from_f64_const((h * w) as f64);
        Ok(channels
            .iter()
            .map(|plane| plane.iter().copied().sum::<T>() / count)
            .collect())
    }
}

/// Feature-space MMD result, including the bandwidth the median heuristic
/// picked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureMmd<T> {
    pub value: T,
    pub sigma: T,
    /// Set when every pooled feature vector is identical (median distance
    /// zero); the score is 0 by convention.
    pub degenerate: bool,
}

fn sq_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

/// Biased Gaussian-kernel MMD between encoded snapshot sets, bandwidth from
/// the median pairwise distance over the pooled features.
pub fn feature_mmd<T: Scalar>(
    real: &[FieldSnapshot<T>],
    gen: &[FieldSnapshot<T>],
    encoder: &RandomConvEncoder<T>,
) -> Result<FeatureMmd<T>> {
    if real.is_empty() || gen.is_empty() {
        return Err(Error::InsufficientData(
            "both snapshot lists must be nonempty".into(),
        ));
    }
    let f: Vec<Vec<T>> = real.iter().map(|s| encoder.encode(s)).collect::<Result<_>>()?;
    let g: Vec<Vec<T>> = gen.iter().map(|s| encoder.encode(s)).collect::<Result<_>>()?;

    let pooled: Vec<&Vec<T>> = f.iter().chain(g.iter()).collect();
    let mut dists = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            dists.push(sq_distance(pooled[i], pooled[j]).sqrt());
        }
    }
    if dists.is_empty() {
        // One snapshot per side: fall back on their distance, degenerate if 0.
        dists.push(sq_distance(&f[0], &g[0]).sqrt());
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let mid = dists.len() / 2;
    let sigma = if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        (dists[mid - 1] + dists[mid]) / T::from_f64_const(2.0)
    };
    if !(sigma > T::zero()) {
        return Ok(FeatureMmd {
            value: T::zero(),
            sigma: T::zero(),
            degenerate: true,
        });
    }

    let two = T::from_f64_const(2.0);
    let kernel = |a: &[T], b: &[T]| (-sq_distance(a, b) / (two * sigma * sigma)).exp();
    let mean = |xs: &[Vec<T>], ys: &[Vec<T>]| -> T {
        let mut acc = KahanSum::new();
        for x in xs {
            for y in ys {
                acc.add(kernel(x, y));
            }
        }
        acc.total() / T::from_f64_const((xs.len() * ys.len()) as f64)
    };
    let value = mean(&f, &f) - two * mean(&f, &g) + mean(&g, &g);
    Ok(FeatureMmd {
        value: value.max(T::zero()),
        sigma,
        degenerate: false,
    })
}
