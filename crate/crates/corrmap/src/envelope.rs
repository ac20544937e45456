//! Map points and binwise envelope estimators for scatter clouds.
//!
//! [`scatter_envelopes`] bins a cloud along x into uniform bins of a given
//! width, keeps the per-bin extreme points (the anchors retain their
//! original x positions) and smooths with a centered moving average.
//! [`frontier_envelope`] is the lower-frontier variant used for the
//! indicator map: binwise minima at bin centers, piecewise-constant
//! extension to the full x span, then the same smoothing; the admissible
//! region is everything on or above the smoothed curve.

use serde::{Deserialize, Serialize};

use crate::cci::cci;
use crate::datasets::BitDataset;
use crate::error::{Error, Result};
use crate::spectrum::{qcli_exact, qcli_mc, DENSE_SPECTRUM_LIMIT};
use crate::stats::moving_average;
use crate::Scalar;

/// Where a dataset came from; controls map colors downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Classical,
    Quantum,
}

/// One dataset's position on the indicator map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPoint<T> {
    pub label: String,
    pub qcli: T,
    pub cci: T,
    pub provenance: Provenance,
}

/// Monte-Carlo fallback settings for datasets too wide for the dense path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McFallback {
    pub budget: usize,
    pub seed: u64,
}

/// Computes a dataset's `(qcli, cci)` coordinates: exact spectral value in
/// the dense regime, Monte-Carlo (when configured) beyond it.
pub fn map_point<T: Scalar>(
    d: &BitDataset,
    label: impl Into<String>,
    provenance: Provenance,
    mc: Option<McFallback>,
) -> Result<MapPoint<T>> {
    let qcli = if d.n() <= DENSE_SPECTRUM_LIMIT {
        qcli_exact(d)?
    } else {
        let mc = mc.ok_or_else(|| {
            Error::capacity_hint(
                "exact map placement",
                d.n(),
                DENSE_SPECTRUM_LIMIT,
                "; pass a Monte-Carlo fallback budget",
            )
        })?;
        qcli_mc::<T>(d, mc.budget, mc.seed)?.value
    };
    let report = cci::<T>(d)?;
    Ok(MapPoint {
        label: label.into(),
        qcli,
        cci: report.cci,
        provenance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeKind {
    Upper,
    Lower,
    Frontier,
}

/// A binwise envelope: raw anchors (x strictly increasing) and their
/// smoothed counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCurve<T> {
    pub kind: EnvelopeKind,
    pub anchors: Vec<(T, T)>,
    pub smoothed: Vec<(T, T)>,
}

impl<T: Scalar> EnvelopeCurve<T> {
    fn from_anchors(kind: EnvelopeKind, anchors: Vec<(T, T)>, window: usize) -> Self {
        let ys: Vec<T> = anchors.iter().map(|&(_, y)| y).collect();
        let smooth = moving_average(&ys, window);
        let smoothed = anchors
            .iter()
            .zip(smooth)
            .map(|(&(x, _), y)| (x, y))
            .collect();
        EnvelopeCurve {
            kind,
            anchors,
            smoothed,
        }
    }

    /// Piecewise-linear evaluation of the smoothed curve, clamped to its
    /// end values outside the anchor span.
    pub fn value_at(&self, x: T) -> T {
        let pts = &self.smoothed;
        if pts.is_empty() {
            return T::zero();
        }
        if x <= pts[0].0 {
            return pts[0].1;
        }
        if x >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        for w in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if x >= x0 && x <= x1 {
                if x1 == x0 {
                    return y0;
                }
                let alpha = (x - x0) / (x1 - x0);
                return y0 + alpha * (y1 - y0);
            }
        }
        pts[pts.len() - 1].1
    }
}

/// Default bin width for the scatter envelopes.
pub const DEFAULT_BIN_WIDTH: f64 = 0.09;
/// Default smoothing window (centered moving average).
pub const DEFAULT_WINDOW: usize = 3;
/// Default bin count for the lower-frontier estimator.
pub const DEFAULT_FRONTIER_BINS: usize = 20;
/// Default minimum points per qualifying frontier bin.
pub const DEFAULT_FRONTIER_MIN_COUNT: usize = 3;

/// Upper and lower binwise envelopes of a scatter cloud. Per nonempty bin
/// (at least `min_count` points) the extreme points become anchors keeping
/// their original x. Ties prefer the smaller x so the result is independent
/// of input order.
pub fn scatter_envelopes<T: Scalar>(
    points: &[(T, T)],
    bin_width: T,
    min_count: usize,
    window: usize,
) -> Result<(EnvelopeCurve<T>, EnvelopeCurve<T>)> {
    if !(bin_width > T::zero()) {
        return Err(Error::Config("bin width must be positive".into()));
    }
    if points.is_empty() {
        return Err(Error::InsufficientData("no points to bin".into()));
    }
    let x_min = points
        .iter()
        .map(|&(x, _)| x)
        .fold(T::infinity(), T::min);
    let x_max = points
        .iter()
        .map(|&(x, _)| x)
        .fold(T::neg_infinity(), T::max);
    let span = x_max - x_min;
    let bins = (span / bin_width)
        .floor()
        .to_usize()
        .unwrap_or(0)
        .saturating_add(1);

    let mut grouped: Vec<Vec<(T, T)>> = vec![Vec::new(); bins];
    for &p in points {
        let idx = ((p.0 - x_min) / bin_width)
            .floor()
            .to_usize()
            .unwrap_or(0)
            .min(bins - 1);
        grouped[idx].push(p);
    }

    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for bucket in grouped.iter().filter(|b| b.len() >= min_count.max(1)) {
        let mut hi = bucket[0];
        let mut lo = bucket[0];
        for &p in &bucket[1..] {
            if p.1 > hi.1 || (p.1 == hi.1 && p.0 < hi.0) {
                hi = p;
            }
            if p.1 < lo.1 || (p.1 == lo.1 && p.0 < lo.0) {
                lo = p;
            }
        }
        upper.push(hi);
        lower.push(lo);
    }
    if upper.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 qualifying bins, have {}",
            upper.len()
        )));
    }
    Ok((
        EnvelopeCurve::from_anchors(EnvelopeKind::Upper, upper, window),
        EnvelopeCurve::from_anchors(EnvelopeKind::Lower, lower, window),
    ))
}

/// Lower frontier of an indicator cloud: binwise minimum y per x bin with
/// at least `min_count` points, anchored at bin centers, extended
/// piecewise-constant to the full span, then smoothed. The admissible
/// region is `{(x, y): y >= frontier(x)}`.
pub fn frontier_envelope<T: Scalar>(
    points: &[(T, T)],
    bin_count: usize,
    min_count: usize,
    window: usize,
) -> Result<EnvelopeCurve<T>> {
    if bin_count == 0 {
        return Err(Error::Config("bin count must be positive".into()));
    }
    if points.is_empty() {
        return Err(Error::InsufficientData("no points to bin".into()));
    }
    let x_min = points
        .iter()
        .map(|&(x, _)| x)
        .fold(T::infinity(), T::min);
    let x_max = points
        .iter()
        .map(|&(x, _)| x)
        .fold(T::neg_infinity(), T::max);
    let span = x_max - x_min;

    let mut mins: Vec<Option<T>> = vec![None; bin_count];
    let mut counts = vec![0usize; bin_count];
    for &(x, y) in points {
        let idx = if span > T::zero() {
            ((x - x_min) / span * T::from_f64_const(bin_count as f64))
                .floor()
                .to_usize()
                .unwrap_or(0)
                .min(bin_count - 1)
        } else {
            0
        };
        counts[idx] += 1;
        mins[idx] = Some(match mins[idx] {
            Some(cur) => cur.min(y),
            None => y,
        });
    }

    let width = span / T::from_f64_const(bin_count as f64);
    let half = T::from_f64_const(0.5);
    let mut anchors: Vec<(T, T)> = Vec::new();
    for b in 0..bin_count {
        if counts[b] >= min_count.max(1) {
            if let Some(y) = mins[b] {
                let center = x_min + (T::from_f64_const(b as f64) + half) * width;
                anchors.push((center, y));
            }
        }
    }
    if anchors.is_empty() {
        return Err(Error::InsufficientData(
            "no bin reaches the minimum point count".into(),
        ));
    }
    // Piecewise-constant extension to the full horizontal span.
    let first = anchors[0].1;
    let last = anchors[anchors.len() - 1].1;
    if anchors[0].0 > x_min {
        anchors.insert(0, (x_min, first));
    }
    if anchors[anchors.len() - 1].0 < x_max {
        anchors.push((x_max, last));
    }
    Ok(EnvelopeCurve::from_anchors(
        EnvelopeKind::Frontier,
        anchors,
        window,
    ))
}
