//! Segmentation overlap, boundary distances, paired-series agreement and
//! diagnostic rates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::raster::BinaryRaster;

/// Dice coefficient `2|P ∩ L| / (|P| + |L|)`; two empty masks score 1.
pub fn dsc(p: &BinaryRaster, l: &BinaryRaster) -> Result<f64> {
    if !p.same_shape(l) {
        return Err(Error::GeometryMismatch(format!(
            "masks are {}x{} and {}x{}",
            p.width(),
            p.height(),
            l.width(),
            l.height()
        )));
    }
    let (mut inter, mut np, mut nl) = (0usize, 0usize, 0usize);
    for (&a, &b) in p.data().iter().zip(l.data()) {
        np += a as usize;
        nl += b as usize;
        inter += (a && b) as usize;
    }
    if np + nl == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (np + nl) as f64)
}

/// Pixel coordinates of the 8-neighbour boundary of a mask.
pub fn boundary_points(mask: &BinaryRaster) -> Vec<[f64; 2]> {
    mask.boundary()
        .pixels()
        .map(|(x, y)| [x as f64, y as f64])
        .collect()
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    (dx * dx + dy * dy).sqrt()
}

/// Distance from each point of `a` to its nearest neighbour in `b`.
fn nearest_distances(a: &[[f64; 2]], b: &[[f64; 2]]) -> Vec<f64> {
    a.par_iter()
        .map(|p| b.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min))
        .collect()
}

fn check_sets(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("point set".into()));
    }
    Ok(())
}

/// Symmetric Hausdorff distance between two finite point sets.
pub fn hausdorff(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64> {
    check_sets(a, b)?;
    let directed =
        |x: &[[f64; 2]], y: &[[f64; 2]]| nearest_distances(x, y).into_iter().fold(0.0, f64::max);
    Ok(directed(a, b).max(directed(b, a)))
}

/// Percentile `q` in `[0, 100]` with linear interpolation between order
/// statistics at rank `q/100 · (n-1)`.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile input".into()));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(invalid(format!("percentile {q} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = q / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Ok(v[lo] + (rank - lo as f64) * (v[hi] - v[lo]))
}

/// Larger of the two directed 95th-percentile nearest-neighbour distances.
pub fn hd95(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64> {
    check_sets(a, b)?;
    let ab = percentile(&nearest_distances(a, b), 95.0)?;
    let ba = percentile(&nearest_distances(b, a), 95.0)?;
    Ok(ab.max(ba))
}

/// Binary classification counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Contingency {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl Contingency {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        Self { tp, fn_, fp, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    /// Tallies predictions against ground truth.
    pub fn from_labels(predicted: &[bool], truth: &[bool]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::LengthMismatch {
                expected: truth.len(),
                actual: predicted.len(),
            });
        }
        let mut c = Self::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (false, true) => c.fn_ += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassificationRates {
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
}

pub fn classification_rates(c: &Contingency) -> Result<ClassificationRates> {
    if c.tp + c.fn_ == 0 {
        return Err(invalid("sensitivity undefined: no positive cases"));
    }
    if c.tn + c.fp == 0 {
        return Err(invalid("specificity undefined: no negative cases"));
    }
    Ok(ClassificationRates {
        sensitivity: c.tp as f64 / (c.tp + c.fn_) as f64,
        specificity: c.tn as f64 / (c.tn + c.fp) as f64,
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
    })
}

/// Two measurement series of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PairedSeries {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch {
                expected: a.len(),
                actual: b.len(),
            });
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("paired series".into()));
        }
        Ok(Self { a, b })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanAbsDiff {
    pub mad: f64,
    /// Population standard deviation of the absolute differences.
    pub sd: f64,
}

pub fn mad(s: &PairedSeries) -> Result<MeanAbsDiff> {
    if s.is_empty() {
        return Err(Error::Empty("paired series".into()));
    }
    let n = s.len() as f64;
    let d: Vec<f64> = s.a.iter().zip(&s.b).map(|(x, y)| (x - y).abs()).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(MeanAbsDiff {
        mad: mean,
        sd: var.sqrt(),
    })
}

/// Sample correlation coefficient.
pub fn pearson(s: &PairedSeries) -> Result<f64> {
    if s.len() < 2 {
        return Err(invalid("correlation needs at least two pairs"));
    }
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(&s.a) || constant(&s.b) {
        return Err(invalid("correlation undefined for a constant series"));
    }
    let n = s.len() as f64;
    let ma = s.a.iter().sum::<f64>() / n;
    let mb = s.b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in s.a.iter().zip(&s.b) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(invalid("correlation undefined for a constant series"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}
