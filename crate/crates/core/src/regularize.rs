//! Total-variation denoising of tracked probe poses.
//!
//! The objective is `E(x) = D(x, p) + alpha R(x)` with
//! `D = sum_i h(d(x_i, p_i))` and `R = sum_i h(d(x_i, x_{i+1}))`, where `h` is
//! the Huber penalty and `d` the product-metric geodesic distance. It is
//! minimized with a cyclic proximal point algorithm whose proximal maps are
//! closed-form moves along geodesics.
//!
//! Frames acquired during backward probe motion are put back in sweep order
//! by [`rerank`] before denoising.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use crate::error::{invalid, Error, Result};
use crate::pose::{geodesic_distance, huber_unchecked, interpolate, MetricWeights, Pose};

/// Ordered poses, one per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence(Vec<Pose>);

impl PoseSequence {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::Empty("pose sequence".into()));
        }
        Ok(Self(poses))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn poses(&self) -> &[Pose] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Pose> {
        self.0.iter()
    }

    pub fn into_inner(self) -> Vec<Pose> {
        self.0
    }

    /// Reorders so that position `j` holds the pose at `permutation[j]`.
    pub fn permuted(&self, permutation: &[usize]) -> Result<Self> {
        check_permutation(permutation, self.len())?;
        Ok(Self(permutation.iter().map(|&i| self.0[i]).collect()))
    }
}

impl std::ops::Index<usize> for PoseSequence {
    type Output = Pose;
    fn index(&self, i: usize) -> &Pose {
        &self.0[i]
    }
}

pub(crate) fn check_permutation(permutation: &[usize], n: usize) -> Result<()> {
    if permutation.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: permutation.len(),
        });
    }
    let mut seen = vec![false; n];
    for &i in permutation {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(invalid("not a permutation"));
        }
    }
    Ok(())
}

/// Solver settings for [`cppa_denoise`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegConfig {
    /// Weight of the total-variation term.
    pub alpha: f64,
    /// Proximal step of the first cycle; cycle `n` uses `lambda0 / (n + 1)`.
    pub lambda0: f64,
    pub n_cycles: usize,
    pub weights: MetricWeights,
    /// Stop once the objective changes by less than this between cycles.
    pub tol: f64,
}

impl Default for RegConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            lambda0: 1.0,
            n_cycles: 200,
            weights: MetricWeights::default(),
            tol: 1e-8,
        }
    }
}

impl RegConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return Err(invalid(format!(
                "lambda0 must be > 0, got {}",
                self.lambda0
            )));
        }
        if self.n_cycles == 0 {
            return Err(invalid("n_cycles must be >= 1"));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(invalid(format!("tol must be >= 0, got {}", self.tol)));
        }
        self.weights.validate()
    }
}

fn check_same_len(x: &PoseSequence, p: &PoseSequence) -> Result<()> {
    if x.len() != p.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            actual: x.len(),
        });
    }
    Ok(())
}

/// Fidelity term `sum_i h(d(x_i, p_i))`.
pub fn data_term(x: &PoseSequence, p: &PoseSequence, w: &MetricWeights) -> Result<f64> {
    check_same_len(x, p)?;
    Ok(x.iter()
        .zip(p.iter())
        .map(|(a, b)| huber_unchecked(geodesic_distance(a, b, w)))
        .sum())
}

/// First-order total variation `sum_i h(d(x_i, x_{i+1}))`.
pub fn reg_term(x: &PoseSequence, w: &MetricWeights) -> f64 {
    x.poses()
        .windows(2)
        .map(|pair| huber_unchecked(geodesic_distance(&pair[0], &pair[1], w)))
        .sum()
}

pub fn tv_objective(x: &PoseSequence, p: &PoseSequence, cfg: &RegConfig) -> Result<f64> {
    Ok(data_term(x, p, &cfg.weights)? + cfg.alpha * reg_term(x, &cfg.weights))
}

/// Proximal map of `step * h(d(., anchor))` evaluated at `x`.
///
/// The minimizer lies on the geodesic from `x` to `anchor`; the fraction
/// travelled depends on which Huber branch is active at the result.
pub fn prox_data(x: &Pose, anchor: &Pose, step: f64, w: &MetricWeights) -> Pose {
    let s = geodesic_distance(x, anchor, w);
    if s == 0.0 || step <= 0.0 {
        return *x;
    }
    let t = if s < (1.0 + 2.0 * step) * FRAC_1_SQRT_2 {
        2.0 * step / (1.0 + 2.0 * step)
    } else {
        (step * SQRT_2 / s).min(1.0)
    };
    interpolate(x, anchor, t)
}

/// Proximal map of `step * h(d(a, b))` jointly in `(a, b)`.
///
/// Both poses move the same distance toward each other along their geodesic
/// and never pass the midpoint.
pub fn prox_pair(a: &Pose, b: &Pose, step: f64, w: &MetricWeights) -> (Pose, Pose) {
    let s = geodesic_distance(a, b, w);
    if s == 0.0 || step <= 0.0 {
        return (*a, *b);
    }
    let t = if s < (1.0 + 4.0 * step) * FRAC_1_SQRT_2 {
        2.0 * step / (1.0 + 4.0 * step)
    } else {
        (step * SQRT_2 / s).min(0.5)
    };
    (interpolate(a, b, t), interpolate(b, a, t))
}

/// Minimizes the TV objective with a cyclic proximal point algorithm.
///
/// Each cycle applies the fidelity prox to every pose, then the pairwise prox
/// to pairs `(0,1), (2,3), ...` and then `(1,2), (3,4), ...`, with step
/// `lambda0 / (n + 1)`. The lowest-objective iterate is returned, so the
/// result is never worse than the input.
pub fn cppa_denoise(p: &PoseSequence, cfg: &RegConfig) -> Result<PoseSequence> {
    cfg.validate()?;
    if p.len() < 2 {
        return Err(invalid("denoising needs at least two poses"));
    }
    let w = &cfg.weights;
    let data = p.poses();
    let mut x = data.to_vec();

    let objective = |x: &[Pose]| -> f64 {
        let d: f64 = x
            .iter()
            .zip(data)
            .map(|(a, b)| huber_unchecked(geodesic_distance(a, b, w)))
            .sum();
        let r: f64 = x
            .windows(2)
            .map(|pr| huber_unchecked(geodesic_distance(&pr[0], &pr[1], w)))
            .sum();
        d + cfg.alpha * r
    };

    let mut best = x.clone();
    let mut best_value = objective(&x);
    let mut previous = best_value;

    for cycle in 0..cfg.n_cycles {
        let step = cfg.lambda0 / (cycle as f64 + 1.0);
        for (xi, pi) in x.iter_mut().zip(data) {
            *xi = prox_data(xi, pi, step, w);
        }
        for start in [0usize, 1] {
            for pair in x[start..].chunks_exact_mut(2) {
                let (a, b) = prox_pair(&pair[0], &pair[1], step * cfg.alpha, w);
                pair[0] = a;
                pair[1] = b;
            }
        }
        let value = objective(&x);
        if value < best_value {
            best_value = value;
            best.copy_from_slice(&x);
        }
        if (previous - value).abs() < cfg.tol {
            break;
        }
        previous = value;
    }
    Ok(PoseSequence(best))
}

/// Frame order recovered from mask centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankResult {
    /// `permutation[j]` is the original index of the frame placed at `j`.
    pub permutation: Vec<usize>,
    /// Signed position of each original frame along the principal axis (mm).
    pub projections: Vec<f64>,
    pub axis: Vector3<f64>,
}

impl RerankResult {
    pub fn is_identity(&self) -> bool {
        self.permutation.iter().enumerate().all(|(j, &i)| i == j)
    }
}

/// Orders frames by the projection of their centroids onto the first
/// principal axis of the centroid cloud.
///
/// The axis is oriented so that projections increase with acquisition index
/// on balance, which leaves a monotone sweep untouched. Ties keep the original
/// order.
pub fn rerank(centroids: &[Vector3<f64>], poses: &PoseSequence) -> Result<RerankResult> {
    let n = centroids.len();
    if n != poses.len() {
        return Err(Error::LengthMismatch {
            expected: poses.len(),
            actual: n,
        });
    }
    if n < 3 {
        return Err(invalid("re-ranking needs at least three frames"));
    }
    if centroids.iter().any(|c| !c.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite("centroids".into()));
    }

    let mean = centroids.iter().sum::<Vector3<f64>>() / n as f64;
    let mut cov = Matrix3::zeros();
    for c in centroids {
        let d = c - mean;
        cov += d * d.transpose();
    }
    cov /= n as f64;

    let eig = SymmetricEigen::new(cov);
    let (k, &largest) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("3x3 matrix");
    let scale = mean.norm_squared().max(1.0);
    if largest.is_nan() || largest <= 1e-12 * scale {
        return Err(Error::NoPrincipalDirection);
    }
    let mut axis: Vector3<f64> = eig.eigenvectors.column(k).into_owned();
    axis.normalize_mut();

    let mut projections: Vec<f64> = centroids.iter().map(|c| c.dot(&axis)).collect();
    let index_mean = (n as f64 - 1.0) / 2.0;
    let trend: f64 = projections
        .iter()
        .enumerate()
        .map(|(i, p)| (i as f64 - index_mean) * p)
        .sum();
    if trend < 0.0 {
        axis = -axis;
        projections.iter_mut().for_each(|p| *p = -*p);
    }

    let mut permutation: Vec<usize> = (0..n).collect();
    permutation.sort_by(|&a, &b| projections[a].total_cmp(&projections[b]));
    Ok(RerankResult {
        permutation,
        projections,
        axis,
    })
}
