//! Analytic carotid tube phantoms and tracking-noise models.
//!
//! The vessel runs along world `z` through the centre of the frame. Each
//! frame is the cross-section of the tube seen by a probe at `z = i · pitch`,
//! optionally tilted about the frame's horizontal axis. Intensities and
//! masks are evaluated at the world position of every pixel centre, so the
//! masks are exact rasterizations of the wall and lumen regions.
//!
//! Randomness comes from `ChaCha8Rng` seeded explicitly by each spec.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pose::{geodesic_distance, MetricWeights, Pose, Rotation};
use crate::raster::MaskPair;
use crate::recon::{Frame, FrameSequence};
use crate::regularize::PoseSequence;

/// Flat-top lumen narrowing centred at `center_mm` along the tube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center_mm: f64,
    pub length_mm: f64,
    /// Reduction of the lumen radius, mm.
    pub depth_mm: f64,
}

/// Phantom description, read from JSON. Missing fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub n_frames: usize,
    /// Spacing between consecutive frames along the tube, mm.
    pub frame_pitch_mm: f64,
    pub frame_width: usize,
    pub frame_height: usize,
    pub pixel_spacing_mm: f64,
    pub mab_radius_mm: f64,
    pub lib_radius_mm: f64,
    /// In-plane offset of the lumen centre from the vessel axis, mm.
    pub lumen_offset_mm: [f64; 2],
    pub bump: Option<Bump>,
    pub background_intensity: u8,
    pub wall_intensity: u8,
    pub lumen_intensity: u8,
    /// Standard deviation of additive Gaussian pixel noise.
    pub pixel_noise_sigma: f64,
    /// Probe tilt about the frame's x axis, degrees.
    pub tilt_deg: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            n_frames: 200,
            frame_pitch_mm: 0.2,
            frame_width: 200,
            frame_height: 200,
            pixel_spacing_mm: 0.1,
            mab_radius_mm: 5.0,
            lib_radius_mm: 4.0,
            lumen_offset_mm: [0.0, 0.0],
            bump: None,
            background_intensity: 90,
            wall_intensity: 200,
            lumen_intensity: 15,
            pixel_noise_sigma: 0.0,
            tilt_deg: 0.0,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames < 2 {
            return Err(invalid("phantom needs at least 2 frames"));
        }
        let positive = [
            ("frame_pitch_mm", self.frame_pitch_mm),
            ("pixel_spacing_mm", self.pixel_spacing_mm),
            ("mab_radius_mm", self.mab_radius_mm),
            ("lib_radius_mm", self.lib_radius_mm),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.frame_width < 2 || self.frame_height < 2 {
            return Err(invalid("frames must be at least 2x2 pixels"));
        }
        if !(self.pixel_noise_sigma >= 0.0 && self.pixel_noise_sigma.is_finite()) {
            return Err(invalid("pixel_noise_sigma must be >= 0"));
        }
        if self.tilt_deg.is_nan() || self.tilt_deg.abs() >= 60.0 {
            return Err(invalid(format!(
                "tilt_deg must be within (-60, 60), got {}",
                self.tilt_deg
            )));
        }
        let offset = self.lumen_offset_mm[0].hypot(self.lumen_offset_mm[1]);
        if self.lib_radius_mm + offset > self.mab_radius_mm {
            return Err(invalid("lumen must lie inside the vessel wall"));
        }
        let half_extent = 0.5
            * ((self.frame_width - 1) as f64 * self.pixel_spacing_mm)
                .min((self.frame_height - 1) as f64 * self.pixel_spacing_mm);
        if self.mab_radius_mm >= half_extent {
            return Err(invalid(format!(
                "vessel radius {} mm does not fit the {half_extent} mm frame half-extent",
                self.mab_radius_mm
            )));
        }
        if let Some(b) = &self.bump {
            if !(b.length_mm > 0.0 && b.center_mm.is_finite()) {
                return Err(invalid("bump length must be > 0"));
            }
            if !(b.depth_mm >= 0.0 && b.depth_mm < self.lib_radius_mm) {
                return Err(invalid("bump depth must be in [0, lib_radius_mm)"));
            }
        }
        Ok(())
    }

    /// Vessel axis position in world `x`, `y` (the frame centre).
    pub fn axis_xy(&self) -> [f64; 2] {
        [
            0.5 * (self.frame_width - 1) as f64 * self.pixel_spacing_mm,
            0.5 * (self.frame_height - 1) as f64 * self.pixel_spacing_mm,
        ]
    }

    /// Lumen radius at world position `z`. The bump occupies the half-open
    /// interval `[center - length/2, center + length/2)`, so a bump sampled at
    /// a pitch dividing its length covers exactly `length / pitch` frames.
    pub fn lib_radius_at(&self, z: f64) -> f64 {
        match &self.bump {
            Some(b)
                if (-1e-9..b.length_mm - 1e-9).contains(&(z - b.center_mm + 0.5 * b.length_mm)) =>
            {
                self.lib_radius_mm - b.depth_mm
            }
            _ => self.lib_radius_mm,
        }
    }

    /// Label (0 background, 1 wall, 2 lumen) at a world point.
    pub fn label_at(&self, p: &Vector3<f64>) -> u8 {
        let [cx, cy] = self.axis_xy();
        let (dx, dy) = (p.x - cx, p.y - cy);
        let r_lib = self.lib_radius_at(p.z);
        let (lx, ly) = (dx - self.lumen_offset_mm[0], dy - self.lumen_offset_mm[1]);
        if lx * lx + ly * ly <= r_lib * r_lib {
            2
        } else if dx * dx + dy * dy <= self.mab_radius_mm * self.mab_radius_mm {
            1
        } else {
            0
        }
    }

    /// Diameter stenosis implied by the geometry: the narrowest lumen seen
    /// along the chord perpendicular to the lumen offset.
    pub fn designed_grade(&self) -> f64 {
        let r = match &self.bump {
            Some(b) => self.lib_radius_mm - b.depth_mm,
            None => self.lib_radius_mm,
        };
        let e = self.lumen_offset_mm[0].hypot(self.lumen_offset_mm[1]);
        1.0 - (r * r - e * e).max(0.0).sqrt() / self.mab_radius_mm
    }

    /// Ground-truth probe pose of frame `i`.
    pub fn pose(&self, i: usize) -> Pose {
        let [cx, cy] = self.axis_xy();
        let c = Vector3::new(cx, cy, 0.0);
        let r = Rotation::from_axis_angle(Vector3::x(), self.tilt_deg.to_radians());
        let t = c - r.rotate(&c) + Vector3::new(0.0, 0.0, i as f64 * self.frame_pitch_mm);
        Pose::new(r, t)
    }
}

/// Rendered phantom sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub frames: FrameSequence,
    pub masks: Vec<MaskPair>,
    pub ground_truth: PoseSequence,
}

/// Renders every frame and mask of the phantom.
pub fn generate_sweep(spec: &PhantomSpec) -> Result<Sweep> {
    spec.validate()?;
    let (w, h, s) = (spec.frame_width, spec.frame_height, spec.pixel_spacing_mm);
    let poses: Vec<Pose> = (0..spec.n_frames).map(|i| spec.pose(i)).collect();
    let noise = if spec.pixel_noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.pixel_noise_sigma).map_err(|e| invalid(e.to_string()))?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut frames = Vec::with_capacity(spec.n_frames);
    let mut masks = Vec::with_capacity(spec.n_frames);
    for pose in &poses {
        let mut data = Vec::with_capacity(w * h);
        let mut labels = Vec::with_capacity(w * h);
        for v in 0..h {
            for u in 0..w {
                let p = pose.transform_point(&Vector3::new(u as f64 * s, v as f64 * s, 0.0));
                let label = spec.label_at(&p);
                let base = match label {
                    2 => spec.lumen_intensity,
                    1 => spec.wall_intensity,
                    _ => spec.background_intensity,
                } as f64;
                let value = match &noise {
                    Some(n) => (base + n.sample(&mut rng)).round().clamp(0.0, 255.0),
                    None => base,
                };
                data.push(value as u8);
                labels.push(label);
            }
        }
        frames.push(Frame::new(w, h, s, data)?);
        masks.push(MaskPair::from_labels(w, h, &labels)?);
    }
    let ground_truth = PoseSequence::new(poses)?;
    Ok(Sweep {
        frames: FrameSequence::new(frames, ground_truth.clone())?,
        masks,
        ground_truth,
    })
}

/// Centroids of the MAB masks mapped to world space, one per frame.
pub fn mask_centroids(
    masks: &[MaskPair],
    poses: &PoseSequence,
    pixel_spacing: f64,
) -> Result<Vec<Vector3<f64>>> {
    if masks.len() != poses.len() {
        return Err(Error::LengthMismatch {
            expected: poses.len(),
            actual: masks.len(),
        });
    }
    masks
        .iter()
        .zip(poses.iter())
        .enumerate()
        .map(|(i, (m, pose))| {
            let [x, y] = m
                .mab
                .centroid()
                .ok_or_else(|| Error::Empty(format!("MAB mask of frame {i}")))?;
            Ok(pose.transform_point(&Vector3::new(x * pixel_spacing, y * pixel_spacing, 0.0)))
        })
        .collect()
}

/// Backward probe motion: frames `start..start + len` arrive in reverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fallback {
    pub start: usize,
    pub len: usize,
}

/// Tracking noise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Per-axis translation noise, mm.
    pub sigma_trans: f64,
    /// Per-axis rotation-vector noise, radians.
    pub sigma_rot: f64,
    pub fallback: Option<Fallback>,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma_trans: 0.5,
            sigma_rot: 0.005,
            fallback: None,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_trans", self.sigma_trans),
            ("sigma_rot", self.sigma_rot),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Acquisition order: entry `i` is the ground-truth index of the `i`-th
/// recorded frame.
pub fn fallback_permutation(n: usize, fallback: Option<Fallback>) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(f) = fallback {
        let end = f
            .start
            .checked_add(f.len)
            .filter(|&e| e <= n)
            .ok_or_else(|| {
                invalid(format!(
                    "fallback run {}..{} outside {n} frames",
                    f.start,
                    f.start.saturating_add(f.len)
                ))
            })?;
        order[f.start..end].reverse();
    }
    Ok(order)
}

/// Tracked poses in acquisition order: ground truth reordered by the
/// fallback run, then corrupted with i.i.d. Gaussian noise.
pub fn perturb_poses(gt: &PoseSequence, noise: &NoiseSpec) -> Result<PoseSequence> {
    noise.validate()?;
    let order = fallback_permutation(gt.len(), noise.fallback)?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let trans = Normal::new(0.0, noise.sigma_trans).map_err(|e| invalid(e.to_string()))?;
    let rot = Normal::new(0.0, noise.sigma_rot).map_err(|e| invalid(e.to_string()))?;
    let draw3 = |d: &Normal<f64>, sigma: f64, rng: &mut ChaCha8Rng| {
        if sigma == 0.0 {
            Vector3::zeros()
        } else {
            Vector3::new(d.sample(rng), d.sample(rng), d.sample(rng))
        }
    };
    let poses = order
        .iter()
        .map(|&k| {
            let p = &gt[k];
            let dt = draw3(&trans, noise.sigma_trans, &mut rng);
            let dr = draw3(&rot, noise.sigma_rot, &mut rng);
            if noise.sigma_rot == 0.0 {
                Pose::new(p.rotation, p.translation + dt)
            } else {
                Pose::new(p.rotation.compose(&Rotation::exp(dr)), p.translation + dt)
            }
        })
        .collect();
    PoseSequence::new(poses)
}

/// Root-mean-square geodesic distance between corresponding poses.
pub fn trajectory_rmse(a: &PoseSequence, b: &PoseSequence, w: &MetricWeights) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let sum: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| geodesic_distance(x, y, w).powi(2))
        .sum();
    Ok((sum / a.len() as f64).sqrt())
}
