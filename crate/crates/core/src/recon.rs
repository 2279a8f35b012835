//! Voxel reconstruction from posed 2D frames.
//!
//! Every pixel is forward-mapped through its frame pose to the nearest voxel
//! centre ("dot projection"). Intensity volumes average all writes that land
//! in a voxel; label volumes keep the maximum label. Voxels that received no
//! write are filled afterwards from nearby written voxels.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::pose::Pose;
use crate::raster::MaskPair;
use crate::regularize::PoseSequence;

/// Single grayscale ultrasound frame, row-major, `u` = column and `v` = row.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    /// In-plane pixel size, mm.
    pub pixel_spacing: f64,
    pub data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixel_spacing: f64, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("frame dimensions must be >= 1"));
        }
        if !(pixel_spacing > 0.0 && pixel_spacing.is_finite()) {
            return Err(invalid(format!(
                "pixel spacing must be > 0, got {pixel_spacing}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixel_spacing,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, pixel_spacing: f64, value: u8) -> Result<Self> {
        Self::new(width, height, pixel_spacing, vec![value; width * height])
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.data[v * self.width + u]
    }
}

/// Frames with one tracked pose each.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<Frame>,
    pub poses: PoseSequence,
    /// Acquisition rate, Hz.
    pub frame_rate: f64,
}

impl FrameSequence {
    pub const DEFAULT_FRAME_RATE: f64 = 24.0;

    pub fn new(frames: Vec<Frame>, poses: PoseSequence) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Empty("frame sequence".into()));
        }
        if frames.len() != poses.len() {
            return Err(Error::LengthMismatch {
                expected: frames.len(),
                actual: poses.len(),
            });
        }
        Ok(Self {
            frames,
            poses,
            frame_rate: Self::DEFAULT_FRAME_RATE,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Acquisition time of frame `i`, seconds.
    pub fn timestamp(&self, i: usize) -> f64 {
        i as f64 / self.frame_rate
    }
}

/// World position of pixel `(u, v)` of frame `frame_index`.
pub fn pixel_to_world(
    frame_index: usize,
    pixel: (usize, usize),
    seq: &FrameSequence,
) -> Result<Vector3<f64>> {
    let frame = seq
        .frames
        .get(frame_index)
        .ok_or_else(|| invalid(format!("frame index {frame_index} out of range")))?;
    let (u, v) = pixel;
    if u >= frame.width || v >= frame.height {
        return Err(invalid(format!(
            "pixel ({u}, {v}) outside {}x{} frame",
            frame.width, frame.height
        )));
    }
    Ok(map_pixel(
        &seq.poses[frame_index],
        frame.pixel_spacing,
        u,
        v,
    ))
}

#[inline]
fn map_pixel(pose: &Pose, spacing: f64, u: usize, v: usize) -> Vector3<f64> {
    pose.transform_point(&Vector3::new(u as f64 * spacing, v as f64 * spacing, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconConfig {
    /// Isotropic voxel size, mm.
    pub spacing: f64,
    /// Chebyshev radius of the hole-filling neighbourhood, voxels.
    pub hole_fill_radius: usize,
    /// Max-write labels and nearest-neighbour filling instead of averaging.
    pub label_mode: bool,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            spacing: 0.2,
            hole_fill_radius: 3,
            label_mode: false,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(invalid(format!(
                "voxel spacing must be > 0, got {}",
                self.spacing
            )));
        }
        Ok(())
    }
}

/// Axis-aligned voxel grid, x-fastest storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    /// Centre of voxel `(0, 0, 0)`, mm.
    pub origin: [f64; 3],
    pub spacing: f64,
    pub dims: [usize; 3],
    pub voxels: Vec<u8>,
    /// Voxels that received at least one write (or were hole-filled).
    pub fill_mask: Vec<bool>,
    pub label_mode: bool,
}

impl Volume {
    pub fn new(origin: [f64; 3], spacing: f64, dims: [usize; 3], label_mode: bool) -> Result<Self> {
        if dims.contains(&0) {
            return Err(invalid("volume dimensions must be >= 1"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(invalid(format!("voxel spacing must be > 0, got {spacing}")));
        }
        let n = dims[0] * dims[1] * dims[2];
        Ok(Self {
            origin,
            spacing,
            dims,
            voxels: vec![0; n],
            fill_mask: vec![false; n],
            label_mode,
        })
    }

    /// Wraps an existing voxel payload; every voxel counts as written.
    pub fn from_voxels(
        origin: [f64; 3],
        spacing: f64,
        dims: [usize; 3],
        voxels: Vec<u8>,
        label_mode: bool,
    ) -> Result<Self> {
        let mut v = Self::new(origin, spacing, dims, label_mode)?;
        if voxels.len() != v.voxels.len() {
            return Err(Error::LengthMismatch {
                expected: v.voxels.len(),
                actual: voxels.len(),
            });
        }
        v.voxels = voxels;
        v.fill_mask.iter_mut().for_each(|f| *f = true);
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.voxels[self.index(x, y, z)]
    }

    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vector3<f64> {
        Vector3::new(
            self.origin[0] + x as f64 * self.spacing,
            self.origin[1] + y as f64 * self.spacing,
            self.origin[2] + z as f64 * self.spacing,
        )
    }

    /// Nearest voxel to a world point, if inside the grid.
    pub fn nearest_voxel(&self, p: &Vector3<f64>) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.spacing).round();
            if !(f >= 0.0 && f < self.dims[a] as f64) {
                return None;
            }
            out[a] = f as usize;
        }
        Some(out)
    }

    /// XY raster of slice `z`.
    pub fn slice_z(&self, z: usize) -> &[u8] {
        let n = self.dims[0] * self.dims[1];
        &self.voxels[z * n..(z + 1) * n]
    }

    /// Fraction of voxels flagged in `fill_mask` among those selected by `region`.
    pub fn filled_fraction(&self, region: &[bool]) -> f64 {
        let total = region.iter().filter(|&&r| r).count();
        if total == 0 {
            return 1.0;
        }
        let filled = region
            .iter()
            .zip(&self.fill_mask)
            .filter(|(&r, &f)| r && f)
            .count();
        filled as f64 / total as f64
    }

    fn same_grid(&self, other: &Volume) -> bool {
        self.dims == other.dims && self.spacing == other.spacing && self.origin == other.origin
    }

    pub fn check_aligned(&self, other: &Volume) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "volumes differ: dims {:?} vs {:?}, spacing {} vs {}, origin {:?} vs {:?}",
                self.dims, other.dims, self.spacing, other.spacing, self.origin, other.origin
            )))
        }
    }
}

struct Accumulator {
    sum: Vec<u64>,
    count: Vec<u32>,
    max: Vec<u8>,
}

/// Grid covering every transformed frame corner, padded by one voxel.
fn hull_grid(
    poses: &[Pose],
    frames: &[(usize, usize, f64)],
    spacing: f64,
) -> Result<([f64; 3], [usize; 3])> {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for (pose, &(w, h, s)) in poses.iter().zip(frames) {
        for (u, v) in [(0, 0), (w - 1, 0), (0, h - 1), (w - 1, h - 1)] {
            let p = map_pixel(pose, s, u, v);
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
    }
    let mut origin = [0.0; 3];
    let mut dims = [0usize; 3];
    for a in 0..3 {
        origin[a] = lo[a] - spacing;
        // tolerate rounding noise in the span so exact multiples stay exact
        let span = ((hi[a] - lo[a]) / spacing - 1e-9).ceil().max(0.0);
        if !span.is_finite() || span > 1e6 {
            return Err(invalid("reconstruction extent is not finite or too large"));
        }
        dims[a] = span as usize + 3;
    }
    Ok((origin, dims))
}

fn check_poses(poses: &PoseSequence) -> Result<()> {
    if poses.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("poses".into()));
    }
    Ok(())
}

/// Forward-maps pixel rasters into a grid. Accumulation is integer-valued so
/// the result does not depend on frame order.
fn splat<'a>(
    rasters: impl Iterator<Item = (&'a Pose, usize, usize, f64, &'a [u8])>,
    grid: &mut Volume,
    acc: &mut Accumulator,
) {
    for (pose, width, height, spacing, data) in rasters {
        let col = pose.rotation.rotate(&Vector3::new(spacing, 0.0, 0.0));
        let row = pose.rotation.rotate(&Vector3::new(0.0, spacing, 0.0));
        for v in 0..height {
            let row_start = pose.translation + row * v as f64;
            for u in 0..width {
                let p = row_start + col * u as f64;
                if let Some([x, y, z]) = grid.nearest_voxel(&p) {
                    let i = grid.index(x, y, z);
                    let value = data[v * width + u];
                    acc.sum[i] += value as u64;
                    acc.count[i] += 1;
                    acc.max[i] = acc.max[i].max(value);
                }
            }
        }
    }
    for i in 0..grid.voxels.len() {
        if acc.count[i] > 0 {
            grid.fill_mask[i] = true;
            grid.voxels[i] = if grid.label_mode {
                acc.max[i]
            } else {
                // round half away from zero
                (acc.sum[i] as f64 / acc.count[i] as f64).round() as u8
            };
        }
    }
}

fn reconstruct_rasters(
    poses: &PoseSequence,
    geometry: &[(usize, usize, f64)],
    data: &[&[u8]],
    cfg: &ReconConfig,
) -> Result<Volume> {
    cfg.validate()?;
    check_poses(poses)?;
    let (origin, dims) = hull_grid(poses.poses(), geometry, cfg.spacing)?;
    let mut grid = Volume::new(origin, cfg.spacing, dims, cfg.label_mode)?;
    let n = grid.len();
    let mut acc = Accumulator {
        sum: vec![0; n],
        count: vec![0; n],
        max: vec![0; n],
    };
    splat(
        poses
            .iter()
            .zip(geometry)
            .zip(data)
            .map(|((p, &(w, h, s)), d)| (p, w, h, s, *d)),
        &mut grid,
        &mut acc,
    );
    Ok(hole_fill(&grid, cfg.hole_fill_radius))
}

/// Forward-mapping reconstruction of an intensity (or label) volume.
pub fn fdp_reconstruct(seq: &FrameSequence, cfg: &ReconConfig) -> Result<Volume> {
    if seq.frames.is_empty() {
        return Err(Error::Empty("frame sequence".into()));
    }
    let geometry: Vec<_> = seq
        .frames
        .iter()
        .map(|f| (f.width, f.height, f.pixel_spacing))
        .collect();
    let data: Vec<&[u8]> = seq.frames.iter().map(|f| f.data.as_slice()).collect();
    reconstruct_rasters(&seq.poses, &geometry, &data, cfg)
}

/// Label volume (0 background, 1 wall, 2 lumen) from per-frame mask pairs.
///
/// `seq` supplies the frame geometry and poses; each mask must match its
/// frame's size.
pub fn reconstruct_mask_volume(
    masks: &[MaskPair],
    seq: &FrameSequence,
    cfg: &ReconConfig,
) -> Result<Volume> {
    if masks.len() != seq.len() {
        return Err(Error::LengthMismatch {
            expected: seq.len(),
            actual: masks.len(),
        });
    }
    for (i, (m, f)) in masks.iter().zip(&seq.frames).enumerate() {
        if m.width() != f.width || m.height() != f.height {
            return Err(Error::GeometryMismatch(format!(
                "mask {i} is {}x{}, frame is {}x{}",
                m.width(),
                m.height(),
                f.width,
                f.height
            )));
        }
    }
    let labels: Vec<Vec<u8>> = masks.iter().map(|m| m.label_raster()).collect();
    let geometry: Vec<_> = seq
        .frames
        .iter()
        .map(|f| (f.width, f.height, f.pixel_spacing))
        .collect();
    let data: Vec<&[u8]> = labels.iter().map(|l| l.as_slice()).collect();
    let cfg = ReconConfig {
        label_mode: true,
        ..*cfg
    };
    reconstruct_rasters(&seq.poses, &geometry, &data, &cfg)
}

/// Fills unwritten voxels from written voxels within a Chebyshev radius.
///
/// Intensity volumes take the inverse-distance-weighted mean of the written
/// neighbours; label volumes take the nearest written neighbour (first in
/// scan order on ties). Reads only the input grid.
pub fn hole_fill(vol: &Volume, radius: usize) -> Volume {
    if radius == 0 {
        return vol.clone();
    }
    let [nx, ny, nz] = vol.dims;
    let table = FillTable::new(vol);
    let r = radius as isize;
    let slab = nx * ny;

    let mut out = vol.clone();
    out.voxels
        .par_chunks_mut(slab)
        .zip(out.fill_mask.par_chunks_mut(slab))
        .enumerate()
        .for_each(|(z, (voxels, mask))| {
            for y in 0..ny {
                for x in 0..nx {
                    let i = x + nx * y;
                    if mask[i] {
                        continue;
                    }
                    let lo = [
                        x.saturating_sub(radius),
                        y.saturating_sub(radius),
                        z.saturating_sub(radius),
                    ];
                    let hi = [
                        (x + radius).min(nx - 1),
                        (y + radius).min(ny - 1),
                        (z + radius).min(nz - 1),
                    ];
                    if table.count(lo, hi) == 0 {
                        continue;
                    }
                    let mut weight_sum = 0.0;
                    let mut value_sum = 0.0;
                    let mut nearest = (isize::MAX, 0u8);
                    for dz in -r..=r {
                        let zz = z as isize + dz;
                        if zz < 0 || zz >= nz as isize {
                            continue;
                        }
                        for dy in -r..=r {
                            let yy = y as isize + dy;
                            if yy < 0 || yy >= ny as isize {
                                continue;
                            }
                            for dx in -r..=r {
                                let xx = x as isize + dx;
                                if xx < 0 || xx >= nx as isize {
                                    continue;
                                }
                                let j = vol.index(xx as usize, yy as usize, zz as usize);
                                if !vol.fill_mask[j] {
                                    continue;
                                }
                                let d2 = dx * dx + dy * dy + dz * dz;
                                if vol.label_mode {
                                    if d2 < nearest.0 {
                                        nearest = (d2, vol.voxels[j]);
                                    }
                                } else {
                                    let w = 1.0 / (d2 as f64).sqrt();
                                    weight_sum += w;
                                    value_sum += w * vol.voxels[j] as f64;
                                }
                            }
                        }
                    }
                    voxels[i] = if vol.label_mode {
                        nearest.1
                    } else {
                        (value_sum / weight_sum).round().clamp(0.0, 255.0) as u8
                    };
                    mask[i] = true;
                }
            }
        });
    out
}

/// Summed-volume table of written voxels for constant-time box queries.
struct FillTable {
    dims: [usize; 3],
    sums: Vec<u32>,
}

impl FillTable {
    fn new(vol: &Volume) -> Self {
        let [nx, ny, nz] = vol.dims;
        let (sx, sy) = (nx + 1, ny + 1);
        let mut sums = vec![0u32; sx * sy * (nz + 1)];
        let at = |x: usize, y: usize, z: usize| x + sx * (y + sy * z);
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let v = vol.fill_mask[vol.index(x, y, z)] as u32;
                    let s = v
                        + sums[at(x, y + 1, z + 1)]
                        + sums[at(x + 1, y, z + 1)]
                        + sums[at(x + 1, y + 1, z)]
                        - sums[at(x, y, z + 1)]
                        - sums[at(x, y + 1, z)]
                        - sums[at(x + 1, y, z)]
                        + sums[at(x, y, z)];
                    sums[at(x + 1, y + 1, z + 1)] = s;
                }
            }
        }
        Self {
            dims: vol.dims,
            sums,
        }
    }

    /// Written voxels in the inclusive box `lo..=hi`.
    fn count(&self, lo: [usize; 3], hi: [usize; 3]) -> u32 {
        let (sx, sy) = (self.dims[0] + 1, self.dims[1] + 1);
        let at = |x: usize, y: usize, z: usize| self.sums[x + sx * (y + sy * z)] as i64;
        let (x0, y0, z0) = (lo[0], lo[1], lo[2]);
        let (x1, y1, z1) = (hi[0] + 1, hi[1] + 1, hi[2] + 1);
        let total = at(x1, y1, z1) - at(x0, y1, z1) - at(x1, y0, z1) - at(x1, y1, z0)
            + at(x0, y0, z1)
            + at(x0, y1, z0)
            + at(x1, y0, z0)
            - at(x0, y0, z0);
        total as u32
    }
}

/// Baseline volume that stacks frames as parallel slabs.
///
/// Each frame keeps its in-plane layout and is placed at the position of its
/// centre projected on the mean sweep direction, with orientation ignored.
pub fn stack_pseudo_volume(seq: &FrameSequence, cfg: &ReconConfig) -> Result<Volume> {
    if seq.len() < 2 {
        return Err(invalid("pseudo volume needs at least two frames"));
    }
    check_poses(&seq.poses)?;
    let centers: Vec<Vector3<f64>> = seq
        .frames
        .iter()
        .zip(seq.poses.iter())
        .map(|(f, p)| {
            let c = Vector3::new(
                (f.width - 1) as f64 * f.pixel_spacing / 2.0,
                (f.height - 1) as f64 * f.pixel_spacing / 2.0,
                0.0,
            );
            p.transform_point(&c)
        })
        .collect();
    let first = centers[0];
    let last = centers[centers.len() - 1];
    let direction = (last - first)
        .try_normalize(1e-12)
        .ok_or_else(|| invalid("sweep has no net displacement"))?;
    let base = seq.poses[0].translation;
    let stacked = PoseSequence::new(
        centers
            .iter()
            .map(|c| {
                let along = (c - first).dot(&direction);
                Pose::from_translation(base + Vector3::new(0.0, 0.0, along))
            })
            .collect(),
    )?;
    let pseudo = FrameSequence {
        frames: seq.frames.clone(),
        poses: stacked,
        frame_rate: seq.frame_rate,
    };
    fdp_reconstruct(&pseudo, cfg)
}

/// Voxels whose centres lie between two consecutive frame planes and inside
/// both frames' in-plane extent.
pub fn swept_hull_mask(seq: &FrameSequence, vol: &Volume) -> Vec<bool> {
    let [nx, ny, _] = vol.dims;
    let inverses: Vec<Pose> = seq.poses.iter().map(|p| p.inverse()).collect();
    let eps = 1e-9;
    let inside = |k: usize, local: &Vector3<f64>| {
        let f = &seq.frames[k];
        let (w, h) = (
            (f.width - 1) as f64 * f.pixel_spacing,
            (f.height - 1) as f64 * f.pixel_spacing,
        );
        local.x >= -eps && local.x <= w + eps && local.y >= -eps && local.y <= h + eps
    };
    let mut mask = vec![false; vol.len()];
    mask.par_chunks_mut(nx * ny)
        .enumerate()
        .for_each(|(z, slab)| {
            for y in 0..ny {
                for x in 0..nx {
                    let p = vol.voxel_center(x, y, z);
                    slab[x + nx * y] = (0..seq.len().saturating_sub(1)).any(|k| {
                        let a = inverses[k].transform_point(&p);
                        let b = inverses[k + 1].transform_point(&p);
                        let between = (a.z >= -eps && b.z <= eps) || (a.z <= eps && b.z >= -eps);
                        between && inside(k, &a) && inside(k + 1, &b)
                    });
                }
            }
        });
    mask
}
