//! Quantification on reconstructed wall/lumen label volumes.
//!
//! Transverse slices are the z-layers of the volume. On each slice the outer
//! vessel region (MAB: wall or lumen) and the lumen region (LIB) are measured
//! along chords through the MAB centroid, one chord per degree over
//! `[0, 180)`. Chord lengths come from ray-marching the mask, smoothed with a
//! one-pixel Gaussian and bilinearly interpolated, at 0.1 pixel steps and
//! locating the 0.5 crossing by linear interpolation.
//!
//! The diameter stenosis of a chord is `L_wall / (L_wall + L_lumen)` with
//! `L_wall = L_MAB - L_lumen` (wall on both sides of the lumen). A slice's
//! value is the maximum over directions of that ratio averaged across
//! `±ANGLE_WINDOW` degrees, which suppresses pixel-lattice jitter between
//! neighbouring chords.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::raster::{BinaryRaster, MaskPair};
use crate::recon::Volume;

/// Chord directions per half turn.
pub const ANGLE_STEPS: usize = 180;
/// Ray-marching step, pixels.
pub const MARCH_STEP: f64 = 0.1;
/// Wall thickness above which a slice is flagged as plaque, mm.
pub const PLAQUE_THRESHOLD_MM: f64 = 1.5;
/// Consecutive plaque slices that make a scan diseased.
pub const DIAGNOSIS_RUN: usize = 5;
/// Half-extent of the sampled line in longitudinal cuts, mm.
pub const CUT_HALF_EXTENT_MM: f64 = 10.0;
/// Sample spacing along the cut line, mm.
pub const CUT_STEP_MM: f64 = 0.2;
/// Default cut angles, degrees from the y-axis.
pub const DEFAULT_CUT_ANGLES: [f64; 5] = [0.0, 15.0, -15.0, 30.0, -30.0];

/// Stenosis of one transverse slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SliceStenosis {
    /// Maximum chord stenosis in `[0, 1]`.
    pub value: f64,
    /// Chord direction attaining it, degrees in `[0, 180)`.
    pub angle_deg: f64,
}

/// Half-chord lengths (pixels) along `+d` and `-d` for every chord direction.
struct ChordProfile {
    mab: Vec<[f64; 2]>,
    lib: Vec<[f64; 2]>,
}

fn direction(k: usize) -> (f64, f64) {
    let phi = (k as f64).to_radians() * (180.0 / ANGLE_STEPS as f64);
    (phi.cos(), phi.sin())
}

/// Gaussian-smoothed 0/1 mask; its 0.5 level set tracks the digitized
/// boundary without the staircase of the raw pixels.
pub(crate) struct SmoothField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl SmoothField {
    pub(crate) fn new(mask: &BinaryRaster, sigma: f64) -> Self {
        let (w, h) = (mask.width(), mask.height());
        let r = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-r..=r)
            .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
            .collect();
        let norm: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
        let mut tmp = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    if mask.get_signed(x as isize + k as isize - r, y as isize) {
                        acc += kv;
                    }
                }
                tmp[y * w + x] = acc;
            }
        }
        let mut data = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let yy = y as isize + k as isize - r;
                    if yy >= 0 && (yy as usize) < h {
                        acc += kv * tmp[yy as usize * w + x];
                    }
                }
                data[y * w + x] = acc;
            }
        }
        Self {
            width: w,
            height: h,
            data,
        }
    }

    fn at(&self, x: isize, y: isize) -> f64 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            0.0
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    #[inline]
    pub(crate) fn bilinear(&self, x: f64, y: f64) -> f64 {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (ix, iy) = (x0 as isize, y0 as isize);
        (1.0 - fy) * ((1.0 - fx) * self.at(ix, iy) + fx * self.at(ix + 1, iy))
            + fy * ((1.0 - fx) * self.at(ix, iy + 1) + fx * self.at(ix + 1, iy + 1))
    }
}

/// Smoothing applied before chord measurement, pixels.
pub const SMOOTH_SIGMA: f64 = 1.0;
/// Chord stenosis is averaged over this many neighbouring directions on
/// each side before taking the maximum.
pub const ANGLE_WINDOW: usize = 2;

/// Length of `{t in [0, t_max] : field(c + t d) >= 0.5}`.
fn half_chord(mask: &SmoothField, c: [f64; 2], d: (f64, f64), t_max: f64) -> f64 {
    let field = |t: f64| mask.bilinear(c[0] + t * d.0, c[1] + t * d.1);
    let n = (t_max / MARCH_STEP).ceil() as usize;
    let mut length = 0.0;
    let mut prev_t = 0.0;
    let mut prev_f = field(0.0);
    for k in 1..=n {
        let t = (k as f64 * MARCH_STEP).min(t_max);
        let f = field(t);
        match (prev_f >= 0.5, f >= 0.5) {
            (true, true) => length += t - prev_t,
            (true, false) => length += (prev_f - 0.5) / (prev_f - f) * (t - prev_t),
            (false, true) => length += (f - 0.5) / (f - prev_f) * (t - prev_t),
            (false, false) => {}
        }
        prev_t = t;
        prev_f = f;
    }
    length
}

fn chord_profile(mab: &BinaryRaster, lib: &BinaryRaster, center: [f64; 2]) -> ChordProfile {
    // every set pixel lies within this distance of the centre
    let (x0, y0, x1, y1) = mab.bounding_box().expect("non-empty mask");
    let t_max = [(x0, y0), (x0, y1), (x1, y0), (x1, y1)]
        .iter()
        .map(|&(x, y)| (x as f64 - center[0]).hypot(y as f64 - center[1]))
        .fold(0.0, f64::max)
        + 3.0 * SMOOTH_SIGMA
        + 2.0;
    let lib_empty = lib.is_empty();
    let mab_field = SmoothField::new(mab, SMOOTH_SIGMA);
    let lib_field = SmoothField::new(lib, SMOOTH_SIGMA);
    let mut profile = ChordProfile {
        mab: Vec::with_capacity(ANGLE_STEPS),
        lib: Vec::with_capacity(ANGLE_STEPS),
    };
    for k in 0..ANGLE_STEPS {
        let (dx, dy) = direction(k);
        let both = |m: &SmoothField| {
            [
                half_chord(m, center, (dx, dy), t_max),
                half_chord(m, center, (-dx, -dy), t_max),
            ]
        };
        profile.mab.push(both(&mab_field));
        profile.lib.push(if lib_empty {
            [0.0; 2]
        } else {
            both(&lib_field)
        });
    }
    profile
}

/// Largest MAB component, the lumen inside it, and whether other
/// components were present.
fn main_vessel(
    mab: &BinaryRaster,
    lib: &BinaryRaster,
) -> Result<(BinaryRaster, BinaryRaster, bool)> {
    if !mab.same_shape(lib) {
        return Err(Error::GeometryMismatch(
            "MAB and LIB rasters differ in size".into(),
        ));
    }
    let outside = lib.count_outside(mab);
    if outside > 0 {
        return Err(Error::LumenOutsideVessel { outside });
    }
    let mut comps = mab.components();
    if comps.is_empty() {
        return Err(Error::Empty("MAB mask".into()));
    }
    let bifurcation = comps.len() > 1;
    let main = comps.swap_remove(0);
    let lumen = lib.and(&main);
    Ok((main, lumen, bifurcation))
}

fn check_pixel(pixel_mm: f64) -> Result<()> {
    if !(pixel_mm > 0.0 && pixel_mm.is_finite()) {
        return Err(invalid(format!("pixel size must be > 0, got {pixel_mm}")));
    }
    Ok(())
}

fn stenosis_from_profile(p: &ChordProfile) -> SliceStenosis {
    let raw: Vec<Option<f64>> = p
        .mab
        .iter()
        .zip(&p.lib)
        .map(|(m, l)| {
            let total = m[0] + m[1];
            (total > 0.0).then(|| {
                let lumen = (l[0] + l[1]).min(total);
                ((total - lumen) / total).clamp(0.0, 1.0)
            })
        })
        .collect();
    let n = raw.len() as isize;
    let w = ANGLE_WINDOW as isize;
    let mut best = SliceStenosis {
        value: 0.0,
        angle_deg: 0.0,
    };
    let mut found = false;
    for k in 0..n {
        if raw[k as usize].is_none() {
            continue;
        }
        let (sum, count) = (-w..=w)
            .filter_map(|j| raw[(k + j).rem_euclid(n) as usize])
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        let s = sum / count as f64;
        if !found || s > best.value {
            found = true;
            best = SliceStenosis {
                value: s,
                angle_deg: k as f64 * 180.0 / ANGLE_STEPS as f64,
            };
        }
    }
    best
}

fn thickness_from_profile(p: &ChordProfile, pixel_mm: f64) -> Vec<f64> {
    p.mab
        .iter()
        .zip(&p.lib)
        .map(|(m, l)| {
            let a = (m[0] - l[0]).max(0.0);
            let b = (m[1] - l[1]).max(0.0);
            a.max(b) * pixel_mm
        })
        .collect()
}

/// Diameter stenosis of one slice: the maximum over chord directions through
/// the MAB centroid.
pub fn stenosis_diameter(
    mab: &BinaryRaster,
    lib: &BinaryRaster,
    pixel_mm: f64,
) -> Result<SliceStenosis> {
    check_pixel(pixel_mm)?;
    let (main, lumen, _) = main_vessel(mab, lib)?;
    let c = main.centroid().expect("non-empty component");
    Ok(stenosis_from_profile(&chord_profile(&main, &lumen, c)))
}

/// Wall thickness (mm) per chord direction, 1° steps over `[0, 180)`.
///
/// Each side of the centroid is measured separately and the thicker side is
/// reported.
pub fn wall_thickness_profile(
    mab: &BinaryRaster,
    lib: &BinaryRaster,
    pixel_mm: f64,
) -> Result<Vec<f64>> {
    check_pixel(pixel_mm)?;
    let (main, lumen, _) = main_vessel(mab, lib)?;
    let c = main.centroid().expect("non-empty component");
    Ok(thickness_from_profile(
        &chord_profile(&main, &lumen, c),
        pixel_mm,
    ))
}

/// Centroid of a mask in mm (pixel centres at `index * pixel_mm`).
pub fn slice_centroid(mask: &BinaryRaster, pixel_mm: f64) -> Option<[f64; 2]> {
    mask.centroid().map(|[x, y]| [x * pixel_mm, y * pixel_mm])
}

/// Per-slice measurements of a label volume.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceAnalysis {
    pub stenosis: Option<SliceStenosis>,
    /// Empty when the slice has no vessel.
    pub thickness: Vec<f64>,
    pub bifurcation: bool,
    /// World-space MAB centroid of the main component, mm.
    pub centroid: Option<Vector3<f64>>,
}

fn check_label_volume(vol: &Volume) -> Result<()> {
    if let Some(bad) = vol.voxels.iter().find(|&&v| v > 2) {
        return Err(invalid(format!("label volume contains value {bad}")));
    }
    Ok(())
}

/// MAB/LIB rasters of slice `z`.
pub fn slice_masks(vol: &Volume, z: usize) -> MaskPair {
    let [nx, ny, _] = vol.dims;
    let labels = vol.slice_z(z);
    MaskPair::from_labels(nx, ny, labels).expect("validated label volume")
}

/// Measures every slice of a label volume.
pub fn analyze_slices(vol: &Volume) -> Result<Vec<SliceAnalysis>> {
    check_label_volume(vol)?;
    let nz = vol.dims[2];
    Ok((0..nz)
        .into_par_iter()
        .map(|z| {
            let pair = slice_masks(vol, z);
            if pair.mab.is_empty() {
                return SliceAnalysis {
                    stenosis: None,
                    thickness: Vec::new(),
                    bifurcation: false,
                    centroid: None,
                };
            }
            let (main, lumen, bifurcation) =
                main_vessel(&pair.mab, &pair.lib).expect("consistent labels");
            let c = main.centroid().expect("non-empty component");
            let profile = chord_profile(&main, &lumen, c);
            SliceAnalysis {
                stenosis: Some(stenosis_from_profile(&profile)),
                thickness: thickness_from_profile(&profile, vol.spacing),
                bifurcation,
                centroid: Some(Vector3::new(
                    vol.origin[0] + c[0] * vol.spacing,
                    vol.origin[1] + c[1] * vol.spacing,
                    vol.origin[2] + z as f64 * vol.spacing,
                )),
            }
        })
        .collect())
}

/// Per-slice stenosis and the scan grade.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StenosisReport {
    /// `None` for slices without a vessel.
    pub per_slice: Vec<Option<f64>>,
    pub grade: f64,
    pub argmax_slice: usize,
    pub argmax_angle_deg: f64,
    pub bifurcation_slices: Vec<usize>,
}

fn stenosis_report(slices: &[SliceAnalysis]) -> Result<StenosisReport> {
    let mut best: Option<(usize, SliceStenosis)> = None;
    for (z, s) in slices.iter().enumerate() {
        if let Some(st) = s.stenosis {
            if best.is_none_or(|(_, b)| st.value > b.value) {
                best = Some((z, st));
            }
        }
    }
    let (argmax_slice, top) = best.ok_or(Error::NoVessel)?;
    Ok(StenosisReport {
        per_slice: slices
            .iter()
            .map(|s| s.stenosis.map(|st| st.value))
            .collect(),
        grade: top.value,
        argmax_slice,
        argmax_angle_deg: top.angle_deg,
        bifurcation_slices: slices
            .iter()
            .enumerate()
            .filter(|(_, s)| s.bifurcation)
            .map(|(z, _)| z)
            .collect(),
    })
}

/// Stenosis of every slice; the grade is the maximum (first slice on ties).
pub fn stenosis_grade(label_volume: &Volume) -> Result<StenosisReport> {
    stenosis_report(&analyze_slices(label_volume)?)
}

/// MAB centroid per slice, mm.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidPath {
    pub points: Vec<Option<Vector3<f64>>>,
}

impl CentroidPath {
    pub fn from_label_volume(vol: &Volume) -> Result<Self> {
        Ok(Self {
            points: analyze_slices(vol)?
                .into_iter()
                .map(|s| s.centroid)
                .collect(),
        })
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.points.iter().map(|p| p.is_some()).collect()
    }
}

/// Image resampled along the centroid path; column `i` comes from slice `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalImage {
    pub theta_deg: f64,
    pub rows: usize,
    pub columns: usize,
    /// Row-major, `rows x columns`.
    pub data: Vec<u8>,
    /// Sample spacing along the cut line, mm.
    pub row_pixel_mm: f64,
    /// Slice spacing, mm.
    pub column_pixel_mm: f64,
}

impl LongitudinalImage {
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.columns + col]
    }
}

fn sample_slice(vol: &Volume, z: usize, x: f64, y: f64) -> f64 {
    let [nx, ny, _] = vol.dims;
    let fx = (x - vol.origin[0]) / vol.spacing;
    let fy = (y - vol.origin[1]) / vol.spacing;
    let (x0, y0) = (fx.floor(), fy.floor());
    let (tx, ty) = (fx - x0, fy - y0);
    let (ix, iy) = (x0 as isize, y0 as isize);
    let v = |dx: isize, dy: isize| {
        let (px, py) = (ix + dx, iy + dy);
        if px < 0 || py < 0 || px as usize >= nx || py as usize >= ny {
            0.0
        } else {
            vol.get(px as usize, py as usize, z) as f64
        }
    };
    (1.0 - ty) * ((1.0 - tx) * v(0, 0) + tx * v(1, 0)) + ty * ((1.0 - tx) * v(0, 1) + tx * v(1, 1))
}

/// Samples each slice along the line through its centroid at `theta_deg`
/// from the y-axis. Slices without a centroid give zero columns; samples
/// outside the volume read as zero.
pub fn cut_longitudinal(
    vol: &Volume,
    path: &CentroidPath,
    theta_deg: f64,
) -> Result<LongitudinalImage> {
    if !(-90.0..90.0).contains(&theta_deg) {
        return Err(invalid(format!("cut angle {theta_deg} outside [-90, 90)")));
    }
    let nz = vol.dims[2];
    if path.points.len() != nz {
        return Err(Error::LengthMismatch {
            expected: nz,
            actual: path.points.len(),
        });
    }
    if path.points.iter().all(|p| p.is_none()) {
        return Err(Error::Empty("centroid path".into()));
    }
    let half = (CUT_HALF_EXTENT_MM / CUT_STEP_MM).round() as isize;
    let rows = (2 * half + 1) as usize;
    let theta = theta_deg.to_radians();
    let (dx, dy) = (theta.sin(), theta.cos());
    let mut data = vec![0u8; rows * nz];
    for (col, point) in path.points.iter().enumerate() {
        let Some(c) = point else { continue };
        for r in 0..rows {
            let s = (r as isize - half) as f64 * CUT_STEP_MM;
            let value = sample_slice(vol, col, c.x + s * dx, c.y + s * dy);
            data[r * nz + col] = value.round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(LongitudinalImage {
        theta_deg,
        rows,
        columns: nz,
        data,
        row_pixel_mm: CUT_STEP_MM,
        column_pixel_mm: vol.spacing,
    })
}

/// `true` where the slice's maximum wall thickness exceeds `threshold_mm`.
pub fn detect_plaque_slices(profiles: &[Vec<f64>], threshold_mm: f64) -> Vec<bool> {
    profiles
        .iter()
        .map(|p| p.iter().any(|&t| t > threshold_mm))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScanDiagnosis {
    pub per_slice_flags: Vec<bool>,
    pub diseased: bool,
}

/// Half-open index ranges of consecutive `true` flags.
pub fn flag_runs(flags: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, flags.len()));
    }
    runs
}

/// A scan is diseased when some run of at least `run_length` consecutive
/// slices is flagged.
pub fn scan_diagnosis(flags: &[bool], run_length: usize) -> Result<ScanDiagnosis> {
    if run_length == 0 {
        return Err(invalid("run length must be >= 1"));
    }
    let diseased = flag_runs(flags).iter().any(|(s, e)| e - s >= run_length);
    Ok(ScanDiagnosis {
        per_slice_flags: flags.to_vec(),
        diseased,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaqueRun {
    pub start_slice: usize,
    /// Exclusive.
    pub end_slice: usize,
    pub length_mm: f64,
    pub thickness_mm: f64,
}

/// Longest plaque run and every run found.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaqueMeasurement {
    pub length_mm: f64,
    pub thickness_mm: f64,
    /// Half-open slice range of the longest run.
    pub slice_range: Option<(usize, usize)>,
    pub runs: Vec<PlaqueRun>,
}

/// Plaque length and thickness from the longest run of flagged slices
/// (first one on ties).
pub fn plaque_size(
    flags: &[bool],
    profiles: &[Vec<f64>],
    slice_spacing: f64,
) -> Result<PlaqueMeasurement> {
    if !(slice_spacing > 0.0 && slice_spacing.is_finite()) {
        return Err(invalid(format!(
            "slice spacing must be > 0, got {slice_spacing}"
        )));
    }
    if flags.len() != profiles.len() {
        return Err(Error::LengthMismatch {
            expected: flags.len(),
            actual: profiles.len(),
        });
    }
    let runs: Vec<PlaqueRun> = flag_runs(flags)
        .into_iter()
        .map(|(s, e)| PlaqueRun {
            start_slice: s,
            end_slice: e,
            length_mm: (e - s) as f64 * slice_spacing,
            thickness_mm: profiles[s..e]
                .iter()
                .flat_map(|p| p.iter().copied())
                .fold(0.0, f64::max),
        })
        .collect();
    let longest = runs.iter().fold(None::<&PlaqueRun>, |best, r| match best {
        Some(b) if b.end_slice - b.start_slice >= r.end_slice - r.start_slice => Some(b),
        _ => Some(r),
    });
    Ok(PlaqueMeasurement {
        length_mm: longest.map_or(0.0, |r| r.length_mm),
        thickness_mm: longest.map_or(0.0, |r| r.thickness_mm),
        slice_range: longest.map(|r| (r.start_slice, r.end_slice)),
        runs,
    })
}

/// Thresholds for [`measure_volume`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureConfig {
    pub threshold_mm: f64,
    pub run_length: usize,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            threshold_mm: PLAQUE_THRESHOLD_MM,
            run_length: DIAGNOSIS_RUN,
        }
    }
}

/// Everything measured on one label volume.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeReport {
    pub stenosis: StenosisReport,
    pub max_thickness_mm: Vec<Option<f64>>,
    pub diagnosis: ScanDiagnosis,
    pub plaque: PlaqueMeasurement,
}

/// Stenosis, thickness-based plaque flags, diagnosis and plaque size.
///
/// `external_flags` replaces the thickness criterion when per-slice plaque
/// labels come from elsewhere (e.g. a classifier).
pub fn measure_volume(
    vol: &Volume,
    cfg: &MeasureConfig,
    external_flags: Option<&[bool]>,
) -> Result<VolumeReport> {
    let slices = analyze_slices(vol)?;
    let stenosis = stenosis_report(&slices)?;
    let profiles: Vec<Vec<f64>> = slices.iter().map(|s| s.thickness.clone()).collect();
    let flags = match external_flags {
        Some(f) if f.len() != profiles.len() => {
            return Err(Error::LengthMismatch {
                expected: profiles.len(),
                actual: f.len(),
            })
        }
        Some(f) => f.to_vec(),
        None => detect_plaque_slices(&profiles, cfg.threshold_mm),
    };
    let diagnosis = scan_diagnosis(&flags, cfg.run_length)?;
    let plaque = plaque_size(&flags, &profiles, vol.spacing)?;
    Ok(VolumeReport {
        stenosis,
        max_thickness_mm: profiles
            .iter()
            .map(|p| (!p.is_empty()).then(|| p.iter().copied().fold(0.0, f64::max)))
            .collect(),
        diagnosis,
        plaque,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Disk of radius `r` (pixels) centred at `(cx, cy)`.
    fn disk(n: usize, cx: f64, cy: f64, r: f64) -> BinaryRaster {
        BinaryRaster::from_fn(n, n, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            dx * dx + dy * dy <= r * r
        })
    }

    #[test]
    fn centroid_examples() {
        let mut m = BinaryRaster::new(20, 20);
        m.set(10, 10, true);
        assert_eq!(slice_centroid(&m, 0.1), Some([1.0, 1.0]));
        let d = disk(41, 20.0, 17.0, 9.0);
        let [x, y] = slice_centroid(&d, 1.0).unwrap();
        assert!((x - 20.0).abs() <= 0.5 && (y - 17.0).abs() <= 0.5);
        assert_eq!(slice_centroid(&BinaryRaster::new(5, 5), 1.0), None);
    }

    #[test]
    fn stenosis_trivial_cases() {
        let mab = disk(41, 20.0, 20.0, 12.0);
        let s = stenosis_diameter(&mab, &mab, 0.1).unwrap();
        assert_eq!(s.value, 0.0);
        let s = stenosis_diameter(&mab, &BinaryRaster::new(41, 41), 0.1).unwrap();
        assert_eq!(s.value, 1.0);
    }

    #[test]
    fn stenosis_concentric_circles() {
        // 5 mm / 4 mm at 0.1 mm pixels: L_wall = 2, L_lumen = 8
        let n = 121;
        let mab = disk(n, 60.0, 60.0, 50.0);
        let lib = disk(n, 60.0, 60.0, 40.0);
        let s = stenosis_diameter(&mab, &lib, 0.1).unwrap();
        assert_abs_diff_eq!(s.value, 0.2, epsilon = 0.005);
    }

    #[test]
    fn stenosis_errors() {
        let mab = disk(21, 10.0, 10.0, 5.0);
        let lib = disk(21, 10.0, 10.0, 7.0);
        assert!(matches!(
            stenosis_diameter(&mab, &lib, 0.1),
            Err(Error::LumenOutsideVessel { .. })
        ));
        let empty = BinaryRaster::new(21, 21);
        assert!(matches!(
            stenosis_diameter(&empty, &empty, 0.1),
            Err(Error::Empty(_))
        ));
        assert!(stenosis_diameter(&mab, &mab, 0.0).is_err());
    }

    #[test]
    fn stenosis_is_invariant_to_pixel_size_and_quarter_turns() {
        let mab = disk(41, 20.0, 19.0, 14.0);
        let lib = disk(41, 24.0, 17.0, 7.0);
        let a = stenosis_diameter(&mab, &lib, 0.1).unwrap().value;
        let b = stenosis_diameter(&mab, &lib, 0.37).unwrap().value;
        assert_eq!(a, b);

        let rot = |m: &BinaryRaster| BinaryRaster::from_fn(41, 41, |x, y| m.get(y, 40 - x));
        let c = stenosis_diameter(&rot(&mab), &rot(&lib), 0.1)
            .unwrap()
            .value;
        assert_abs_diff_eq!(a, c, epsilon = 0.02);

        let up = |m: &BinaryRaster| BinaryRaster::from_fn(82, 82, |x, y| m.get(x / 2, y / 2));
        let d = stenosis_diameter(&up(&mab), &up(&lib), 0.05).unwrap().value;
        assert_abs_diff_eq!(a, d, epsilon = 0.02);
    }

    #[test]
    fn bifurcation_uses_largest_component() {
        let big = disk(60, 20.0, 20.0, 12.0);
        let small = disk(60, 48.0, 48.0, 5.0);
        let mab = BinaryRaster::from_fn(60, 60, |x, y| big.get(x, y) || small.get(x, y));
        let lib = disk(60, 20.0, 20.0, 8.0);
        let alone = stenosis_diameter(&big, &lib, 0.1).unwrap();
        let both = stenosis_diameter(&mab, &lib, 0.1).unwrap();
        assert_eq!(alone, both);
    }

    #[test]
    fn thickness_examples() {
        let n = 121;
        let mab = disk(n, 60.0, 60.0, 50.0);
        let lib = disk(n, 60.0, 60.0, 40.0);
        let t = wall_thickness_profile(&mab, &lib, 0.1).unwrap();
        assert_eq!(t.len(), ANGLE_STEPS);
        for v in &t {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 0.05);
        }
        let zero = wall_thickness_profile(&mab, &mab, 0.1).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn thickness_peaks_at_bump_direction() {
        // lumen pushed toward -x, so the wall is thick along the x axis
        let n = 121;
        let mab = disk(n, 60.0, 60.0, 50.0);
        let lib = disk(n, 50.0, 60.0, 30.0);
        let t = wall_thickness_profile(&mab, &lib, 0.1).unwrap();
        let (k, &max) = t
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert!(k <= 10 || k >= 170, "peak at {k} deg");
        assert_abs_diff_eq!(max, 3.0, epsilon = 0.1);
    }

    #[test]
    fn plaque_flags() {
        assert_eq!(
            detect_plaque_slices(&[vec![1.0; 3], vec![1.0]], 1.5),
            vec![false, false]
        );
        assert_eq!(
            detect_plaque_slices(&[vec![1.0], vec![1.6, 0.2], vec![]], 1.5),
            vec![false, true, false]
        );
        assert_eq!(detect_plaque_slices(&[vec![1.5]], 1.5), vec![false]);
    }

    #[test]
    fn diagnosis_rule() {
        let mut flags = vec![false; 20];
        flags[3..8].iter_mut().for_each(|f| *f = true);
        assert!(scan_diagnosis(&flags, 5).unwrap().diseased);
        let mut flags = vec![false; 20];
        flags[3..7].iter_mut().for_each(|f| *f = true);
        flags[8..12].iter_mut().for_each(|f| *f = true);
        assert!(!scan_diagnosis(&flags, 5).unwrap().diseased);
        assert!(!scan_diagnosis(&[false; 9], 5).unwrap().diseased);
        assert!(scan_diagnosis(&[true], 0).is_err());
    }

    #[test]
    fn plaque_size_examples() {
        let m = plaque_size(&[false; 4], &vec![vec![1.0]; 4], 0.2).unwrap();
        assert_eq!(m.length_mm, 0.0);
        assert_eq!(m.slice_range, None);

        let mut flags = vec![false; 80];
        let mut profiles = vec![vec![1.0]; 80];
        for i in 10..60 {
            flags[i] = true;
            profiles[i] = vec![2.0, if i == 30 { 3.0 } else { 2.5 }];
        }
        flags[70] = true;
        profiles[70] = vec![4.0];
        let m = plaque_size(&flags, &profiles, 0.2).unwrap();
        assert_abs_diff_eq!(m.length_mm, 10.0, epsilon = 1e-9);
        assert_eq!(m.thickness_mm, 3.0);
        assert_eq!(m.slice_range, Some((10, 60)));
        assert_eq!(m.runs.len(), 2);
        assert!(plaque_size(&flags, &profiles, 0.0).is_err());
    }

    fn tube_volume(n: usize, nz: usize, r_mab: f64, r_lib: f64) -> Volume {
        let c = (n - 1) as f64 / 2.0;
        let mut voxels = Vec::with_capacity(n * n * nz);
        for _ in 0..nz {
            for y in 0..n {
                for x in 0..n {
                    let r = (x as f64 - c).hypot(y as f64 - c);
                    voxels.push(if r <= r_lib {
                        2
                    } else if r <= r_mab {
                        1
                    } else {
                        0
                    });
                }
            }
        }
        Volume::from_voxels([0.0; 3], 0.2, [n, n, nz], voxels, true).unwrap()
    }

    #[test]
    fn grade_of_uniform_tube() {
        let vol = tube_volume(61, 6, 25.0, 20.0);
        let report = stenosis_grade(&vol).unwrap();
        let first = report.per_slice[0].unwrap();
        assert!(report.per_slice.iter().all(|s| *s == Some(first)));
        assert_eq!(report.grade, first);
        assert_eq!(report.argmax_slice, 0);
        assert_abs_diff_eq!(report.grade, 0.2, epsilon = 0.01);
        assert!(report.bifurcation_slices.is_empty());
    }

    #[test]
    fn grade_requires_vessel() {
        let vol = Volume::from_voxels([0.0; 3], 0.2, [4, 4, 2], vec![0; 32], true).unwrap();
        assert_eq!(stenosis_grade(&vol), Err(Error::NoVessel));
        let bad = Volume::from_voxels([0.0; 3], 0.2, [2, 1, 1], vec![0, 7], true).unwrap();
        assert!(stenosis_grade(&bad).is_err());
    }

    #[test]
    fn cuts_of_symmetric_tube() {
        let vol = tube_volume(61, 4, 25.0, 20.0);
        let path = CentroidPath::from_label_volume(&vol).unwrap();
        let c = path.points[0].unwrap();
        assert_abs_diff_eq!(c.x, 6.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.y, 6.0, epsilon = 1e-9);
        let img = cut_longitudinal(&vol, &path, 0.0).unwrap();
        assert_eq!(img.rows, 101);
        assert_eq!(img.columns, 4);
        // lumen centred, wall bands symmetric about the middle row
        for col in 0..4 {
            assert_eq!(img.get(50, col), 2);
            for r in 0..101 {
                assert_eq!(img.get(r, col), img.get(100 - r, col));
            }
            let wall: Vec<usize> = (0..101).filter(|&r| img.get(r, col) == 1).collect();
            assert_eq!(wall.len(), 10);
        }
        let mirrored = cut_longitudinal(&vol, &path, 30.0).unwrap();
        let other = cut_longitudinal(&vol, &path, -30.0).unwrap();
        assert_eq!(
            mirrored,
            LongitudinalImage {
                theta_deg: 30.0,
                ..other
            }
        );
        assert!(cut_longitudinal(&vol, &path, 90.0).is_err());
        assert!(cut_longitudinal(&vol, &path, -90.0).is_ok());
    }

    #[test]
    fn measure_healthy_tube() {
        let vol = tube_volume(61, 12, 25.0, 20.0);
        let report = measure_volume(&vol, &MeasureConfig::default(), None).unwrap();
        assert!(!report.diagnosis.diseased);
        assert_eq!(report.plaque.length_mm, 0.0);
        let flags = vec![true; 12];
        let report = measure_volume(&vol, &MeasureConfig::default(), Some(&flags)).unwrap();
        assert!(report.diagnosis.diseased);
        assert!(measure_volume(&vol, &MeasureConfig::default(), Some(&flags[..3])).is_err());
    }
}
