//! File formats: pose and centroid CSV, PGM images, frame directories and
//! raw volumes with a JSON sidecar.

use std::path::{Path, PathBuf};

use carotid_core::pose::{Pose, Rotation};
use carotid_core::recon::Volume;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{input, CliResult};
use crate::manifest::InputLog;

pub const POSE_HEADER: [&str; 9] = ["frame_id", "tx", "ty", "tz", "qw", "qx", "qy", "qz", "t"];
pub const CENTROID_HEADER: [&str; 4] = ["frame_id", "cx", "cy", "cz"];
/// Gray values used for background, wall and lumen in mask images.
pub const MASK_PALETTE: [u8; 3] = [0, 128, 255];

/// Quaternions further than this from unit norm trigger a warning on load.
const QUAT_WARN: f64 = 1e-3;

/// One row of a pose file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseRecord {
    pub frame_id: usize,
    pub pose: Pose,
    /// Acquisition time, seconds.
    pub t: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseRow {
    frame_id: usize,
    tx: f64,
    ty: f64,
    tz: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    t: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CentroidRow {
    frame_id: usize,
    cx: f64,
    cy: f64,
    cz: f64,
}

fn check_header(rdr: &mut csv::Reader<&[u8]>, expected: &[&str], name: &str) -> CliResult<()> {
    let headers = rdr.headers().map_err(|e| input(format!("{name}: {e}")))?;
    if headers.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(input(format!(
            "{name}: header must be `{}`",
            expected.join(",")
        )));
    }
    Ok(())
}

fn rows<T: serde::de::DeserializeOwned>(
    bytes: &[u8],
    header: &[&str],
    name: &str,
) -> CliResult<Vec<(u64, T)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    check_header(&mut rdr, header, name)?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| input(format!("{name}: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        let row: T = record
            .deserialize(None)
            .map_err(|e| input(format!("{name}: line {line}: {e}")))?;
        out.push((line, row));
    }
    Ok(out)
}

fn check_unique(ids: impl Iterator<Item = usize>, name: &str) -> CliResult<()> {
    let mut seen = std::collections::BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(input(format!("{name}: duplicate frame_id {id}")));
        }
    }
    Ok(())
}

/// Parses a pose file. Quaternions are renormalized; a warning goes to
/// standard error when one was noticeably off unit length.
pub fn parse_poses(bytes: &[u8], name: &str) -> CliResult<Vec<PoseRecord>> {
    let rows: Vec<(u64, PoseRow)> = rows(bytes, &POSE_HEADER, name)?;
    if rows.is_empty() {
        return Err(input(format!("{name}: no poses")));
    }
    let mut out = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        let values = [r.tx, r.ty, r.tz, r.qw, r.qx, r.qy, r.qz, r.t];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(input(format!("{name}: line {line}: non-finite value")));
        }
        let norm = (r.qw * r.qw + r.qx * r.qx + r.qy * r.qy + r.qz * r.qz).sqrt();
        if (norm - 1.0).abs() > QUAT_WARN {
            eprintln!("warning: {name}: line {line}: quaternion norm {norm}, renormalized");
        }
        let rotation = Rotation::from_wxyz(r.qw, r.qx, r.qy, r.qz)
            .ok_or_else(|| input(format!("{name}: line {line}: zero quaternion")))?;
        out.push(PoseRecord {
            frame_id: r.frame_id,
            pose: Pose::new(rotation, Vector3::new(r.tx, r.ty, r.tz)),
            t: r.t,
        });
    }
    check_unique(out.iter().map(|r| r.frame_id), name)?;
    Ok(out)
}

pub fn write_poses(records: &[PoseRecord]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in records {
        let [qw, qx, qy, qz] = r.pose.rotation.wxyz();
        let t = r.pose.translation;
        w.serialize(PoseRow {
            frame_id: r.frame_id,
            tx: t.x,
            ty: t.y,
            tz: t.z,
            qw,
            qx,
            qy,
            qz,
            t: r.t,
        })
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

pub fn parse_centroids(bytes: &[u8], name: &str) -> CliResult<Vec<(usize, Vector3<f64>)>> {
    let rows: Vec<(u64, CentroidRow)> = rows(bytes, &CENTROID_HEADER, name)?;
    let mut out = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        if ![r.cx, r.cy, r.cz].iter().all(|v| v.is_finite()) {
            return Err(input(format!("{name}: line {line}: non-finite value")));
        }
        out.push((r.frame_id, Vector3::new(r.cx, r.cy, r.cz)));
    }
    check_unique(out.iter().map(|r| r.0), name)?;
    Ok(out)
}

pub fn write_centroids(rows: &[(usize, Vector3<f64>)]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for (id, c) in rows {
        w.serialize(CentroidRow {
            frame_id: *id,
            cx: c.x,
            cy: c.y,
            cz: c.z,
        })
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

/// Two-column numeric CSV with a header row.
pub fn parse_series(bytes: &[u8], name: &str) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let width = rdr
        .headers()
        .map_err(|e| input(format!("{name}: {e}")))?
        .len();
    if width != 2 {
        return Err(input(format!(
            "{name}: expected two columns, found {width}"
        )));
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for record in rdr.records() {
        let record = record.map_err(|e| input(format!("{name}: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        let (x, y): (f64, f64) = record
            .deserialize(None)
            .map_err(|e| input(format!("{name}: line {line}: {e}")))?;
        a.push(x);
        b.push(y);
    }
    Ok((a, b))
}

pub fn encode_pgm(width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(data, width as u32, height as u32, ExtendedColorType::L8)
        .expect("in-memory PGM encode");
    buf
}

/// Decodes an 8-bit grayscale PGM.
pub fn decode_pgm(bytes: &[u8], name: &str) -> CliResult<(usize, usize, Vec<u8>)> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)
        .map_err(|e| input(format!("{name}: {e}")))?;
    if img.color() != image::ColorType::L8 {
        return Err(input(format!("{name}: expected an 8-bit grayscale image")));
    }
    let gray = img.into_luma8();
    let (w, h) = gray.dimensions();
    Ok((w as usize, h as usize, gray.into_raw()))
}

pub fn labels_to_gray(labels: &[u8]) -> Vec<u8> {
    labels.iter().map(|&l| MASK_PALETTE[l as usize]).collect()
}

pub fn gray_to_labels(gray: &[u8], name: &str) -> CliResult<Vec<u8>> {
    gray.iter()
        .map(|&g| {
            MASK_PALETTE
                .iter()
                .position(|&p| p == g)
                .map(|l| l as u8)
                .ok_or_else(|| {
                    input(format!(
                        "{name}: gray value {g} is not a mask label (0/128/255)"
                    ))
                })
        })
        .collect()
}

/// `sequence.json` stored beside frame or mask images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceMeta {
    pub n_frames: usize,
    pub width: usize,
    pub height: usize,
    pub pixel_spacing_mm: f64,
    pub frame_rate_hz: f64,
    /// `"intensity"` or `"labels"`.
    pub kind: String,
}

pub const SEQUENCE_FILE: &str = "sequence.json";

/// `<prefix>_<id>.pgm` file name.
pub fn image_name(prefix: &str, id: usize) -> String {
    format!("{prefix}_{id:04}.pgm")
}

fn image_id(path: &Path) -> Option<usize> {
    let stem = path.file_stem()?.to_str()?;
    stem.rsplit('_').next()?.parse().ok()
}

/// Images of a frame directory keyed by frame id, plus its metadata.
pub struct ImageDir {
    pub meta: SequenceMeta,
    /// `(frame_id, width, height, pixels)` sorted by id.
    pub images: Vec<(usize, usize, usize, Vec<u8>)>,
}

/// Sorted `*.pgm` paths of a directory.
pub fn list_pgm(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| input(format!("{}: {e}", dir.display())))?;
    let mut paths = Vec::new();
    for e in entries {
        let p = e?.path();
        if p.extension().is_some_and(|x| x == "pgm") {
            paths.push(p);
        }
    }
    paths.sort();
    Ok(paths)
}

pub fn read_image_dir(dir: &Path, log: &mut InputLog) -> CliResult<ImageDir> {
    let meta_path = dir.join(SEQUENCE_FILE);
    let meta: SequenceMeta = serde_json::from_slice(&log.read(&meta_path)?)
        .map_err(|e| input(format!("{}: {e}", meta_path.display())))?;
    if !(meta.pixel_spacing_mm > 0.0 && meta.pixel_spacing_mm.is_finite()) {
        return Err(input(format!(
            "{}: pixel_spacing_mm must be > 0",
            meta_path.display()
        )));
    }
    let paths = list_pgm(dir)?;
    if paths.is_empty() {
        return Err(input(format!("{}: no .pgm images", dir.display())));
    }
    let mut images = Vec::with_capacity(paths.len());
    for p in &paths {
        let id = image_id(p)
            .ok_or_else(|| input(format!("{}: no frame id in file name", p.display())))?;
        let (w, h, data) = decode_pgm(&log.read(p)?, &p.display().to_string())?;
        images.push((id, w, h, data));
    }
    images.sort_by_key(|i| i.0);
    check_unique(images.iter().map(|i| i.0), &dir.display().to_string())?;
    Ok(ImageDir { meta, images })
}

/// `volume.json` sidecar describing `volume.raw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeMeta {
    pub dims: [usize; 3],
    pub spacing_mm: f64,
    /// Centre of voxel (0, 0, 0).
    pub origin_mm: [f64; 3],
    pub dtype: String,
    pub label_mode: bool,
    /// Always x-fastest, then y, then z.
    pub order: String,
    pub data_file: String,
}

pub const VOLUME_JSON: &str = "volume.json";
pub const VOLUME_RAW: &str = "volume.raw";

pub fn encode_volume(vol: &Volume) -> (Vec<u8>, Vec<u8>) {
    let meta = VolumeMeta {
        dims: vol.dims,
        spacing_mm: vol.spacing,
        origin_mm: vol.origin,
        dtype: "u8".into(),
        label_mode: vol.label_mode,
        order: "x-fastest".into(),
        data_file: VOLUME_RAW.into(),
    };
    (to_json(&meta), vol.voxels.clone())
}

/// Loads a volume from its sidecar, or from a directory containing one.
pub fn read_volume(path: &Path, log: &mut InputLog) -> CliResult<Volume> {
    let json = if path.is_dir() {
        path.join(VOLUME_JSON)
    } else {
        path.to_path_buf()
    };
    let name = json.display().to_string();
    let meta: VolumeMeta =
        serde_json::from_slice(&log.read(&json)?).map_err(|e| input(format!("{name}: {e}")))?;
    if meta.dtype != "u8" || meta.order != "x-fastest" {
        return Err(input(format!(
            "{name}: unsupported dtype/order {}/{}",
            meta.dtype, meta.order
        )));
    }
    let raw_path = json
        .parent()
        .unwrap_or(Path::new("."))
        .join(&meta.data_file);
    let raw = log.read(&raw_path)?;
    Volume::from_voxels(
        meta.origin_mm,
        meta.spacing_mm,
        meta.dims,
        raw,
        meta.label_mode,
    )
    .map_err(|e| input(format!("{name}: {e}")))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_roundtrip() {
        let records = vec![
            PoseRecord {
                frame_id: 0,
                pose: Pose::new(
                    Rotation::from_axis_angle(Vector3::new(0.3, -1.0, 0.2), 0.7),
                    Vector3::new(0.1, -2.5, 1e-7),
                ),
                t: 0.0,
            },
            PoseRecord {
                frame_id: 7,
                pose: Pose::identity(),
                t: 1.0 / 24.0,
            },
        ];
        let bytes = write_poses(&records);
        assert!(bytes.starts_with(b"frame_id,tx,ty,tz,qw,qx,qy,qz,t\n"));
        assert_eq!(parse_poses(&bytes, "p").unwrap(), records);
    }

    #[test]
    fn pose_errors_name_the_line() {
        let text = "frame_id,tx,ty,tz,qw,qx,qy,qz,t\n0,0,0,0,1,0,0,0,0\n1,0,zero,0,1,0,0,0,0\n";
        let err = parse_poses(text.as_bytes(), "p.csv")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
        let dup = "frame_id,tx,ty,tz,qw,qx,qy,qz,t\n0,0,0,0,1,0,0,0,0\n0,0,0,0,1,0,0,0,0\n";
        assert!(parse_poses(dup.as_bytes(), "p").is_err());
        assert!(parse_poses(b"a,b\n1,2\n", "p").is_err());
        let zero = "frame_id,tx,ty,tz,qw,qx,qy,qz,t\n0,0,0,0,0,0,0,0,0\n";
        assert!(parse_poses(zero.as_bytes(), "p").is_err());
    }

    #[test]
    fn quaternions_are_renormalized() {
        let text = "frame_id,tx,ty,tz,qw,qx,qy,qz,t\n0,0,0,0,2,0,0,0,0\n";
        let p = parse_poses(text.as_bytes(), "p").unwrap();
        assert_eq!(p[0].pose.rotation.wxyz(), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn pgm_roundtrip() {
        let data: Vec<u8> = (0..12).map(|i| i * 20).collect();
        let bytes = encode_pgm(4, 3, &data);
        assert!(bytes.starts_with(b"P5"));
        assert_eq!(decode_pgm(&bytes, "x").unwrap(), (4, 3, data));
        assert!(decode_pgm(b"P6\n1 1\n255\n\x00\x00\x00", "x").is_err());
    }

    #[test]
    fn mask_palette() {
        let labels = [0, 1, 2, 1];
        let gray = labels_to_gray(&labels);
        assert_eq!(gray, vec![0, 128, 255, 128]);
        assert_eq!(gray_to_labels(&gray, "m").unwrap(), labels);
        assert!(gray_to_labels(&[7], "m").is_err());
    }

    #[test]
    fn centroid_and_series_files() {
        let rows = vec![(3, Vector3::new(1.5, -2.0, 0.25))];
        assert_eq!(parse_centroids(&write_centroids(&rows), "c").unwrap(), rows);
        let (a, b) = parse_series(b"x,y\n1,2\n3.5,4\n", "s").unwrap();
        assert_eq!((a, b), (vec![1.0, 3.5], vec![2.0, 4.0]));
        assert!(parse_series(b"x,y,z\n1,2,3\n", "s").is_err());
    }
}
