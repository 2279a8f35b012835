//! Command implementations. Each one reads and validates its inputs, builds
//! all outputs in memory, then commits them with a manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use carotid_core::analysis::{cut_longitudinal, measure_volume, CentroidPath, MeasureConfig};
use carotid_core::metrics::{
    boundary_points, classification_rates, dsc, hd95, mad, pearson, Contingency, PairedSeries,
};
use carotid_core::phantom::{
    fallback_permutation, generate_sweep, mask_centroids, perturb_poses, Fallback, NoiseSpec,
    PhantomSpec,
};
use carotid_core::pose::MetricWeights;
use carotid_core::raster::{BinaryRaster, MaskPair};
use carotid_core::recon::{
    fdp_reconstruct, reconstruct_mask_volume, stack_pseudo_volume, Frame, FrameSequence,
    ReconConfig,
};
use carotid_core::regularize::{
    cppa_denoise, data_term, reg_term, rerank, PoseSequence, RegConfig,
};
use nalgebra::Vector3;
use serde::Serialize;
use serde_json::json;

use crate::cli::*;
use crate::error::{input, CliError, CliResult};
use crate::io::*;
use crate::manifest::{commit, InputLog, Outputs};

fn out_of_range(name: &str, v: f64, ok: bool) -> CliResult<()> {
    if ok && v.is_finite() {
        Ok(())
    } else {
        Err(input(format!("--{name} out of range: {v}")))
    }
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut log = InputLog::default();
    let mut spec = match &args.spec {
        Some(path) => serde_json::from_slice::<PhantomSpec>(&log.read(path)?)
            .map_err(|e| input(format!("{}: {e}", path.display())))?,
        None => PhantomSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate()
        .map_err(|e| input(format!("phantom spec: {e}")))?;
    let noise = NoiseSpec {
        sigma_trans: args.sigma_trans,
        sigma_rot: args.sigma_rot,
        fallback: args.fallback_start.map(|start| Fallback {
            start,
            len: args.fallback_len,
        }),
        seed: spec.seed,
    };
    noise.validate().map_err(|e| input(e.to_string()))?;
    let order =
        fallback_permutation(spec.n_frames, noise.fallback).map_err(|e| input(e.to_string()))?;

    let sweep = generate_sweep(&spec)?;
    let tracked = perturb_poses(&sweep.ground_truth, &noise)?;
    let masks: Vec<MaskPair> = order.iter().map(|&k| sweep.masks[k].clone()).collect();
    let centroids = mask_centroids(&masks, &tracked, spec.pixel_spacing_mm)?;

    let rate = FrameSequence::DEFAULT_FRAME_RATE;
    let record = |i: usize, pose| PoseRecord {
        frame_id: i,
        pose,
        t: i as f64 / rate,
    };
    let mut out = Outputs::default();
    for (i, &k) in order.iter().enumerate() {
        let f = &sweep.frames.frames[k];
        out.add(
            format!("frames/{}", image_name("frame", i)),
            encode_pgm(f.width, f.height, &f.data),
        );
        out.add(
            format!("masks/{}", image_name("mask", i)),
            encode_pgm(f.width, f.height, &labels_to_gray(&masks[i].label_raster())),
        );
    }
    for (dir, kind) in [("frames", "intensity"), ("masks", "labels")] {
        let meta = SequenceMeta {
            n_frames: spec.n_frames,
            width: spec.frame_width,
            height: spec.frame_height,
            pixel_spacing_mm: spec.pixel_spacing_mm,
            frame_rate_hz: rate,
            kind: kind.into(),
        };
        out.add(format!("{dir}/{SEQUENCE_FILE}"), to_json(&meta));
    }
    let tracked_rows: Vec<PoseRecord> = tracked
        .iter()
        .enumerate()
        .map(|(i, p)| record(i, *p))
        .collect();
    let gt_rows: Vec<PoseRecord> = order
        .iter()
        .enumerate()
        .map(|(i, &k)| record(i, sweep.ground_truth[k]))
        .collect();
    out.add("poses.csv", write_poses(&tracked_rows));
    out.add("poses_gt.csv", write_poses(&gt_rows));
    let centroid_rows: Vec<(usize, Vector3<f64>)> = centroids.into_iter().enumerate().collect();
    out.add("centroids.csv", write_centroids(&centroid_rows));
    out.add("phantom.json", to_json(&spec));
    out.add(
        "truth.json",
        to_json(&json!({
            "designed_grade": spec.designed_grade(),
            "plaque_length_mm": spec.bump.map_or(0.0, |b| b.length_mm),
            "acquisition_order": order,
        })),
    );
    let config = json!({ "args": args, "phantom": spec, "noise": noise });
    commit(&args.out, "simulate", &config, log, out)?;
    println!("simulated {} frames", spec.n_frames);
    Ok(())
}

pub fn regularize(args: &RegularizeArgs) -> CliResult<()> {
    out_of_range("alpha", args.alpha, args.alpha >= 0.0)?;
    out_of_range("lambda0", args.lambda0, args.lambda0 > 0.0)?;
    if args.cycles == 0 {
        return Err(input("--cycles must be >= 1"));
    }
    let mut log = InputLog::default();
    let name = args.poses.display().to_string();
    let mut records = parse_poses(&log.read(&args.poses)?, &name)?;

    let mut permutation: Option<Vec<usize>> = None;
    if args.rerank {
        let path = args
            .centroids
            .as_ref()
            .ok_or_else(|| input("--rerank needs --centroids"))?;
        let by_id: BTreeMap<usize, Vector3<f64>> =
            parse_centroids(&log.read(path)?, &path.display().to_string())?
                .into_iter()
                .collect();
        let centroids = records
            .iter()
            .map(|r| {
                by_id.get(&r.frame_id).copied().ok_or_else(|| {
                    input(format!(
                        "{}: no centroid for frame {}",
                        path.display(),
                        r.frame_id
                    ))
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let poses = PoseSequence::new(records.iter().map(|r| r.pose).collect())?;
        let rr = rerank(&centroids, &poses)?;
        records = rr.permutation.iter().map(|&j| records[j]).collect();
        permutation = Some(rr.permutation);
    }

    let p = PoseSequence::new(records.iter().map(|r| r.pose).collect())?;
    let weights = MetricWeights::default();
    let objective = |x: &PoseSequence| -> CliResult<f64> {
        Ok(data_term(x, &p, &weights)? + args.alpha * reg_term(x, &weights))
    };
    let initial = objective(&p)?;
    let x = if args.alpha == 0.0 || p.len() < 2 {
        p.clone()
    } else {
        let cfg = RegConfig {
            alpha: args.alpha,
            lambda0: args.lambda0,
            n_cycles: args.cycles,
            weights,
            ..Default::default()
        };
        cppa_denoise(&p, &cfg)?
    };
    let final_objective = objective(&x)?;
    for (r, pose) in records.iter_mut().zip(x.iter()) {
        r.pose = *pose;
    }

    let mut out = Outputs::default();
    out.add("poses_reg.csv", write_poses(&records));
    out.add(
        "regularize.json",
        to_json(&json!({
            "initial_objective": initial,
            "final_objective": final_objective,
            "reranked": permutation.as_ref().is_some_and(|p| p.iter().enumerate().any(|(j, &i)| i != j)),
            "frame_order": records.iter().map(|r| r.frame_id).collect::<Vec<_>>(),
        })),
    );
    commit(&args.out, "regularize", args, log, out)?;
    println!("initial objective: {initial}");
    println!("final objective: {final_objective}");
    Ok(())
}

pub fn reconstruct(args: &ReconstructArgs) -> CliResult<()> {
    out_of_range("voxel", args.voxel, args.voxel > 0.0)?;
    let mut log = InputLog::default();
    let dir = read_image_dir(&args.frames, &mut log)?;
    let name = args.poses.display().to_string();
    let records = parse_poses(&log.read(&args.poses)?, &name)?;

    let by_id: BTreeMap<usize, &(usize, usize, usize, Vec<u8>)> =
        dir.images.iter().map(|i| (i.0, i)).collect();
    let pose_ids: BTreeSet<usize> = records.iter().map(|r| r.frame_id).collect();
    if pose_ids.len() != by_id.len() || !pose_ids.iter().all(|id| by_id.contains_key(id)) {
        return Err(input(format!(
            "{} images in {} but {} poses in {name}, or frame ids differ",
            by_id.len(),
            args.frames.display(),
            pose_ids.len()
        )));
    }
    let label = args.mode == ReconMode::Label;
    let mut frames = Vec::with_capacity(records.len());
    let mut masks = Vec::new();
    for r in &records {
        let (id, w, h, pixels) = by_id[&r.frame_id];
        let data = if label {
            let labels = gray_to_labels(pixels, &format!("frame {id}"))?;
            masks.push(
                MaskPair::from_labels(*w, *h, &labels)
                    .map_err(|e| input(format!("frame {id}: {e}")))?,
            );
            labels
        } else {
            pixels.clone()
        };
        frames.push(
            Frame::new(*w, *h, dir.meta.pixel_spacing_mm, data)
                .map_err(|e| input(e.to_string()))?,
        );
    }
    let poses = PoseSequence::new(records.iter().map(|r| r.pose).collect())?;
    let mut seq = FrameSequence::new(frames, poses).map_err(|e| input(e.to_string()))?;
    seq.frame_rate = dir.meta.frame_rate_hz;
    let cfg = ReconConfig {
        spacing: args.voxel,
        hole_fill_radius: args.hole_radius,
        label_mode: label,
    };
    let vol = match (args.pseudo, label) {
        (true, _) => stack_pseudo_volume(&seq, &cfg)?,
        (false, true) => reconstruct_mask_volume(&masks, &seq, &cfg)?,
        (false, false) => fdp_reconstruct(&seq, &cfg)?,
    };
    let (meta, raw) = encode_volume(&vol);
    let mut out = Outputs::default();
    out.add(VOLUME_JSON, meta);
    out.add(VOLUME_RAW, raw);
    commit(&args.out, "reconstruct", args, log, out)?;
    println!(
        "volume {}x{}x{} at {} mm",
        vol.dims[0], vol.dims[1], vol.dims[2], vol.spacing
    );
    Ok(())
}

/// File-name tag for a cut angle: `0`, `p15`, `m30`, `p7.5`.
pub fn angle_tag(angle: f64) -> String {
    if angle == 0.0 {
        "0".into()
    } else if angle > 0.0 {
        format!("p{angle}")
    } else {
        format!("m{}", -angle)
    }
}

pub fn parse_angles(text: &str) -> CliResult<Vec<f64>> {
    let angles = text
        .split(',')
        .map(|s| {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| input(format!("bad angle `{s}`")))?;
            if !(-90.0..90.0).contains(&v) {
                return Err(input(format!("angle {v} outside [-90, 90)")));
            }
            Ok(if v == 0.0 { 0.0 } else { v })
        })
        .collect::<CliResult<Vec<f64>>>()?;
    let tags: BTreeSet<String> = angles.iter().map(|&a| angle_tag(a)).collect();
    if tags.len() != angles.len() {
        return Err(input("duplicate cut angle"));
    }
    Ok(angles)
}

pub fn cut(args: &CutArgs) -> CliResult<()> {
    let angles = parse_angles(&args.angles)?;
    let mut log = InputLog::default();
    let vol = read_volume(&args.volume, &mut log)?;
    let labels = read_volume(&args.labels, &mut log)?;
    vol.check_aligned(&labels)
        .map_err(|e| input(e.to_string()))?;
    if !labels.label_mode {
        return Err(input(format!(
            "{} is not a label volume",
            args.labels.display()
        )));
    }
    let path = CentroidPath::from_label_volume(&labels).map_err(|e| input(e.to_string()))?;
    let mut out = Outputs::default();
    let mut files = Vec::new();
    let mut geometry = None;
    for &a in &angles {
        let img = cut_longitudinal(&vol, &path, a)?;
        let file = format!("cut_{}.pgm", angle_tag(a));
        out.add(file.clone(), encode_pgm(img.columns, img.rows, &img.data));
        files.push(file);
        geometry = Some((img.rows, img.columns, img.row_pixel_mm, img.column_pixel_mm));
    }
    let (rows, columns, row_mm, col_mm) = geometry.expect("at least one angle");
    out.add(
        "centroids.json",
        to_json(&json!({
            "angles_deg": angles,
            "files": files,
            "rows": rows,
            "columns": columns,
            "row_pixel_mm": row_mm,
            "column_pixel_mm": col_mm,
            "centroids_mm": path.points.iter().map(|p| p.map(|c| [c.x, c.y, c.z])).collect::<Vec<_>>(),
        })),
    );
    commit(&args.out, "cut", args, log, out)?;
    println!("wrote {} longitudinal images", angles.len());
    Ok(())
}

pub fn measure(args: &MeasureArgs) -> CliResult<()> {
    out_of_range("threshold", args.threshold, args.threshold >= 0.0)?;
    if args.run_length == 0 {
        return Err(input("--run-length must be >= 1"));
    }
    let mut log = InputLog::default();
    let vol = read_volume(&args.labels, &mut log)?;
    if !vol.label_mode {
        return Err(input(format!(
            "{} is not a label volume",
            args.labels.display()
        )));
    }
    let cfg = MeasureConfig {
        threshold_mm: args.threshold,
        run_length: args.run_length,
    };
    let r = measure_volume(&vol, &cfg, None)?;
    let report = json!({
        "grade": r.stenosis.grade,
        "argmax_slice": r.stenosis.argmax_slice,
        "argmax_angle_deg": r.stenosis.argmax_angle_deg,
        "diseased": r.diagnosis.diseased,
        "plaque_length_mm": r.plaque.length_mm,
        "plaque_thickness_mm": r.plaque.thickness_mm,
        "plaque_slice_range": r.plaque.slice_range,
        "plaque_runs": r.plaque.runs,
        "bifurcation_slices": r.stenosis.bifurcation_slices,
        "slice_spacing_mm": vol.spacing,
        "per_slice_stenosis": r.stenosis.per_slice,
        "per_slice_max_thickness_mm": r.max_thickness_mm,
        "per_slice_plaque": r.diagnosis.per_slice_flags,
    });
    let mut out = Outputs::default();
    out.add("report.json", to_json(&report));
    commit(&args.out, "measure", args, log, out)?;
    println!(
        "grade {:.4}, plaque {:.2} mm, diseased {}",
        r.stenosis.grade, r.plaque.length_mm, r.diagnosis.diseased
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct FrameScores {
    file: String,
    dsc_mab: f64,
    dsc_lib: f64,
    /// `None` when only one of the two masks is empty.
    hd95_mab_px: Option<f64>,
    hd95_lib_px: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    n: usize,
    mean: Option<f64>,
    sd: Option<f64>,
}

fn summarize(values: impl Iterator<Item = Option<f64>>) -> Summary {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        return Summary {
            n: 0,
            mean: None,
            sd: None,
        };
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    Summary {
        n: v.len(),
        mean: Some(mean),
        sd: Some(sd),
    }
}

fn boundary_hd95(p: &BinaryRaster, g: &BinaryRaster) -> CliResult<Option<f64>> {
    let (bp, bg) = (boundary_points(p), boundary_points(g));
    match (bp.is_empty(), bg.is_empty()) {
        (true, true) => Ok(Some(0.0)),
        (false, false) => Ok(Some(hd95(&bp, &bg)?)),
        _ => Ok(None),
    }
}

fn read_masks(dir: &Path, log: &mut InputLog) -> CliResult<BTreeMap<String, MaskPair>> {
    let mut out = BTreeMap::new();
    for p in list_pgm(dir)? {
        let name = p.display().to_string();
        let (w, h, gray) = decode_pgm(&log.read(&p)?, &name)?;
        let pair = MaskPair::from_labels(w, h, &gray_to_labels(&gray, &name)?)
            .map_err(|e| input(format!("{name}: {e}")))?;
        let key = p
            .file_name()
            .expect("listed file")
            .to_string_lossy()
            .into_owned();
        out.insert(key, pair);
    }
    if out.is_empty() {
        return Err(input(format!("{}: no .pgm masks", dir.display())));
    }
    Ok(out)
}

pub fn evaluate(cmd: &EvaluateCommand) -> CliResult<()> {
    let mut log = InputLog::default();
    let mut out = Outputs::default();
    let (name, out_dir): (&str, &Path) = match cmd {
        EvaluateCommand::Masks(a) => {
            let pred = read_masks(&a.pred, &mut log)?;
            let gt = read_masks(&a.gt, &mut log)?;
            let unpaired: Vec<&String> = pred
                .keys()
                .filter(|k| !gt.contains_key(*k))
                .chain(gt.keys().filter(|k| !pred.contains_key(*k)))
                .collect();
            if !unpaired.is_empty() {
                return Err(input(format!("unpaired mask files: {unpaired:?}")));
            }
            let mut frames = Vec::with_capacity(pred.len());
            for (file, p) in &pred {
                let g = &gt[file];
                if (p.width(), p.height()) != (g.width(), g.height()) {
                    return Err(input(format!("{file}: mask sizes differ")));
                }
                frames.push(FrameScores {
                    file: file.clone(),
                    dsc_mab: dsc(&p.mab, &g.mab)?,
                    dsc_lib: dsc(&p.lib, &g.lib)?,
                    hd95_mab_px: boundary_hd95(&p.mab, &g.mab)?,
                    hd95_lib_px: boundary_hd95(&p.lib, &g.lib)?,
                });
            }
            let report = json!({
                "dsc_mab": summarize(frames.iter().map(|f| Some(f.dsc_mab))),
                "dsc_lib": summarize(frames.iter().map(|f| Some(f.dsc_lib))),
                "hd95_mab_px": summarize(frames.iter().map(|f| f.hd95_mab_px)),
                "hd95_lib_px": summarize(frames.iter().map(|f| f.hd95_lib_px)),
                "frames": frames,
            });
            out.add("metrics.json", to_json(&report));
            commit(&a.out, "evaluate masks", a, log, out)?;
            ("masks", &a.out)
        }
        EvaluateCommand::Series(a) => {
            let (x, y) = parse_series(&log.read(&a.csv)?, &a.csv.display().to_string())?;
            let s = PairedSeries::new(x, y).map_err(|e| input(e.to_string()))?;
            let m = mad(&s).map_err(|e| input(e.to_string()))?;
            let (r, err) = match pearson(&s) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let report = json!({
                "n": s.len(),
                "mad": m.mad,
                "sd": m.sd,
                "pearson": r,
                "pearson_error": err,
            });
            out.add("metrics.json", to_json(&report));
            commit(&a.out, "evaluate series", a, log, out)?;
            ("series", &a.out)
        }
        EvaluateCommand::Counts(a) => {
            let c = Contingency::new(a.tp, a.fn_, a.fp, a.tn);
            let rates = classification_rates(&c)?;
            out.add(
                "metrics.json",
                to_json(&json!({ "counts": c, "rates": rates })),
            );
            commit(&a.out, "evaluate counts", a, log, out)?;
            ("counts", &a.out)
        }
    };
    println!(
        "wrote {name} metrics to {}",
        out_dir.join("metrics.json").display()
    );
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Regularize(a) => regularize(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Cut(a) => cut(a),
        Command::Measure(a) => measure(a),
        Command::Evaluate(c) => evaluate(c),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use carotid_core::analysis::DEFAULT_CUT_ANGLES;

    #[test]
    fn angle_tags() {
        assert_eq!(angle_tag(0.0), "0");
        assert_eq!(angle_tag(15.0), "p15");
        assert_eq!(angle_tag(-30.0), "m30");
        assert_eq!(angle_tag(7.5), "p7.5");
    }

    #[test]
    fn angle_parsing() {
        assert_eq!(
            parse_angles("0,15,-15,30,-30").unwrap(),
            DEFAULT_CUT_ANGLES.to_vec()
        );
        assert_eq!(parse_angles("-90").unwrap(), vec![-90.0]);
        assert!(parse_angles("90").is_err());
        assert!(parse_angles("0,x").is_err());
        assert!(parse_angles("15,15").is_err());
        assert_eq!(parse_angles("-0").unwrap(), vec![0.0]);
    }
}
