//! Evaluation: first-view-aligned translation error between pose sequences,
//! depth-reprojection color consistency, and the η-sweep harness.

use nalgebra::{Matrix3, Vector3};
use ndarray::{Array2, Array3};
use rayon::prelude::*;

use crate::correspondence::build_correspondence;
use crate::diffusion::{Denoiser, LatentVideo};
use crate::error::{Error, Result};
use crate::pipeline::{run_edit, EditConfig, ToyEditor};
use crate::scene::{Camera, EditMask, PointScene};
use crate::trajectory::CameraPath;

/// World-to-camera rotations and translations of a camera sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub rotations: Vec<Matrix3<f64>>,
    pub translations: Vec<Vector3<f64>>,
}

impl PoseSequence {
    pub fn from_cameras(cameras: &[Camera]) -> Self {
        PoseSequence {
            rotations: cameras.iter().map(|c| c.r).collect(),
            translations: cameras.iter().map(|c| c.t).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rotations.len() != self.translations.len() {
            return Err(Error::invalid("pose sequence lists differ in length"));
        }
        if self.is_empty() {
            return Err(Error::invalid("pose sequence is empty"));
        }
        for r in &self.rotations {
            let gram = r.transpose() * r - Matrix3::identity();
            if gram.iter().any(|v| v.abs() > 1e-6) || (r.determinant() - 1.0).abs() > 1e-6 {
                return Err(Error::invalid("pose rotation is not a proper rotation"));
            }
        }
        Ok(())
    }
}

/// Re-expresses every pose relative to the first: composing with the first
/// pose's inverse turns pose 1 into the identity with zero translation.
pub fn align_to_first(poses: &PoseSequence) -> PoseSequence {
    let r1t = poses.rotations[0].transpose();
    let t1 = poses.translations[0];
    let mut rotations = Vec::with_capacity(poses.len());
    let mut translations = Vec::with_capacity(poses.len());
    for (r, t) in poses.rotations.iter().zip(&poses.translations) {
        let r_new = r * r1t;
        translations.push(t - r_new * t1);
        rotations.push(r_new);
    }
    PoseSequence { rotations, translations }
}

/// Translation error Σ_j ‖T_gt^j − T_est^j‖₂ after aligning both sequences
/// to their first views.
pub fn trans_err(gt: &PoseSequence, est: &PoseSequence) -> Result<f64> {
    if gt.len() != est.len() {
        return Err(Error::invalid("pose sequences differ in length"));
    }
    gt.validate()?;
    est.validate()?;
    let gt = align_to_first(gt);
    let est = align_to_first(est);
    Ok(gt
        .translations
        .iter()
        .zip(&est.translations)
        .map(|(a, b)| (a - b).norm())
        .sum())
}

/// Mean geodesic rotation angle after first-view alignment; a diagnostic
/// companion to [`trans_err`], which by definition ignores rotations.
pub fn rotation_err(gt: &PoseSequence, est: &PoseSequence) -> Result<f64> {
    if gt.len() != est.len() {
        return Err(Error::invalid("pose sequences differ in length"));
    }
    gt.validate()?;
    est.validate()?;
    let gt = align_to_first(gt);
    let est = align_to_first(est);
    let mut sum = 0.0;
    for (a, b) in gt.rotations.iter().zip(&est.rotations) {
        let rel = a.transpose() * b;
        let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        sum += cos.acos();
    }
    Ok(sum / gt.len() as f64)
}

/// Mean absolute color difference between every frame's pixels and the
/// frame-0 pixels they correspond to under full-resolution depth
/// reprojection; unmapped pixels are excluded.
pub fn reprojection_consistency(
    frames: &[Array3<f32>],
    depths: &[Array2<f32>],
    cameras: &[Camera],
    tau: f64,
) -> Result<f64> {
    if frames.len() != cameras.len() {
        return Err(Error::invalid("need one frame per camera"));
    }
    let map = build_correspondence(cameras, depths, tau, 1)?;
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for i in 1..frames.len() {
        for y in 0..map.latent_height {
            for x in 0..map.latent_width {
                let Some((ty, tx)) = map.maps[i][(y, x)] else {
                    continue;
                };
                count += 1;
                for c in 0..3 {
                    sum += (frames[i][(y, x, c)] - frames[0][(ty, tx, c)]).abs() as f64;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::runtime("disjoint views"));
    }
    Ok(sum / (3.0 * count as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub eta: f64,
    pub seed: u64,
    pub pose_err: f64,
    pub appearance_dist: f64,
}

/// Runs the pipeline once per (η, seed) and reports, per run, the
/// geometric-alignment proxy (depth-reprojection consistency of the edited
/// frames under the ground-truth cameras) and the mean absolute distance of
/// the final latents to the condition-defined target.
#[allow(clippy::too_many_arguments)]
pub fn eta_sweep(
    scene: &PointScene,
    path: &CameraPath,
    editor: &(dyn ToyEditor + Sync),
    masks: Option<&[EditMask]>,
    denoiser: &(dyn Denoiser + Sync),
    target: &LatentVideo,
    base: &EditConfig,
    etas: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    if etas.len() < 2 {
        return Err(Error::invalid("need at least 2 eta values"));
    }
    if seeds.is_empty() {
        return Err(Error::invalid("need at least 1 seed"));
    }
    let jobs: Vec<(f64, u64)> = etas
        .iter()
        .flat_map(|&eta| seeds.iter().map(move |&seed| (eta, seed)))
        .collect();
    jobs.par_iter()
        .map(|&(eta, seed)| {
            let mut cfg = base.clone();
            cfg.eta = eta;
            cfg.seed = seed;
            let out = run_edit(scene, path, editor, masks, denoiser, &cfg)?;
            let depths: Vec<Array2<f32>> = out.source.iter().map(|f| f.depth.clone()).collect();
            let pose_err =
                reprojection_consistency(&out.frames, &depths, &path.cameras, cfg.tau)?;
            if out.final_latents.data.shape() != target.data.shape() {
                return Err(Error::invalid("sweep target shape does not match latents"));
            }
            let appearance_dist = out
                .final_latents
                .data
                .iter()
                .zip(target.data.iter())
                .map(|(a, b)| (*a as f64 - *b as f64).abs())
                .sum::<f64>()
                / target.data.len() as f64;
            Ok(SweepRow { eta, seed, pose_err, appearance_dist })
        })
        .collect()
}

/// Plot-ready table: header `eta,seed,pose_err,appearance_dist`.
pub fn format_sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("eta,seed,pose_err,appearance_dist\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{:.9e},{:.9e}\n",
            row.eta, row.seed, row.pose_err, row.appearance_dist
        ));
    }
    out
}

/// Seed-averaged line plot of both sweep metrics against η, each normalized
/// to its own range. Returns an RGB image.
pub fn render_sweep_plot(rows: &[SweepRow]) -> Array3<f32> {
    const W: usize = 480;
    const H: usize = 320;
    const MARGIN: usize = 30;
    let mut img = Array3::from_elem((H, W, 3), 1.0f32);

    // Seed-average per eta, keeping eta order of first appearance.
    let mut etas: Vec<f64> = Vec::new();
    for row in rows {
        if !etas.iter().any(|e| *e == row.eta) {
            etas.push(row.eta);
        }
    }
    etas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let series: Vec<(f64, f64, f64)> = etas
        .iter()
        .map(|&eta| {
            let vals: Vec<&SweepRow> = rows.iter().filter(|r| r.eta == eta).collect();
            let n = vals.len() as f64;
            let pose = vals.iter().map(|r| r.pose_err).sum::<f64>() / n;
            let app = vals.iter().map(|r| r.appearance_dist).sum::<f64>() / n;
            (eta, pose, app)
        })
        .collect();

    // Axes.
    for x in MARGIN..W - MARGIN {
        set_px(&mut img, H - MARGIN, x, [0.2, 0.2, 0.2]);
    }
    for y in MARGIN..H - MARGIN {
        set_px(&mut img, y, MARGIN, [0.2, 0.2, 0.2]);
    }

    let eta_min = series.first().map(|s| s.0).unwrap_or(0.0);
    let eta_max = series.last().map(|s| s.0).unwrap_or(1.0);
    let x_of = |eta: f64| -> f64 {
        let span = (eta_max - eta_min).max(1e-12);
        MARGIN as f64 + (eta - eta_min) / span * (W - 2 * MARGIN) as f64
    };
    for (idx, color) in [[0.85, 0.2, 0.2], [0.2, 0.3, 0.9]].iter().enumerate() {
        let vals: Vec<f64> = series.iter().map(|s| if idx == 0 { s.1 } else { s.2 }).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(1e-12);
        let y_of = |v: f64| -> f64 {
            (H - MARGIN) as f64 - (v - lo) / span * (H - 2 * MARGIN) as f64
        };
        for pair in series.windows(2) {
            let (e0, v0) = (pair[0].0, if idx == 0 { pair[0].1 } else { pair[0].2 });
            let (e1, v1) = (pair[1].0, if idx == 0 { pair[1].1 } else { pair[1].2 });
            draw_line(&mut img, x_of(e0), y_of(v0), x_of(e1), y_of(v1), *color);
        }
    }
    img
}

fn set_px(img: &mut Array3<f32>, y: usize, x: usize, color: [f32; 3]) {
    if y < img.shape()[0] && x < img.shape()[1] {
        for c in 0..3 {
            img[(y, x, c)] = color[c];
        }
    }
}

fn draw_line(img: &mut Array3<f32>, x0: f64, y0: f64, x1: f64, y1: f64, color: [f32; 3]) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for s in 0..=steps {
        let k = s as f64 / steps as f64;
        let x = x0 + k * (x1 - x0);
        let y = y0 + k * (y1 - y0);
        set_px(img, y.round() as usize, x.round() as usize, color);
    }
}
