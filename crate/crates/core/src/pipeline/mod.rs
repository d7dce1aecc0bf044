//! End-to-end editing pipeline: render the source video along the camera
//! path, edit one condition frame, invert into the diffusion prior's noise
//! space, blend fresh noise, re-sample with geometry-aware overriding and
//! guidance, decode, composite, and bake the result into scene colors — all
//! in a single forward pass.

use std::time::Instant;

use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::correspondence::build_correspondence;
use crate::diffusion::{
    blend_noise, gaussian_noise_like, invert, make_schedule, sample, Denoiser, LatentVideo,
    DEFAULT_RHO, DEFAULT_SIGMA_DATA, DEFAULT_SIGMA_MAX, DEFAULT_SIGMA_MIN,
};
use crate::error::{Error, Result};
use crate::scene::{render, update_scene, Camera, EditMask, PointScene, RenderedFrame, UpdateReport, UpdateView, DEFAULT_BACKGROUND};
use crate::trajectory::CameraPath;

pub mod codec;
pub mod config;
pub mod editor;

pub use codec::{decode_video, encode_video};
pub use config::{parse_config, apply_overrides, EditConfig};
pub use editor::{Editor, PixelRect, ToyEditor};

/// Longest frame window the prior handles at once; longer subsequences are
/// processed autoregressively in overlapping chunks.
pub const DEFAULT_CONTEXT_LEN: usize = 25;

/// How many times each pipeline stage ran. A single forward pass performs
/// every stage exactly once regardless of chunk count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageCounters {
    pub render: usize,
    pub invert: usize,
    pub sample: usize,
    pub update: usize,
}

/// Wall-clock seconds per stage, in execution order.
#[derive(Debug, Clone, Default)]
pub struct StageTimings {
    pub stages: Vec<(&'static str, f64)>,
}

impl StageTimings {
    fn push(&mut self, name: &'static str, started: Instant) {
        self.stages.push((name, started.elapsed().as_secs_f64()));
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub scene: PointScene,
    /// Final edited frames (decoded, mask-composited, clamped).
    pub frames: Vec<Array3<f32>>,
    /// Source renders with their depth maps.
    pub source: Vec<RenderedFrame>,
    /// Merged clean latents x̂_0 for the whole path.
    pub final_latents: LatentVideo,
    pub condition_index: usize,
    pub counters: StageCounters,
    pub timings: StageTimings,
    pub update: UpdateReport,
}

/// Picks the condition frame: an explicit index if configured, otherwise the
/// frame where the edit moves pixels the most (mean absolute change inside
/// the mask), ties to the lowest index. Returns the index and edited frame.
pub fn select_condition_frame(
    frames: &[Array3<f32>],
    editor: &dyn ToyEditor,
    masks: Option<&[EditMask]>,
    condition_index: Option<usize>,
) -> Result<(usize, Array3<f32>)> {
    if frames.is_empty() {
        return Err(Error::invalid("no frames to select a condition from"));
    }
    if let Some(masks) = masks {
        if masks.len() != frames.len() {
            return Err(Error::invalid("need one mask per frame"));
        }
    }
    if let Some(idx) = condition_index {
        if idx >= frames.len() {
            return Err(Error::invalid("condition_index exceeds frame count"));
        }
        return Ok((idx, apply_editor(editor, &frames[idx])?));
    }
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    let mut best_frame = None;
    for (i, frame) in frames.iter().enumerate() {
        let edited = apply_editor(editor, frame)?;
        let shape = frame.shape();
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for y in 0..shape[0] {
            for x in 0..shape[1] {
                if masks.is_some_and(|m| !m[i].is_set(y, x)) {
                    continue;
                }
                count += 1;
                for c in 0..3 {
                    sum += (edited[(y, x, c)] - frame[(y, x, c)]).abs() as f64;
                }
            }
        }
        let score = if count == 0 { 0.0 } else { sum / (3.0 * count as f64) };
        if score > best_score {
            best_score = score;
            best = i;
            best_frame = Some(edited);
        }
    }
    Ok((best, best_frame.expect("at least one frame")))
}

fn apply_editor(editor: &dyn ToyEditor, frame: &Array3<f32>) -> Result<Array3<f32>> {
    let edited = editor.apply(frame);
    if edited.shape() != frame.shape() {
        return Err(Error::runtime("editor changed the frame dimensions"));
    }
    Ok(edited)
}

/// Splits frame indices at the condition frame k into two subsequences that
/// both start at k: the reversed prefix [k, k−1, …, 0] and the suffix
/// [k, k+1, …, N−1].
pub fn split_for_parallel(frame_count: usize, cond_idx: usize) -> (Vec<usize>, Vec<usize>) {
    assert!(cond_idx < frame_count, "condition index within bounds");
    let prefix = (0..=cond_idx).rev().collect();
    let suffix = (cond_idx..frame_count).collect();
    (prefix, suffix)
}

/// Splits a subsequence into chunks of at most `context_len` frames where
/// each chunk begins with the previous chunk's last frame (its condition).
pub fn chunk_autoregressive(indices: &[usize], context_len: usize) -> Vec<Vec<usize>> {
    assert!(context_len >= 2, "context length must fit a condition plus one frame");
    let mut chunks = Vec::new();
    if indices.is_empty() {
        return chunks;
    }
    let mut start = 0;
    loop {
        let end = (start + context_len).min(indices.len());
        chunks.push(indices[start..end].to_vec());
        if end == indices.len() {
            break;
        }
        start = end - 1;
    }
    chunks
}

struct SubsequenceResult {
    /// (global frame index, clean latent frame) pairs in processing order.
    frames: Vec<usize>,
    latents: LatentVideo,
}

/// Runs the whole editing pipeline once. `masks`, when given, must hold one
/// mask per path camera; they restrict the condition scorer, the final
/// compositing, and the scene update.
pub fn run_edit(
    scene: &PointScene,
    path: &CameraPath,
    editor: &dyn ToyEditor,
    masks: Option<&[EditMask]>,
    denoiser: &(dyn Denoiser + Sync),
    cfg: &EditConfig,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    path.validate().map_err(|e| e.in_stage("render"))?;
    scene.validate().map_err(|e| e.in_stage("render"))?;
    let n = path.len();
    let (w, h) = (path.cameras[0].width, path.cameras[0].height);
    if path.cameras.iter().any(|c| c.width != w || c.height != h) {
        return Err(Error::invalid("render stage: cameras must share image size"));
    }
    if let Some(masks) = masks {
        if masks.len() != n {
            return Err(Error::invalid("render stage: need one mask per camera"));
        }
        if masks.iter().any(|m| m.data.shape() != [h, w]) {
            return Err(Error::invalid("render stage: mask size does not match cameras"));
        }
    }
    let mut counters = StageCounters::default();
    let mut timings = StageTimings::default();

    // Render the source video and depths.
    let started = Instant::now();
    let source: Vec<RenderedFrame> = path
        .cameras
        .iter()
        .map(|cam| render(scene, cam, DEFAULT_BACKGROUND))
        .collect();
    counters.render += 1;
    timings.push("render", started);
    let source_rgb: Vec<Array3<f32>> = source.iter().map(|f| f.rgb.clone()).collect();

    // Edit the condition frame.
    let started = Instant::now();
    let (cond_idx, cond_frame) =
        select_condition_frame(&source_rgb, editor, masks, cfg.condition_index)
            .map_err(|e| e.in_stage("condition"))?;
    timings.push("condition", started);

    // Encode the source video and the edited condition frame.
    let started = Instant::now();
    let src_latents = encode_video(&source_rgb, cfg.factor).map_err(|e| e.in_stage("encode"))?;
    let cond_latent =
        encode_video(std::slice::from_ref(&cond_frame), cfg.factor).map_err(|e| e.in_stage("encode"))?;
    timings.push("encode", started);

    let schedule = make_schedule(
        cfg.steps,
        DEFAULT_SIGMA_MIN,
        DEFAULT_SIGMA_MAX,
        DEFAULT_RHO,
        DEFAULT_SIGMA_DATA,
    )?;
    let sigma_max = schedule.sigma(schedule.t_max());

    // Partition into subsequences and chunks; skip a degenerate 1-frame side.
    let (prefix, suffix) = split_for_parallel(n, cond_idx);
    let mut subsequences: Vec<Vec<Vec<usize>>> = Vec::new();
    for sub in [prefix, suffix] {
        if sub.len() >= 2 {
            subsequences.push(chunk_autoregressive(&sub, DEFAULT_CONTEXT_LEN));
        }
    }
    if subsequences.is_empty() {
        return Err(Error::invalid("trajectory too short"));
    }

    // Pre-draw blending noise sequentially so parallel subsequence execution
    // stays bit-deterministic.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise: Vec<Vec<LatentVideo>> = subsequences
        .iter()
        .map(|chunks| {
            chunks
                .iter()
                .map(|chunk| {
                    let shape = src_latents.select_frames(chunk);
                    gaussian_noise_like(&shape, sigma_max, &mut rng)
                })
                .collect()
        })
        .collect();

    // Invert, blend, build correspondence, and sample, chunk by chunk. The
    // subsequences are independent; counters record one execution per stage.
    counters.invert += 1;
    counters.sample += 1;
    let started = Instant::now();
    let run_subsequence = |chunks: &Vec<Vec<usize>>, noise: &Vec<LatentVideo>| -> Result<SubsequenceResult> {
        let mut out_frames: Vec<usize> = Vec::new();
        let mut out_latents: Option<LatentVideo> = None;
        // The first chunk is conditioned on the globally edited frame; later
        // chunks on the previous chunk's last output frame.
        let mut cond = cond_latent.frame(0).to_owned();
        for (ci, chunk) in chunks.iter().enumerate() {
            let src_chunk = src_latents.select_frames(chunk);
            let inverted = invert(&src_chunk, &schedule, denoiser, Some(&src_chunk.frame(0)))
                .map_err(|e| e.in_stage("invert"))?;
            let x_t = inverted.last().expect("at least one step");
            let blended = blend_noise(x_t, &noise[ci], cfg.eta).map_err(|e| e.in_stage("blend"))?;
            let cams: Vec<Camera> = chunk.iter().map(|&i| path.cameras[i].clone()).collect();
            let depths: Vec<ndarray::Array2<f32>> =
                chunk.iter().map(|&i| source[i].depth.clone()).collect();
            let map = build_correspondence(&cams, &depths, cfg.tau, cfg.factor)
                .map_err(|e| e.in_stage("correspondence"))?;
            let edited = sample(
                &blended,
                &schedule,
                denoiser,
                Some(&cond.view()),
                &cfg.guidance,
                Some(&map),
            )
            .map_err(|e| e.in_stage("sample"))?;
            cond = edited.frame(edited.frames() - 1).to_owned();
            // Merge, dropping the overlap frame already emitted by the
            // previous chunk.
            let keep: Vec<usize> = if ci == 0 {
                (0..chunk.len()).collect()
            } else {
                (1..chunk.len()).collect()
            };
            for &k in &keep {
                out_frames.push(chunk[k]);
            }
            let kept = edited.select_frames(&keep);
            out_latents = Some(match out_latents {
                None => kept,
                Some(acc) => concat_latents(acc, kept),
            });
        }
        Ok(SubsequenceResult {
            frames: out_frames,
            latents: out_latents.expect("subsequence has at least one chunk"),
        })
    };

    let results: Vec<SubsequenceResult> = if subsequences.len() == 2 {
        let (a, b) = rayon::join(
            || run_subsequence(&subsequences[0], &noise[0]),
            || run_subsequence(&subsequences[1], &noise[1]),
        );
        vec![a?, b?]
    } else {
        vec![run_subsequence(&subsequences[0], &noise[0])?]
    };
    timings.push("invert+sample", started);

    // Assemble the full-path clean latents in global frame order. When both
    // sides exist they share the condition frame; the suffix's copy wins.
    let started = Instant::now();
    let (c, lh, lw) = (src_latents.channels(), src_latents.height(), src_latents.width());
    let mut full = ndarray::Array4::zeros((n, c, lh, lw));
    let mut filled = vec![false; n];
    for result in &results {
        for (pos, &global) in result.frames.iter().enumerate() {
            // Later results overwrite: the suffix is processed second.
            full.index_axis_mut(ndarray::Axis(0), global)
                .assign(&result.latents.frame(pos));
            filled[global] = true;
        }
    }
    if filled.iter().any(|f| !f) {
        return Err(Error::runtime("merge stage: a frame was never produced"));
    }
    let final_latents = LatentVideo::new(full);

    // Decode and composite with masks.
    let decoded = decode_video(&final_latents, cfg.factor).map_err(|e| e.in_stage("decode"))?;
    let mut frames = Vec::with_capacity(n);
    for (i, dec) in decoded.into_iter().enumerate() {
        let mut frame = Array3::zeros((h, w, 3));
        for y in 0..h {
            for x in 0..w {
                let editable = masks.map_or(true, |m| m[i].is_set(y, x));
                for ch in 0..3 {
                    let v = if editable { dec[(y, x, ch)] } else { source_rgb[i][(y, x, ch)] };
                    frame[(y, x, ch)] = v.clamp(0.0, 1.0);
                }
            }
        }
        frames.push(frame);
    }
    timings.push("decode", started);

    // Bake the edited video into the scene colors.
    let started = Instant::now();
    let views: Vec<UpdateView> = path
        .cameras
        .iter()
        .zip(&frames)
        .enumerate()
        .map(|(i, (camera, target))| UpdateView {
            camera,
            target,
            mask: masks.map(|m| &m[i]),
        })
        .collect();
    let (updated, report) = update_scene(scene, &views, cfg.update_iters, cfg.lr)
        .map_err(|e| e.in_stage("update"))?;
    counters.update += 1;
    timings.push("update", started);

    Ok(PipelineOutput {
        scene: updated,
        frames,
        source,
        final_latents,
        condition_index: cond_idx,
        counters,
        timings,
        update: report,
    })
}

fn concat_latents(a: LatentVideo, b: LatentVideo) -> LatentVideo {
    let na = a.frames();
    let nb = b.frames();
    let (c, h, w) = (a.channels(), a.height(), a.width());
    let mut data = ndarray::Array4::zeros((na + nb, c, h, w));
    data.slice_mut(ndarray::s![..na, .., .., ..]).assign(&a.data);
    data.slice_mut(ndarray::s![na.., .., .., ..]).assign(&b.data);
    let mut ids = a.frame_ids;
    ids.extend(b.frame_ids);
    LatentVideo { data, frame_ids: ids }
}
