//! Self-contained demonstration fixtures: an open colored cube made of
//! splatted points, an orbiting camera ring, and toy Gaussian denoisers whose
//! means come from rendered views of the scene. These drive the `demo` and
//! `sweep` CLI subcommands and the end-to-end tests.

use ndarray::{Array2, Array3};

use crate::diffusion::{
    AnalyticGaussianDenoiser, ConditionedGaussianDenoiser, GaussianMean, LatentVideo,
};
use crate::error::{Error, Result};
use crate::pipeline::{encode_video, run_edit, EditConfig, Editor, PipelineOutput, ToyEditor};
use crate::scene::{render, Camera, PointScene, RenderedFrame, ScenePoint, DEFAULT_BACKGROUND};
use crate::trajectory::CameraPath;
use nalgebra::Vector3;

pub const DEMO_IMAGE_SIZE: usize = 64;
pub const DEMO_FRAME_COUNT: usize = 25;
pub const DEMO_FOCAL: f64 = 80.0;
pub const DEMO_ORBIT_RADIUS: f64 = 4.0;
pub const DEMO_ORBIT_ELEVATION_DEG: f64 = 27.0;
/// Tight data prior so the toy denoiser collapses injected noise hard.
pub const DEMO_SIGMA_DATA: f64 = 0.01;

const FACE_POINTS: usize = 24;
const POINT_RADIUS: f64 = 0.06;

/// Five faces of a unit-half-width cube (the bottom face is omitted since the
/// orbit never sees it), each face a 24x24 grid of points with a quadrant
/// brightness texture over a per-face base color.
pub fn build_demo_scene() -> PointScene {
    // Saturated palette; the green channel survives the demo recolor
    // unchanged, which keeps faces distinguishable before and after.
    let faces: [(Vector3<f64>, Vector3<f64>, Vector3<f64>, [f32; 3]); 5] = [
        // (normal axis offset, in-plane u axis, in-plane v axis, color)
        (Vector3::x(), Vector3::y(), Vector3::z(), [0.90, 0.15, 0.10]),
        (-Vector3::x(), Vector3::y(), Vector3::z(), [0.10, 0.80, 0.20]),
        (Vector3::y(), Vector3::x(), Vector3::z(), [0.15, 0.20, 0.90]),
        (-Vector3::y(), Vector3::x(), Vector3::z(), [0.95, 0.80, 0.10]),
        (Vector3::z(), Vector3::x(), Vector3::y(), [0.80, 0.15, 0.85]),
    ];
    let step = 2.0 / FACE_POINTS as f64;
    let mut points = Vec::with_capacity(5 * FACE_POINTS * FACE_POINTS);
    for (normal, u_axis, v_axis, base) in faces {
        for iu in 0..FACE_POINTS {
            for iv in 0..FACE_POINTS {
                let u = -1.0 + step * (iu as f64 + 0.5);
                let v = -1.0 + step * (iv as f64 + 0.5);
                // Diagonal quadrants brighter, off-diagonal darker.
                let tint = if (iu < FACE_POINTS / 2) == (iv < FACE_POINTS / 2) {
                    0.06
                } else {
                    -0.06
                };
                let color = [
                    (base[0] + tint).clamp(0.0, 1.0),
                    (base[1] + tint).clamp(0.0, 1.0),
                    (base[2] + tint).clamp(0.0, 1.0),
                ];
                points.push(ScenePoint {
                    position: normal + u_axis * u + v_axis * v,
                    color,
                    radius: POINT_RADIUS,
                });
            }
        }
    }
    PointScene::new(points).expect("demo scene is valid by construction")
}

/// Cameras on a full orbit around the scene at fixed elevation, all looking
/// at the origin with the world z axis up.
pub fn demo_cameras(count: usize) -> Result<Vec<Camera>> {
    if count == 0 {
        return Err(Error::invalid("camera count must be positive"));
    }
    let elevation = DEMO_ORBIT_ELEVATION_DEG.to_radians();
    let (c, s) = (elevation.cos(), elevation.sin());
    let center = DEMO_IMAGE_SIZE as f64 / 2.0;
    (0..count)
        .map(|i| {
            let azimuth = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
            let eye = Vector3::new(
                DEMO_ORBIT_RADIUS * c * azimuth.cos(),
                DEMO_ORBIT_RADIUS * c * azimuth.sin(),
                DEMO_ORBIT_RADIUS * s,
            );
            Camera::look_at(
                DEMO_FOCAL,
                DEMO_FOCAL,
                center,
                center,
                DEMO_IMAGE_SIZE,
                DEMO_IMAGE_SIZE,
                eye,
                Vector3::zeros(),
                Vector3::z(),
            )
        })
        .collect()
}

/// The orbit as a ready-to-edit trajectory (every camera a frame; first and
/// last views are the keys).
pub fn demo_path(count: usize) -> Result<CameraPath> {
    if count < 2 {
        return Err(Error::invalid("trajectory too short"));
    }
    let cameras = demo_cameras(count)?;
    let path = CameraPath { cameras, key_indices: vec![0, count - 1] };
    path.validate()?;
    Ok(path)
}

/// Gray-preserving recolor: gains (0.2, 1, 0.2) and biases (0.4, 0, 0.4) map
/// mid-gray to itself and [0, 1] into itself, so the edit commutes exactly
/// with rendering over the default background.
pub fn demo_editor() -> Editor {
    Editor::Recolor { gains: [0.2, 1.0, 0.2], biases: [0.4, 0.0, 0.4] }
}

/// Ground-truth edited scene: the editor's color map applied to every point.
/// Only editors that act as a uniform color map qualify.
pub fn oracle_edited_scene(scene: &PointScene, editor: &Editor) -> Result<PointScene> {
    let mut points = Vec::with_capacity(scene.len());
    for p in &scene.points {
        let color = editor
            .point_color_edit(p.color)
            .ok_or_else(|| Error::invalid("editor has no uniform point-color rule"))?;
        points.push(ScenePoint { color, ..*p });
    }
    PointScene::new(points)
}

pub fn render_views(scene: &PointScene, cameras: &[Camera]) -> Vec<RenderedFrame> {
    cameras.iter().map(|cam| render(scene, cam, DEFAULT_BACKGROUND)).collect()
}

/// Encodes rendered views into a latent video with frame ids matching
/// trajectory positions.
pub fn encode_views(frames: &[RenderedFrame], factor: usize) -> Result<LatentVideo> {
    let images: Vec<Array3<f32>> = frames.iter().map(|f| f.rgb.clone()).collect();
    encode_video(&images, factor)
}

/// Two-candidate conditioned denoiser for the demo edit: candidate 0 is the
/// latent of the source renders, candidate 1 the latent of the edited
/// renders; unconditioned evaluation falls back to the edited candidate.
pub fn demo_denoiser(
    source: &[RenderedFrame],
    editor: &dyn ToyEditor,
    factor: usize,
) -> Result<ConditionedGaussianDenoiser> {
    let src_images: Vec<Array3<f32>> = source.iter().map(|f| f.rgb.clone()).collect();
    let edited_images: Vec<Array3<f32>> = src_images.iter().map(|f| editor.apply(f)).collect();
    let mu_src = encode_video(&src_images, factor)?;
    let mu_edit = encode_video(&edited_images, factor)?;
    Ok(ConditionedGaussianDenoiser {
        candidates: vec![mu_src, mu_edit],
        uncond_candidate: 1,
        sigma_data: DEMO_SIGMA_DATA,
    })
}

/// Unconditional per-view denoiser whose mean is the edited-view latent;
/// used by the η sweep so appearance distance has a fixed target.
pub fn sweep_denoiser(
    source: &[RenderedFrame],
    editor: &dyn ToyEditor,
    factor: usize,
) -> Result<(AnalyticGaussianDenoiser, LatentVideo)> {
    let edited: Vec<Array3<f32>> =
        source.iter().map(|f| editor.apply(&f.rgb)).collect();
    let mu_edit = encode_video(&edited, factor)?;
    let denoiser = AnalyticGaussianDenoiser {
        mean: GaussianMean::PerView(mu_edit.clone()),
        sigma_data: DEMO_SIGMA_DATA,
    };
    Ok((denoiser, mu_edit))
}

/// Everything the demo produces, for the CLI to serialize and tests to check.
pub struct DemoArtifacts {
    pub scene: PointScene,
    pub oracle: PointScene,
    pub path: CameraPath,
    pub editor: Editor,
    pub output: PipelineOutput,
}

/// Runs the full edit pipeline on the built-in cube scene. A configured
/// editor other than the identity default replaces the built-in recolor.
/// Deterministic for a fixed config.
pub fn run_demo(cfg: &EditConfig) -> Result<DemoArtifacts> {
    let scene = build_demo_scene();
    let path = demo_path(DEMO_FRAME_COUNT)?;
    let editor = if cfg.editor == Editor::Identity { demo_editor() } else { cfg.editor.clone() };
    let oracle = oracle_edited_scene(&scene, &editor)?;
    let source = render_views(&scene, &path.cameras);
    let denoiser = demo_denoiser(&source, &editor, cfg.factor)?;
    let output = run_edit(&scene, &path, &editor, None, &denoiser, cfg)?;
    Ok(DemoArtifacts { scene, oracle, path, editor, output })
}

/// Mean absolute RGB difference between renders of two scenes over shared
/// cameras; the demo's acceptance measurement.
pub fn render_distance(a: &PointScene, b: &PointScene, cameras: &[Camera]) -> f64 {
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for cam in cameras {
        let fa = render(a, cam, DEFAULT_BACKGROUND);
        let fb = render(b, cam, DEFAULT_BACKGROUND);
        sum += fa
            .rgb
            .iter()
            .zip(fb.rgb.iter())
            .map(|(x, y)| (*x as f64 - *y as f64).abs())
            .sum::<f64>();
        count += fa.rgb.len();
    }
    sum / count as f64
}

/// Mean absolute difference between rendered frames and a scene's renders.
pub fn frame_distance(frames: &[Array3<f32>], scene: &PointScene, cameras: &[Camera]) -> f64 {
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (frame, cam) in frames.iter().zip(cameras) {
        let reference = render(scene, cam, DEFAULT_BACKGROUND);
        sum += frame
            .iter()
            .zip(reference.rgb.iter())
            .map(|(x, y)| (*x as f64 - *y as f64).abs())
            .sum::<f64>();
        count += frame.len();
    }
    sum / count as f64
}

/// Depth maps of rendered views, in trajectory order.
pub fn view_depths(frames: &[RenderedFrame]) -> Vec<Array2<f32>> {
    frames.iter().map(|f| f.depth.clone()).collect()
}
