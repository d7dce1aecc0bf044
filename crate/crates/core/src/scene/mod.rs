//! Point scenes, pinhole cameras, the z-buffer splat renderer, and the
//! color-only scene updater.

use nalgebra::{Matrix3, Vector3};
use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

pub mod io;

/// Default canvas color for pixels no splat covers.
pub const DEFAULT_BACKGROUND: [f32; 3] = [0.5, 0.5, 0.5];

/// Points closer than this to the camera plane are culled.
pub const MIN_RENDER_DEPTH: f64 = 1e-6;

/// Depth value written for pixels no splat covers.
pub const DEPTH_SENTINEL: f32 = f32::INFINITY;

/// Multiplicative learning-rate decay applied per updating iteration.
/// Keeps the terminal oscillation of sign gradients well below 1e-3 while
/// leaving enough total travel to move a channel across the full color range.
pub const UPDATE_LR_DECAY: f64 = 0.995;

// A projected splat always covers at least the pixel nearest its center.
const MIN_FOOTPRINT_RADIUS: f64 = 0.5;

const ROTATION_TOL: f64 = 1e-9;

/// Pinhole camera: intrinsics `k`, world-to-camera rotation `r` and
/// translation `t`, plus the image size it renders at.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub k: Matrix3<f64>,
    pub r: Matrix3<f64>,
    pub t: Vector3<f64>,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        r: Matrix3<f64>,
        t: Vector3<f64>,
    ) -> Result<Self> {
        let k = Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0);
        let cam = Camera { k, r, t, width, height };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.k;
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) {
            return Err(Error::invalid("camera focal lengths must be positive"));
        }
        let lower = [k[(1, 0)], k[(2, 0)], k[(2, 1)]];
        if lower.iter().any(|v| *v != 0.0) || k[(2, 2)] != 1.0 {
            return Err(Error::invalid("camera intrinsics must be upper triangular with K[2][2] = 1"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera image size must be positive"));
        }
        let gram = self.r.transpose() * self.r - Matrix3::identity();
        if gram.iter().any(|v| v.abs() > ROTATION_TOL) {
            return Err(Error::invalid("camera rotation is not orthonormal"));
        }
        if (self.r.determinant() - 1.0).abs() > ROTATION_TOL {
            return Err(Error::invalid("camera rotation must have determinant +1"));
        }
        if self.t.iter().any(|v| !v.is_finite()) || self.k.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("camera parameters must be finite"));
        }
        Ok(())
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -self.r.transpose() * self.t
    }

    /// Viewing direction (camera +z axis) in world coordinates.
    pub fn optical_axis(&self) -> Vector3<f64> {
        self.r.row(2).transpose()
    }

    /// Projects a world point to continuous pixel coordinates and camera
    /// depth. Returns `None` for points at or behind the camera plane.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let q = self.r * p + self.t;
        if q.z <= MIN_RENDER_DEPTH {
            return None;
        }
        let u = self.k[(0, 0)] * q.x / q.z + self.k[(0, 1)] * q.y / q.z + self.k[(0, 2)];
        let v = self.k[(1, 1)] * q.y / q.z + self.k[(1, 2)];
        Some((u, v, q.z))
    }

    /// Replaces `r` with the nearest proper rotation (orthogonal polar
    /// factor). Used by loaders so text round-trips survive the strict
    /// orthonormality check.
    pub fn orthonormalize(&mut self) {
        let svd = self.r.svd(true, true);
        let u = svd.u.expect("3x3 svd always yields u");
        let v_t = svd.v_t.expect("3x3 svd always yields v_t");
        let mut sign = Matrix3::identity();
        if (u * v_t).determinant() < 0.0 {
            sign[(2, 2)] = -1.0;
        }
        self.r = u * sign * v_t;
    }

    /// Camera at `eye` with its optical axis through `target`.
    pub fn look_at(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self> {
        let z = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("look_at eye and target coincide"))?;
        // y = z×x points against `up`, so world-up maps to decreasing v
        // (toward the top of the image).
        let x = z
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("look_at up is parallel to the view direction"))?;
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let t = -r * eye;
        Camera::new(fx, fy, cx, cy, width, height, r, t)
    }
}

/// One colored splat: world position, RGB color in [0,1], and a radius
/// expressed in pixels at unit depth (the projected radius is `radius·fx/z`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePoint {
    pub position: Vector3<f64>,
    pub color: [f32; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointScene {
    pub points: Vec<ScenePoint>,
}

impl PointScene {
    pub fn new(points: Vec<ScenePoint>) -> Result<Self> {
        let scene = PointScene { points };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if p.position.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("point {i} has a non-finite position")));
            }
            if p.color.iter().any(|c| !c.is_finite() || *c < 0.0 || *c > 1.0) {
                return Err(Error::invalid(format!("point {i} color outside [0,1]")));
            }
            if !(p.radius > 0.0) || !p.radius.is_finite() {
                return Err(Error::invalid(format!("point {i} radius must be positive")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// RGB image (H, W, 3) plus a per-pixel depth map sharing its layout. Pixels
/// no splat covers hold the background color and [`DEPTH_SENTINEL`].
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub rgb: Array3<f32>,
    pub depth: Array2<f32>,
}

impl RenderedFrame {
    pub fn width(&self) -> usize {
        self.rgb.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.rgb.shape()[0]
    }
}

/// Binary per-pixel mask; 1 marks editable pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct EditMask {
    pub data: Array2<u8>,
}

impl EditMask {
    pub fn new(data: Array2<u8>) -> Result<Self> {
        if data.iter().any(|v| *v > 1) {
            return Err(Error::invalid("mask values must be 0 or 1"));
        }
        Ok(EditMask { data })
    }

    pub fn full(height: usize, width: usize) -> Self {
        EditMask { data: Array2::from_elem((height, width), 1) }
    }

    pub fn is_set(&self, y: usize, x: usize) -> bool {
        self.data[(y, x)] == 1
    }
}

const NO_WINNER: u32 = u32::MAX;

/// Per-pixel nearest splat index (or `NO_WINNER`) and its depth. Visibility
/// depends only on positions and radii, so consumers that mutate colors can
/// reuse one raster.
pub(crate) struct Raster {
    pub winner: Array2<u32>,
    pub depth: Array2<f64>,
}

pub(crate) fn rasterize(scene: &PointScene, camera: &Camera) -> Raster {
    let (h, w) = (camera.height, camera.width);
    let mut winner = Array2::from_elem((h, w), NO_WINNER);
    let mut depth = Array2::from_elem((h, w), f64::INFINITY);
    let fx = camera.k[(0, 0)];
    for (idx, point) in scene.points.iter().enumerate() {
        let Some((u, v, z)) = camera.project(&point.position) else {
            continue;
        };
        let r = (point.radius * fx / z).max(MIN_FOOTPRINT_RADIUS);
        let x0 = (u - r).ceil().max(0.0) as i64;
        let x1 = (u + r).floor().min(w as f64 - 1.0) as i64;
        let y0 = (v - r).ceil().max(0.0) as i64;
        let y1 = (v + r).floor().min(h as f64 - 1.0) as i64;
        if x0 > x1 || y0 > y1 {
            continue;
        }
        let r2 = r * r;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 - u;
                let dy = y as f64 - v;
                if dx * dx + dy * dy <= r2 {
                    let cell = (y as usize, x as usize);
                    // Strict comparison keeps the earliest point on exact ties.
                    if z < depth[cell] {
                        depth[cell] = z;
                        winner[cell] = idx as u32;
                    }
                }
            }
        }
    }
    Raster { winner, depth }
}

/// Renders the scene with hard z-buffered splats: each point projects to a
/// filled disc, the nearest point wins each pixel.
pub fn render(scene: &PointScene, camera: &Camera, background: [f32; 3]) -> RenderedFrame {
    let raster = rasterize(scene, camera);
    let (h, w) = (camera.height, camera.width);
    let mut rgb = Array3::zeros((h, w, 3));
    let mut depth = Array2::from_elem((h, w), DEPTH_SENTINEL);
    for y in 0..h {
        for x in 0..w {
            let idx = raster.winner[(y, x)];
            let color = if idx == NO_WINNER {
                background
            } else {
                depth[(y, x)] = raster.depth[(y, x)] as f32;
                scene.points[idx as usize].color
            };
            for c in 0..3 {
                rgb[(y, x, c)] = color[c];
            }
        }
    }
    RenderedFrame { rgb, depth }
}

/// One supervision view for [`update_scene`]: the camera, the target image it
/// should reproduce, and an optional mask restricting which pixels supervise.
pub struct UpdateView<'a> {
    pub camera: &'a Camera,
    pub target: &'a Array3<f32>,
    pub mask: Option<&'a EditMask>,
}

#[derive(Debug, Clone, Copy)]
pub struct UpdateReport {
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Updates point colors (positions and radii stay frozen) by sign-gradient
/// descent on the masked per-pixel L1 loss, averaged over views. Colors are
/// clamped to [0,1]. Because visibility is color-independent, each view is
/// rasterized once and iterations run on the cached pixel ownership, which is
/// exactly equivalent to re-rendering every iteration. Uncovered pixels
/// compare against [`DEFAULT_BACKGROUND`]; they contribute a constant to the
/// loss and never to the gradient.
pub fn update_scene(
    scene: &PointScene,
    views: &[UpdateView],
    iters: usize,
    lr: f64,
) -> Result<(PointScene, UpdateReport)> {
    if views.is_empty() {
        return Err(Error::invalid("no supervision views"));
    }
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::invalid("learning rate must be positive"));
    }

    let n_points = scene.points.len();
    // supervision[p] = target colors of every masked pixel point p owns,
    // pooled across views; drives the gradient step.
    let mut supervision: Vec<Vec<[f32; 3]>> = vec![Vec::new(); n_points];
    // Per-view (point, target) pairs for the color-dependent loss term.
    let mut view_pixels: Vec<Vec<(u32, [f32; 3])>> = Vec::with_capacity(views.len());
    // Per view: sum of |background - target| over masked uncovered pixels and
    // the masked pixel count; both constant during optimization.
    let mut const_loss = Vec::with_capacity(views.len());
    for view in views {
        let (h, w) = (view.camera.height, view.camera.width);
        if view.target.shape() != [h, w, 3] {
            return Err(Error::invalid("target image size does not match camera"));
        }
        if let Some(mask) = view.mask {
            if mask.data.shape() != [h, w] {
                return Err(Error::invalid("mask size does not match camera"));
            }
        }
        let raster = rasterize(scene, view.camera);
        let mut fixed = 0.0f64;
        let mut masked = 0usize;
        let mut list = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if view.mask.is_some_and(|m| !m.is_set(y, x)) {
                    continue;
                }
                masked += 1;
                let target = [
                    view.target[(y, x, 0)],
                    view.target[(y, x, 1)],
                    view.target[(y, x, 2)],
                ];
                let idx = raster.winner[(y, x)];
                if idx == NO_WINNER {
                    for c in 0..3 {
                        fixed += (DEFAULT_BACKGROUND[c] - target[c]).abs() as f64;
                    }
                } else {
                    supervision[idx as usize].push(target);
                    list.push((idx, target));
                }
            }
        }
        const_loss.push((fixed, masked));
        view_pixels.push(list);
    }

    let mut colors: Vec<[f32; 3]> = scene.points.iter().map(|p| p.color).collect();

    let loss = |colors: &[[f32; 3]]| -> f64 {
        let mut total = 0.0;
        for (v, list) in view_pixels.iter().enumerate() {
            let (fixed, masked) = const_loss[v];
            if masked == 0 {
                continue;
            }
            let mut sum = fixed;
            for (idx, target) in list {
                let c = colors[*idx as usize];
                for ch in 0..3 {
                    sum += (c[ch] - target[ch]).abs() as f64;
                }
            }
            total += sum / (3.0 * masked as f64);
        }
        total / views.len() as f64
    };

    let initial_loss = loss(&colors);
    let mut step = lr;
    for _ in 0..iters {
        for (p, targets) in supervision.iter().enumerate() {
            if targets.is_empty() {
                continue;
            }
            let inv = 1.0 / targets.len() as f64;
            for ch in 0..3 {
                let mut grad = 0.0f64;
                let c = colors[p][ch];
                for t in targets {
                    let d = c - t[ch];
                    if d > 0.0 {
                        grad += 1.0;
                    } else if d < 0.0 {
                        grad -= 1.0;
                    }
                }
                let next = (c as f64 - step * grad * inv).clamp(0.0, 1.0);
                colors[p][ch] = next as f32;
            }
        }
        step *= UPDATE_LR_DECAY;
    }
    let final_loss = loss(&colors);

    let mut out = scene.clone();
    for (p, c) in out.points.iter_mut().zip(colors) {
        p.color = c;
    }
    Ok((out, UpdateReport { initial_loss, final_loss }))
}
