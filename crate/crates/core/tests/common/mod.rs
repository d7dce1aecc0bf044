//! Shared fixtures for the integration tests: a two-tone point plane whose
//! renders shift by whole pixels between cameras, and small latent helpers.
#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use ndarray::Array4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vpedit::diffusion::{gaussian_noise_like, LatentVideo};
use vpedit::scene::{Camera, PointScene, ScenePoint};
use vpedit::trajectory::CameraPath;

/// Two-tone plane at z = 5: a 129×129 grid of points spaced 0.0625 apart,
/// cool-colored on the left half and warm on the right. The point spacing
/// matches one rendered pixel at focal length 80, so the plane rasterizes
/// without holes and shifted cameras see integer-translated views.
pub fn plane_scene() -> PointScene {
    let mut points = Vec::new();
    for iy in -64..=64i32 {
        for ix in -64..=64i32 {
            let x = ix as f64 * 0.0625;
            let y = iy as f64 * 0.0625;
            let color = if x < 0.0 { [0.3, 0.45, 0.7] } else { [0.7, 0.55, 0.3] };
            points.push(ScenePoint {
                position: Vector3::new(x, y, 5.0),
                color,
                radius: 0.05,
            });
        }
    }
    PointScene::new(points).unwrap()
}

/// Cameras marching right in steps of `step` world units at the plane-scene
/// intrinsics (64×64, f = 80). At plane depth 5, step = 0.5 is a disparity
/// of exactly 8 px — one latent cell at factor 8.
pub fn shift_path(count: usize, step: f64) -> CameraPath {
    let cameras = (0..count)
        .map(|i| {
            Camera::new(
                80.0,
                80.0,
                32.0,
                32.0,
                64,
                64,
                Matrix3::identity(),
                Vector3::new(-(i as f64) * step, 0.0, 0.0),
            )
            .unwrap()
        })
        .collect();
    CameraPath { cameras, key_indices: vec![0, count - 1] }
}

pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> LatentVideo {
    LatentVideo::new(Array4::zeros((n, c, h, w)))
}

/// Seeded Gaussian latent of the given shape and standard deviation.
pub fn noise(shape: (usize, usize, usize, usize), std: f64, seed: u64) -> LatentVideo {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gaussian_noise_like(&zeros(shape.0, shape.1, shape.2, shape.3), std, &mut rng)
}

/// Relative L2 distance ‖a − b‖ / ‖b‖ over all entries, in f64.
pub fn rel_l2(a: &LatentVideo, b: &LatentVideo) -> f64 {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (x, y) in a.data.iter().zip(b.data.iter()) {
        let d = *x as f64 - *y as f64;
        num += d * d;
        den += (*y as f64) * (*y as f64);
    }
    (num / den).sqrt()
}
