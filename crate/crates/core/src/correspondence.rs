//! Cross-view latent correspondence: lift latent cells to 3D with rendered
//! depth, project into the reference view, filter occlusions against the
//! reference depth, and override latent cells with reference values.

use ndarray::Array2;
use rayon::prelude::*;

use crate::diffusion::latent::LatentVideo;
use crate::error::{Error, Result};
use crate::scene::Camera;

/// Per frame, a latent-resolution grid mapping each cell to a cell of frame
/// 0's latent grid (or nothing). Frame 0's own grid is always empty; it is
/// the reference and never overridden.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceMap {
    /// maps[i][(cy, cx)] = Some((ty, tx)) target cell in frame 0, or None.
    pub maps: Vec<Array2<Option<(usize, usize)>>>,
    pub factor: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub latent_width: usize,
    pub latent_height: usize,
}

impl CorrespondenceMap {
    pub fn frames(&self) -> usize {
        self.maps.len()
    }

    /// Count of mapped (non-empty) cells across all frames.
    pub fn mapped_cells(&self) -> usize {
        self.maps
            .iter()
            .map(|m| m.iter().filter(|e| e.is_some()).count())
            .sum()
    }

    pub fn check_latent_dims(&self, x: &LatentVideo) -> Result<()> {
        if x.frames() != self.frames()
            || x.height() != self.latent_height
            || x.width() != self.latent_width
        {
            return Err(Error::invalid("latent dims do not match correspondence map"));
        }
        Ok(())
    }
}

/// Where a pixel of one view lands in another view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    /// Continuous target pixel coordinates and the depth seen from the
    /// target camera.
    Hit { u: f64, v: f64, depth: f64 },
    /// Behind the target camera or beyond the image bounds.
    OutOfFrustum,
}

/// Projects pixel (u, v) of `cam_i`, at the given rendered depth, into
/// `cam_ref`: lift through K_i⁻¹, move to world, reproject. Out-of-frustum
/// when the target depth is non-positive or the nearest target pixel falls
/// outside the image.
pub fn project_pixel(
    cam_i: &Camera,
    cam_ref: &Camera,
    u: f64,
    v: f64,
    depth: f64,
) -> Result<Projection> {
    if !depth.is_finite() || depth <= 0.0 {
        return Err(Error::invalid("no surface at this pixel"));
    }
    let x = (u - cam_i.k[(0, 2)]) * depth / cam_i.k[(0, 0)];
    let y = (v - cam_i.k[(1, 2)]) * depth / cam_i.k[(1, 1)];
    let p_cam = nalgebra::Vector3::new(x, y, depth);
    let p_world = cam_i.r.transpose() * (p_cam - cam_i.t);
    match cam_ref.project(&p_world) {
        None => Ok(Projection::OutOfFrustum),
        Some((pu, pv, pd)) => {
            let iu = pu.round();
            let iv = pv.round();
            if iu < 0.0
                || iv < 0.0
                || iu > cam_ref.width as f64 - 1.0
                || iv > cam_ref.height as f64 - 1.0
            {
                Ok(Projection::OutOfFrustum)
            } else {
                Ok(Projection::Hit { u: pu, v: pv, depth: pd })
            }
        }
    }
}

/// Builds the latent-resolution correspondence of every frame onto frame 0.
/// Each latent cell is represented by its center pixel at full resolution;
/// the cell maps to the reference cell containing the nearest target pixel,
/// provided the projected depth agrees with frame 0's rendered depth within
/// `tau` (occlusion test). Cells with no surface, out-of-frustum targets, or
/// failed occlusion tests stay empty.
pub fn build_correspondence(
    cameras: &[Camera],
    depths: &[Array2<f32>],
    tau: f64,
    factor: usize,
) -> Result<CorrespondenceMap> {
    if !(tau > 0.0) {
        return Err(Error::invalid("tau must be positive"));
    }
    if cameras.is_empty() || cameras.len() != depths.len() {
        return Err(Error::invalid("need one depth map per camera"));
    }
    let (w, h) = (cameras[0].width, cameras[0].height);
    for (cam, depth) in cameras.iter().zip(depths) {
        if cam.width != w || cam.height != h {
            return Err(Error::invalid("all frames must share dimensions"));
        }
        if depth.shape() != [h, w] {
            return Err(Error::invalid("depth map size does not match camera"));
        }
    }
    if factor == 0 || w % factor != 0 || h % factor != 0 {
        return Err(Error::invalid("factor must divide image width and height"));
    }
    let (lw, lh) = (w / factor, h / factor);
    let half = factor / 2;

    let maps: Vec<Array2<Option<(usize, usize)>>> = cameras
        .par_iter()
        .enumerate()
        .map(|(i, cam)| {
            let mut map = Array2::from_elem((lh, lw), None);
            if i == 0 {
                return Ok(map);
            }
            for cy in 0..lh {
                for cx in 0..lw {
                    let u = (cx * factor + half) as f64;
                    let v = (cy * factor + half) as f64;
                    let d = depths[i][(v as usize, u as usize)] as f64;
                    if !d.is_finite() || d <= 0.0 {
                        continue;
                    }
                    let Projection::Hit { u: pu, v: pv, depth: pd } =
                        project_pixel(cam, &cameras[0], u, v, d)?
                    else {
                        continue;
                    };
                    let iu = pu.round() as usize;
                    let iv = pv.round() as usize;
                    let ref_depth = depths[0][(iv, iu)] as f64;
                    if (pd - ref_depth).abs() < tau {
                        map[(cy, cx)] = Some((iv / factor, iu / factor));
                    }
                }
            }
            Ok(map)
        })
        .collect::<Result<_>>()?;

    Ok(CorrespondenceMap {
        maps,
        factor,
        image_width: w,
        image_height: h,
        latent_width: lw,
        latent_height: lh,
    })
}

/// Returns a copy of `x` where every mapped cell of frames ≥ 1 takes frame
/// 0's channel values at its target cell; empty cells and frame 0 are left
/// alone.
pub fn override_latent(x: &LatentVideo, map: &CorrespondenceMap) -> Result<LatentVideo> {
    map.check_latent_dims(x)?;
    let mut out = x.clone();
    let channels = x.channels();
    for i in 1..x.frames() {
        for cy in 0..map.latent_height {
            for cx in 0..map.latent_width {
                if let Some((ty, tx)) = map.maps[i][(cy, cx)] {
                    for c in 0..channels {
                        out.data[(i, c, cy, cx)] = x.data[(0, c, ty, tx)];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Debug dump: one block per frame, rows of `u,v->û,v̂` (cell coordinates)
/// or `.` for unmapped cells.
pub fn format_correspondence(map: &CorrespondenceMap) -> String {
    let mut out = String::new();
    for (i, grid) in map.maps.iter().enumerate() {
        out.push_str(&format!("frame {i}\n"));
        for cy in 0..map.latent_height {
            let mut row = Vec::with_capacity(map.latent_width);
            for cx in 0..map.latent_width {
                match grid[(cy, cx)] {
                    Some((ty, tx)) => row.push(format!("{cx},{cy}->{tx},{ty}")),
                    None => row.push(".".to_string()),
                }
            }
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}
