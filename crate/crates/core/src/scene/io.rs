//! Text and binary serialization for scenes, cameras, depth maps and images.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::scene::{Camera, EditMask, PointScene, ScenePoint};

// Loaders accept this much drift from orthonormality before rejecting a
// camera file; anything smaller is snapped back to the nearest rotation.
const FILE_ROTATION_TOL: f64 = 1e-6;

/// Read with the path in the error message, so callers surface which input
/// file was unreadable.
pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))
}

/// Scene text format: header `pointscene v1 <count>`, then one point per
/// line as `x y z r g b radius` at nine significant digits.
pub fn format_scene(scene: &PointScene) -> String {
    let mut out = format!("pointscene v1 {}\n", scene.points.len());
    for p in &scene.points {
        out.push_str(&format!(
            "{:.8e} {:.8e} {:.8e} {:.8e} {:.8e} {:.8e} {:.8e}\n",
            p.position.x, p.position.y, p.position.z, p.color[0], p.color[1], p.color[2], p.radius
        ));
    }
    out
}

pub fn parse_scene(text: &str) -> Result<PointScene> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::parse("empty scene file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 || fields[0] != "pointscene" || fields[1] != "v1" {
        return Err(Error::parse("scene file header must be `pointscene v1 <count>`"));
    }
    let count: usize = fields[2]
        .parse()
        .map_err(|_| Error::parse("scene header count is not an integer"))?;
    let mut points = Vec::with_capacity(count);
    for line in lines {
        let vals = parse_floats(line, 7, "scene point line")?;
        points.push(ScenePoint {
            position: Vector3::new(vals[0], vals[1], vals[2]),
            color: [vals[3] as f32, vals[4] as f32, vals[5] as f32],
            radius: vals[6],
        });
    }
    if points.len() != count {
        return Err(Error::parse(format!(
            "scene header promises {count} points but file has {}",
            points.len()
        )));
    }
    PointScene::new(points)
}

pub fn save_scene(scene: &PointScene, path: &Path) -> Result<()> {
    fs::write(path, format_scene(scene))?;
    Ok(())
}

pub fn load_scene(path: &Path) -> Result<PointScene> {
    parse_scene(&read_text(path)?)
}

/// Camera text format: one camera per line,
/// `fx fy cx cy width height r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz`.
pub fn format_cameras(cameras: &[Camera]) -> String {
    let mut out = String::new();
    for c in cameras {
        out.push_str(&format!(
            "{:.16e} {:.16e} {:.16e} {:.16e} {} {}",
            c.k[(0, 0)],
            c.k[(1, 1)],
            c.k[(0, 2)],
            c.k[(1, 2)],
            c.width,
            c.height
        ));
        for row in 0..3 {
            for col in 0..3 {
                out.push_str(&format!(" {:.16e}", c.r[(row, col)]));
            }
        }
        out.push_str(&format!(" {:.16e} {:.16e} {:.16e}\n", c.t.x, c.t.y, c.t.z));
    }
    out
}

pub fn parse_cameras(text: &str) -> Result<Vec<Camera>> {
    let mut cameras = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 18 {
            return Err(Error::parse(format!(
                "camera line must have 18 fields, found {}",
                fields.len()
            )));
        }
        let mut vals = [0.0f64; 18];
        for (i, f) in fields.iter().enumerate() {
            vals[i] = f
                .parse()
                .map_err(|_| Error::parse(format!("bad number `{f}` in camera line")))?;
        }
        let width = vals[4] as usize;
        let height = vals[5] as usize;
        if vals[4].fract() != 0.0 || vals[5].fract() != 0.0 {
            return Err(Error::parse("camera width and height must be integers"));
        }
        let r = Matrix3::new(
            vals[6], vals[7], vals[8], vals[9], vals[10], vals[11], vals[12], vals[13], vals[14],
        );
        let gram = r.transpose() * r - Matrix3::identity();
        if gram.iter().any(|v| v.abs() > FILE_ROTATION_TOL) || r.determinant() <= 0.0 {
            return Err(Error::parse("camera rotation in file is not orthonormal"));
        }
        let mut camera = Camera {
            k: Matrix3::new(vals[0], 0.0, vals[2], 0.0, vals[1], vals[3], 0.0, 0.0, 1.0),
            r,
            t: Vector3::new(vals[15], vals[16], vals[17]),
            width,
            height,
        };
        camera.orthonormalize();
        camera.validate()?;
        cameras.push(camera);
    }
    Ok(cameras)
}

pub fn save_cameras(cameras: &[Camera], path: &Path) -> Result<()> {
    fs::write(path, format_cameras(cameras))?;
    Ok(())
}

pub fn load_cameras(path: &Path) -> Result<Vec<Camera>> {
    parse_cameras(&read_text(path)?)
}

/// Depth maps are raw little-endian f32, row major, no header; uncovered
/// pixels carry +inf.
pub fn save_depth(depth: &Array2<f32>, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    let mut buf = Vec::with_capacity(depth.len() * 4);
    for v in depth.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_depth(path: &Path, height: usize, width: usize) -> Result<Array2<f32>> {
    let bytes = read_bytes(path)?;
    if bytes.len() != height * width * 4 {
        return Err(Error::parse(format!(
            "depth file holds {} bytes, expected {} for {width}x{height}",
            bytes.len(),
            height * width * 4
        )));
    }
    let mut depth = Array2::zeros((height, width));
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        depth[(i / width, i % width)] = f32::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(depth)
}

/// Writes an (H, W, 3) float image as 8-bit PNG, clamping to [0,1].
pub fn save_png(rgb: &Array3<f32>, path: &Path) -> Result<()> {
    let (h, w) = (rgb.shape()[0], rgb.shape()[1]);
    let mut img = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [
                to_byte(rgb[(y, x, 0)]),
                to_byte(rgb[(y, x, 1)]),
                to_byte(rgb[(y, x, 2)]),
            ];
            img.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    img.save(path).map_err(|e| Error::runtime(format!("png write failed: {e}")))?;
    Ok(())
}

pub fn load_png(path: &Path) -> Result<Array3<f32>> {
    let img = image::open(path)
        .map_err(|e| Error::parse(format!("cannot read {}: {e}", path.display())))?
        .into_rgb8();
    let (w, h) = img.dimensions();
    let mut rgb = Array3::zeros((h as usize, w as usize, 3));
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            rgb[(y as usize, x as usize, c)] = px[c] as f32 / 255.0;
        }
    }
    Ok(rgb)
}

/// Loads a PNG as a binary mask: a pixel is editable when any channel
/// exceeds half intensity.
pub fn load_mask_png(path: &Path) -> Result<EditMask> {
    let rgb = load_png(path)?;
    let (h, w) = (rgb.shape()[0], rgb.shape()[1]);
    let mut data = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let on = (0..3).any(|c| rgb[(y, x, c)] > 0.5);
            data[(y, x)] = u8::from(on);
        }
    }
    EditMask::new(data)
}

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn parse_floats(line: &str, expect: usize, what: &str) -> Result<Vec<f64>> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != expect {
        return Err(Error::parse(format!(
            "{what} must have {expect} fields, found {}",
            fields.len()
        )));
    }
    fields
        .iter()
        .map(|f| {
            f.parse()
                .map_err(|_| Error::parse(format!("bad number `{f}` in {what}")))
        })
        .collect()
}
