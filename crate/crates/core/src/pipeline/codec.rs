//! Latent codec standing in for a VAE: f×f area-average pooling down,
//! bilinear upsampling back. f = 1 is the identity in both directions.

use ndarray::{Array3, Array4};

use crate::diffusion::latent::LatentVideo;
use crate::error::{Error, Result};

/// Pools each RGB frame into a (3, H/f, W/f) latent frame; channel c of the
/// latent is the block average of image channel c.
pub fn encode_video(frames: &[Array3<f32>], factor: usize) -> Result<LatentVideo> {
    if frames.is_empty() {
        return Err(Error::invalid("cannot encode an empty frame list"));
    }
    let shape = frames[0].shape();
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    if c != 3 {
        return Err(Error::invalid("frames must have 3 channels"));
    }
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::invalid("factor must divide image width and height"));
    }
    let (lh, lw) = (h / factor, w / factor);
    let inv = 1.0 / (factor * factor) as f64;
    let mut data = Array4::zeros((frames.len(), 3, lh, lw));
    for (n, frame) in frames.iter().enumerate() {
        if frame.shape() != shape {
            return Err(Error::invalid("all frames must share dimensions"));
        }
        for ch in 0..3 {
            for cy in 0..lh {
                for cx in 0..lw {
                    let mut sum = 0.0f64;
                    for dy in 0..factor {
                        for dx in 0..factor {
                            sum += frame[(cy * factor + dy, cx * factor + dx, ch)] as f64;
                        }
                    }
                    data[(n, ch, cy, cx)] = (sum * inv) as f32;
                }
            }
        }
    }
    Ok(LatentVideo::new(data))
}

/// Bilinear upsampling of each latent frame back to (H, W, 3). Sample
/// positions follow the half-pixel convention src = (dst + 0.5)/f − 0.5 with
/// edge clamping, so f = 1 reproduces the input bit-for-bit.
pub fn decode_video(latent: &LatentVideo, factor: usize) -> Result<Vec<Array3<f32>>> {
    if factor == 0 {
        return Err(Error::invalid("factor must be positive"));
    }
    let (n, c, lh, lw) = (latent.frames(), latent.channels(), latent.height(), latent.width());
    if c != 3 {
        return Err(Error::invalid("latent must have 3 channels"));
    }
    let (h, w) = (lh * factor, lw * factor);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let frame_latent = latent.frame(i);
        let mut frame = Array3::zeros((h, w, 3));
        for y in 0..h {
            let sy = (y as f64 + 0.5) / factor as f64 - 0.5;
            let y0 = sy.floor();
            let wy = sy - y0;
            let y0c = (y0.max(0.0) as usize).min(lh - 1);
            let y1c = ((y0 + 1.0).max(0.0) as usize).min(lh - 1);
            for x in 0..w {
                let sx = (x as f64 + 0.5) / factor as f64 - 0.5;
                let x0 = sx.floor();
                let wx = sx - x0;
                let x0c = (x0.max(0.0) as usize).min(lw - 1);
                let x1c = ((x0 + 1.0).max(0.0) as usize).min(lw - 1);
                for ch in 0..3 {
                    let v00 = frame_latent[(ch, y0c, x0c)] as f64;
                    let v01 = frame_latent[(ch, y0c, x1c)] as f64;
                    let v10 = frame_latent[(ch, y1c, x0c)] as f64;
                    let v11 = frame_latent[(ch, y1c, x1c)] as f64;
                    // a + w·(b − a) keeps constants exact.
                    let top = v00 + wx * (v01 - v00);
                    let bottom = v10 + wx * (v11 - v10);
                    frame[(y, x, ch)] = (top + wy * (bottom - top)) as f32;
                }
            }
        }
        out.push(frame);
    }
    Ok(out)
}
