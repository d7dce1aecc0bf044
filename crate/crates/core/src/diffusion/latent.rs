//! Latent video grids and their binary dump format.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array4, ArrayView3};

use crate::error::{Error, Result};

/// N frames of C×h×w latents. `frame_ids` records which source-path view
/// each frame came from; slicing for chunked or reversed subsequences keeps
/// the ids, so per-view denoiser means stay aligned with their frames.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVideo {
    pub data: Array4<f32>,
    pub frame_ids: Vec<usize>,
}

impl LatentVideo {
    /// Wraps data with the natural ids 0..N.
    pub fn new(data: Array4<f32>) -> Self {
        let n = data.shape()[0];
        LatentVideo { data, frame_ids: (0..n).collect() }
    }

    pub fn with_frame_ids(data: Array4<f32>, frame_ids: Vec<usize>) -> Result<Self> {
        if frame_ids.len() != data.shape()[0] {
            return Err(Error::invalid("frame id list length must match frame count"));
        }
        Ok(LatentVideo { data, frame_ids })
    }

    /// Same-shaped video derived from `self`: keeps the frame ids.
    pub fn like(&self, data: Array4<f32>) -> Self {
        debug_assert_eq!(data.shape(), self.data.shape());
        LatentVideo { data, frame_ids: self.frame_ids.clone() }
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[3]
    }

    pub fn frame(&self, i: usize) -> ArrayView3<'_, f32> {
        self.data.index_axis(ndarray::Axis(0), i)
    }

    /// Gathers the given frames (in order) into a new video, carrying over
    /// each frame's id.
    pub fn select_frames(&self, indices: &[usize]) -> LatentVideo {
        let (c, h, w) = (self.channels(), self.height(), self.width());
        let mut data = Array4::zeros((indices.len(), c, h, w));
        let mut ids = Vec::with_capacity(indices.len());
        for (k, &i) in indices.iter().enumerate() {
            data.index_axis_mut(ndarray::Axis(0), k).assign(&self.frame(i));
            ids.push(self.frame_ids[i]);
        }
        LatentVideo { data, frame_ids: ids }
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::runtime("latent video holds non-finite entries"));
        }
        if self.frame_ids.len() != self.frames() {
            return Err(Error::invalid("frame id list length must match frame count"));
        }
        Ok(())
    }
}

const LATENT_MAGIC: &[u8; 4] = b"LATV";

/// Binary latent dump: magic `LATV`, then N, C, h, w as little-endian u32,
/// then the f32 entries little-endian in row-major order. Frame ids are not
/// stored; loading assigns 0..N.
pub fn save_latent(latent: &LatentVideo, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + latent.data.len() * 4);
    buf.extend_from_slice(LATENT_MAGIC);
    for dim in latent.data.shape() {
        buf.extend_from_slice(&(*dim as u32).to_le_bytes());
    }
    for v in latent.data.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn load_latent(path: &Path) -> Result<LatentVideo> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 20 || &bytes[0..4] != LATENT_MAGIC {
        return Err(Error::parse("not a latent dump (missing LATV header)"));
    }
    let mut dims = [0usize; 4];
    for (i, dim) in dims.iter_mut().enumerate() {
        let at = 4 + 4 * i;
        *dim = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    }
    let count: usize = dims.iter().product();
    if bytes.len() != 20 + count * 4 {
        return Err(Error::parse(format!(
            "latent dump holds {} bytes of data, header promises {}",
            bytes.len() - 20,
            count * 4
        )));
    }
    let values: Vec<f32> = bytes[20..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let data = Array4::from_shape_vec((dims[0], dims[1], dims[2], dims[3]), values)
        .map_err(|e| Error::parse(format!("latent dump shape error: {e}")))?;
    let video = LatentVideo::new(data);
    video.validate()?;
    Ok(video)
}
