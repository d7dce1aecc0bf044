//! Camera path synthesis: order discrete training views by view change, pick
//! key cameras, and fill the gaps with Slerp/lerp interpolated cameras.

use std::path::Path;

use nalgebra::{Quaternion, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scene::io::{format_cameras, parse_cameras};
use crate::scene::Camera;

/// Ordered cameras plus the indices of the non-interpolated key cameras.
#[derive(Debug, Clone)]
pub struct CameraPath {
    pub cameras: Vec<Camera>,
    pub key_indices: Vec<usize>,
}

impl CameraPath {
    pub fn validate(&self) -> Result<()> {
        if self.cameras.len() < 2 {
            return Err(Error::invalid("trajectory too short: need at least 2 cameras"));
        }
        if self.key_indices.first() != Some(&0)
            || self.key_indices.last() != Some(&(self.cameras.len() - 1))
            || self.key_indices.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::invalid(
                "key indices must increase strictly from 0 to the last camera",
            ));
        }
        for c in &self.cameras {
            c.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    /// Largest view-change distance between adjacent cameras; the path is
    /// considered smooth when this stays below a caller-chosen bound.
    pub fn max_adjacent_view_change(&self, scene_radius: f64) -> f64 {
        self.cameras
            .windows(2)
            .map(|w| view_change_distance(&w[0], &w[1], scene_radius))
            .fold(0.0, f64::max)
    }

    /// Sum of adjacent view-change distances along the whole path.
    pub fn total_view_change(&self, scene_radius: f64) -> f64 {
        self.cameras
            .windows(2)
            .map(|w| view_change_distance(&w[0], &w[1], scene_radius))
            .sum()
    }
}

/// How different two views are: angle between optical axes plus center
/// separation in units of the scene radius.
pub fn view_change_distance(a: &Camera, b: &Camera, scene_radius: f64) -> f64 {
    assert!(scene_radius > 0.0, "scene radius must be positive");
    let dot = a.optical_axis().dot(&b.optical_axis()).clamp(-1.0, 1.0);
    dot.acos() + (a.center() - b.center()).norm() / scene_radius
}

/// Orders cameras into a greedy nearest-neighbor chain: start at the camera
/// farthest from the centroid view (mean optical axis and mean center), then
/// repeatedly hop to the closest unvisited camera. Returns the visiting order
/// as indices into the input; ties pick the lowest index.
pub fn sort_cameras(cameras: &[Camera], scene_radius: f64) -> Result<Vec<usize>> {
    if cameras.len() < 2 {
        return Err(Error::invalid("need at least 2 cameras to sort"));
    }
    if !(scene_radius > 0.0) {
        return Err(Error::invalid("scene radius must be positive"));
    }
    let n = cameras.len();
    let mean_center = cameras.iter().map(|c| c.center()).sum::<Vector3<f64>>() / n as f64;
    let mean_axis = cameras
        .iter()
        .map(|c| c.optical_axis())
        .sum::<Vector3<f64>>()
        .try_normalize(1e-12)
        .unwrap_or_else(|| cameras[0].optical_axis());
    let centroid_dist = |c: &Camera| -> f64 {
        let dot = c.optical_axis().dot(&mean_axis).clamp(-1.0, 1.0);
        dot.acos() + (c.center() - mean_center).norm() / scene_radius
    };

    let mut start = 0;
    for i in 1..n {
        if centroid_dist(&cameras[i]) > centroid_dist(&cameras[start]) {
            start = i;
        }
    }

    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    order.push(start);
    visited[start] = true;
    for _ in 1..n {
        let tail = *order.last().unwrap();
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (i, cam) in cameras.iter().enumerate() {
            if visited[i] {
                continue;
            }
            let d = view_change_distance(&cameras[tail], cam, scene_radius);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        order.push(best);
        visited[best] = true;
    }
    Ok(order)
}

/// Shortest-arc spherical interpolation between unit quaternions with the
/// endpoint convention q(0) = qa, q(1) = qb. Falls back to normalized lerp
/// for nearly identical rotations.
pub fn slerp(qa: &Quaternion<f64>, qb: &Quaternion<f64>, k: f64) -> Result<Quaternion<f64>> {
    for q in [qa, qb] {
        if (q.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("slerp inputs must be unit quaternions"));
        }
    }
    let mut qb = *qb;
    let mut dot = qa.coords.dot(&qb.coords);
    if dot < 0.0 {
        qb = -qb;
        dot = -dot;
    }
    let theta = dot.clamp(-1.0, 1.0).acos();
    if theta < 1e-6 {
        let blended = qa * (1.0 - k) + qb * k;
        return Ok(blended / blended.norm());
    }
    let s = theta.sin();
    Ok((qa * ((1.0 - k) * theta).sin() + qb * (k * theta).sin()) / s)
}

/// K cameras strictly between A and B at fractions k = i/(K+1): rotation by
/// Slerp, translation by lerp, intrinsics copied from A.
pub fn interpolate_cameras(a: &Camera, b: &Camera, count: usize) -> Result<Vec<Camera>> {
    if a.k != b.k || a.width != b.width || a.height != b.height {
        return Err(Error::invalid("cameras have mismatched intrinsics"));
    }
    let qa = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(a.r))
        .into_inner();
    let qb = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(b.r))
        .into_inner();
    let mut out = Vec::with_capacity(count);
    for i in 1..=count {
        let k = i as f64 / (count as f64 + 1.0);
        let q = slerp(&qa, &qb, k)?;
        let r = UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
        let cam = Camera {
            k: a.k,
            r,
            t: a.t * (1.0 - k) + b.t * k,
            width: a.width,
            height: a.height,
        };
        cam.validate()?;
        out.push(cam);
    }
    Ok(out)
}

/// Builds a continuous path: sorts the training cameras, spreads `key_count`
/// keys evenly along the sorted order (with optional seeded jitter), then
/// distributes the remaining frame budget across segments proportionally to
/// their view-change distance.
pub fn build_trajectory(
    training: &[Camera],
    key_count: usize,
    frames_total: usize,
    scene_radius: f64,
    seed: Option<u64>,
) -> Result<CameraPath> {
    if !(2..=4).contains(&key_count) {
        return Err(Error::invalid("key_count must be between 2 and 4"));
    }
    if key_count > training.len() {
        return Err(Error::invalid("key_count exceeds available cameras"));
    }
    if frames_total < key_count {
        return Err(Error::invalid("frames_total must be at least key_count"));
    }
    let order = sort_cameras(training, scene_radius)?;
    let sorted: Vec<&Camera> = order.iter().map(|&i| &training[i]).collect();
    let m = sorted.len();

    // Even key placement along the sorted chain, optionally jittered while
    // keeping positions strictly increasing with fixed endpoints.
    let mut key_pos: Vec<usize> = (0..key_count)
        .map(|j| (j as f64 * (m - 1) as f64 / (key_count - 1) as f64).round() as usize)
        .collect();
    if let Some(seed) = seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for j in 1..key_count - 1 {
            let lo = key_pos[j - 1] + 1;
            let hi = key_pos[j + 1].saturating_sub(1).min(m - 2);
            if lo <= hi {
                key_pos[j] = rng.gen_range(lo..=hi);
            }
        }
    }
    key_pos.dedup();
    if key_pos.len() < 2 {
        return Err(Error::invalid("key cameras collapsed onto one sorted position"));
    }
    let keys: Vec<&Camera> = key_pos.iter().map(|&p| sorted[p]).collect();

    let segments = keys.len() - 1;
    let extra = frames_total - keys.len();
    let weights: Vec<f64> = (0..segments)
        .map(|j| view_change_distance(keys[j], keys[j + 1], scene_radius))
        .collect();
    let counts = apportion(extra, &weights);

    let mut cameras = Vec::with_capacity(frames_total);
    let mut key_indices = Vec::with_capacity(keys.len());
    for j in 0..segments {
        key_indices.push(cameras.len());
        cameras.push(keys[j].clone());
        cameras.extend(interpolate_cameras(keys[j], keys[j + 1], counts[j])?);
    }
    key_indices.push(cameras.len());
    cameras.push(keys[segments].clone());

    let path = CameraPath { cameras, key_indices };
    path.validate()?;
    Ok(path)
}

/// Largest-remainder apportionment of `total` items over `weights`; zero
/// total weight degrades to equal weights. Ties go to the earlier segment.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let even = vec![1.0; weights.len()];
    let weights = if sum > 0.0 { weights } else { &even[..] };
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &j in order.iter().take(total - assigned) {
        counts[j] += 1;
    }
    counts
}

/// Trajectory file: header `trajectory v1 <N> keys:<i0,i1,...>` followed by
/// N camera lines in the camera file format.
pub fn format_trajectory(path: &CameraPath) -> String {
    let keys: Vec<String> = path.key_indices.iter().map(|i| i.to_string()).collect();
    format!(
        "trajectory v1 {} keys:{}\n{}",
        path.cameras.len(),
        keys.join(","),
        format_cameras(&path.cameras)
    )
}

pub fn parse_trajectory(text: &str) -> Result<CameraPath> {
    let mut lines = text.splitn(2, '\n');
    let header = lines.next().unwrap_or("");
    let rest = lines.next().unwrap_or("");
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "trajectory" || fields[1] != "v1" {
        return Err(Error::parse(
            "trajectory header must be `trajectory v1 <N> keys:<i0,i1,...>`",
        ));
    }
    let n: usize = fields[2]
        .parse()
        .map_err(|_| Error::parse("trajectory camera count is not an integer"))?;
    let keys_field = fields[3]
        .strip_prefix("keys:")
        .ok_or_else(|| Error::parse("trajectory header is missing the keys: field"))?;
    let key_indices: Vec<usize> = keys_field
        .split(',')
        .map(|s| s.parse().map_err(|_| Error::parse("bad key index in trajectory header")))
        .collect::<Result<_>>()?;
    let cameras = parse_cameras(rest)?;
    if cameras.len() != n {
        return Err(Error::parse(format!(
            "trajectory header promises {n} cameras but file has {}",
            cameras.len()
        )));
    }
    let path = CameraPath { cameras, key_indices };
    path.validate()?;
    Ok(path)
}

pub fn save_trajectory(path: &CameraPath, file: &Path) -> Result<()> {
    std::fs::write(file, format_trajectory(path))?;
    Ok(())
}

pub fn load_trajectory(file: &Path) -> Result<CameraPath> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", file.display())))?;
    parse_trajectory(&text)
}
