//! Pluggable denoisers, including the closed-form optimal denoiser of an
//! isotropic Gaussian data distribution used as a test oracle.

use ndarray::{Array4, ArrayView3};

use crate::diffusion::latent::LatentVideo;

/// The denoised estimate D(x, σ; I). Implementations must be deterministic
/// and return a video of the same shape with the same frame ids.
pub trait Denoiser {
    fn evaluate(&self, x: &LatentVideo, sigma: f64, condition: Option<&ArrayView3<f32>>)
        -> LatentVideo;
}

/// Data-distribution center for [`AnalyticGaussianDenoiser`].
#[derive(Debug, Clone)]
pub enum GaussianMean {
    /// One scalar mean for every entry.
    Constant(f32),
    /// Per-view means: frame i of x attracts to `frame(x.frame_ids[i])` of
    /// the stored video, so chunked or reversed inputs stay aligned.
    PerView(LatentVideo),
}

impl GaussianMean {
    fn value(&self, x: &LatentVideo, frame: usize, c: usize, y: usize, xx: usize) -> f64 {
        match self {
            GaussianMean::Constant(v) => *v as f64,
            GaussianMean::PerView(video) => {
                let id = x.frame_ids[frame];
                video.data[(id, c, y, xx)] as f64
            }
        }
    }
}

/// Exact optimal denoiser when the data distribution is N(mean, σ_data² I):
/// D(x, σ) = (σ_data²·x + σ²·μ) / (σ² + σ_data²). Ignores the condition.
#[derive(Debug, Clone)]
pub struct AnalyticGaussianDenoiser {
    pub mean: GaussianMean,
    pub sigma_data: f64,
}

impl AnalyticGaussianDenoiser {
    pub fn constant(mean: f32, sigma_data: f64) -> Self {
        AnalyticGaussianDenoiser { mean: GaussianMean::Constant(mean), sigma_data }
    }
}

fn gaussian_estimate(x: &LatentVideo, sigma: f64, mean: &GaussianMean, sigma_data: f64)
    -> LatentVideo {
    let sd2 = sigma_data * sigma_data;
    let s2 = sigma * sigma;
    let denom = s2 + sd2;
    let (n, c, h, w) = (x.frames(), x.channels(), x.height(), x.width());
    let mut out = Array4::zeros((n, c, h, w));
    for i in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let mu = mean.value(x, i, ch, y, xx);
                    let v = x.data[(i, ch, y, xx)] as f64;
                    out[(i, ch, y, xx)] = ((sd2 * v + s2 * mu) / denom) as f32;
                }
            }
        }
    }
    x.like(out)
}

impl Denoiser for AnalyticGaussianDenoiser {
    fn evaluate(
        &self,
        x: &LatentVideo,
        sigma: f64,
        _condition: Option<&ArrayView3<f32>>,
    ) -> LatentVideo {
        gaussian_estimate(x, sigma, &self.mean, self.sigma_data)
    }
}

/// Analytic Gaussian denoiser whose mean switches on the condition frame:
/// the candidate video closest to the condition (smallest L2 over any of its
/// frames) supplies the per-view means; no condition selects
/// `uncond_candidate`. Models a conditional generative prior whose modes are
/// the candidate videos.
#[derive(Debug, Clone)]
pub struct ConditionedGaussianDenoiser {
    pub candidates: Vec<LatentVideo>,
    pub uncond_candidate: usize,
    pub sigma_data: f64,
}

impl ConditionedGaussianDenoiser {
    fn match_candidate(&self, condition: Option<&ArrayView3<f32>>) -> usize {
        let Some(cond) = condition else {
            return self.uncond_candidate;
        };
        let mut best = self.uncond_candidate;
        let mut best_d = f64::INFINITY;
        for (ci, cand) in self.candidates.iter().enumerate() {
            for f in 0..cand.frames() {
                let frame = cand.frame(f);
                let d: f64 = frame
                    .iter()
                    .zip(cond.iter())
                    .map(|(a, b)| {
                        let diff = *a as f64 - *b as f64;
                        diff * diff
                    })
                    .sum();
                if d < best_d {
                    best_d = d;
                    best = ci;
                }
            }
        }
        best
    }
}

impl Denoiser for ConditionedGaussianDenoiser {
    fn evaluate(
        &self,
        x: &LatentVideo,
        sigma: f64,
        condition: Option<&ArrayView3<f32>>,
    ) -> LatentVideo {
        let mean = GaussianMean::PerView(self.candidates[self.match_candidate(condition)].clone());
        gaussian_estimate(x, sigma, &mean, self.sigma_data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    fn constant_video(n: usize, v: f32) -> LatentVideo {
        LatentVideo::new(Array4::from_elem((n, 1, 2, 2), v))
    }

    #[test]
    fn analytic_estimate_hand_value() {
        // x=1, μ=0, σ_data=1, σ=1 → D = (1·1 + 1·0)/(1+1) = 0.5.
        let den = AnalyticGaussianDenoiser::constant(0.0, 1.0);
        let out = den.evaluate(&constant_video(1, 1.0), 1.0, None);
        assert_eq!(out.data[(0, 0, 0, 0)], 0.5);
    }

    #[test]
    fn analytic_estimate_limits() {
        let den = AnalyticGaussianDenoiser::constant(0.25, 0.5);
        let x = constant_video(1, 0.75);
        // σ → 0 keeps the sample; huge σ collapses to the mean.
        let low = den.evaluate(&x, 1e-12, None);
        assert!((low.data[(0, 0, 0, 0)] - 0.75).abs() <= 1e-9);
        let high = den.evaluate(&x, 1e9, None);
        assert!((high.data[(0, 0, 0, 0)] - 0.25).abs() <= 1e-9);
    }

    #[test]
    fn per_view_mean_follows_frame_ids() {
        // A reversed two-frame latent keeps attracting to its own views'
        // means because frame_ids carry the original indices.
        let mut mu = constant_video(2, 0.0);
        mu.data.index_axis_mut(ndarray::Axis(0), 0).fill(0.1);
        mu.data.index_axis_mut(ndarray::Axis(0), 1).fill(0.9);
        let den = AnalyticGaussianDenoiser { mean: GaussianMean::PerView(mu), sigma_data: 0.5 };
        let x = LatentVideo::with_frame_ids(Array4::zeros((2, 1, 2, 2)), vec![1, 0]).unwrap();
        let out = den.evaluate(&x, 1e9, None); // ≈ pure mean
        assert!((out.data[(0, 0, 0, 0)] - 0.9).abs() <= 1e-6);
        assert!((out.data[(1, 0, 0, 0)] - 0.1).abs() <= 1e-6);
    }

    #[test]
    fn conditioned_denoiser_matches_nearest_candidate() {
        let src = constant_video(3, 0.2);
        let edit = constant_video(3, 0.8);
        let den = ConditionedGaussianDenoiser {
            candidates: vec![src.clone(), edit.clone()],
            uncond_candidate: 1,
            sigma_data: 0.5,
        };
        let x = constant_video(3, 0.5);
        // No condition → the configured unconditional candidate (the edit).
        let out = den.evaluate(&x, 1e9, None);
        assert!((out.data[(0, 0, 0, 0)] - 0.8).abs() <= 1e-6);
        // A condition frame near the source latent selects candidate 0.
        let cond_owner = constant_video(1, 0.25);
        let cond = cond_owner.frame(0);
        let out = den.evaluate(&x, 1e9, Some(&cond));
        assert!((out.data[(0, 0, 0, 0)] - 0.2).abs() <= 1e-6);
        // One near the edited latent selects candidate 1.
        let cond_owner = constant_video(1, 0.75);
        let cond = cond_owner.frame(0);
        let out = den.evaluate(&x, 1e9, Some(&cond));
        assert!((out.data[(0, 0, 0, 0)] - 0.8).abs() <= 1e-6);
    }
}
