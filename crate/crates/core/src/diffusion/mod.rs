//! EDM probability-flow solver: Karras noise schedule, forward Euler
//! denoising, closed-form inversion, motion-preserved noise blending,
//! classifier-free guidance, and the geometry-aware sampling loop.

use ndarray::Array4;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::correspondence::{override_latent, CorrespondenceMap};
use crate::error::{Error, Result};

pub mod denoiser;
pub mod latent;

pub use denoiser::{AnalyticGaussianDenoiser, ConditionedGaussianDenoiser, Denoiser, GaussianMean};
pub use latent::{load_latent, save_latent, LatentVideo};

pub const DEFAULT_STEPS: usize = 25;
pub const DEFAULT_SIGMA_MIN: f64 = 0.002;
pub const DEFAULT_SIGMA_MAX: f64 = 80.0;
pub const DEFAULT_RHO: f64 = 7.0;
pub const DEFAULT_SIGMA_DATA: f64 = 0.5;

/// Noise levels σ_T > … > σ_1 > σ_0 = 0 plus the EDM preconditioning
/// coefficients. `sigmas` is stored in that decreasing order with the final
/// zero appended; `sigma(t)` indexes by timestep, so `sigma(0) = 0` and
/// `sigma(T) = σ_max`.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    pub sigmas: Vec<f64>,
    pub sigma_data: f64,
}

impl NoiseSchedule {
    /// Number of denoising steps T.
    pub fn t_max(&self) -> usize {
        self.sigmas.len() - 1
    }

    /// σ at timestep t (t = 0 is clean data, t = T the highest noise).
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[self.t_max() - t]
    }

    pub fn c_skip(&self, sigma: f64) -> f64 {
        let sd2 = self.sigma_data * self.sigma_data;
        sd2 / (sigma * sigma + sd2)
    }

    pub fn c_out(&self, sigma: f64) -> f64 {
        let sd2 = self.sigma_data * self.sigma_data;
        sigma * self.sigma_data / (sigma * sigma + sd2).sqrt()
    }

    pub fn c_in(&self, sigma: f64) -> f64 {
        let sd2 = self.sigma_data * self.sigma_data;
        1.0 / (sigma * sigma + sd2).sqrt()
    }

    pub fn c_noise(&self, sigma: f64) -> f64 {
        sigma.ln() / 4.0
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.sigmas.len();
        if n < 2 || *self.sigmas.last().unwrap() != 0.0 {
            return Err(Error::invalid("schedule must end at σ = 0"));
        }
        let positive = &self.sigmas[..n - 1];
        if positive.iter().any(|s| !(*s > 0.0)) || positive.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::invalid("schedule sigmas must decrease strictly and stay positive"));
        }
        if !(self.sigma_data > 0.0) {
            return Err(Error::invalid("sigma_data must be positive"));
        }
        Ok(())
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        make_schedule(
            DEFAULT_STEPS,
            DEFAULT_SIGMA_MIN,
            DEFAULT_SIGMA_MAX,
            DEFAULT_RHO,
            DEFAULT_SIGMA_DATA,
        )
        .expect("default schedule parameters are valid")
    }
}

/// Karras ρ-warped schedule: sigmas[i] = (σ_max^{1/ρ} + (i/(T−1))·(σ_min^{1/ρ}
/// − σ_max^{1/ρ}))^ρ for i = 0..T−1, with σ = 0 appended. T = 1 degenerates
/// to [σ_max, 0].
pub fn make_schedule(
    t: usize,
    sigma_min: f64,
    sigma_max: f64,
    rho: f64,
    sigma_data: f64,
) -> Result<NoiseSchedule> {
    if t < 1 {
        return Err(Error::invalid("schedule needs at least one step"));
    }
    if !(sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite()) {
        return Err(Error::invalid("require 0 < sigma_min < sigma_max"));
    }
    if !(rho > 0.0) || !(sigma_data > 0.0) {
        return Err(Error::invalid("rho and sigma_data must be positive"));
    }
    let mut sigmas = Vec::with_capacity(t + 1);
    if t == 1 {
        sigmas.push(sigma_max);
    } else {
        let inv_rho = 1.0 / rho;
        let hi = sigma_max.powf(inv_rho);
        let lo = sigma_min.powf(inv_rho);
        for i in 0..t {
            let frac = i as f64 / (t as f64 - 1.0);
            sigmas.push((hi + frac * (lo - hi)).powf(rho));
        }
    }
    sigmas.push(0.0);
    let schedule = NoiseSchedule { sigmas, sigma_data };
    schedule.validate()?;
    Ok(schedule)
}

fn check_shapes(a: &LatentVideo, b: &LatentVideo, what: &str) -> Result<()> {
    if a.data.shape() != b.data.shape() {
        return Err(Error::invalid(format!("{what}: latent shapes differ")));
    }
    Ok(())
}

/// One Euler step of the probability-flow ODE from σ_{t+1} down to σ_t:
/// x_t = x_{t+1} + ((σ_t − σ_{t+1}) / σ_{t+1}) · (x_{t+1} − D(x_{t+1})).
/// `t_next` is t+1, the level the input sits at.
pub fn edm_denoise_step(
    x_next: &LatentVideo,
    t_next: usize,
    schedule: &NoiseSchedule,
    denoiser: &dyn Denoiser,
    condition: Option<&ndarray::ArrayView3<f32>>,
) -> Result<LatentVideo> {
    if t_next == 0 || t_next > schedule.t_max() {
        return Err(Error::invalid("cannot step below the terminal noise level"));
    }
    let sigma_next = schedule.sigma(t_next);
    let sigma_cur = schedule.sigma(t_next - 1);
    let d = denoiser.evaluate(x_next, sigma_next, condition);
    check_shapes(x_next, &d, "denoiser output")?;
    let h = (sigma_cur - sigma_next) / sigma_next;
    let mut out = Array4::zeros(x_next.data.raw_dim());
    for (o, (x, dv)) in out.iter_mut().zip(x_next.data.iter().zip(d.data.iter())) {
        let x = *x as f64;
        *o = (x + h * (x - *dv as f64)) as f32;
    }
    let out = x_next.like(out);
    out.validate()?;
    Ok(out)
}

/// One inversion step from σ_t up to σ_{t+1}. Solves the Euler step for
/// x_{t+1} in closed form, substituting the current latent into the network
/// term F = (D − c_skip·x)/c_out evaluated at σ_{t+1}:
///
///   x_{t+1} = (σ_{t+1}·x_t + (σ_t − σ_{t+1})·c_out(σ_{t+1})·F)
///             / (σ_{t+1}·c_skip(σ_{t+1}) + σ_t·(1 − c_skip(σ_{t+1})))
///
/// This is the exact algebraic inverse of `edm_denoise_step` whenever the
/// denoiser matches the schedule's EDM parameterization (the analytic
/// Gaussian case); otherwise the substitution carries a first-order error.
/// The first step leaves σ_0 = 0, where the score is undefined, by stepping
/// along d = (x_0 − D(x_0, σ_1))/σ_1.
pub fn edm_invert_step(
    x_cur: &LatentVideo,
    t: usize,
    schedule: &NoiseSchedule,
    denoiser: &dyn Denoiser,
    condition: Option<&ndarray::ArrayView3<f32>>,
) -> Result<LatentVideo> {
    if t >= schedule.t_max() {
        return Err(Error::invalid("already at the highest noise level"));
    }
    let sigma_next = schedule.sigma(t + 1);
    let mut out = Array4::zeros(x_cur.data.raw_dim());
    if t == 0 {
        let sigma_eval = schedule.sigma(1);
        let d = denoiser.evaluate(x_cur, sigma_eval, condition);
        check_shapes(x_cur, &d, "denoiser output")?;
        let scale = sigma_next / sigma_eval;
        for (o, (x, dv)) in out.iter_mut().zip(x_cur.data.iter().zip(d.data.iter())) {
            let x = *x as f64;
            *o = (x + scale * (x - *dv as f64)) as f32;
        }
    } else {
        let sigma_cur = schedule.sigma(t);
        let c_skip = schedule.c_skip(sigma_next);
        let c_out = schedule.c_out(sigma_next);
        let d = denoiser.evaluate(x_cur, sigma_next, condition);
        check_shapes(x_cur, &d, "denoiser output")?;
        let denom = sigma_next * c_skip + sigma_cur * (1.0 - c_skip);
        let fcoef = (sigma_cur - sigma_next) * c_out;
        for (o, (x, dv)) in out.iter_mut().zip(x_cur.data.iter().zip(d.data.iter())) {
            let x = *x as f64;
            let f = (*dv as f64 - c_skip * x) / c_out;
            *o = ((sigma_next * x + fcoef * f) / denom) as f32;
        }
    }
    let out = x_cur.like(out);
    out.validate()?;
    Ok(out)
}

/// Runs inversion from clean data up the schedule, returning every
/// intermediate {x_1, …, x_T} (the last entry sits at σ_max).
pub fn invert(
    x0: &LatentVideo,
    schedule: &NoiseSchedule,
    denoiser: &dyn Denoiser,
    condition: Option<&ndarray::ArrayView3<f32>>,
) -> Result<Vec<LatentVideo>> {
    let mut out = Vec::with_capacity(schedule.t_max());
    let mut cur = x0.clone();
    for t in 0..schedule.t_max() {
        cur = edm_invert_step(&cur, t, schedule, denoiser, condition)?;
        out.push(cur.clone());
    }
    Ok(out)
}

/// Motion-preserved noise blend: x̂_T = √η·x_T + √(1−η)·ε. The endpoints
/// return the corresponding input bit-for-bit.
pub fn blend_noise(x_t: &LatentVideo, epsilon: &LatentVideo, eta: f64) -> Result<LatentVideo> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid("eta out of range"));
    }
    check_shapes(x_t, epsilon, "blend_noise")?;
    if eta == 1.0 {
        return Ok(x_t.clone());
    }
    if eta == 0.0 {
        return Ok(x_t.like(epsilon.data.clone()));
    }
    let a = eta.sqrt();
    let b = (1.0 - eta).sqrt();
    let mut out = Array4::zeros(x_t.data.raw_dim());
    for (o, (x, e)) in out.iter_mut().zip(x_t.data.iter().zip(epsilon.data.iter())) {
        *o = (a * *x as f64 + b * *e as f64) as f32;
    }
    Ok(x_t.like(out))
}

/// Draws ε ~ N(0, std² I) shaped like `x`.
pub fn gaussian_noise_like<R: Rng>(x: &LatentVideo, std: f64, rng: &mut R) -> LatentVideo {
    let normal = Normal::new(0.0, std).expect("finite std");
    let mut out = Array4::zeros(x.data.raw_dim());
    for o in out.iter_mut() {
        *o = normal.sample(rng) as f32;
    }
    x.like(out)
}

/// Classifier-free guidance weight: one scalar for every frame, or a linear
/// per-frame ramp from `min` (frame 0) to `max` (last frame).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Guidance {
    Scalar(f64),
    Ramp { min: f64, max: f64 },
}

impl Guidance {
    pub fn weight(&self, frame: usize, frame_count: usize) -> f64 {
        match self {
            Guidance::Scalar(w) => *w,
            Guidance::Ramp { min, max } => {
                if frame_count <= 1 {
                    *min
                } else {
                    min + (max - min) * frame as f64 / (frame_count as f64 - 1.0)
                }
            }
        }
    }
}

impl Default for Guidance {
    fn default() -> Self {
        Guidance::Ramp { min: 1.0, max: 1.5 }
    }
}

/// Per-frame guided combination (1 + w_i)·cond − w_i·uncond.
pub fn cfg_combine(
    cond_out: &LatentVideo,
    uncond_out: &LatentVideo,
    guidance: &Guidance,
) -> Result<LatentVideo> {
    check_shapes(cond_out, uncond_out, "cfg_combine")?;
    let n = cond_out.frames();
    let mut out = Array4::zeros(cond_out.data.raw_dim());
    for i in 0..n {
        let w = guidance.weight(i, n);
        let mut frame = out.index_axis_mut(ndarray::Axis(0), i);
        let c = cond_out.frame(i);
        let u = uncond_out.frame(i);
        for ((o, cv), uv) in frame.iter_mut().zip(c.iter()).zip(u.iter()) {
            *o = ((1.0 + w) * *cv as f64 - w * *uv as f64) as f32;
        }
    }
    Ok(cond_out.like(out))
}

/// Guided denoising from σ_T to clean data. Per step the unconditional
/// branch evaluates the denoiser on the latent as-is, the conditional branch
/// on a copy with every mapped cell overridden by the reference frame's
/// value (geometry-aware consistency); the two denoiser outputs combine
/// under CFG and one Euler step is taken from the unmodified latent.
pub fn sample(
    x_hat_t: &LatentVideo,
    schedule: &NoiseSchedule,
    denoiser: &dyn Denoiser,
    condition: Option<&ndarray::ArrayView3<f32>>,
    guidance: &Guidance,
    correspondence: Option<&CorrespondenceMap>,
) -> Result<LatentVideo> {
    sample_with_inspector(
        x_hat_t,
        schedule,
        denoiser,
        condition,
        guidance,
        correspondence,
        &mut |_, _| {},
    )
}

/// [`sample`] with a hook called right after each overriding application,
/// receiving the timestep and the conditional-branch latent about to be
/// denoised. Lets tests pin the overriding post-condition bitwise.
pub fn sample_with_inspector(
    x_hat_t: &LatentVideo,
    schedule: &NoiseSchedule,
    denoiser: &dyn Denoiser,
    condition: Option<&ndarray::ArrayView3<f32>>,
    guidance: &Guidance,
    correspondence: Option<&CorrespondenceMap>,
    inspector: &mut dyn FnMut(usize, &LatentVideo),
) -> Result<LatentVideo> {
    if let Some(map) = correspondence {
        map.check_latent_dims(x_hat_t)?;
    }
    let mut cur = x_hat_t.clone();
    for t in (1..=schedule.t_max()).rev() {
        let cond_in = match correspondence {
            Some(map) => override_latent(&cur, map)?,
            None => cur.clone(),
        };
        inspector(t, &cond_in);
        let sigma_next = schedule.sigma(t);
        let sigma_cur = schedule.sigma(t - 1);
        let d_c = denoiser.evaluate(&cond_in, sigma_next, condition);
        check_shapes(&cur, &d_c, "denoiser output")?;
        let d_uc = denoiser.evaluate(&cur, sigma_next, None);
        check_shapes(&cur, &d_uc, "denoiser output")?;
        let d = cfg_combine(&d_c, &d_uc, guidance)?;
        let h = (sigma_cur - sigma_next) / sigma_next;
        let mut out = Array4::zeros(cur.data.raw_dim());
        for (o, (x, dv)) in out.iter_mut().zip(cur.data.iter().zip(d.data.iter())) {
            let x = *x as f64;
            *o = (x + h * (x - *dv as f64)) as f32;
        }
        cur = cur.like(out);
        cur.validate()?;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::CorrespondenceMap;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeros(n: usize, c: usize, h: usize, w: usize) -> LatentVideo {
        LatentVideo::new(Array4::zeros((n, c, h, w)))
    }

    fn scalar_latent(v: f32) -> LatentVideo {
        LatentVideo::new(Array4::from_elem((1, 1, 1, 1), v))
    }

    fn noise(shape: (usize, usize, usize, usize), std: f64, seed: u64) -> LatentVideo {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        gaussian_noise_like(&zeros(shape.0, shape.1, shape.2, shape.3), std, &mut rng)
    }

    fn rel_l2(a: &LatentVideo, b: &LatentVideo) -> f64 {
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for (x, y) in a.data.iter().zip(b.data.iter()) {
            let d = *x as f64 - *y as f64;
            num += d * d;
            den += (*y as f64) * (*y as f64);
        }
        (num / den).sqrt()
    }

    #[test]
    fn schedule_single_step_is_max_then_zero() {
        let s = make_schedule(1, 0.002, 80.0, 7.0, 0.5).unwrap();
        assert_eq!(s.sigmas, vec![80.0, 0.0]);
        assert_eq!(s.t_max(), 1);
        assert_eq!(s.sigma(1), 80.0);
        assert_eq!(s.sigma(0), 0.0);
    }

    #[test]
    fn schedule_linear_warp_hits_endpoints() {
        let s = make_schedule(2, 0.5, 2.0, 1.0, 0.5).unwrap();
        assert_eq!(s.sigmas, vec![2.0, 0.5, 0.0]);
    }

    #[test]
    fn schedule_default_is_strictly_decreasing_with_stated_endpoints() {
        let s = NoiseSchedule::default();
        assert_eq!(s.sigmas.len(), 26);
        assert!((s.sigmas[0] - 80.0).abs() <= 1e-9);
        assert!((s.sigmas[24] - 0.002).abs() <= 1e-9);
        assert_eq!(s.sigmas[25], 0.0);
        assert!(s.sigmas.windows(2).all(|w| w[0] > w[1]));
        s.validate().unwrap();
    }

    #[test]
    fn schedule_rejects_bad_parameters() {
        assert!(make_schedule(0, 0.002, 80.0, 7.0, 0.5).is_err());
        assert!(make_schedule(5, 80.0, 0.002, 7.0, 0.5).is_err());
        assert!(make_schedule(5, 0.0, 80.0, 7.0, 0.5).is_err());
        assert!(make_schedule(5, 0.002, 80.0, 7.0, 0.0).is_err());
    }

    #[test]
    fn schedule_coefficients_satisfy_edm_identity() {
        // c_skip(σ) + c_out(σ)·c_in(σ)·(σ/σ_data) = 1 for every σ.
        let s = NoiseSchedule::default();
        for &sigma in &s.sigmas[..s.sigmas.len() - 1] {
            let lhs = s.c_skip(sigma) + s.c_out(sigma) * s.c_in(sigma) * sigma / s.sigma_data;
            assert!((lhs - 1.0).abs() <= 1e-12, "identity broken at σ = {sigma}");
        }
        assert_eq!(s.c_noise(1.0), 0.0);
    }

    #[test]
    fn denoise_step_fixed_point_when_x_equals_estimate() {
        // A latent already equal to the denoiser output stays put bitwise:
        // the Euler increment h·(x − D) is exactly zero.
        let s = make_schedule(4, 0.01, 10.0, 3.0, 0.5).unwrap();
        let x = scalar_latent(0.25);
        let out = edm_denoise_step(&x, s.t_max(), &s, &AnalyticGaussianDenoiser::constant(0.25, 0.5), None)
            .unwrap();
        assert_eq!(out.data, x.data);
    }

    #[test]
    fn denoise_step_hand_oracle() {
        // μ=0, σ_data=1, x=2 at σ=1 stepping to σ=0.5:
        // D = (1·2 + 1·0)/(1+1) = 1, x' = 2 + ((0.5−1)/1)·(2−1) = 1.5.
        let s = make_schedule(2, 0.5, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(s.sigmas, vec![1.0, 0.5, 0.0]);
        let x = scalar_latent(2.0);
        let out =
            edm_denoise_step(&x, 2, &s, &AnalyticGaussianDenoiser::constant(0.0, 1.0), None)
                .unwrap();
        assert_eq!(out.data[(0, 0, 0, 0)], 1.5);
    }

    #[test]
    fn denoise_step_rejects_terminal_step() {
        let s = NoiseSchedule::default();
        let x = scalar_latent(1.0);
        let den = AnalyticGaussianDenoiser::constant(0.0, 0.5);
        assert!(edm_denoise_step(&x, 0, &s, &den, None).is_err());
        assert!(edm_denoise_step(&x, s.t_max() + 1, &s, &den, None).is_err());
    }

    /// Exact PF-ODE solution for Gaussian data: x(σ) = μ + (x(σ_max) − μ)·
    /// √((σ² + σ_data²)/(σ_max² + σ_data²)).
    fn closed_form(x_start: f64, mu: f64, sigma_data: f64, sigma_max: f64, sigma: f64) -> f64 {
        let sd2 = sigma_data * sigma_data;
        mu + (x_start - mu) * ((sigma * sigma + sd2) / (sigma_max * sigma_max + sd2)).sqrt()
    }

    /// Relative L2 error of the whole Euler rollout against the closed form,
    /// accumulated over every intermediate state.
    fn rollout_error(x_t: &LatentVideo, schedule: &NoiseSchedule, mu: f64) -> f64 {
        let den = AnalyticGaussianDenoiser::constant(mu as f32, schedule.sigma_data);
        let sigma_max = schedule.sigma(schedule.t_max());
        let mut cur = x_t.clone();
        let mut num = 0.0f64;
        let mut denom = 0.0f64;
        for t in (1..=schedule.t_max()).rev() {
            cur = edm_denoise_step(&cur, t, schedule, &den, None).unwrap();
            let sigma = schedule.sigma(t - 1);
            for (c, x0) in cur.data.iter().zip(x_t.data.iter()) {
                let exact =
                    closed_form(*x0 as f64, mu, schedule.sigma_data, sigma_max, sigma);
                let d = *c as f64 - exact;
                num += d * d;
                denom += exact * exact;
            }
        }
        (num / denom).sqrt()
    }

    #[test]
    fn rollout_tracks_closed_form_solution_and_halving_steps_behaves_like_euler() {
        let x_t = noise((4, 4, 8, 8), 80.0, 11);
        let s25 = NoiseSchedule::default();
        let s50 = make_schedule(50, 0.002, 80.0, 7.0, 0.5).unwrap();
        let e25 = rollout_error(&x_t, &s25, 0.2);
        let e50 = rollout_error(&x_t, &s50, 0.2);
        assert!(e25 <= 1e-2, "T=25 rollout error {e25:e}");
        let ratio = e25 / e50;
        assert!(
            (1.5..=3.0).contains(&ratio),
            "error ratio {ratio} outside the first-order Euler band (e25={e25:e}, e50={e50:e})"
        );
    }

    #[test]
    fn invert_step_fixed_point_when_x_equals_estimate() {
        let s = NoiseSchedule::default();
        let x = scalar_latent(0.25);
        let den = AnalyticGaussianDenoiser::constant(0.25, 0.5);
        for t in 0..s.t_max() {
            let out = edm_invert_step(&x, t, &s, &den, None).unwrap();
            assert_eq!(out.data, x.data, "step {t}");
        }
        assert!(edm_invert_step(&x, s.t_max(), &s, &den, None).is_err());
    }

    #[test]
    fn invert_step_is_exact_inverse_of_denoise_step() {
        // One step σ=1→2 and back with the schedule-matched analytic
        // denoiser: the inversion formula is the algebraic inverse.
        let s = make_schedule(2, 1.0, 2.0, 1.0, 0.5).unwrap();
        assert_eq!(s.sigmas, vec![2.0, 1.0, 0.0]);
        let den = AnalyticGaussianDenoiser::constant(0.3, 0.5);
        let x = noise((2, 3, 4, 4), 1.0, 19);
        let up = edm_invert_step(&x, 1, &s, &den, None).unwrap();
        let back = edm_denoise_step(&up, 2, &s, &den, None).unwrap();
        assert!(rel_l2(&back, &x) <= 1e-6, "round trip error {:e}", rel_l2(&back, &x));
    }

    #[test]
    fn invert_holds_the_gaussian_mean_fixed() {
        let s = NoiseSchedule::default();
        let mu = 0.25f32;
        let x0 = LatentVideo::new(Array4::from_elem((2, 2, 3, 3), mu));
        let states = invert(&x0, &s, &AnalyticGaussianDenoiser::constant(mu, 0.5), None).unwrap();
        assert_eq!(states.len(), s.t_max());
        for (t, state) in states.iter().enumerate() {
            assert_eq!(state.data, x0.data, "drifted at inversion step {t}");
        }
    }

    #[test]
    fn invert_then_sample_is_identity_on_matched_denoiser() {
        // Full 25-step round trip at η=1, w=0 (the workhorse of the editing
        // pipeline): reconstruction within 2e-2 relative L2.
        let s = NoiseSchedule::default();
        let den = AnalyticGaussianDenoiser::constant(0.2, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut x0 = gaussian_noise_like(&zeros(25, 4, 8, 8), 0.5, &mut rng);
        x0.data.mapv_inplace(|v| v + 0.2);
        let x_t = invert(&x0, &s, &den, None).unwrap().pop().unwrap();
        let back = sample(&x_t, &s, &den, None, &Guidance::Scalar(0.0), None).unwrap();
        let err = rel_l2(&back, &x0);
        assert!(err <= 2e-2, "round trip rel L2 {err:e}");
    }

    #[test]
    fn blend_endpoints_return_inputs_bitwise() {
        let x_t = noise((2, 2, 4, 4), 80.0, 31);
        let eps = noise((2, 2, 4, 4), 80.0, 32);
        assert_eq!(blend_noise(&x_t, &eps, 1.0).unwrap().data, x_t.data);
        assert_eq!(blend_noise(&x_t, &eps, 0.0).unwrap().data, eps.data);
    }

    #[test]
    fn blend_hand_oracle_at_default_strength() {
        let out = blend_noise(&scalar_latent(1.0), &scalar_latent(1.0), 0.15).unwrap();
        let got = out.data[(0, 0, 0, 0)];
        let want = (0.15f64.sqrt() + 0.85f64.sqrt()) as f32; // 1.3092527803…
        assert_eq!(got, want);
        assert!((got as f64 - 1.3092527803500304).abs() <= 1e-7);
    }

    #[test]
    fn blend_rejects_bad_eta_and_shape() {
        let x = scalar_latent(1.0);
        let err = blend_noise(&x, &x, 1.2).unwrap_err();
        assert!(err.to_string().contains("eta out of range"));
        assert!(blend_noise(&x, &x, -0.1).is_err());
        let other = zeros(1, 1, 2, 2);
        assert!(blend_noise(&x, &other, 0.5).is_err());
    }

    #[test]
    fn blend_preserves_variance_within_five_percent() {
        // Independent x_T and ε at σ_T = 80 over 10⁴ entries: the blend's
        // per-entry variance stays within 5% of σ_T² for every η tested.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base = zeros(4, 4, 25, 25);
        let x_t = gaussian_noise_like(&base, 80.0, &mut rng);
        let eps = gaussian_noise_like(&base, 80.0, &mut rng);
        for eta in [0.0, 0.15, 0.5, 1.0] {
            let blended = blend_noise(&x_t, &eps, eta).unwrap();
            let n = blended.data.len() as f64;
            let mean: f64 = blended.data.iter().map(|v| *v as f64).sum::<f64>() / n;
            let var: f64 = blended
                .data
                .iter()
                .map(|v| (*v as f64 - mean).powi(2))
                .sum::<f64>()
                / n;
            let rel = (var - 6400.0).abs() / 6400.0;
            assert!(rel <= 0.05, "η={eta}: variance {var} drifts {rel:.3} from σ_T²");
        }
    }

    #[test]
    fn cfg_zero_weight_returns_conditional_bitwise() {
        let c = noise((3, 2, 4, 4), 1.0, 41);
        let u = noise((3, 2, 4, 4), 1.0, 42);
        let out = cfg_combine(&c, &u, &Guidance::Scalar(0.0)).unwrap();
        assert_eq!(out.data, c.data);
    }

    #[test]
    fn cfg_hand_oracle_and_ramp_weights() {
        let c = LatentVideo::new(Array4::from_elem((3, 1, 1, 1), 2.0f32));
        let u = LatentVideo::new(Array4::from_elem((3, 1, 1, 1), 1.0f32));
        // Scalar w=1: (1+1)·2 − 1·1 = 3 on every frame.
        let out = cfg_combine(&c, &u, &Guidance::Scalar(1.0)).unwrap();
        assert!(out.data.iter().all(|v| *v == 3.0));
        // Ramp 1→3 over 3 frames: weights 1, 2, 3 → outputs 3, 4, 5.
        let g = Guidance::Ramp { min: 1.0, max: 3.0 };
        assert_eq!(g.weight(0, 3), 1.0);
        assert_eq!(g.weight(1, 3), 2.0);
        assert_eq!(g.weight(2, 3), 3.0);
        assert_eq!(g.weight(0, 1), 1.0); // single frame pins to min
        let out = cfg_combine(&c, &u, &g).unwrap();
        for (i, want) in [3.0f32, 4.0, 5.0].into_iter().enumerate() {
            assert_eq!(out.data[(i, 0, 0, 0)], want);
        }
    }

    #[test]
    fn cfg_is_affine_in_its_inputs() {
        let c = noise((2, 2, 3, 3), 1.0, 43);
        let u = noise((2, 2, 3, 3), 1.0, 44);
        let g = Guidance::Ramp { min: 0.5, max: 2.0 };
        // Scaling by a power of two commutes with rounding, so the affine
        // property holds bitwise.
        let scale = |v: &LatentVideo, a: f32| v.like(v.data.mapv(|x| a * x));
        let lhs = cfg_combine(&scale(&c, 2.0), &scale(&u, 2.0), &g).unwrap();
        let rhs = scale(&cfg_combine(&c, &u, &g).unwrap(), 2.0);
        assert_eq!(lhs.data, rhs.data);
    }

    fn identity_map_from_frame(frames: usize, h: usize, w: usize) -> CorrespondenceMap {
        let mut maps = vec![Array2::from_elem((h, w), None); frames];
        for m in maps.iter_mut().skip(1) {
            for y in 0..h {
                for x in 0..w {
                    m[(y, x)] = Some((y, x));
                }
            }
        }
        CorrespondenceMap {
            maps,
            factor: 1,
            image_width: w,
            image_height: h,
            latent_width: w,
            latent_height: h,
        }
    }

    #[test]
    fn sample_with_identity_map_collapses_frames_onto_the_reference() {
        // Overriding every cell of frames 1.. with frame 0 collapses the
        // whole video onto frame 0 by the end of sampling.
        let s = NoiseSchedule::default();
        let den = AnalyticGaussianDenoiser::constant(0.25, 0.5);
        let x_t = noise((3, 2, 6, 6), 80.0, 13);
        let map = identity_map_from_frame(3, 6, 6);

        // At w = 0 the final Euler step lands every frame exactly on the
        // overridden estimate: collapse is bitwise.
        let out = sample(&x_t, &s, &den, None, &Guidance::Scalar(0.0), Some(&map)).unwrap();
        let reference = out.frame(0).to_owned();
        for i in 1..3 {
            assert_eq!(out.frame(i), reference.view(), "frame {i} differs bitwise at w=0");
        }

        // At constant w = 1 the two branches disagree only on unmapped
        // content; the collapse still holds to 1e-6.
        let out = sample(&x_t, &s, &den, None, &Guidance::Scalar(1.0), Some(&map)).unwrap();
        let reference = out.frame(0);
        for i in 1..3 {
            let worst = out
                .frame(i)
                .iter()
                .zip(reference.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            assert!(worst <= 1e-6, "frame {i} deviates {worst:e} from the reference");
        }
    }

    #[test]
    fn sample_checks_correspondence_dimensions() {
        let s = NoiseSchedule::default();
        let den = AnalyticGaussianDenoiser::constant(0.0, 0.5);
        let x_t = noise((3, 2, 4, 4), 80.0, 14);
        let map = identity_map_from_frame(3, 6, 6); // wrong spatial size
        let err = sample(&x_t, &s, &den, None, &Guidance::Scalar(0.0), Some(&map)).unwrap_err();
        assert!(err.to_string().contains("correspondence"));
    }

    #[test]
    fn endpoint_deviation_grows_with_eta() {
        // Start from a source x0 offset ±0.2 from the denoiser's target
        // mean. η=1 keeps the inverted (source-bound) noise, η=0 replaces it
        // with fresh noise; the final distance to the target mean must grow
        // monotonically with η, seed-averaged.
        let s = NoiseSchedule::default();
        let base = zeros(2, 2, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut mu_tgt = gaussian_noise_like(&base, 0.1, &mut rng);
        mu_tgt.data.mapv_inplace(|v| v + 0.5);
        let mut src = mu_tgt.clone();
        for (i, v) in src.data.iter_mut().enumerate() {
            *v += if i % 2 == 0 { 0.2 } else { -0.2 };
        }
        let den = AnalyticGaussianDenoiser {
            mean: GaussianMean::PerView(mu_tgt.clone()),
            sigma_data: 0.01,
        };
        let x_t = invert(&src, &s, &den, None).unwrap().pop().unwrap();

        let etas = [0.0, 0.25, 0.5, 0.75, 1.0];
        let mut devs = [0.0f64; 5];
        let seeds = 32;
        for k in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + k);
            let eps = gaussian_noise_like(&base, 80.0, &mut rng);
            for (d, &eta) in devs.iter_mut().zip(&etas) {
                let blended = blend_noise(&x_t, &eps, eta).unwrap();
                let out =
                    sample(&blended, &s, &den, None, &Guidance::Scalar(0.0), None).unwrap();
                *d += out
                    .data
                    .iter()
                    .zip(mu_tgt.data.iter())
                    .map(|(a, b)| (*a as f64 - *b as f64).abs())
                    .sum::<f64>()
                    / out.data.len() as f64;
            }
        }
        for d in devs.iter_mut() {
            *d /= seeds as f64;
        }
        assert!(
            devs.windows(2).all(|w| w[1] >= w[0]),
            "deviation not monotone in η: {devs:?}"
        );
    }

    #[test]
    fn gaussian_noise_matches_requested_spread() {
        let x = noise((4, 4, 25, 25), 80.0, 77);
        let n = x.data.len() as f64;
        let mean: f64 = x.data.iter().map(|v| *v as f64).sum::<f64>() / n;
        let var: f64 = x.data.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!((var - 6400.0).abs() / 6400.0 <= 0.05);
    }
}
