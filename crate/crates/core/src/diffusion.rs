//! DDPM mathematics: linear variance schedule, forward noising, ancestral
//! reverse sampling with a pluggable noise predictor, and the noise-prediction
//! loss. Samples are flat `f64` vectors; image layout is the caller's concern.
//!
//! [`AnalyticGaussianPredictor`] is the exact MMSE noise predictor for
//! Gaussian data and stands in for a trained network in tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TIMESTEPS: usize = 800;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

const RIDGE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("timestep {t} outside 1..={max}")]
    TimestepOutOfRange { t: usize, max: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("covariance must be square, symmetric and positive semidefinite: {0}")]
    InvalidCovariance(String),
    #[error("regularized covariance is singular at t = {0}")]
    Singular(usize),
}

pub type Result<T, E = DiffusionError> = std::result::Result<T, E>;

/// Per-timestep tables, stored for `t = 1..=T` at index `t - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl Schedule {
    pub fn timesteps(&self) -> usize {
        self.betas.len()
    }

    fn check(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.betas.len() {
            return Err(DiffusionError::TimestepOutOfRange {
                t,
                max: self.betas.len(),
            });
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// Posterior variance `beta_tilde_t = (1 - abar_{t-1}) / (1 - abar_t) * beta_t`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        let prev = if t > 1 { self.alpha_bar(t - 1) } else { 1.0 };
        (1.0 - prev) / (1.0 - self.alpha_bar(t)) * self.beta(t)
    }
}

/// Linearly spaced betas from `beta_start` to `beta_end`, both inclusive.
pub fn make_schedule(timesteps: usize, beta_start: f64, beta_end: f64) -> Result<Schedule> {
    if timesteps == 0 {
        return Err(DiffusionError::InvalidSchedule("need at least one timestep".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(DiffusionError::InvalidSchedule(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
        )));
    }
    let betas: Vec<f64> = if timesteps == 1 {
        vec![beta_start]
    } else {
        let step = (beta_end - beta_start) / (timesteps - 1) as f64;
        (0..timesteps)
            .map(|k| if k == timesteps - 1 { beta_end } else { beta_start + step * k as f64 })
            .collect()
    };
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let alpha_bars = alphas
        .iter()
        .scan(1.0, |acc, a| {
            *acc *= a;
            Some(*acc)
        })
        .collect();
    Ok(Schedule {
        betas,
        alphas,
        alpha_bars,
    })
}

pub fn default_schedule() -> Schedule {
    make_schedule(DEFAULT_TIMESTEPS, DEFAULT_BETA_START, DEFAULT_BETA_END).expect("valid defaults")
}

/// Estimates the noise component of `x_t`.
pub trait NoisePredictor {
    fn predict(&self, x_t: &[f64], t: usize) -> Vec<f64>;
}

impl<F: Fn(&[f64], usize) -> Vec<f64>> NoisePredictor for F {
    fn predict(&self, x_t: &[f64], t: usize) -> Vec<f64> {
        self(x_t, t)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPredictor;

impl NoisePredictor for ZeroPredictor {
    fn predict(&self, x_t: &[f64], _t: usize) -> Vec<f64> {
        vec![0.0; x_t.len()]
    }
}

fn same_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(DiffusionError::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Closed-form marginal `sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
pub fn forward_sample(x0: &[f64], t: usize, eps: &[f64], sched: &Schedule) -> Result<Vec<f64>> {
    let i = sched.check(t)?;
    same_len(x0.len(), eps.len())?;
    let ab = sched.alpha_bars[i];
    let (signal, noise) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| signal * x + noise * e).collect())
}

/// One Markov step `sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) z`.
pub fn forward_step<R: Rng + ?Sized>(x_prev: &[f64], t: usize, sched: &Schedule, rng: &mut R) -> Result<Vec<f64>> {
    let i = sched.check(t)?;
    let beta = sched.betas[i];
    let (keep, noise) = ((1.0 - beta).sqrt(), beta.sqrt());
    Ok(x_prev
        .iter()
        .map(|x| keep * x + noise * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Fixed reverse-process variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReverseVariance {
    #[default]
    Beta,
    PosteriorBeta,
}

/// `x_{t-1} = (x_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t) + sigma_t z`,
/// with no noise added at `t = 1`.
pub fn reverse_step<P: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    pred: &P,
    x_t: &[f64],
    t: usize,
    sched: &Schedule,
    variance: ReverseVariance,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let i = sched.check(t)?;
    let eps = pred.predict(x_t, t);
    same_len(x_t.len(), eps.len())?;
    let (beta, alpha, ab) = (sched.betas[i], sched.alphas[i], sched.alpha_bars[i]);
    let coef = beta / (1.0 - ab).sqrt();
    let inv_sqrt_alpha = 1.0 / alpha.sqrt();
    let mut out: Vec<f64> = x_t
        .iter()
        .zip(&eps)
        .map(|(x, e)| inv_sqrt_alpha * (x - coef * e))
        .collect();
    if t > 1 {
        let sigma = match variance {
            ReverseVariance::Beta => beta,
            ReverseVariance::PosteriorBeta => sched.posterior_variance(t),
        }
        .sqrt();
        for v in &mut out {
            *v += sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(out)
}

/// Draws `x_T ~ N(0, I)` and runs the reverse chain down to `x_0`.
pub fn sample<P: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    pred: &P,
    dim: usize,
    sched: &Schedule,
    variance: ReverseVariance,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    for t in (1..=sched.timesteps()).rev() {
        x = reverse_step(pred, &x, t, sched, variance, rng)?;
    }
    Ok(x)
}

/// `|eps - pred(forward_sample(x0, t, eps), t)|^2`.
pub fn ddpm_loss<P: NoisePredictor + ?Sized>(
    pred: &P,
    x0: &[f64],
    t: usize,
    eps: &[f64],
    sched: &Schedule,
) -> Result<f64> {
    let x_t = forward_sample(x0, t, eps, sched)?;
    let guess = pred.predict(&x_t, t);
    same_len(eps.len(), guess.len())?;
    Ok(eps.iter().zip(&guess).map(|(e, g)| (e - g).powi(2)).sum())
}

/// Exact noise predictor for data distributed as `N(mu, cov)`.
///
/// With `x_t = sqrt(abar) x0 + sqrt(1 - abar) eps`, the posterior mean is
/// `E[x0 | x_t] = mu + sqrt(abar) cov (abar cov + (1 - abar) I)^-1 (x_t - sqrt(abar) mu)`
/// and the prediction is `(x_t - sqrt(abar) E[x0 | x_t]) / sqrt(1 - abar)`.
/// The gain matrix is precomputed for every timestep.
#[derive(Debug, Clone)]
pub struct AnalyticGaussianPredictor {
    mu: DVector<f64>,
    sqrt_alpha_bars: Vec<f64>,
    sqrt_one_minus: Vec<f64>,
    gains: Vec<DMatrix<f64>>,
}

impl AnalyticGaussianPredictor {
    pub fn new(mu: &[f64], cov: &[Vec<f64>], sched: &Schedule) -> Result<Self> {
        let n = mu.len();
        if cov.len() != n || cov.iter().any(|row| row.len() != n) {
            return Err(DiffusionError::InvalidCovariance(format!("expected {n}x{n}")));
        }
        let cov = DMatrix::from_fn(n, n, |i, j| cov[i][j]);
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(DiffusionError::InvalidCovariance("non-finite entry".into()));
        }
        if (&cov - cov.transpose()).abs().max() > 1e-12 * cov.abs().max().max(1.0) {
            return Err(DiffusionError::InvalidCovariance("not symmetric".into()));
        }
        if n > 0 {
            let min_eig = cov.clone().symmetric_eigenvalues().min();
            if min_eig < -1e-10 * cov.abs().max().max(1.0) {
                return Err(DiffusionError::InvalidCovariance(format!(
                    "negative eigenvalue {min_eig}"
                )));
            }
        }
        let identity = DMatrix::<f64>::identity(n, n);
        let mut gains = Vec::with_capacity(sched.timesteps());
        for t in 1..=sched.timesteps() {
            let ab = sched.alpha_bar(t);
            let m = &cov * ab + &identity * (1.0 - ab);
            let inv = match m.clone().cholesky() {
                Some(c) => c.inverse(),
                None => (m + &identity * RIDGE_FLOOR)
                    .cholesky()
                    .ok_or(DiffusionError::Singular(t))?
                    .inverse(),
            };
            gains.push(&cov * inv * ab.sqrt());
        }
        Ok(Self {
            mu: DVector::from_column_slice(mu),
            sqrt_alpha_bars: sched.alpha_bars().iter().map(|a| a.sqrt()).collect(),
            sqrt_one_minus: sched.alpha_bars().iter().map(|a| (1.0 - a).sqrt()).collect(),
            gains,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn posterior_mean(&self, x_t: &[f64], t: usize) -> Vec<f64> {
        let s = self.sqrt_alpha_bars[t - 1];
        let centered = DVector::from_column_slice(x_t) - &self.mu * s;
        (&self.mu + &self.gains[t - 1] * centered).iter().copied().collect()
    }
}

impl NoisePredictor for AnalyticGaussianPredictor {
    fn predict(&self, x_t: &[f64], t: usize) -> Vec<f64> {
        let s = self.sqrt_alpha_bars[t - 1];
        let denom = self.sqrt_one_minus[t - 1];
        let x0 = self.posterior_mean(x_t, t);
        x_t.iter().zip(&x0).map(|(x, m)| (x - s * m) / denom).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sched() -> Schedule {
        default_schedule()
    }

    #[test]
    fn default_schedule_endpoints() {
        let s = sched();
        assert_eq!(s.timesteps(), 800);
        assert_eq!(s.beta(1), 1e-4);
        assert_eq!(s.beta(800), 0.02);
    }

    #[test]
    fn single_step_schedule() {
        let s = make_schedule(1, 0.01, 0.02).unwrap();
        assert_eq!(s.betas(), &[0.01]);
        assert_eq!(s.alpha_bar(1), 1.0 - 0.01);
    }

    #[test]
    fn alpha_bar_matches_direct_product() {
        let s = sched();
        let mut product = 1.0;
        for t in 1..=800 {
            let beta = 1e-4 + (0.02 - 1e-4) * (t - 1) as f64 / 799.0;
            product *= 1.0 - beta;
        }
        assert!((s.alpha_bar(800) - product).abs() < 1e-12);
    }

    #[test]
    fn schedule_invariants() {
        let s = sched();
        for t in 2..=800 {
            assert!(s.beta(t) > s.beta(t - 1));
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            assert_eq!(s.alpha_bar(t), s.alpha_bar(t - 1) * s.alpha(t));
        }
        assert!(s.alpha_bar(800) > 0.0 && s.alpha_bar(1) < 1.0);
    }

    #[test]
    fn invalid_schedules() {
        assert!(make_schedule(0, 1e-4, 0.02).is_err());
        assert!(make_schedule(10, 0.0, 0.02).is_err());
        assert!(make_schedule(10, 0.03, 0.02).is_err());
        assert!(make_schedule(10, 1e-4, 1.0).is_err());
    }

    #[test]
    fn forward_sample_branches() {
        let s = sched();
        let x0 = [0.5, -1.0, 2.0];
        let t = 300;
        let clean = forward_sample(&x0, t, &[0.0; 3], &s).unwrap();
        for (c, x) in clean.iter().zip(&x0) {
            assert_eq!(*c, s.alpha_bar(t).sqrt() * x);
        }
        let e = [0.3, 0.1, -0.7];
        let noise = forward_sample(&[0.0; 3], t, &e, &s).unwrap();
        for (n, x) in noise.iter().zip(&e) {
            assert_eq!(*n, (1.0 - s.alpha_bar(t)).sqrt() * x);
        }
        assert!(forward_sample(&x0, 0, &e, &s).is_err());
        assert!(forward_sample(&x0, 801, &e, &s).is_err());
        assert!(forward_sample(&x0, 5, &[0.0; 2], &s).is_err());
    }

    #[test]
    fn forward_step_vanishing_noise() {
        let s = make_schedule(5, 1e-14, 1e-14).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = forward_step(&[1.5, -2.0], 1, &s, &mut rng).unwrap();
        assert!((x[0] - 1.5).abs() < 1e-6 && (x[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn forward_step_moments() {
        let s = sched();
        let t = 600;
        let x_prev = 0.8;
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws: Vec<f64> = (0..n).map(|_| forward_step(&[x_prev], t, &s, &mut rng).unwrap()[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let beta = s.beta(t);
        let mean_se = (beta / n as f64).sqrt();
        let var_se = beta * (2.0 / (n - 1) as f64).sqrt();
        assert!((mean - (1.0 - beta).sqrt() * x_prev).abs() < 3.0 * mean_se);
        assert!((var - beta).abs() < 3.0 * var_se);
    }

    #[test]
    fn chain_matches_closed_form() {
        let s = make_schedule(50, 1e-3, 0.05).unwrap();
        let t = 50;
        let x0 = [1.2];
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let chain: Vec<f64> = (0..n)
            .map(|_| {
                let mut x = x0.to_vec();
                for step in 1..=t {
                    x = forward_step(&x, step, &s, &mut rng).unwrap();
                }
                x[0]
            })
            .collect();
        let mean = chain.iter().sum::<f64>() / n as f64;
        let var = chain.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let ab = s.alpha_bar(t);
        let want_var = 1.0 - ab;
        assert!((mean - ab.sqrt() * x0[0]).abs() < 3.0 * (want_var / n as f64).sqrt());
        assert!((var - want_var).abs() < 3.0 * want_var * (2.0 / (n - 1) as f64).sqrt());
    }

    #[test]
    fn reverse_step_with_true_noise_approaches_x0() {
        let s = sched();
        let x0 = vec![0.4, -0.9];
        let eps = vec![1.1, 0.3];
        let mut errors = Vec::new();
        for t in [400, 100, 10, 1] {
            let x_t = forward_sample(&x0, t, &eps, &s).unwrap();
            let oracle = |_: &[f64], _: usize| eps.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let out = reverse_step(&oracle, &x_t, t, &s, ReverseVariance::Beta, &mut rng).unwrap();
            let err = out.iter().zip(&x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            errors.push(err);
        }
        assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    }

    #[test]
    fn final_step_is_deterministic() {
        let s = sched();
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let x = [0.2, 0.3];
        assert_eq!(
            reverse_step(&ZeroPredictor, &x, 1, &s, ReverseVariance::Beta, &mut a).unwrap(),
            reverse_step(&ZeroPredictor, &x, 1, &s, ReverseVariance::Beta, &mut b).unwrap()
        );
    }

    #[test]
    fn reverse_step_checks_predictor_dimension() {
        let s = sched();
        let bad = |_: &[f64], _: usize| vec![0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(reverse_step(&bad, &[0.0, 0.0], 3, &s, ReverseVariance::Beta, &mut rng).is_err());
    }

    #[test]
    fn single_step_sampling_algebra() {
        let s = make_schedule(1, 0.1, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut probe = rng.clone();
        let x_t: Vec<f64> = (0..3).map(|_| probe.sample(StandardNormal)).collect();
        let out = sample(&ZeroPredictor, 3, &s, ReverseVariance::Beta, &mut rng).unwrap();
        for (o, x) in out.iter().zip(&x_t) {
            assert!((o - x / 0.9f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = make_schedule(50, 1e-3, 0.05).unwrap();
        let pred = AnalyticGaussianPredictor::new(&[0.1, 0.2], &[vec![1.0, 0.0], vec![0.0, 1.0]], &s).unwrap();
        let run = |seed| sample(&pred, 2, &s, ReverseVariance::Beta, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let (a, b) = (run(9), run(9));
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn loss_edge_cases() {
        let s = sched();
        let x0 = [0.5, 0.5];
        let eps = vec![0.3, -1.2];
        let perfect = |_: &[f64], _: usize| eps.clone();
        assert_eq!(ddpm_loss(&perfect, &x0, 10, &eps, &s).unwrap(), 0.0);
        let zero = ddpm_loss(&ZeroPredictor, &x0, 10, &eps, &s).unwrap();
        assert!((zero - (0.09 + 1.44)).abs() < 1e-12);
        assert!(ddpm_loss(&ZeroPredictor, &x0, 10, &[0.0], &s).is_err());
    }

    #[test]
    fn point_mass_predicts_exact_noise() {
        let s = sched();
        let mu = [0.7, -0.1];
        let pred = AnalyticGaussianPredictor::new(&mu, &[vec![0.0, 0.0], vec![0.0, 0.0]], &s).unwrap();
        let eps = [0.25, -1.5];
        for t in [1, 200, 800] {
            let x_t = forward_sample(&mu, t, &eps, &s).unwrap();
            let got = pred.predict(&x_t, t);
            for (g, e) in got.iter().zip(&eps) {
                assert!((g - e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn prior_mean_predicts_zero_noise() {
        let s = sched();
        let mu = [0.3, -0.2];
        let pred = AnalyticGaussianPredictor::new(&mu, &[vec![0.25, 0.1], vec![0.1, 0.2]], &s).unwrap();
        for t in [1, 400, 800] {
            let ab = s.alpha_bar(t).sqrt();
            let x_t: Vec<f64> = mu.iter().map(|m| ab * m).collect();
            assert!(pred.predict(&x_t, t).iter().all(|v| v.abs() < 1e-12));
        }
    }

    /// Posterior mean of x0 given x_t by trapezoidal quadrature, for a 1-D normal prior.
    fn quadrature_noise(mu: f64, var: f64, x_t: f64, ab: f64) -> f64 {
        let sd = var.sqrt();
        let (lo, hi, n) = (mu - 12.0 * sd, mu + 12.0 * sd, 200_000);
        let h = (hi - lo) / n as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..=n {
            let x0 = lo + k as f64 * h;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            let prior = (-(x0 - mu).powi(2) / (2.0 * var)).exp();
            let lik = (-(x_t - ab.sqrt() * x0).powi(2) / (2.0 * (1.0 - ab))).exp();
            num += w * x0 * prior * lik;
            den += w * prior * lik;
        }
        let post = num / den;
        (x_t - ab.sqrt() * post) / (1.0 - ab).sqrt()
    }

    #[test]
    fn predictor_matches_quadrature() {
        let s = sched();
        for (mu, var) in [(0.0, 1.0), (0.35, 0.2), (-1.0, 2.5)] {
            let pred = AnalyticGaussianPredictor::new(&[mu], &[vec![var]], &s).unwrap();
            for t in [1, 50, 200, 500, 800] {
                for x_t in [-1.3, 0.2, 0.9] {
                    let want = quadrature_noise(mu, var, x_t, s.alpha_bar(t));
                    let got = pred.predict(&[x_t], t)[0];
                    assert!((got - want).abs() < 1e-6, "mu={mu} var={var} t={t}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn identity_covariance_closed_form() {
        let s = sched();
        let pred = AnalyticGaussianPredictor::new(&[0.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 1.0]], &s).unwrap();
        for t in [1, 100, 400, 800] {
            let x_t = [0.6, -1.1];
            let k = (1.0 - s.alpha_bar(t)).sqrt();
            for (g, x) in pred.predict(&x_t, t).iter().zip(&x_t) {
                assert!((g - k * x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_covariance() {
        let s = make_schedule(3, 0.1, 0.2).unwrap();
        assert!(AnalyticGaussianPredictor::new(&[0.0, 0.0], &[vec![1.0, 0.5], vec![0.0, 1.0]], &s).is_err());
        assert!(AnalyticGaussianPredictor::new(&[0.0, 0.0], &[vec![-1.0, 0.0], vec![0.0, 1.0]], &s).is_err());
        assert!(AnalyticGaussianPredictor::new(&[0.0], &[vec![1.0, 0.0]], &s).is_err());
    }
}
