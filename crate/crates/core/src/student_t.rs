//! Location-scale Student-t density and its maximum-likelihood fit.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

pub const DOF_MIN: f64 = 1.0;
pub const DOF_MAX: f64 = 100.0;
pub const SCALE_FLOOR: f64 = 1e-3;

const MAX_ITERATIONS: usize = 500;
const RELATIVE_TOLERANCE: f64 = 1e-8;
const LN_PI: f64 = 1.144_729_885_849_400_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentT {
    pub dof: f64,
    pub loc: f64,
    pub scale: f64,
}

impl StudentT {
    pub fn new(dof: f64, loc: f64, scale: f64) -> Self {
        Self { dof, loc, scale }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let nu = self.dof;
        let z = (x - self.loc) / self.scale;
        ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu.ln() + LN_PI)
            - self.scale.ln()
            - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn log_likelihood(&self, data: &[f64]) -> f64 {
        data.iter().map(|&x| self.ln_pdf(x)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TFit {
    pub dist: StudentT,
    pub iterations: usize,
    /// True when the data had zero spread and the scale floor was applied.
    pub degenerate: bool,
}

/// Maximum-likelihood fit of `(dof, loc, scale)`.
///
/// Alternates an EM update of `(loc, scale)` at fixed dof with a golden-section
/// search of the profile likelihood over `dof in [1, 100]` (searched in log-dof).
/// Each half-step cannot decrease the likelihood. Requires at least one sample.
pub fn fit_student_t(data: &[f64]) -> TFit {
    assert!(!data.is_empty(), "cannot fit an empty sample");
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if hi - lo <= 0.0 {
        return TFit {
            dist: StudentT::new(DOF_MAX, mean, SCALE_FLOOR),
            iterations: 0,
            degenerate: true,
        };
    }

    let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let mut dist = StudentT::new(10.0, median(data), var.sqrt().max(SCALE_FLOOR));
    let mut ll = dist.log_likelihood(data);
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        em_update(&mut dist, data);
        dist.dof = best_dof(&dist, data);
        let next = dist.log_likelihood(data);
        let change = (next - ll).abs();
        ll = next;
        if change <= RELATIVE_TOLERANCE * ll.abs().max(1.0) {
            break;
        }
    }
    let degenerate = dist.scale < SCALE_FLOOR;
    dist.scale = dist.scale.max(SCALE_FLOOR);
    TFit {
        dist,
        iterations,
        degenerate,
    }
}

fn em_update(dist: &mut StudentT, data: &[f64]) {
    let nu = dist.dof;
    let s2 = dist.scale * dist.scale;
    let weights: Vec<f64> = data
        .iter()
        .map(|&x| (nu + 1.0) / (nu + (x - dist.loc).powi(2) / s2))
        .collect();
    let wsum: f64 = weights.iter().sum();
    let loc = weights.iter().zip(data).map(|(w, x)| w * x).sum::<f64>() / wsum;
    let var = weights
        .iter()
        .zip(data)
        .map(|(w, x)| w * (x - loc).powi(2))
        .sum::<f64>()
        / data.len() as f64;
    dist.loc = loc;
    // keep scale strictly positive so the next E-step stays finite
    dist.scale = var.sqrt().max(1e-300);
}

fn best_dof(dist: &StudentT, data: &[f64]) -> f64 {
    let profile = |log_nu: f64| StudentT::new(log_nu.exp(), dist.loc, dist.scale).log_likelihood(data);
    let mut a = DOF_MIN.ln();
    let mut b = DOF_MAX.ln();
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = profile(c);
    let mut fd = profile(d);
    while b - a > 1e-10 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = profile(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = profile(d);
        }
    }
    // the bracket endpoints are feasible too; the optimum may sit on a bound
    let mid = 0.5 * (a + b);
    let mut best = (profile(mid), mid);
    for x in [DOF_MIN.ln(), DOF_MAX.ln()] {
        let f = profile(x);
        if f > best.0 {
            best = (f, x);
        }
    }
    let current = profile(dist.dof.ln());
    if current > best.0 {
        return dist.dof;
    }
    best.1.exp().clamp(DOF_MIN, DOF_MAX)
}

fn median(data: &[f64]) -> f64 {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
