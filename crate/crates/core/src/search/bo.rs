//! Gaussian-process Bayesian optimization on the unit cube.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoConfig {
    pub n_init: usize,
    pub n_iter: usize,
    pub seed: u64,
    /// Random candidates scored by the acquisition each round.
    pub n_candidates: usize,
    /// Best candidates refined by pattern search.
    pub n_starts: usize,
}

impl BoConfig {
    pub fn new(n_init: usize, n_iter: usize, seed: u64) -> Self {
        Self {
            n_init,
            n_iter,
            seed,
            n_candidates: 2000,
            n_starts: 5,
        }
    }
}

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut inv = 1.0 / b;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base as u64) as f64 * inv;
        i /= base as u64;
        inv /= b;
    }
    out
}

/// `n` points of a Halton sequence with a seeded random shift modulo 1.
pub fn quasi_random(dim: usize, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if dim == 0 || dim > PRIMES.len() {
        return Err(Error::InvalidArgument(format!(
            "quasi-random design supports 1..={} dimensions, got {dim}",
            PRIMES.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
    Ok((1..=n as u64)
        .map(|i| {
            (0..dim)
                .map(|k| (radical_inverse(i, PRIMES[k]) + shift[k]).fract())
                .collect()
        })
        .collect())
}

fn matern52(r: f64, lengthscale: f64) -> f64 {
    let s = 5f64.sqrt() * r / lengthscale;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Zero-mean unit-variance GP on standardized targets.
struct Gp {
    x: Vec<Vec<f64>>,
    lengthscale: f64,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
}

impl Gp {
    fn fit_with(x: &[Vec<f64>], y: &DVector<f64>, lengthscale: f64, noise: f64) -> Option<(Self, f64)> {
        let n = x.len();
        let k = DMatrix::from_fn(n, n, |i, j| {
            matern52(dist(&x[i], &x[j]), lengthscale) + if i == j { noise } else { 0.0 }
        });
        let chol = k.cholesky()?;
        let alpha = chol.solve(y);
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Some((
            Self {
                x: x.to_vec(),
                lengthscale,
                chol,
                alpha,
            },
            lml,
        ))
    }

    /// Hyperparameters by marginal likelihood over a small grid.
    fn fit(x: &[Vec<f64>], y: &DVector<f64>) -> Result<Self> {
        let mut best: Option<(Self, f64)> = None;
        for &l in &[0.05, 0.1, 0.2, 0.4, 0.8] {
            for &noise in &[1e-6, 1e-3, 1e-2, 1e-1] {
                if let Some((gp, lml)) = Self::fit_with(x, y, l, noise) {
                    if best.as_ref().is_none_or(|(_, b)| lml > *b) {
                        best = Some((gp, lml));
                    }
                }
            }
        }
        best.map(|(gp, _)| gp)
            .ok_or_else(|| Error::Numerical("surrogate covariance is not positive definite".into()))
    }

    fn predict(&self, p: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| matern52(dist(xi, p), self.lengthscale)));
        let mean = k.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&k).expect("triangular solve");
        let var = (1.0 - v.dot(&v)).max(1e-12);
        (mean, var.sqrt())
    }
}

fn expected_improvement(mean: f64, sd: f64, best: f64, normal: &Normal) -> f64 {
    let xi = 0.01;
    let z = (mean - best - xi) / sd;
    (mean - best - xi) * normal.cdf(z) + sd * normal.pdf(z)
}

/// Coordinate pattern search on the acquisition, steps halving from 0.1.
fn refine(start: Vec<f64>, f: impl Fn(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let mut x = start;
    let mut fx = f(&x);
    let mut step = 0.1;
    while step > 1e-3 {
        let mut improved = false;
        for k in 0..x.len() {
            for dir in [-1.0, 1.0] {
                let mut y = x.clone();
                y[k] = (y[k] + dir * step).clamp(0.0, 1.0);
                let fy = f(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    (x, fx)
}

/// One evaluation of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<R> {
    pub point: Vec<f64>,
    pub value: f64,
    pub payload: R,
}

/// Maximize `objective` over `[0, 1]^dim`. The initial design is evaluated in
/// parallel; later rounds propose one point each.
pub fn maximize<R, F>(dim: usize, config: &BoConfig, objective: F) -> Result<Vec<Evaluation<R>>>
where
    R: Send,
    F: Fn(&[f64]) -> (f64, R) + Sync,
{
    if config.n_init == 0 {
        return Err(Error::InvalidArgument("need at least one initial evaluation".into()));
    }
    let init = quasi_random(dim, config.n_init, config.seed)?;
    let mut evals: Vec<Evaluation<R>> = init
        .into_par_iter()
        .map(|point| {
            let (value, payload) = objective(&point);
            Evaluation { point, value, payload }
        })
        .collect();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    for _ in 0..config.n_iter {
        let xs: Vec<Vec<f64>> = evals.iter().map(|e| e.point.clone()).collect();
        let raw: Vec<f64> = evals.iter().map(|e| if e.value.is_finite() { e.value } else { f64::MIN }).collect();
        let finite: Vec<f64> = raw.iter().copied().filter(|v| *v > f64::MIN).collect();
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let raw: Vec<f64> = raw.iter().map(|&v| if v == f64::MIN { lo } else { v }).collect();
        let m = raw.iter().sum::<f64>() / raw.len() as f64;
        let sd = (raw.iter().map(|v| (v - m).powi(2)).sum::<f64>() / raw.len() as f64).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        let y = DVector::from_iterator(raw.len(), raw.iter().map(|v| (v - m) / sd));
        let best = y.max();
        let gp = Gp::fit(&xs, &y)?;
        let acq = |p: &[f64]| {
            let (mu, s) = gp.predict(p);
            expected_improvement(mu, s, best, &normal)
        };
        let candidates: Vec<Vec<f64>> = (0..config.n_candidates)
            .map(|_| (0..dim).map(|_| rng.random()).collect())
            .collect();
        let mut scored: Vec<(f64, Vec<f64>)> = candidates.into_iter().map(|c| (acq(&c), c)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let next = scored
            .into_iter()
            .take(config.n_starts.max(1))
            .map(|(_, c)| refine(c, acq))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(x, _)| x)
            .expect("at least one start");
        let (value, payload) = objective(&next);
        evals.push(Evaluation {
            point: next,
            value,
            payload,
        });
    }
    Ok(evals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_is_in_cube_and_seeded() {
        let a = quasi_random(3, 50, 1).unwrap();
        assert!(a.iter().flatten().all(|v| (0.0..1.0).contains(v)));
        assert_eq!(a, quasi_random(3, 50, 1).unwrap());
        assert_ne!(a, quasi_random(3, 50, 2).unwrap());
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!(quasi_random(0, 5, 0).is_err());
    }

    #[test]
    fn no_iterations_is_the_initial_design() {
        let evals = maximize(2, &BoConfig::new(8, 0, 5), |p| (p[0] + p[1], ())).unwrap();
        let pts: Vec<Vec<f64>> = evals.into_iter().map(|e| e.point).collect();
        assert_eq!(pts, quasi_random(2, 8, 5).unwrap());
    }

    #[test]
    fn one_dimensional_quadratic() {
        let target = 0.37;
        let mut hits = 0;
        for seed in 0..10 {
            let evals = maximize(1, &BoConfig::new(5, 15, seed), |p| (-(p[0] - target).powi(2), ())).unwrap();
            assert_eq!(evals.len(), 20);
            let best = evals.iter().max_by(|a, b| a.value.total_cmp(&b.value)).unwrap();
            if (best.point[0] - target).abs() <= 1e-2 {
                hits += 1;
            }
        }
        assert!(hits >= 8, "{hits}/10");
    }

    #[test]
    fn deterministic() {
        let f = |p: &[f64]| ((3.0 * p[0]).sin() * p[1], ());
        let a: Vec<_> = maximize(2, &BoConfig::new(4, 4, 9), f).unwrap().into_iter().map(|e| e.point).collect();
        let b: Vec<_> = maximize(2, &BoConfig::new(4, 4, 9), f).unwrap().into_iter().map(|e| e.point).collect();
        assert_eq!(a, b);
    }
}
