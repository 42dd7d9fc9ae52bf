//! Random Fourier features over `(x, y, t)`.
//!
//! Frequencies are drawn from the spectral measure of a stationary kernel on
//! lengthscale-scaled inputs, so `Φ(a)·Φ(b)` estimates `k(|(a - b) / ℓ|)` where
//! `ℓ = (ℓ_space, ℓ_space, ℓ_time)`.

use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seeds;

/// Input dimension: x, y, t.
pub const INPUT_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Matern52,
    SquaredExponential,
}

impl KernelFamily {
    /// Closed-form kernel at scaled distance `r`.
    pub fn eval(self, r: f64) -> f64 {
        match self {
            KernelFamily::SquaredExponential => (-0.5 * r * r).exp(),
            KernelFamily::Matern52 => {
                let s = 5f64.sqrt() * r;
                (1.0 + s + 5.0 * r * r / 3.0) * (-s).exp()
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Matern52 => "matern52",
            KernelFamily::SquaredExponential => "squared_exponential",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RffConfig<T> {
    /// Number of frequencies; the feature map has `2 d` columns.
    pub d: usize,
    pub spatial_lengthscale_ft: T,
    pub temporal_lengthscale_days: T,
    pub kernel_family: KernelFamily,
    pub seed: u64,
}

impl<T: Real> RffConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidArgument("need at least one frequency".into()));
        }
        for (name, l) in [
            ("spatial", self.spatial_lengthscale_ft),
            ("temporal", self.temporal_lengthscale_days),
        ] {
            if !(l > T::zero() && l.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} lengthscale must be positive, got {l}"
                )));
            }
        }
        Ok(())
    }

    pub fn lengthscales(&self) -> [T; INPUT_DIM] {
        [
            self.spatial_lengthscale_ft,
            self.spatial_lengthscale_ft,
            self.temporal_lengthscale_days,
        ]
    }

    /// Scaled distance between two `(x, y, t)` points.
    pub fn scaled_distance(&self, a: [T; INPUT_DIM], b: [T; INPUT_DIM]) -> f64 {
        let l = self.lengthscales();
        (0..INPUT_DIM)
            .map(|k| ((a[k] - b[k]) / l[k]).as_f64().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn exact_kernel(&self, a: [T; INPUT_DIM], b: [T; INPUT_DIM]) -> f64 {
        self.kernel_family.eval(self.scaled_distance(a, b))
    }
}

/// `d x 3` frequencies plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FrequencyMatrix<T> {
    pub omegas: Array2<T>,
    pub config: RffConfig<T>,
}

impl<T: Real> FrequencyMatrix<T> {
    pub fn d(&self) -> usize {
        self.omegas.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        2 * self.d()
    }

    /// `Φ(a)·Φ(b) = mean_k cos(ω_k·(a - b))`.
    pub fn approximate_kernel(&self, a: [T; INPUT_DIM], b: [T; INPUT_DIM]) -> T {
        let delta = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        let sum = self
            .omegas
            .outer_iter()
            .map(|w| (w[0] * delta[0] + w[1] * delta[1] + w[2] * delta[2]).cos())
            .fold(T::zero(), |acc, c| acc + c);
        sum / T::from_usize(self.d()).unwrap()
    }

    /// CSV with `#` header lines recording seed and configuration.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        let c = &self.config;
        writeln!(writer, "# seed={}", c.seed)?;
        writeln!(writer, "# kernel_family={}", c.kernel_family.name())?;
        writeln!(writer, "# d={}", c.d)?;
        writeln!(writer, "# spatial_lengthscale_ft={}", c.spatial_lengthscale_ft)?;
        writeln!(writer, "# temporal_lengthscale_days={}", c.temporal_lengthscale_days)?;
        writeln!(writer, "omega_x,omega_y,omega_t")?;
        for w in self.omegas.outer_iter() {
            writeln!(writer, "{},{},{}", w[0], w[1], w[2])?;
        }
        Ok(())
    }
}

/// Draw `d` frequencies. Squared exponential: `ω = z / ℓ` with standard normal
/// `z`. Matérn-5/2: `ω = z·sqrt(5/u) / ℓ` with `u ~ χ²(5)` shared by the row,
/// i.e. a multivariate Student-t with 5 degrees of freedom.
pub fn sample_frequencies<T: Real>(config: &RffConfig<T>) -> Result<FrequencyMatrix<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let chi2 = ChiSquared::<f64>::new(5.0).expect("valid dof");
    let l = config.lengthscales().map(|v| v.as_f64());
    let mut omegas = Array2::zeros((config.d, INPUT_DIM));
    for mut row in omegas.outer_iter_mut() {
        let z: [f64; INPUT_DIM] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let mix = match config.kernel_family {
            KernelFamily::SquaredExponential => 1.0,
            KernelFamily::Matern52 => (5.0 / chi2.sample(&mut rng)).sqrt(),
        };
        for k in 0..INPUT_DIM {
            row[k] = T::of(z[k] * mix / l[k]);
        }
    }
    Ok(FrequencyMatrix {
        omegas,
        config: *config,
    })
}

/// Map `n x 3` points to the `n x 2d` matrix `[cos(XΩᵀ) sin(XΩᵀ)] / sqrt(d)`.
pub fn featurize<T: Real>(points: ArrayView2<T>, freqs: &FrequencyMatrix<T>) -> Result<Array2<T>> {
    if points.ncols() != INPUT_DIM {
        return Err(Error::Dimension(format!(
            "points have {} columns, expected {INPUT_DIM}",
            points.ncols()
        )));
    }
    let d = freqs.d();
    let scale = T::one() / T::from_usize(d).unwrap().sqrt();
    let mut phi = Array2::zeros((points.nrows(), 2 * d));
    phi.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(points.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut out, p)| {
            for (k, w) in freqs.omegas.outer_iter().enumerate() {
                let proj = p[0] * w[0] + p[1] * w[1] + p[2] * w[2];
                let (s, c) = proj.sin_cos();
                out[k] = c * scale;
                out[d + k] = s * scale;
            }
        });
    Ok(phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxRow {
    pub d: usize,
    /// Mean over seeds of the per-seed mean absolute error.
    pub mean_abs_err: f64,
    /// Largest single-pair error over all seeds.
    pub max_abs_err: f64,
}

/// Kernel approximation error of the feature map for each `d`.
///
/// Per seed, `n_pairs` point pairs are drawn uniformly from a box three
/// lengthscales wide in every dimension; each `d` gets its own frequency draw.
pub fn approximation_report<T: Real>(
    config: &RffConfig<T>,
    n_pairs: usize,
    d_values: &[usize],
    n_seeds: usize,
) -> Result<Vec<ApproxRow>> {
    config.validate()?;
    if n_pairs == 0 || n_seeds == 0 {
        return Err(Error::InvalidArgument("need pairs and seeds".into()));
    }
    let l = config.lengthscales();
    let per_seed: Vec<Vec<(f64, f64)>> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive_indexed(config.seed, "pairs", s));
            let pairs: Vec<([T; 3], [T; 3])> = (0..n_pairs)
                .map(|_| {
                    let mut draw = || std::array::from_fn(|k| T::of(rng.random_range(0.0..3.0)) * l[k]);
                    (draw(), draw())
                })
                .collect();
            d_values
                .iter()
                .map(|&d| {
                    let cfg = RffConfig {
                        d,
                        seed: seeds::derive_indexed(config.seed, "freqs", s),
                        ..*config
                    };
                    let freqs = sample_frequencies(&cfg).expect("validated");
                    let errs: Vec<f64> = pairs
                        .iter()
                        .map(|&(a, b)| {
                            (freqs.approximate_kernel(a, b).as_f64() - cfg.exact_kernel(a, b)).abs()
                        })
                        .collect();
                    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
                    let max = errs.iter().cloned().fold(0.0, f64::max);
                    (mean, max)
                })
                .collect()
        })
        .collect();
    Ok(d_values
        .iter()
        .enumerate()
        .map(|(i, &d)| ApproxRow {
            d,
            mean_abs_err: per_seed.iter().map(|r| r[i].0).sum::<f64>() / n_seeds as f64,
            max_abs_err: per_seed.iter().map(|r| r[i].1).fold(0.0, f64::max),
        })
        .collect())
}
