//! Elastic-net penalized Poisson regression with a log link.
//!
//! Maximizes
//! `Σ_i [o_i η_i - exp(η_i)] - a (‖β‖₁ + ‖γ‖₁) - b (‖β‖₂² + ‖γ‖₂²)`,
//! `η = K γ + Φ β`, by monotone proximal gradient ascent: Barzilai-Borwein
//! trial steps, backtracking until the quadratic lower bound holds, and
//! soft-thresholding for the ℓ₁ term.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Linear predictors are clamped to `[-ETA_CLAMP, ETA_CLAMP]` before `exp`.
pub const ETA_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMeta {
    pub period: usize,
    pub flat_id: usize,
}

/// Feature blocks and counts for the rows a model is fit or evaluated on.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    pub kde: Array2<T>,
    pub rff: Array2<T>,
    pub counts: Array1<T>,
    pub rows: Vec<RowMeta>,
}

impl<T: Real> DesignMatrix<T> {
    pub fn new(kde: Array2<T>, rff: Array2<T>, counts: Vec<u32>, rows: Vec<RowMeta>) -> Result<Self> {
        let n = counts.len();
        if kde.nrows() != n || rff.nrows() != n || rows.len() != n {
            return Err(Error::Dimension(format!(
                "blocks have {} / {} rows, counts {n}, metadata {}",
                kde.nrows(),
                rff.nrows(),
                rows.len()
            )));
        }
        Ok(Self {
            kde,
            rff,
            counts: counts.into_iter().map(|c| T::from_u32(c).unwrap()).collect(),
            rows,
        })
    }

    /// Rows without counts, for prediction only.
    pub fn features(kde: Array2<T>, rff: Array2<T>) -> Result<Self> {
        let n = kde.nrows();
        Self::new(kde, rff, vec![0; n], vec![RowMeta { period: 0, flat_id: 0 }; n])
            .map(|mut d| {
                for (i, r) in d.rows.iter_mut().enumerate() {
                    r.flat_id = i;
                }
                d
            })
    }

    pub fn n_rows(&self) -> usize {
        self.counts.len()
    }

    pub fn n_kde(&self) -> usize {
        self.kde.ncols()
    }

    pub fn n_rff(&self) -> usize {
        self.rff.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.n_kde() + self.n_rff()
    }

    /// `[K | Φ]`.
    pub fn stacked(&self) -> Array2<T> {
        concatenate(Axis(1), &[self.kde.view(), self.rff.view()]).expect("equal row counts")
    }

    fn check(&self, params: &ModelParams<T>) -> Result<()> {
        if params.gamma.len() != self.n_kde() || params.beta.len() != self.n_rff() {
            return Err(Error::Dimension(format!(
                "params ({}, {}) vs design ({}, {})",
                params.gamma.len(),
                params.beta.len(),
                self.n_kde(),
                self.n_rff()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ModelParams<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    /// ℓ₁ weight.
    pub a: T,
    /// ℓ₂ weight.
    pub b: T,
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(n_kde: usize, n_rff: usize, a: T, b: T) -> Self {
        Self {
            gamma: Array1::zeros(n_kde),
            beta: Array1::zeros(n_rff),
            a,
            b,
        }
    }

    pub fn theta(&self) -> Array1<T> {
        concatenate(Axis(0), &[self.gamma.view(), self.beta.view()]).expect("1-d")
    }

    fn from_theta(theta: ArrayView1<T>, n_kde: usize, a: T, b: T) -> Self {
        Self {
            gamma: theta.slice(s![..n_kde]).to_owned(),
            beta: theta.slice(s![n_kde..]).to_owned(),
            a,
            b,
        }
    }

    pub fn l1_norm(&self) -> T {
        self.gamma.iter().chain(self.beta.iter()).map(|v| v.abs()).sum()
    }

    fn validate(&self) -> Result<()> {
        if !(self.a >= T::zero() && self.b >= T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "penalties must be non-negative, got a={} b={}",
                self.a, self.b
            )));
        }
        if !self.gamma.iter().chain(self.beta.iter()).all(|v| v.is_finite()) {
            return Err(Error::Numerical("non-finite coefficients".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_epochs: usize,
    /// Convergence when the optimality residual is below `tol_per_row * n`.
    pub tol_per_row: f64,
    /// Rescale KDE columns to unit sample standard deviation while fitting.
    pub standardize_kde: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            tol_per_row: 1e-6,
            standardize_kde: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Penalized objective at exit, with penalties on the standardized scale.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Max-norm of the smooth gradient after projecting out the ℓ₁ subgradient.
    pub grad_max_norm: f64,
    /// Some linear predictor hit the clamp during the fit.
    pub clamped: bool,
    /// Objective after every accepted step, starting with the initial point.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

fn clamp_eta<T: Real>(eta: T) -> (T, bool) {
    let c = T::of(ETA_CLAMP);
    if eta > c {
        (c, true)
    } else if eta < -c {
        (-c, true)
    } else {
        (eta, false)
    }
}

struct Smooth<T> {
    /// Likelihood minus the ℓ₂ penalty.
    value: T,
    /// `o - exp(η)` per row.
    residual: Array1<T>,
    clamped: bool,
}

fn smooth_part<T: Real>(x: ArrayView2<T>, counts: ArrayView1<T>, theta: ArrayView1<T>, b: T) -> Smooth<T> {
    let eta = x.dot(&theta);
    let mut clamped = false;
    let mut value = T::zero();
    let mut residual = Array1::zeros(eta.len());
    for i in 0..eta.len() {
        let (e, hit) = clamp_eta(eta[i]);
        clamped |= hit;
        let mu = e.exp();
        value = value + counts[i] * e - mu;
        residual[i] = counts[i] - mu;
    }
    let ridge: T = theta.iter().map(|v| *v * *v).sum();
    Smooth {
        value: value - b * ridge,
        residual,
        clamped,
    }
}

fn smooth_gradient<T: Real>(x: ArrayView2<T>, residual: &Array1<T>, theta: ArrayView1<T>, b: T) -> Array1<T> {
    let two_b = T::of(2.0) * b;
    x.t().dot(residual) - &theta.mapv(|v| v * two_b)
}

fn l1<T: Real>(theta: ArrayView1<T>) -> T {
    theta.iter().map(|v| v.abs()).sum()
}

fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Linear predictor `η = K γ + Φ β` (unclamped).
pub fn linear_predictor<T: Real>(params: &ModelParams<T>, design: &DesignMatrix<T>) -> Result<Array1<T>> {
    design.check(params)?;
    Ok(design.kde.dot(&params.gamma) + design.rff.dot(&params.beta))
}

/// Penalized log-likelihood, constant `log(o_i!)` terms dropped.
pub fn objective<T: Real>(params: &ModelParams<T>, design: &DesignMatrix<T>) -> Result<T> {
    design.check(params)?;
    params.validate()?;
    let theta = params.theta();
    let x = design.stacked();
    let sm = smooth_part(x.view(), design.counts.view(), theta.view(), params.b);
    let value = sm.value - params.a * l1(theta.view());
    if !value.is_finite() {
        return Err(Error::Numerical(format!("objective is {value}")));
    }
    Ok(value)
}

/// Gradient of the smooth part minus `a·sign(θ)`, with `sign(0) = 0`.
pub fn gradient<T: Real>(params: &ModelParams<T>, design: &DesignMatrix<T>) -> Result<(Array1<T>, Array1<T>)> {
    design.check(params)?;
    params.validate()?;
    let theta = params.theta();
    let x = design.stacked();
    let sm = smooth_part(x.view(), design.counts.view(), theta.view(), params.b);
    let mut g = smooth_gradient(x.view(), &sm.residual, theta.view(), params.b);
    for (gi, &t) in g.iter_mut().zip(theta.iter()) {
        *gi = *gi - params.a * sign(t);
    }
    let p = design.n_kde();
    Ok((g.slice(s![..p]).to_owned(), g.slice(s![p..]).to_owned()))
}

/// Distance from first-order optimality of the penalized problem.
fn optimality_residual<T: Real>(grad_smooth: &Array1<T>, theta: ArrayView1<T>, a: T) -> T {
    grad_smooth
        .iter()
        .zip(theta.iter())
        .map(|(&g, &t)| {
            if t == T::zero() {
                (g.abs() - a).max(T::zero())
            } else {
                (g - a * sign(t)).abs()
            }
        })
        .fold(T::zero(), T::max)
}

fn soft_threshold<T: Real>(v: T, thresh: T) -> T {
    if v > thresh {
        v - thresh
    } else if v < -thresh {
        v + thresh
    } else {
        T::zero()
    }
}

fn kde_scales<T: Real>(kde: &Array2<T>, enabled: bool) -> Array1<T> {
    let n = kde.nrows();
    kde.columns()
        .into_iter()
        .map(|col| {
            if !enabled || n < 2 {
                return T::one();
            }
            let mean = col.sum() / T::from_usize(n).unwrap();
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / T::from_usize(n - 1).unwrap();
            let sd = var.sqrt();
            if sd > T::zero() && sd.is_finite() {
                sd
            } else {
                T::one()
            }
        })
        .collect()
}

/// Fit from all-zero coefficients.
pub fn fit<T: Real>(
    design: &DesignMatrix<T>,
    a: T,
    b: T,
    config: &OptimizerConfig,
) -> Result<(ModelParams<T>, FitReport)> {
    let start = ModelParams::zeros(design.n_kde(), design.n_rff(), a, b);
    fit_from(design, &start, config)
}

/// Fit starting from `start` (its `a` and `b` are the penalties used).
pub fn fit_from<T: Real>(
    design: &DesignMatrix<T>,
    start: &ModelParams<T>,
    config: &OptimizerConfig,
) -> Result<(ModelParams<T>, FitReport)> {
    design.check(start)?;
    start.validate()?;
    if design.n_rows() == 0 {
        return Err(Error::InvalidArgument("cannot fit an empty design".into()));
    }
    let (a, b) = (start.a, start.b);
    let n_kde = design.n_kde();

    // Work on [K / sd | Φ]; θ_std = θ * sd for the KDE block.
    let scales = kde_scales(&design.kde, config.standardize_kde);
    let mut x = design.stacked();
    for (j, &sd) in scales.iter().enumerate() {
        x.column_mut(j).mapv_inplace(|v| v / sd);
    }
    let mut theta = start.theta();
    for (j, &sd) in scales.iter().enumerate() {
        theta[j] = theta[j] * sd;
    }
    let counts = design.counts.view();
    let tol = T::of(config.tol_per_row * design.n_rows() as f64);

    let mut sm = smooth_part(x.view(), counts, theta.view(), b);
    let mut grad = smooth_gradient(x.view(), &sm.residual, theta.view(), b);
    let mut total = sm.value - a * l1(theta.view());
    if !total.is_finite() {
        return Err(Error::Numerical(format!("objective at start is {total}")));
    }
    let mut clamped = sm.clamped;
    let mut trace = vec![total.as_f64()];
    let mut step = T::one();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..config.max_epochs {
        if optimality_residual(&grad, theta.view(), a) <= tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = None;
        let mut t = step;
        for _ in 0..200 {
            let cand: Array1<T> = theta
                .iter()
                .zip(grad.iter())
                .map(|(&th, &g)| soft_threshold(th + t * g, t * a))
                .collect();
            let delta = &cand - &theta;
            let c_sm = smooth_part(x.view(), counts, cand.view(), b);
            let c_total = c_sm.value - a * l1(cand.view());
            let bound = sm.value + grad.dot(&delta) - delta.dot(&delta) / (T::of(2.0) * t);
            if c_total.is_finite() && c_sm.value >= bound && c_total >= total {
                accepted = Some((cand, delta, c_sm, c_total));
                break;
            }
            t = t * T::of(0.5);
        }
        let Some((cand, delta, c_sm, c_total)) = accepted else {
            // No ascent possible at representable step sizes.
            break;
        };
        let c_grad = smooth_gradient(x.view(), &c_sm.residual, cand.view(), b);
        // Barzilai-Borwein: y·s < 0 for a concave smooth part.
        let curvature = -(&c_grad - &grad).dot(&delta);
        let ss = delta.dot(&delta);
        step = if curvature > T::zero() && ss > T::zero() {
            (ss / curvature).min(T::of(1e12)).max(T::of(1e-12))
        } else {
            (t * T::of(2.0)).min(T::of(1e12))
        };
        theta = cand;
        grad = c_grad;
        clamped |= c_sm.clamped;
        sm = c_sm;
        total = c_total;
        trace.push(total.as_f64());
    }
    if !converged && optimality_residual(&grad, theta.view(), a) <= tol {
        converged = true;
    }
    if !total.is_finite() {
        return Err(Error::Numerical(format!("objective diverged to {total}")));
    }
    let grad_max_norm = optimality_residual(&grad, theta.view(), a).as_f64();
    for (j, &sd) in scales.iter().enumerate() {
        theta[j] = theta[j] / sd;
    }
    let params = ModelParams::from_theta(theta.view(), n_kde, a, b);
    Ok((
        params,
        FitReport {
            objective: total.as_f64(),
            iterations,
            converged,
            grad_max_norm,
            clamped,
            trace,
        },
    ))
}

/// Predicted intensity `exp(η)` per row, with η clamped.
pub fn predict<T: Real>(params: &ModelParams<T>, design: &DesignMatrix<T>) -> Result<Array1<T>> {
    Ok(linear_predictor(params, design)?.mapv(|e| clamp_eta(e).0.exp()))
}
