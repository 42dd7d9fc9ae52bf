//! Synthetic event streams with known intensity: inhomogeneous Poisson
//! fields sampled by thinning, and linear Hawkes processes sampled by their
//! cluster representation.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventRecord;
use crate::geometry::{GridSpec, StudyRegion};
use crate::rff::FrequencyMatrix;

/// Isotropic Gaussian blob contributing `rate_per_day` expected events per day
/// (before clipping to the region).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub rate_per_day: f64,
    pub x_ft: f64,
    pub y_ft: f64,
    pub sigma_ft: f64,
}

impl GaussianBump {
    fn density(&self, x: f64, y: f64) -> f64 {
        let s2 = self.sigma_ft * self.sigma_ft;
        let r2 = (x - self.x_ft).powi(2) + (y - self.y_ft).powi(2);
        self.rate_per_day * (-r2 / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2)
    }

    fn peak(&self) -> f64 {
        self.rate_per_day / (2.0 * std::f64::consts::PI * self.sigma_ft * self.sigma_ft)
    }
}

/// `exp(log_scale + φ(z)·β)` with `φ(z) = [cos(Ωz), sin(Ωz)] / sqrt(d)` and
/// `z = (x - origin_x, y - origin_y, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierField {
    pub omegas: Vec<[f64; 3]>,
    /// Cosine weights then sine weights, `2d` values.
    pub beta: Vec<f64>,
    pub origin_x: f64,
    pub origin_y: f64,
    pub log_scale: f64,
}

impl FourierField {
    pub fn from_frequencies(
        freqs: &FrequencyMatrix<f64>,
        beta: Vec<f64>,
        origin: (f64, f64),
        log_scale: f64,
    ) -> Result<Self> {
        if beta.len() != freqs.feature_dim() {
            return Err(Error::Dimension(format!(
                "{} weights for {} features",
                beta.len(),
                freqs.feature_dim()
            )));
        }
        Ok(Self {
            omegas: freqs.omegas.outer_iter().map(|r| [r[0], r[1], r[2]]).collect(),
            beta,
            origin_x: origin.0,
            origin_y: origin.1,
            log_scale,
        })
    }

    fn log_intensity(&self, x: f64, y: f64, t: f64) -> f64 {
        let d = self.omegas.len();
        let z = [x - self.origin_x, y - self.origin_y, t];
        let norm = (d as f64).sqrt();
        let mut s = self.log_scale;
        for (k, w) in self.omegas.iter().enumerate() {
            let arg = w[0] * z[0] + w[1] * z[1] + w[2] * z[2];
            s += (self.beta[k] * arg.cos() + self.beta[d + k] * arg.sin()) / norm;
        }
        s
    }

    fn peak(&self) -> f64 {
        let d = self.omegas.len().max(1) as f64;
        let mut best = 0.0;
        for k in 0..self.omegas.len() {
            best += self.beta[k].hypot(self.beta[self.omegas.len() + k]);
        }
        (self.log_scale + best / d.sqrt()).exp()
    }
}

/// Background (immigrant) intensity in events per square foot per day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Background {
    /// A flat rate spread over the region box plus Gaussian bumps.
    Mixture {
        uniform_per_day: f64,
        bumps: Vec<GaussianBump>,
    },
    LogLinear(FourierField),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub region: StudyRegion<f64>,
    pub horizon_days: f64,
    pub background: Background,
    /// Expected direct offspring per event; 0 gives a plain Poisson process.
    pub branching_ratio: f64,
    pub trigger_sigma_ft: f64,
    /// Mean offspring delay.
    pub trigger_tau_days: f64,
    pub seed: u64,
    pub category: String,
}

impl SynthSpec {
    pub fn poisson(region: StudyRegion<f64>, horizon_days: f64, background: Background, seed: u64) -> Self {
        Self {
            region,
            horizon_days,
            background,
            branching_ratio: 0.0,
            trigger_sigma_ft: 1.0,
            trigger_tau_days: 1.0,
            seed,
            category: "synthetic".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.region.validate()?;
        if !(self.horizon_days > 0.0 && self.horizon_days.is_finite()) {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.branching_ratio) {
            return Err(Error::InvalidArgument(format!(
                "branching ratio {} is not subcritical",
                self.branching_ratio
            )));
        }
        if !(self.trigger_sigma_ft > 0.0 && self.trigger_tau_days > 0.0) {
            return Err(Error::InvalidArgument("trigger scales must be positive".into()));
        }
        match &self.background {
            Background::Mixture { uniform_per_day, bumps } => {
                if !(*uniform_per_day >= 0.0) || bumps.iter().any(|b| !(b.rate_per_day >= 0.0 && b.sigma_ft > 0.0)) {
                    return Err(Error::InvalidArgument("mixture rates must be non-negative".into()));
                }
            }
            Background::LogLinear(f) => {
                if f.beta.len() != 2 * f.omegas.len() {
                    return Err(Error::Dimension("field needs 2d weights".into()));
                }
            }
        }
        Ok(())
    }

    pub fn write_sidecar<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}

/// The background intensity of a spec, evaluable anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueIntensity {
    region: StudyRegion<f64>,
    background: Background,
}

impl TrueIntensity {
    pub fn new(spec: &SynthSpec) -> Self {
        Self {
            region: spec.region,
            background: spec.background.clone(),
        }
    }

    /// Events per square foot per day; zero outside the region.
    pub fn at(&self, x: f64, y: f64, t: f64) -> f64 {
        if !self.region.contains(x, y) {
            return 0.0;
        }
        match &self.background {
            Background::Mixture { uniform_per_day, bumps } => {
                uniform_per_day / self.region.bbox_area() + bumps.iter().map(|b| b.density(x, y)).sum::<f64>()
            }
            Background::LogLinear(f) => f.log_intensity(x, y, t).exp(),
        }
    }

    /// An upper bound on [`TrueIntensity::at`].
    pub fn upper_bound(&self) -> f64 {
        match &self.background {
            Background::Mixture { uniform_per_day, bumps } => {
                uniform_per_day / self.region.bbox_area() + bumps.iter().map(GaussianBump::peak).sum::<f64>()
            }
            Background::LogLinear(f) => f.peak(),
        }
    }

    /// Expected events per cell over `[t0, t1)`, by the midpoint rule on an
    /// `n_space x n_space x n_time` sub-lattice of each cell.
    pub fn expected_cell_counts(&self, grid: &GridSpec<f64>, t0: f64, t1: f64, n_space: usize, n_time: usize) -> Vec<f64> {
        let (ns, nt) = (n_space.max(1), n_time.max(1));
        let dt = (t1 - t0) / nt as f64;
        let sub_area = grid.cell_area() / (ns * ns) as f64;
        (0..grid.n_cells())
            .map(|id| {
                let col = (id % grid.n_cols) as f64;
                let row = (id / grid.n_cols) as f64;
                let mut total = 0.0;
                for i in 0..ns {
                    for j in 0..ns {
                        let u = (col + (i as f64 + 0.5) / ns as f64) * grid.cell_w_ft;
                        let v = (row + (j as f64 + 0.5) / ns as f64) * grid.cell_h_ft;
                        let (x, y) = grid.to_world(u, v);
                        for k in 0..nt {
                            total += self.at(x, y, t0 + (k as f64 + 0.5) * dt);
                        }
                    }
                }
                total * sub_area * dt
            })
            .collect()
    }
}

fn sort_by_time(events: &mut [EventRecord<f64>]) {
    events.sort_by(|a, b| a.t_days.total_cmp(&b.t_days));
}

/// Sample the background process by thinning a homogeneous process on the
/// region box. Uses stream 0 of the seed.
pub fn simulate_poisson(spec: &SynthSpec) -> Result<(Vec<EventRecord<f64>>, TrueIntensity)> {
    spec.validate()?;
    let truth = TrueIntensity::new(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0);
    let bound = truth.upper_bound();
    let r = &spec.region;
    let volume = r.bbox_area() * spec.horizon_days;
    let mean = bound * volume;
    let mut events = Vec::new();
    if mean > 0.0 {
        let n = Poisson::new(mean).map_err(|e| Error::Numerical(e.to_string()))?.sample(&mut rng) as u64;
        for _ in 0..n {
            let x = rng.random_range(r.min_x..r.max_x);
            let y = rng.random_range(r.min_y..r.max_y);
            let t = rng.random_range(0.0..spec.horizon_days);
            let u: f64 = rng.random();
            if u * bound < truth.at(x, y, t) {
                events.push(EventRecord::new(spec.category.clone(), t, x, y));
            }
        }
    }
    sort_by_time(&mut events);
    Ok((events, truth))
}

/// Immigrants from [`simulate_poisson`] plus generations of offspring, each
/// event having Poisson(`branching_ratio`) children displaced by a Gaussian in
/// space and an exponential delay in time. Children falling outside the region
/// or past the horizon are discarded along with their descendants, so counts
/// near the boundaries are biased low. Offspring use stream 1 of the seed.
pub fn simulate_hawkes(spec: &SynthSpec) -> Result<Vec<EventRecord<f64>>> {
    let (immigrants, _) = simulate_poisson(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let mut all = immigrants.clone();
    if spec.branching_ratio > 0.0 {
        let n_children = Poisson::new(spec.branching_ratio).map_err(|e| Error::Numerical(e.to_string()))?;
        let delay = Exp::new(1.0 / spec.trigger_tau_days).map_err(|e| Error::Numerical(e.to_string()))?;
        let jitter = Normal::new(0.0, spec.trigger_sigma_ft).map_err(|e| Error::Numerical(e.to_string()))?;
        let mut generation = immigrants;
        while !generation.is_empty() {
            let mut next = Vec::new();
            for parent in &generation {
                let k = n_children.sample(&mut rng) as u64;
                for _ in 0..k {
                    let mut t = parent.t_days + delay.sample(&mut rng);
                    while t <= parent.t_days {
                        t = parent.t_days + delay.sample(&mut rng);
                    }
                    let x = parent.x_ft + jitter.sample(&mut rng);
                    let y = parent.y_ft + jitter.sample(&mut rng);
                    if t < spec.horizon_days && spec.region.contains(x, y) {
                        next.push(EventRecord::new(spec.category.clone(), t, x, y));
                    }
                }
            }
            all.extend(next.iter().cloned());
            generation = next;
        }
    }
    sort_by_time(&mut all);
    Ok(all)
}
