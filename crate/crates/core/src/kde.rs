//! Lagged spatial Gaussian kernel sums, the parametric part of the log intensity.
//!
//! Lag `j` at forecast instant `t` sums the unnormalized kernel
//! `exp(-|s - s_i|^2 / (2 λ^2))` over events with `t_i` in
//! `[t - j·D, t - (j-1)·D)`. The right end is open so that events at the
//! forecast instant itself never enter its features.

use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventRecord;
use crate::geometry::GridSpec;
use crate::scalar::{rel_diff, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct KdeConfig<T> {
    pub bandwidth_ft: T,
    pub n_lags: usize,
    pub window_days: T,
    /// Skip events farther than this many bandwidths. Each skipped term is at
    /// most `exp(-k^2 / 2)`, so `Some(6)` bounds the error by `exp(-18)` per event.
    #[serde(default)]
    pub cutoff_bandwidths: Option<T>,
}

impl<T: Real> KdeConfig<T> {
    pub fn new(bandwidth_ft: T, n_lags: usize, window_days: T) -> Result<Self> {
        let cfg = Self {
            bandwidth_ft,
            n_lags,
            window_days,
            cutoff_bandwidths: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_cutoff(mut self, bandwidths: T) -> Self {
        self.cutoff_bandwidths = Some(bandwidths);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_ft > T::zero() && self.bandwidth_ft.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "KDE bandwidth must be positive, got {}",
                self.bandwidth_ft
            )));
        }
        if !(self.window_days > T::zero() && self.window_days.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "KDE window must be positive, got {}",
                self.window_days
            )));
        }
        if self.n_lags == 0 {
            return Err(Error::InvalidArgument("need at least one KDE lag".into()));
        }
        Ok(())
    }

    /// Days of history the lags reach back from a forecast instant.
    pub fn history_days(&self) -> T {
        T::from_usize(self.n_lags).unwrap() * self.window_days
    }

    /// `[lo, hi)` bounds of lag `j` (1-based) at instant `t`.
    pub fn lag_bounds(&self, t: T, j: usize) -> (T, T) {
        let d = self.window_days;
        (
            t - T::from_usize(j).unwrap() * d,
            t - T::from_usize(j - 1).unwrap() * d,
        )
    }

    fn kernel(&self, dx: T, dy: T) -> Option<T> {
        let d2 = dx * dx + dy * dy;
        if let Some(k) = self.cutoff_bandwidths {
            let r = k * self.bandwidth_ft;
            if d2 > r * r {
                return None;
            }
        }
        Some((-d2 / (T::of(2.0) * self.bandwidth_ft * self.bandwidth_ft)).exp())
    }
}

/// Lag-`j` kernel sum at `(x, y)` for forecast instant `t`.
pub fn kde_lag<T: Real>(
    events: &[EventRecord<T>],
    x: T,
    y: T,
    t: T,
    j: usize,
    config: &KdeConfig<T>,
) -> T {
    assert!(j >= 1 && j <= config.n_lags, "lag {j} outside 1..={}", config.n_lags);
    let (lo, hi) = config.lag_bounds(t, j);
    events
        .iter()
        .filter(|e| e.t_days >= lo && e.t_days < hi)
        .filter_map(|e| config.kernel(x - e.x_ft, y - e.y_ft))
        .fold(T::zero(), |acc, k| acc + k)
}

/// `n_cells x p` matrix of lag features at every cell centroid for a forecast
/// period starting at `forecast_start`. Times before day 0 are outside the
/// dataset, so the lags must fit in `[0, forecast_start)`.
pub fn kde_feature_block<T: Real>(
    events: &[EventRecord<T>],
    grid: &GridSpec<T>,
    forecast_start: T,
    config: &KdeConfig<T>,
) -> Result<Array2<T>> {
    config.validate()?;
    let earliest = config.history_days();
    if forecast_start < earliest {
        return Err(Error::InsufficientHistory {
            lags: config.n_lags,
            window_days: config.window_days.as_f64(),
            earliest_day: earliest.as_f64(),
            requested_day: forecast_start.as_f64(),
        });
    }
    let p = config.n_lags;
    // Bucket events by lag, preserving input order within each bucket.
    let bounds: Vec<(T, T)> = (1..=p).map(|j| config.lag_bounds(forecast_start, j)).collect();
    let mut buckets: Vec<Vec<(T, T)>> = vec![Vec::new(); p];
    for e in events {
        if let Some(j) = bounds.iter().position(|&(lo, hi)| e.t_days >= lo && e.t_days < hi) {
            buckets[j].push((e.x_ft, e.y_ft));
        }
    }
    let centroids = grid.centroids();
    let rows: Vec<Vec<T>> = centroids
        .par_iter()
        .map(|&(x, y)| {
            buckets
                .iter()
                .map(|bucket| {
                    bucket
                        .iter()
                        .filter_map(|&(ex, ey)| config.kernel(x - ex, y - ey))
                        .fold(T::zero(), |acc, k| acc + k)
                })
                .collect()
        })
        .collect();
    let flat: Vec<T> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((grid.n_cells(), p), flat).expect("shape matches"))
}

/// Compare the lag-1 feature at every centroid with the self-excitation term
/// of a linear Hawkes intensity using a boxcar temporal kernel
/// `k_t(t_i, t) = 1{t_i in [t - D, t]}` over strictly earlier events.
pub fn hawkes_equivalence_check<T: Real>(
    events: &[EventRecord<T>],
    grid: &GridSpec<T>,
    t: T,
    config: &KdeConfig<T>,
) -> bool {
    let centroids = grid.centroids();
    let two_l2 = T::of(2.0) * config.bandwidth_ft * config.bandwidth_ft;
    // Event-major accumulation of the Hawkes sum, written independently of kde_lag.
    let mut excitation = vec![T::zero(); centroids.len()];
    for e in events.iter().filter(|e| e.t_days < t) {
        let boxcar = if e.t_days >= t - config.window_days && e.t_days <= t {
            T::one()
        } else {
            T::zero()
        };
        if boxcar == T::zero() {
            continue;
        }
        for (acc, &(x, y)) in excitation.iter_mut().zip(&centroids) {
            let (dx, dy) = (e.x_ft - x, e.y_ft - y);
            *acc = *acc + boxcar * (-(dx * dx + dy * dy) / two_l2).exp();
        }
    }
    let exact = KdeConfig {
        cutoff_bandwidths: None,
        ..*config
    };
    centroids.iter().zip(&excitation).all(|(&(x, y), &h)| {
        let k = kde_lag(events, x, y, t, 1, &exact);
        rel_diff(k, h) <= T::of(1e-12)
    })
}

/// CSV with columns `flat_id,lag_1..lag_p`.
pub fn write_feature_block<T: Real, W: Write>(block: &Array2<T>, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["flat_id".to_string()];
    header.extend((1..=block.ncols()).map(|j| format!("lag_{j}")));
    wtr.write_record(&header)?;
    for (id, row) in block.outer_iter().enumerate() {
        let mut rec = vec![id.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, AreaPolicy, StudyRegion};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GridSpec<f64> {
        let r = StudyRegion::from_bounds(0.0, 0.0, 2000.0, 2000.0).unwrap();
        build_grid(&r, 250.0, 250.0, 0.0, AreaPolicy::Competition).unwrap()
    }

    fn random_events(seed: u64, n: usize, t_max: f64) -> Vec<EventRecord<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                EventRecord::new(
                    "A",
                    rng.random_range(0.0..t_max),
                    rng.random_range(0.0..2000.0),
                    rng.random_range(0.0..2000.0),
                )
            })
            .collect()
    }

    fn brute(ev: &[EventRecord<f64>], x: f64, y: f64, t: f64, j: usize, lam: f64, d: f64) -> f64 {
        let mut s = 0.0;
        for e in ev {
            let lo = t - j as f64 * d;
            let hi = t - (j as f64 - 1.0) * d;
            if lo <= e.t_days && e.t_days < hi {
                let r2 = (x - e.x_ft).powi(2) + (y - e.y_ft).powi(2);
                s += (-r2 / (2.0 * lam * lam)).exp();
            }
        }
        s
    }

    #[test]
    fn empty_window_and_point_mass() {
        let cfg = KdeConfig::new(300.0, 3, 7.0).unwrap();
        let ev = vec![EventRecord::new("A", 100.0, 50.0, 60.0)];
        assert_eq!(kde_lag(&ev, 50.0, 60.0, 30.0, 1, &cfg), 0.0);
        assert_eq!(kde_lag(&ev, 50.0, 60.0, 103.0, 1, &cfg), 1.0);
        // the forecast instant itself is excluded
        assert_eq!(kde_lag(&ev, 50.0, 60.0, 100.0, 1, &cfg), 0.0);
        assert_eq!(kde_lag(&ev, 50.0, 60.0, 107.0, 2, &cfg), 0.0);
        assert_eq!(kde_lag(&ev, 50.0, 60.0, 108.0, 2, &cfg), 1.0);
    }

    #[test]
    fn matches_double_loop() {
        let ev = random_events(3, 50, 40.0);
        let cfg = KdeConfig::new(350.0, 4, 9.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let (x, y) = (rng.random_range(0.0..2000.0), rng.random_range(0.0..2000.0));
            for j in 1..=4 {
                let got = kde_lag(&ev, x, y, 38.0, j, &cfg);
                let want = brute(&ev, x, y, 38.0, j, 350.0, 9.0);
                assert!(rel_diff(got, want) <= 1e-12, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn block_shapes_and_single_event() {
        let g = grid();
        let cfg = KdeConfig::new(250.0, 3, 7.0).unwrap();
        let zero = kde_feature_block::<f64>(&[], &g, 30.0, &cfg).unwrap();
        assert_eq!(zero.dim(), (64, 3));
        assert!(zero.iter().all(|&v| v == 0.0));

        let ev = vec![EventRecord::new("A", 20.0, 400.0, 1300.0)];
        let block = kde_feature_block(&ev, &g, 30.0, &cfg).unwrap();
        let nonzero: Vec<usize> = (0..3).filter(|&j| block.column(j).iter().any(|&v| v > 0.0)).collect();
        assert_eq!(nonzero, vec![1]);
    }

    #[test]
    fn own_cell_dominates_at_small_bandwidth() {
        let g = grid();
        let cfg = KdeConfig::new(60.0, 1, 7.0).unwrap();
        let ev = vec![EventRecord::new("A", 25.0, 610.0, 1420.0)];
        let block = kde_feature_block(&ev, &g, 30.0, &cfg).unwrap();
        let own = g.point_to_cell(610.0, 1420.0).unwrap().flat_id;
        for id in 0..g.n_cells() {
            assert!(block[[own, 0]] >= block[[id, 0]]);
        }
    }

    #[test]
    fn insufficient_history_names_earliest_day() {
        let cfg = KdeConfig::new(250.0, 6, 10.0).unwrap();
        match kde_feature_block::<f64>(&[], &grid(), 59.0, &cfg) {
            Err(Error::InsufficientHistory { earliest_day, .. }) => assert_eq!(earliest_day, 60.0),
            other => panic!("unexpected {other:?}"),
        }
        assert!(kde_feature_block::<f64>(&[], &grid(), 60.0, &cfg).is_ok());
    }

    #[test]
    fn cutoff_error_is_bounded() {
        let g = grid();
        let ev = random_events(8, 300, 30.0);
        let exact = KdeConfig::new(150.0, 2, 15.0).unwrap();
        let cut = exact.with_cutoff(6.0);
        let a = kde_feature_block(&ev, &g, 30.0, &exact).unwrap();
        let b = kde_feature_block(&ev, &g, 30.0, &cut).unwrap();
        let bound = 300.0 * (-18.0f64).exp();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= bound);
        }
    }

    #[test]
    fn hawkes_boxcar_agrees() {
        let g = grid();
        let cfg = KdeConfig::new(300.0, 2, 7.0).unwrap();
        assert!(hawkes_equivalence_check::<f64>(&[], &g, 20.0, &cfg));
        let mut ev = random_events(5, 100, 30.0);
        assert!(hawkes_equivalence_check(&ev, &g, 21.0, &cfg));
        // Straddle the window start, then move across it.
        ev[0].t_days = 14.0;
        assert!(hawkes_equivalence_check(&ev, &g, 21.0, &cfg));
        ev[0].t_days = 13.999;
        assert!(hawkes_equivalence_check(&ev, &g, 21.0, &cfg));
        ev[1].t_days = 21.0;
        assert!(hawkes_equivalence_check(&ev, &g, 21.0, &cfg));
    }

    #[test]
    fn csv_export() {
        let g = grid();
        let cfg = KdeConfig::new(250.0, 2, 7.0).unwrap();
        let block = kde_feature_block(&random_events(1, 20, 14.0), &g, 14.0, &cfg).unwrap();
        let mut buf = Vec::new();
        write_feature_block(&block, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("flat_id,lag_1,lag_2\n0,"));
        assert_eq!(text.lines().count(), 65);
    }

    proptest! {
        #[test]
        fn future_events_never_change_features(seed in 0u64..1000, t in 30.0..60.0f64) {
            let g = grid();
            let cfg = KdeConfig::new(300.0, 3, 10.0).unwrap();
            let ev = random_events(seed, 80, 90.0);
            let past: Vec<_> = ev.iter().filter(|e| e.t_days < t).cloned().collect();
            let mut with_now = past.clone();
            with_now.push(EventRecord::new("A", t, 1000.0, 1000.0));
            let a = kde_feature_block(&ev, &g, t, &cfg).unwrap();
            prop_assert_eq!(&a, &kde_feature_block(&past, &g, t, &cfg).unwrap());
            prop_assert_eq!(&a, &kde_feature_block(&with_now, &g, t, &cfg).unwrap());
        }

        #[test]
        fn translation_equivariant(seed in 0u64..1000, dx in -1e4..1e4f64, dy in -1e4..1e4f64) {
            let cfg = KdeConfig::new(200.0, 2, 5.0).unwrap();
            let ev = random_events(seed, 30, 10.0);
            let moved: Vec<_> = ev.iter()
                .map(|e| EventRecord::new("A", e.t_days, e.x_ft + dx, e.y_ft + dy))
                .collect();
            for j in 1..=2 {
                let a = kde_lag(&ev, 700.0, 900.0, 10.0, j, &cfg);
                let b = kde_lag(&moved, 700.0 + dx, 900.0 + dy, 10.0, j, &cfg);
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn wider_bandwidth_raises_value(r in 1.0..3000.0f64, l1 in 10.0..1000.0f64, f in 1.01..5.0f64) {
            let ev = vec![EventRecord::new("A", 1.0, 0.0, 0.0)];
            let narrow = KdeConfig::new(l1, 1, 5.0).unwrap();
            let wide = KdeConfig::new(l1 * f, 1, 5.0).unwrap();
            let a = kde_lag(&ev, r, 0.0, 3.0, 1, &narrow);
            let b = kde_lag(&ev, r, 0.0, 3.0, 1, &wide);
            prop_assert!(b > a || (a == 0.0 && b >= 0.0) || b == 1.0);
        }

        #[test]
        fn lags_partition_the_union_window(seed in 0u64..1000, p in 1usize..6, d in 1.0..12.0f64) {
            let ev = random_events(seed, 60, 80.0);
            let cfg = KdeConfig::new(250.0, p, d).unwrap();
            let t = 75.0;
            let sum: f64 = (1..=p).map(|j| kde_lag(&ev, 900.0, 1100.0, t, j, &cfg)).sum();
            let union = KdeConfig::new(250.0, 1, d * p as f64).unwrap();
            let whole = kde_lag(&ev, 900.0, 1100.0, t, 1, &union);
            prop_assert!(rel_diff(sum, whole) <= 1e-12);
        }
    }
}
