//! Training, forecasting and scoring for one hyperparameter setting.

use std::io::Write;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::config::HyperParams;
use crate::error::{Error, Result};
use crate::events::{counts_in_window, EventRecord};
use crate::geometry::{active_cells, build_grid, AreaPolicy, GridSpec, RegionMask, StudyRegion};
use crate::glm::{self, DesignMatrix, FitReport, ModelParams, OptimizerConfig, RowMeta};
use crate::kde::kde_feature_block;
use crate::metrics::{score, select_hotspots, ScoreReport, Selection};
use crate::rff::{featurize, sample_frequencies, FrequencyMatrix};

/// Everything about an evaluation that is not a hyperparameter.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub region: StudyRegion<f64>,
    /// Denominator of PAI.
    pub region_area_sqft: f64,
    pub mask: Option<RegionMask<f64>>,
    pub policy: AreaPolicy,
    /// Cap on the number of stacked training periods (most recent first).
    pub max_train_periods: Option<usize>,
    pub optimizer: OptimizerConfig,
}

impl EvalSettings {
    pub fn new(region: StudyRegion<f64>) -> Self {
        Self {
            region_area_sqft: region.total_area_sqft,
            region,
            mask: None,
            policy: AreaPolicy::Competition,
            max_train_periods: None,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// Grid, features and activity flags shared by training and prediction.
#[derive(Debug, Clone)]
pub struct Featurizer {
    pub hyper: HyperParams,
    pub grid: GridSpec<f64>,
    pub active: Vec<bool>,
    pub freqs: Option<FrequencyMatrix<f64>>,
}

impl Featurizer {
    pub fn new(hyper: &HyperParams, settings: &EvalSettings) -> Result<Self> {
        hyper.validate(settings.policy)?;
        let grid = build_grid(
            &settings.region,
            hyper.cell_w_ft,
            hyper.cell_h_ft,
            hyper.rotation_rad,
            settings.policy,
        )?;
        let active = active_cells(&grid, settings.mask.as_ref());
        let freqs = hyper.rff_config().map(|c| sample_frequencies(&c)).transpose()?;
        Ok(Self {
            hyper: hyper.clone(),
            grid,
            active,
            freqs,
        })
    }

    /// KDE and RFF blocks for every cell at a period starting on `start`.
    /// Only events strictly before `start` are read. With `d = 0` the RFF
    /// block is a single constant column.
    pub fn features_at(&self, events: &[EventRecord<f64>], start: f64) -> Result<(Array2<f64>, Array2<f64>)> {
        let kde = kde_feature_block(events, &self.grid, start, &self.hyper.kde_config())?;
        let rff = match &self.freqs {
            Some(freqs) => {
                let points = Array2::from_shape_vec(
                    (self.grid.n_cells(), 3),
                    self.grid
                        .centroids()
                        .into_iter()
                        .flat_map(|(x, y)| [x - self.grid.origin_x, y - self.grid.origin_y, start])
                        .collect(),
                )
                .expect("shape matches");
                featurize(points.view(), freqs)?
            }
            // Without random frequencies nothing else can carry the overall
            // level, so keep the zero-frequency feature cos(0) = 1.
            None => Array2::ones((self.grid.n_cells(), 1)),
        };
        Ok((kde, rff))
    }

    /// Starts of the stacked training periods of length `period_days` that end
    /// at or before `cutoff`, newest first.
    pub fn training_starts(&self, cutoff: f64, period_days: f64, max_periods: Option<usize>) -> Vec<f64> {
        let earliest = self.hyper.kde_config().history_days();
        let cap = max_periods.unwrap_or(usize::MAX);
        (1..)
            .map(|k| cutoff - k as f64 * period_days)
            .take_while(|&s| s >= earliest)
            .take(cap)
            .collect()
    }

    /// Stacked design of active cells over the training periods before `cutoff`.
    pub fn training_design(
        &self,
        events: &[EventRecord<f64>],
        cutoff: f64,
        period_days: f64,
        max_periods: Option<usize>,
    ) -> Result<DesignMatrix<f64>> {
        let past: Vec<EventRecord<f64>> = events.iter().filter(|e| e.t_days < cutoff).cloned().collect();
        let starts = self.training_starts(cutoff, period_days, max_periods);
        if starts.is_empty() {
            let cfg = self.hyper.kde_config();
            return Err(Error::InsufficientHistory {
                lags: cfg.n_lags,
                window_days: cfg.window_days,
                earliest_day: cfg.history_days() + period_days,
                requested_day: cutoff,
            });
        }
        let active_ids: Vec<usize> = (0..self.grid.n_cells()).filter(|&i| self.active[i]).collect();
        let mut kde_blocks = Vec::with_capacity(starts.len());
        let mut rff_blocks = Vec::with_capacity(starts.len());
        let mut counts = Vec::new();
        let mut rows = Vec::new();
        for (p, &s) in starts.iter().enumerate() {
            let (kde, rff) = self.features_at(&past, s)?;
            kde_blocks.push(kde.select(Axis(0), &active_ids));
            rff_blocks.push(rff.select(Axis(0), &active_ids));
            let c = counts_in_window(&past, &self.grid, s, s + period_days);
            for &id in &active_ids {
                counts.push(c[id]);
                rows.push(RowMeta { period: p, flat_id: id });
            }
        }
        let stack = |blocks: &[Array2<f64>]| {
            let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
            concatenate(Axis(0), &views).expect("equal widths")
        };
        DesignMatrix::new(stack(&kde_blocks), stack(&rff_blocks), counts, rows)
    }
}

/// A fitted model ready to forecast periods of a fixed length.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub featurizer: Featurizer,
    pub params: ModelParams<f64>,
    pub report: FitReport,
    pub period_days: f64,
    /// Training used events strictly before this day.
    pub cutoff: f64,
    pub policy: AreaPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub start: f64,
    /// Expected count per cell, flat-id order.
    pub intensities: Vec<f64>,
    pub selection: Selection,
}

pub fn train(
    events: &[EventRecord<f64>],
    cutoff: f64,
    period_days: f64,
    hyper: &HyperParams,
    settings: &EvalSettings,
) -> Result<TrainedModel> {
    if !(period_days > 0.0) {
        return Err(Error::InvalidArgument("period length must be positive".into()));
    }
    let featurizer = Featurizer::new(hyper, settings)?;
    let design = featurizer.training_design(events, cutoff, period_days, settings.max_train_periods)?;
    let (params, report) = glm::fit(&design, hyper.a, hyper.b, &settings.optimizer)?;
    if !report.converged {
        log::debug!("fit stopped after {} epochs without converging", report.iterations);
    }
    Ok(TrainedModel {
        featurizer,
        params,
        report,
        period_days,
        cutoff,
        policy: settings.policy,
    })
}

impl TrainedModel {
    /// Predict and select hotspots for the period starting at `start`, using
    /// events strictly before `start`.
    pub fn forecast(&self, events: &[EventRecord<f64>], start: f64) -> Result<Forecast> {
        let f = &self.featurizer;
        let (kde, rff) = f.features_at(events, start)?;
        let design = DesignMatrix::features(kde, rff)?;
        let intensities = glm::predict(&self.params, &design)?.to_vec();
        let selection = select_hotspots(
            &intensities,
            &f.grid,
            f.hyper.coverage_param,
            Some(&f.active),
            self.policy,
        )?;
        Ok(Forecast {
            start,
            intensities,
            selection,
        })
    }

    /// Realized counts in the period starting at `start`.
    pub fn actual_counts(&self, events: &[EventRecord<f64>], start: f64) -> Vec<u32> {
        counts_in_window(events, &self.featurizer.grid, start, start + self.period_days)
    }

    pub fn forecast_and_score(
        &self,
        events: &[EventRecord<f64>],
        start: f64,
        region_area_sqft: f64,
    ) -> Result<(Forecast, ScoreReport)> {
        let fc = self.forecast(events, start)?;
        let actual = self.actual_counts(events, start);
        let report = score(&fc.selection, &actual, Some(&self.featurizer.active), region_area_sqft)?;
        Ok((fc, report))
    }

    pub fn artifact(&self) -> ModelArtifact {
        ModelArtifact {
            gamma: self.params.gamma.to_vec(),
            beta: self.params.beta.to_vec(),
            a: self.params.a,
            b: self.params.b,
            seed: self.featurizer.hyper.seed,
            config_hash: self.featurizer.hyper.config_hash(),
            period_days: self.period_days,
            cutoff_day: self.cutoff,
            fit_report: self.report.clone(),
        }
    }
}

/// Serialized fitted coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub seed: u64,
    pub config_hash: String,
    pub period_days: f64,
    pub cutoff_day: f64,
    pub fit_report: FitReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub window: usize,
    pub start_day: f64,
    pub end_day: f64,
    pub report: ScoreReport,
}

/// Train once before `first_start`, then forecast and score `n_windows`
/// back-to-back windows without refitting.
pub fn rolling(
    events: &[EventRecord<f64>],
    first_start: f64,
    period_days: f64,
    n_windows: usize,
    data_end: f64,
    hyper: &HyperParams,
    settings: &EvalSettings,
) -> Result<Vec<WindowScore>> {
    if n_windows == 0 {
        return Err(Error::InvalidArgument("need at least one window".into()));
    }
    let last_end = first_start + n_windows as f64 * period_days;
    if last_end > data_end {
        return Err(Error::InvalidArgument(format!(
            "{n_windows} windows end on day {last_end} but data stop on day {data_end}"
        )));
    }
    let model = train(events, first_start, period_days, hyper, settings)?;
    (0..n_windows)
        .map(|w| {
            let start = first_start + w as f64 * period_days;
            let (_, report) = model.forecast_and_score(events, start, settings.region_area_sqft)?;
            Ok(WindowScore {
                window: w,
                start_day: start,
                end_day: start + period_days,
                report,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageCheck {
    pub cutoff_day: f64,
    pub training_rows: usize,
    pub identical: bool,
}

/// Rebuild the training design and the forecast features at `cutoff` from
/// events truncated at the cutoff and compare with the full-data build.
pub fn leakage_check(
    events: &[EventRecord<f64>],
    cutoff: f64,
    period_days: f64,
    hyper: &HyperParams,
    settings: &EvalSettings,
) -> Result<LeakageCheck> {
    let f = Featurizer::new(hyper, settings)?;
    let past: Vec<EventRecord<f64>> = events.iter().filter(|e| e.t_days < cutoff).cloned().collect();
    let full = f.training_design(events, cutoff, period_days, settings.max_train_periods)?;
    let cut = f.training_design(&past, cutoff, period_days, settings.max_train_periods)?;
    let fc_full = f.features_at(events, cutoff)?;
    let fc_cut = f.features_at(&past, cutoff)?;
    Ok(LeakageCheck {
        cutoff_day: cutoff,
        training_rows: full.n_rows(),
        identical: full == cut && fc_full == fc_cut,
    })
}

/// `flat_id,col,row,centroid_x,centroid_y,active,intensity,selected`.
pub fn write_predictions<W: Write>(model: &TrainedModel, forecast: &Forecast, writer: W) -> Result<()> {
    let grid = &model.featurizer.grid;
    let mut selected = vec![false; grid.n_cells()];
    for &id in &forecast.selection.chosen {
        selected[id] = true;
    }
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["flat_id", "col", "row", "centroid_x", "centroid_y", "active", "intensity", "selected"])?;
    for (id, (x, y)) in grid.centroids().into_iter().enumerate() {
        let cell = grid.cell_from_flat(id)?;
        wtr.write_record([
            id.to_string(),
            cell.col.to_string(),
            cell.row.to_string(),
            x.to_string(),
            y.to_string(),
            model.featurizer.active[id].to_string(),
            forecast.intensities[id].to_string(),
            selected[id].to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// One `flat_id,wkt` line per selected cell.
pub fn write_selection_wkt<W: Write>(grid: &GridSpec<f64>, selection: &Selection, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["flat_id", "wkt"])?;
    for &id in &selection.chosen {
        wtr.write_record([id.to_string(), grid.cell_wkt(grid.cell_from_flat(id)?)?])?;
    }
    wtr.flush()?;
    Ok(())
}
