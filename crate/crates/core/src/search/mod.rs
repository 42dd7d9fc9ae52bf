//! Cross-validation over yearly held-out windows and hyperparameter search.

pub mod bo;

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Datelike, NaiveDate};
use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::HyperParams;
use crate::error::{Error, Result};
use crate::events::EventRecord;
use crate::pipeline::{leakage_check, train, EvalSettings, LeakageCheck};
use crate::stats::{mean, sample_std};

pub use bo::BoConfig;

/// The days covered by a dataset, `[start_day, end_day)` relative to `epoch`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpan {
    pub epoch: NaiveDate,
    pub start_day: i64,
    pub end_day: i64,
}

impl DatasetSpan {
    pub fn date(&self, day: i64) -> NaiveDate {
        self.epoch + chrono::Duration::days(day)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub year: i32,
    /// Training reads events strictly before this day.
    pub validation_start: f64,
    pub validation_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: Vec<Fold>,
    pub horizon_days: f64,
}

/// Month and day of a 1-based day of year, counted in a non-leap year so the
/// window starts on the same calendar date every year.
fn month_day(day_of_year: u32) -> Result<(u32, u32)> {
    let d = NaiveDate::from_yo_opt(2019, day_of_year).ok_or_else(|| {
        Error::InvalidArgument(format!("day of year {day_of_year} outside 1..=365"))
    })?;
    Ok((d.month(), d.day()))
}

/// One fold per year whose window `[t0, t0 + window)` lies inside the span,
/// with some data before `t0`.
pub fn build_cv_plan(span: &DatasetSpan, window_days: f64, start_day_of_year: u32) -> Result<CvPlan> {
    if !(window_days > 0.0) {
        return Err(Error::InvalidArgument("forecast window must be positive".into()));
    }
    if window_days > 365.0 {
        return Err(Error::InvalidArgument(format!(
            "forecast window of {window_days} days exceeds a year"
        )));
    }
    if span.end_day - span.start_day < 730 {
        return Err(Error::InvalidArgument("cross-validation needs at least two years of data".into()));
    }
    let (month, day) = month_day(start_day_of_year)?;
    let first = span.date(span.start_day).year();
    let last = span.date(span.end_day).year();
    let folds: Vec<Fold> = (first..=last)
        .filter_map(|year| {
            let date = NaiveDate::from_ymd_opt(year, month, day)?;
            let t0 = (date - span.epoch).num_days();
            let end = t0 as f64 + window_days;
            (t0 > span.start_day && end <= span.end_day as f64).then_some(Fold {
                year,
                validation_start: t0 as f64,
                validation_end: end,
            })
        })
        .collect();
    if folds.is_empty() {
        return Err(Error::InvalidArgument("no complete validation window in the span".into()));
    }
    Ok(CvPlan {
        folds,
        horizon_days: window_days,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Grid,
    Bo,
    Fixed,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Grid => "grid",
            Provenance::Bo => "bo",
            Provenance::Fixed => "fixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub hyper: HyperParams,
    pub fold_peis: Vec<f64>,
    pub mean_pei: f64,
    pub provenance: Provenance,
    /// Why the candidate scored zero without being evaluated, if it did.
    pub infeasible: Option<String>,
    /// Standardized mean PEI within the ranked population.
    pub z_score: Option<f64>,
}

/// Cross-validated PEI of one candidate. Failures score zero on every fold.
pub fn evaluate_candidate(
    hyper: &HyperParams,
    events: &[EventRecord<f64>],
    plan: &CvPlan,
    settings: &EvalSettings,
    provenance: Provenance,
) -> SearchResult {
    let folds: Result<Vec<f64>> = plan
        .folds
        .iter()
        .map(|fold| {
            let model = train(events, fold.validation_start, plan.horizon_days, hyper, settings)?;
            let (_, report) = model.forecast_and_score(events, fold.validation_start, settings.region_area_sqft)?;
            Ok(report.pei)
        })
        .collect();
    match folds {
        Ok(fold_peis) => SearchResult {
            hyper: hyper.clone(),
            mean_pei: mean(&fold_peis),
            fold_peis,
            provenance,
            infeasible: None,
            z_score: None,
        },
        Err(e) => SearchResult {
            hyper: hyper.clone(),
            fold_peis: vec![0.0; plan.folds.len()],
            mean_pei: 0.0,
            provenance,
            infeasible: Some(e.to_string()),
            z_score: None,
        },
    }
}

/// Leakage audit of every fold: features built from all events must equal
/// those built after deleting events at or after the fold cutoff.
pub fn audit_plan(
    hyper: &HyperParams,
    events: &[EventRecord<f64>],
    plan: &CvPlan,
    settings: &EvalSettings,
) -> Result<Vec<LeakageCheck>> {
    plan.folds
        .iter()
        .map(|f| leakage_check(events, f.validation_start, plan.horizon_days, hyper, settings))
        .collect()
}

fn canonical(h: &HyperParams) -> String {
    serde_json::to_string(h).expect("serializable")
}

/// Sort by mean PEI (descending), then fewer features, smaller total penalty,
/// canonical configuration text and provenance; then attach z-scores.
pub fn rank(mut results: Vec<SearchResult>) -> Vec<SearchResult> {
    results.sort_by(|x, y| {
        y.mean_pei
            .total_cmp(&x.mean_pei)
            .then(x.hyper.n_features().cmp(&y.hyper.n_features()))
            .then((x.hyper.a + x.hyper.b).total_cmp(&(y.hyper.a + y.hyper.b)))
            .then_with(|| canonical(&x.hyper).cmp(&canonical(&y.hyper)))
            .then(x.provenance.cmp(&y.provenance))
    });
    let peis: Vec<f64> = results.iter().map(|r| r.mean_pei).collect();
    let (m, s) = (mean(&peis), sample_std(&peis));
    for r in &mut results {
        r.z_score = (s > 0.0).then(|| (r.mean_pei - m) / s);
    }
    results
}

/// Combined ranking of several searched populations.
pub fn merge(populations: Vec<Vec<SearchResult>>) -> Vec<SearchResult> {
    rank(populations.into_iter().flatten().collect())
}

/// Flat `field -> [values]` search space over [`HyperParams`] fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace(pub BTreeMap<String, Vec<Value>>);

impl SearchSpace {
    pub fn from_json(text: &str) -> Result<Self> {
        let space: Self = serde_json::from_str(text)?;
        let probe = serde_json::to_value(HyperParams::default())?;
        for key in space.0.keys() {
            if probe.get(key).is_none() {
                return Err(Error::InvalidArgument(format!("unknown hyperparameter {key:?}")));
            }
        }
        Ok(space)
    }

    /// Every combination, with fields not listed taken from `base`.
    pub fn candidates(&self, base: &HyperParams) -> Result<Vec<HyperParams>> {
        if self.0.is_empty() || self.0.values().any(|v| v.is_empty()) {
            return Err(Error::InvalidArgument("search space has an empty product".into()));
        }
        let base = serde_json::to_value(base)?;
        self.0
            .values()
            .map(|vals| vals.iter())
            .multi_cartesian_product()
            .map(|combo| {
                let mut obj = base.clone();
                for (key, val) in self.0.keys().zip(combo) {
                    obj[key] = val.clone();
                }
                Ok(serde_json::from_value(obj)?)
            })
            .collect()
    }
}

/// Evaluate every grid combination on a pool of `parallelism` threads.
pub fn grid_search(
    space: &SearchSpace,
    base: &HyperParams,
    events: &[EventRecord<f64>],
    plan: &CvPlan,
    settings: &EvalSettings,
    parallelism: usize,
) -> Result<Vec<SearchResult>> {
    let candidates = space.candidates(base)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let results = pool.install(|| {
        candidates
            .par_iter()
            .map(|h| evaluate_candidate(h, events, plan, settings, Provenance::Grid))
            .collect()
    });
    Ok(rank(results))
}

const INTEGER_FIELDS: [&str; 3] = ["d", "kde_lags", "seed"];

/// Box bounds for the numeric fields searched by Bayesian optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct BoBounds {
    pub fields: Vec<(String, f64, f64)>,
}

impl BoBounds {
    pub fn new(fields: Vec<(String, f64, f64)>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::InvalidArgument("no bounded fields".into()));
        }
        let probe = serde_json::to_value(HyperParams::default())?;
        for (name, lo, hi) in &fields {
            if !probe.get(name).is_some_and(Value::is_number) {
                return Err(Error::InvalidArgument(format!("{name:?} is not a numeric hyperparameter")));
            }
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!("degenerate bounds [{lo}, {hi}] for {name}")));
            }
        }
        Ok(Self { fields })
    }

    /// Strict form: every entry is exactly `[lo, hi]`.
    pub fn from_space(space: &SearchSpace) -> Result<Self> {
        let fields = space
            .0
            .iter()
            .map(|(k, v)| match v.as_slice() {
                [lo, hi] => match (lo.as_f64(), hi.as_f64()) {
                    (Some(lo), Some(hi)) => Ok((k.clone(), lo, hi)),
                    _ => Err(Error::InvalidArgument(format!("bounds for {k} must be numbers"))),
                },
                _ => Err(Error::InvalidArgument(format!("bounds for {k} must be [lo, hi]"))),
            })
            .collect::<Result<_>>()?;
        Self::new(fields)
    }

    /// Lenient form for merged runs: the range of each grid list. Single-valued
    /// lists are fixed in the returned base instead of searched.
    pub fn envelope(space: &SearchSpace, base: &HyperParams) -> Result<(Self, HyperParams)> {
        let mut fixed = serde_json::to_value(base)?;
        let mut fields = Vec::new();
        for (k, vals) in &space.0 {
            let nums: Vec<f64> = vals.iter().filter_map(Value::as_f64).collect();
            if nums.len() != vals.len() || nums.is_empty() {
                if let [only] = vals.as_slice() {
                    fixed[k] = only.clone();
                    continue;
                }
                return Err(Error::InvalidArgument(format!("{k} cannot be searched continuously")));
            }
            let lo = nums.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = nums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo < hi {
                fields.push((k.clone(), lo, hi));
            } else {
                fixed[k] = vals[0].clone();
            }
        }
        Ok((Self::new(fields)?, serde_json::from_value(fixed)?))
    }

    pub fn dim(&self) -> usize {
        self.fields.len()
    }

    /// Map a point of the unit cube onto a configuration.
    pub fn decode(&self, unit: &[f64], base: &HyperParams) -> Result<HyperParams> {
        let mut obj = serde_json::to_value(base)?;
        for ((name, lo, hi), u) in self.fields.iter().zip(unit) {
            let v = lo + u.clamp(0.0, 1.0) * (hi - lo);
            obj[name] = if INTEGER_FIELDS.contains(&name.as_str()) {
                Value::from(v.round() as u64)
            } else {
                Value::from(v)
            };
        }
        Ok(serde_json::from_value(obj)?)
    }
}

/// Sequential Bayesian optimization of mean cross-validated PEI.
pub fn bayes_opt(
    bounds: &BoBounds,
    base: &HyperParams,
    events: &[EventRecord<f64>],
    plan: &CvPlan,
    settings: &EvalSettings,
    config: &BoConfig,
) -> Result<Vec<SearchResult>> {
    let evals = bo::maximize(bounds.dim(), config, |unit| {
        let result = match bounds.decode(unit, base) {
            Ok(h) => evaluate_candidate(&h, events, plan, settings, Provenance::Bo),
            Err(e) => SearchResult {
                hyper: base.clone(),
                fold_peis: vec![0.0; plan.folds.len()],
                mean_pei: 0.0,
                provenance: Provenance::Bo,
                infeasible: Some(e.to_string()),
                z_score: None,
            },
        };
        (result.mean_pei, result)
    })?;
    Ok(rank(evals.into_iter().map(|e| e.payload).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeiDistribution {
    pub n: usize,
    pub fraction_zero: f64,
    pub max_pei: f64,
    pub mean_pei: f64,
    pub std_pei: f64,
    /// `None` when every PEI is equal.
    pub z_score_of_max: Option<f64>,
}

pub fn pei_distribution_report(results: &[SearchResult]) -> Result<PeiDistribution> {
    if results.len() < 2 {
        return Err(Error::InvalidArgument("need at least two results".into()));
    }
    let peis: Vec<f64> = results.iter().map(|r| r.mean_pei).collect();
    let max_pei = peis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (m, s) = (mean(&peis), sample_std(&peis));
    Ok(PeiDistribution {
        n: peis.len(),
        fraction_zero: peis.iter().filter(|&&p| p == 0.0).count() as f64 / peis.len() as f64,
        max_pei,
        mean_pei: m,
        std_pei: s,
        z_score_of_max: (s > 0.0).then(|| (max_pei - m) / s),
    })
}

/// One CSV row per candidate: rank, provenance, every hyperparameter, fold
/// PEIs, mean, z-score and infeasibility reason.
pub fn write_results<W: Write>(results: &[SearchResult], writer: W) -> Result<()> {
    let n_folds = results.iter().map(|r| r.fold_peis.len()).max().unwrap_or(0);
    let hp_keys: Vec<String> = match serde_json::to_value(HyperParams::default())? {
        Value::Object(m) => m.keys().cloned().collect(),
        _ => unreachable!("struct serializes to an object"),
    };
    let mut header = vec!["rank".to_string(), "provenance".to_string()];
    header.extend(hp_keys.iter().cloned());
    header.extend((1..=n_folds).map(|k| format!("fold_{k}")));
    header.extend(["mean_pei", "z_score", "infeasible"].map(String::from));
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(&header)?;
    for (i, r) in results.iter().enumerate() {
        let hp = serde_json::to_value(&r.hyper)?;
        let mut row = vec![(i + 1).to_string(), r.provenance.name().to_string()];
        row.extend(hp_keys.iter().map(|k| match &hp[k] {
            Value::String(s) => s.clone(),
            v => v.to_string(),
        }));
        row.extend((0..n_folds).map(|k| r.fold_peis.get(k).map(|v| v.to_string()).unwrap_or_default()));
        row.push(r.mean_pei.to_string());
        row.push(r.z_score.map(|z| z.to_string()).unwrap_or_default());
        row.push(r.infeasible.clone().unwrap_or_default());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parameters of the one-lag KDE baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSettings {
    pub bandwidth_ft: f64,
    pub window_days: f64,
}

impl Default for BaselineSettings {
    /// 200 m bandwidth and a two-month window.
    fn default() -> Self {
        Self {
            bandwidth_ft: 656.168,
            window_days: 61.0,
        }
    }
}

/// `(name, configuration)` for the full model and each ablation.
pub fn ablation_variants(full: &HyperParams, baseline: &BaselineSettings) -> Vec<(&'static str, HyperParams)> {
    let kde_baseline = HyperParams {
        kde_lags: 1,
        kde_bandwidth_ft: baseline.bandwidth_ft,
        kde_window_days: baseline.window_days,
        d: 0,
        ..full.clone()
    };
    vec![
        ("full", full.clone()),
        ("kde_baseline", kde_baseline),
        ("no_rff", HyperParams { d: 0, ..full.clone() }),
        ("no_rotation", HyperParams { rotation_rad: 0.0, ..full.clone() }),
        ("fixed_600_cells", HyperParams { cell_w_ft: 600.0, cell_h_ft: 600.0, ..full.clone() }),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub result: SearchResult,
}

/// Every variant on the same folds.
pub fn ablate(
    full: &HyperParams,
    baseline: &BaselineSettings,
    events: &[EventRecord<f64>],
    plan: &CvPlan,
    settings: &EvalSettings,
) -> Vec<AblationRow> {
    ablation_variants(full, baseline)
        .into_par_iter()
        .map(|(name, h)| AblationRow {
            variant: name.to_string(),
            result: evaluate_candidate(&h, events, plan, settings, Provenance::Fixed),
        })
        .collect()
}
