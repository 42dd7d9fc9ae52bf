//! Hotspot selection under an area budget, and hit rate / PAI / PEI scoring.

use std::cmp::Ordering;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AreaPolicy, GridSpec, SQFT_PER_SQMI};
use crate::scalar::Real;

/// Smallest total forecast area, square feet (0.25 sq mi).
pub const MIN_SELECTION_SQFT: f64 = 0.25 * SQFT_PER_SQMI;
/// Largest total forecast area, square feet (0.75 sq mi).
pub const MAX_SELECTION_SQFT: f64 = 0.75 * SQFT_PER_SQMI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Chosen flat ids, ascending.
    pub chosen: Vec<usize>,
    pub total_area_sqft: f64,
    pub coverage_param: f64,
}

impl Selection {
    pub fn k(&self) -> usize {
        self.chosen.len()
    }
}

/// Number of cells for a coverage parameter: `floor(target / cell_area)`,
/// raised to `ceil(min / cell_area)` when that falls under the minimum area.
pub fn cells_for_coverage(cell_area_sqft: f64, coverage_param: f64, policy: AreaPolicy) -> Result<usize> {
    if !(0.0..=1.0).contains(&coverage_param) {
        return Err(Error::InvalidArgument(format!(
            "coverage parameter {coverage_param} outside [0, 1]"
        )));
    }
    if !(cell_area_sqft > 0.0) {
        return Err(Error::InvalidArgument("cell area must be positive".into()));
    }
    let target = MIN_SELECTION_SQFT + coverage_param * (MAX_SELECTION_SQFT - MIN_SELECTION_SQFT);
    // Guard against quotients like 3.9999999 that are integers in exact arithmetic.
    let snap = |q: f64| if (q - q.round()).abs() <= 1e-9 * q.abs().max(1.0) { q.round() } else { q };
    let mut k = snap(target / cell_area_sqft).floor() as usize;
    if (k as f64) * cell_area_sqft < MIN_SELECTION_SQFT {
        k = snap(MIN_SELECTION_SQFT / cell_area_sqft).ceil() as usize;
    }
    let area = k as f64 * cell_area_sqft;
    if policy == AreaPolicy::Competition && area > MAX_SELECTION_SQFT * (1.0 + 1e-12) {
        return Err(Error::Constraint(format!(
            "{k} cells of {cell_area_sqft} sq ft exceed the maximum forecast area"
        )));
    }
    Ok(k.max(1))
}

/// Indices of the `k` largest values among active entries; ties go to the
/// smaller index. NaN intensities are rejected.
pub fn top_k<T: Real>(values: &[T], k: usize, active: Option<&[bool]>) -> Result<Vec<usize>> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical("NaN intensity".into()));
    }
    let mut ids: Vec<usize> = (0..values.len())
        .filter(|&i| active.is_none_or(|a| a[i]))
        .collect();
    if k > ids.len() {
        return Err(Error::Constraint(format!(
            "need {k} cells but only {} are active",
            ids.len()
        )));
    }
    ids.sort_by(|&i, &j| {
        values[j]
            .partial_cmp(&values[i])
            .unwrap_or(Ordering::Equal)
            .then(i.cmp(&j))
    });
    ids.truncate(k);
    ids.sort_unstable();
    Ok(ids)
}

/// Choose the highest-intensity active cells for a coverage parameter.
pub fn select_hotspots<T: Real>(
    intensities: &[T],
    grid: &GridSpec<T>,
    coverage_param: f64,
    active: Option<&[bool]>,
    policy: AreaPolicy,
) -> Result<Selection> {
    if intensities.len() != grid.n_cells() || active.is_some_and(|a| a.len() != grid.n_cells()) {
        return Err(Error::Dimension(format!(
            "{} intensities for {} cells",
            intensities.len(),
            grid.n_cells()
        )));
    }
    let cell_area = grid.cell_area().as_f64();
    let k = cells_for_coverage(cell_area, coverage_param, policy)?;
    let chosen = top_k(intensities, k, active)?;
    Ok(Selection {
        total_area_sqft: k as f64 * cell_area,
        chosen,
        coverage_param,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// Events inside chosen cells.
    pub n: u64,
    /// Best achievable with the same number of cells.
    pub n_star: u64,
    /// All events in the window.
    pub total: u64,
    pub hit_rate: f64,
    pub pai: f64,
    pub pei: f64,
    pub area_sqft: f64,
    pub region_area_sqft: f64,
    /// `n_star = 0`, so `pei` was set to 1 by convention.
    pub pei_vacuous: bool,
}

/// Score a selection against realized counts (one per cell, flat-id order).
/// Inactive cells, when a mask is given, cannot contribute to `n_star`.
pub fn score(
    selection: &Selection,
    actual_counts: &[u32],
    active: Option<&[bool]>,
    region_area_sqft: f64,
) -> Result<ScoreReport> {
    if let Some(&bad) = selection.chosen.iter().find(|&&id| id >= actual_counts.len()) {
        return Err(Error::Dimension(format!(
            "selected cell {bad} but only {} counts",
            actual_counts.len()
        )));
    }
    if active.is_some_and(|a| a.len() != actual_counts.len()) {
        return Err(Error::Dimension("activity mask does not match counts".into()));
    }
    if !(region_area_sqft > 0.0) {
        return Err(Error::InvalidArgument("region area must be positive".into()));
    }
    let n: u64 = selection.chosen.iter().map(|&id| actual_counts[id] as u64).sum();
    let total: u64 = actual_counts.iter().map(|&c| c as u64).sum();
    let eligible: Vec<u32> = match active {
        Some(a) => actual_counts.iter().zip(a).filter(|(_, on)| **on).map(|(c, _)| *c).collect(),
        None => actual_counts.to_vec(),
    };
    let n_star = oracle_score(selection.k(), &eligible);
    let hit_rate = if total == 0 { 0.0 } else { n as f64 / total as f64 };
    let area_fraction = selection.total_area_sqft / region_area_sqft;
    let pai = if area_fraction > 0.0 { hit_rate / area_fraction } else { 0.0 };
    let (pei, pei_vacuous) = if n_star == 0 { (1.0, true) } else { (n as f64 / n_star as f64, false) };
    Ok(ScoreReport {
        n,
        n_star,
        total,
        hit_rate,
        pai,
        pei,
        area_sqft: selection.total_area_sqft,
        region_area_sqft,
        pei_vacuous,
    })
}

/// Largest count capturable by any `k` cells: the sum of the `k` largest.
pub fn oracle_score(k: usize, counts: &[u32]) -> u64 {
    let mut sorted: Vec<u32> = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let fast: u64 = sorted.iter().take(k).map(|&c| c as u64).sum();
    if counts.len() <= 20 {
        debug_assert_eq!(fast, exhaustive_best(k, counts).0);
    }
    fast
}

/// Brute force over every `k`-subset (first maximizer in lexicographic order).
pub fn exhaustive_best(k: usize, counts: &[u32]) -> (u64, Vec<usize>) {
    let k = k.min(counts.len());
    let mut best = (0u64, (0..k).collect::<Vec<_>>());
    let mut first = true;
    for subset in (0..counts.len()).combinations(k) {
        let total: u64 = subset.iter().map(|&i| counts[i] as u64).sum();
        if first || total > best.0 {
            best = (total, subset);
            first = false;
        }
    }
    best
}
