//! Point events and their per-cell, per-period count cubes.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::scalar::Real;

/// One timestamped planar event. `t_days` counts days since the dataset epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EventRecord<T> {
    pub category: String,
    pub t_days: T,
    pub x_ft: T,
    pub y_ft: T,
}

impl<T: Real> EventRecord<T> {
    pub fn new(category: impl Into<String>, t_days: T, x_ft: T, y_ft: T) -> Self {
        Self {
            category: category.into(),
            t_days,
            x_ft,
            y_ft,
        }
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    category: String,
    date: String,
    x_ft: f64,
    y_ft: f64,
}

fn parse_day(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Some(d);
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
        .map(|dt| dt.date())
}

/// Read `category,date,x_ft,y_ft` rows. Times are floored to whole days since
/// `epoch`; rows dated before the epoch are rejected.
pub fn read_events<T: Real, R: Read>(
    reader: R,
    category_filter: Option<&str>,
    epoch: NaiveDate,
) -> Result<Vec<EventRecord<T>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    let mut seen_filter = false;
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        // header is line 1
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let date = parse_day(&row.date).ok_or_else(|| Error::Parse {
            line,
            message: format!("unparseable date {:?}", row.date),
        })?;
        let t = (date - epoch).num_days();
        if t < 0 {
            return Err(Error::Parse {
                line,
                message: format!("date {date} precedes epoch {epoch}"),
            });
        }
        if !(row.x_ft.is_finite() && row.y_ft.is_finite()) {
            return Err(Error::Parse {
                line,
                message: "non-finite coordinate".into(),
            });
        }
        if let Some(filter) = category_filter {
            if row.category != filter {
                continue;
            }
            seen_filter = true;
        }
        out.push(EventRecord::new(
            row.category,
            T::of(t as f64),
            T::of(row.x_ft),
            T::of(row.y_ft),
        ));
    }
    if let (Some(filter), false) = (category_filter, seen_filter) {
        log::warn!("category {filter:?} matched no events");
    }
    Ok(out)
}

pub fn load_events<T: Real>(
    path: impl AsRef<Path>,
    category_filter: Option<&str>,
    epoch: NaiveDate,
) -> Result<Vec<EventRecord<T>>> {
    let file = std::fs::File::open(path.as_ref())?;
    read_events(file, category_filter, epoch)
}

/// Write events in the same CSV layout, dates floored to whole days.
pub fn write_events<T: Real, W: Write>(
    writer: W,
    events: &[EventRecord<T>],
    epoch: NaiveDate,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["category", "date", "x_ft", "y_ft"])?;
    for e in events {
        let day = e.t_days.as_f64().floor() as i64;
        let date = epoch + chrono::Duration::days(day);
        wtr.write_record([
            e.category.clone(),
            date.format("%Y-%m-%d").to_string(),
            e.x_ft.to_string(),
            e.y_ft.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Contiguous periods `[start + p*D, start + (p+1)*D)` for `p = 0..n_periods`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TemporalWindowing<T> {
    pub period_days: T,
    pub horizon_start_day: T,
    pub n_periods: usize,
}

impl<T: Real> TemporalWindowing<T> {
    pub fn new(period_days: T, horizon_start_day: T, n_periods: usize) -> Result<Self> {
        if !(period_days > T::zero() && period_days.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "period length must be positive, got {period_days}"
            )));
        }
        if n_periods == 0 || !horizon_start_day.is_finite() {
            return Err(Error::InvalidArgument("need at least one finite period".into()));
        }
        Ok(Self {
            period_days,
            horizon_start_day,
            n_periods,
        })
    }

    pub fn period_start(&self, p: usize) -> T {
        self.horizon_start_day + T::from_usize(p).unwrap() * self.period_days
    }

    pub fn end(&self) -> T {
        self.period_start(self.n_periods)
    }

    pub fn period_of(&self, t: T) -> Option<usize> {
        if t < self.horizon_start_day || t >= self.end() {
            return None;
        }
        let p = ((t - self.horizon_start_day) / self.period_days)
            .floor()
            .to_usize()?;
        // Division can land one period off at a boundary; settle it exactly.
        let p = p.min(self.n_periods - 1);
        if t < self.period_start(p) {
            Some(p - 1)
        } else if p + 1 < self.n_periods && t >= self.period_start(p + 1) {
            Some(p + 1)
        } else {
            Some(p)
        }
    }
}

/// Event counts indexed by (period, flat cell id).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AggregatedCube<T> {
    pub grid: GridSpec<T>,
    pub windowing: TemporalWindowing<T>,
    counts: Vec<u32>,
    /// Events outside the grid coverage.
    pub dropped_outside_grid: usize,
    /// Events outside every period.
    pub dropped_outside_window: usize,
}

impl<T: Real> AggregatedCube<T> {
    pub fn from_counts(
        grid: GridSpec<T>,
        windowing: TemporalWindowing<T>,
        counts: Vec<u32>,
    ) -> Result<Self> {
        if counts.len() != grid.n_cells() * windowing.n_periods {
            return Err(Error::Dimension(format!(
                "{} counts for {} periods x {} cells",
                counts.len(),
                windowing.n_periods,
                grid.n_cells()
            )));
        }
        Ok(Self {
            grid,
            windowing,
            counts,
            dropped_outside_grid: 0,
            dropped_outside_window: 0,
        })
    }

    pub fn n_periods(&self) -> usize {
        self.windowing.n_periods
    }

    pub fn n_cells(&self) -> usize {
        self.grid.n_cells()
    }

    pub fn get(&self, period: usize, flat_id: usize) -> u32 {
        self.counts[period * self.n_cells() + flat_id]
    }

    /// Counts of one period in flat-id order.
    pub fn period(&self, period: usize) -> &[u32] {
        let n = self.n_cells();
        &self.counts[period * n..(period + 1) * n]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn dropped(&self) -> usize {
        self.dropped_outside_grid + self.dropped_outside_window
    }

    /// One event per count, placed at the cell centroid and period start.
    pub fn expand_to_events(&self, category: &str) -> Vec<EventRecord<T>> {
        let centroids = self.grid.centroids();
        let mut out = Vec::new();
        for p in 0..self.n_periods() {
            let t = self.windowing.period_start(p);
            for (id, &c) in self.period(p).iter().enumerate() {
                let (x, y) = centroids[id];
                out.extend((0..c).map(|_| EventRecord::new(category, t, x, y)));
            }
        }
        out
    }

    /// Long CSV: `period,flat_id,count`, non-zero entries only.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["period", "flat_id", "count"])?;
        for p in 0..self.n_periods() {
            for (id, &c) in self.period(p).iter().enumerate() {
                if c > 0 {
                    wtr.serialize((p, id, c))?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(
        reader: R,
        grid: GridSpec<T>,
        windowing: TemporalWindowing<T>,
    ) -> Result<Self> {
        let n_cells = grid.n_cells();
        let mut counts = vec![0u32; n_cells * windowing.n_periods];
        let mut rdr = csv::Reader::from_reader(reader);
        for (i, row) in rdr.deserialize::<(usize, usize, u32)>().enumerate() {
            let line = i + 2;
            let (p, id, c) = row.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            if p >= windowing.n_periods || id >= n_cells {
                return Err(Error::Parse {
                    line,
                    message: format!("entry ({p}, {id}) outside the cube"),
                });
            }
            counts[p * n_cells + id] = c;
        }
        Self::from_counts(grid, windowing, counts)
    }

    /// Binary layout: magic `RFCB`, then little-endian `u32` version (1),
    /// `u32` periods, `u32` cells, and `periods * cells` `u32` counts in
    /// period-major order.
    pub fn write_binary<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(CUBE_MAGIC)?;
        for v in [1u32, self.n_periods() as u32, self.n_cells() as u32] {
            writer.write_all(&v.to_le_bytes())?;
        }
        for &c in &self.counts {
            writer.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(
        mut reader: R,
        grid: GridSpec<T>,
        windowing: TemporalWindowing<T>,
    ) -> Result<Self> {
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic)?;
        if &magic != CUBE_MAGIC {
            return Err(Error::InvalidArgument("not a count cube file".into()));
        }
        let mut word = [0u8; 4];
        let mut next = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut word)?;
            Ok(u32::from_le_bytes(word))
        };
        let version = next(&mut reader)?;
        let periods = next(&mut reader)? as usize;
        let cells = next(&mut reader)? as usize;
        if version != 1 || periods != windowing.n_periods || cells != grid.n_cells() {
            return Err(Error::Dimension(format!(
                "cube file v{version} {periods}x{cells} does not match {}x{}",
                windowing.n_periods,
                grid.n_cells()
            )));
        }
        let counts = (0..periods * cells)
            .map(|_| next(&mut reader))
            .collect::<Result<Vec<_>>>()?;
        Self::from_counts(grid, windowing, counts)
    }
}

const CUBE_MAGIC: &[u8; 4] = b"RFCB";

/// Count events per (period, cell). Events outside the grid or the windowing
/// are dropped and tallied.
pub fn aggregate<T: Real>(
    events: &[EventRecord<T>],
    grid: &GridSpec<T>,
    windowing: &TemporalWindowing<T>,
) -> AggregatedCube<T> {
    let n_cells = grid.n_cells();
    let len = n_cells * windowing.n_periods;
    let (counts, outside_grid, outside_window) = events
        .par_iter()
        .fold(
            || (vec![0u32; len], 0usize, 0usize),
            |(mut counts, mut og, mut ow), e| {
                match windowing.period_of(e.t_days.floor()) {
                    None => ow += 1,
                    Some(p) => match grid.try_point_to_cell(e.x_ft, e.y_ft) {
                        Some(c) => counts[p * n_cells + c.flat_id] += 1,
                        None => og += 1,
                    },
                }
                (counts, og, ow)
            },
        )
        .reduce(
            || (vec![0u32; len], 0, 0),
            |(mut a, ga, wa), (b, gb, wb)| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                (a, ga + gb, wa + wb)
            },
        );
    AggregatedCube {
        grid: *grid,
        windowing: *windowing,
        counts,
        dropped_outside_grid: outside_grid,
        dropped_outside_window: outside_window,
    }
}

/// Per-cell counts of events with `t_days` in `[start, end)`.
pub fn counts_in_window<T: Real>(
    events: &[EventRecord<T>],
    grid: &GridSpec<T>,
    start: T,
    end: T,
) -> Vec<u32> {
    let mut counts = vec![0u32; grid.n_cells()];
    for e in events {
        let t = e.t_days.floor();
        if t >= start && t < end {
            if let Some(c) = grid.try_point_to_cell(e.x_ft, e.y_ft) {
                counts[c.flat_id] += 1;
            }
        }
    }
    counts
}
