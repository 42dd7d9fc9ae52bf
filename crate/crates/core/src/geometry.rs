//! Rotated rectangular tessellation of a planar study region.
//!
//! A [`GridSpec`] is a rigid transform of an axis-aligned lattice: a world point
//! `p` has lattice coordinates `R(-θ)·(p - origin)`, where `origin` is the world
//! position of the lower-left corner of cell `(0, 0)`. Cells are half-open
//! `[lo, hi)` in lattice coordinates, except that the outermost edges of the
//! lattice are closed so the full coverage rectangle is claimed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Smallest competition cell area in square feet.
pub const MIN_CELL_AREA_SQFT: f64 = 62_500.0;
/// Largest competition cell area in square feet.
pub const MAX_CELL_AREA_SQFT: f64 = 360_000.0;
pub const SQFT_PER_SQMI: f64 = 27_878_400.0;

/// Slack, in cell units, for points sitting on the outer edge of the lattice.
const EDGE_SLACK: f64 = 1e-9;

/// Whether competition area limits are enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaPolicy {
    #[default]
    Competition,
    /// Accept any positive cell or selection area.
    Override,
}

/// Axis-aligned bounding box of the study area, in projected feet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct StudyRegion<T> {
    pub min_x: T,
    pub min_y: T,
    pub max_x: T,
    pub max_y: T,
    pub total_area_sqft: T,
}

impl<T: Real> StudyRegion<T> {
    pub fn new(min_x: T, min_y: T, max_x: T, max_y: T, total_area_sqft: T) -> Result<Self> {
        let region = Self {
            min_x,
            min_y,
            max_x,
            max_y,
            total_area_sqft,
        };
        region.validate()?;
        Ok(region)
    }

    /// Region whose area is its whole bounding box.
    pub fn from_bounds(min_x: T, min_y: T, max_x: T, max_y: T) -> Result<Self> {
        Self::new(min_x, min_y, max_x, max_y, (max_x - min_x) * (max_y - min_y))
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.min_x, self.min_y, self.max_x, self.max_y, self.total_area_sqft]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("region coordinates must be finite".into()));
        }
        if self.max_x <= self.min_x || self.max_y <= self.min_y {
            return Err(Error::InvalidArgument(format!(
                "empty region [{}, {}] x [{}, {}]",
                self.min_x, self.max_x, self.min_y, self.max_y
            )));
        }
        if self.total_area_sqft <= T::zero() {
            return Err(Error::InvalidArgument("region area must be positive".into()));
        }
        // A little slack for areas computed from the same bounds in another width.
        if self.total_area_sqft > self.bbox_area() * T::of(1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "region area {} exceeds its bounding box {}",
                self.total_area_sqft,
                self.bbox_area()
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> T {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> T {
        self.max_y - self.min_y
    }

    pub fn bbox_area(&self) -> T {
        self.width() * self.height()
    }

    pub fn centroid(&self) -> (T, T) {
        let half = T::of(0.5);
        ((self.min_x + self.max_x) * half, (self.min_y + self.max_y) * half)
    }

    pub fn contains(&self, x: T, y: T) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

/// Integer address of a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub col: usize,
    pub row: usize,
    pub flat_id: usize,
}

/// A rotated rectangular lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GridSpec<T> {
    pub cell_w_ft: T,
    pub cell_h_ft: T,
    pub rotation_rad: T,
    pub origin_x: T,
    pub origin_y: T,
    pub n_cols: usize,
    pub n_rows: usize,
}

/// Check a cell size against the competition bounds.
pub fn check_cell_area<T: Real>(cell_w_ft: T, cell_h_ft: T, policy: AreaPolicy) -> Result<()> {
    if !(cell_w_ft > T::zero() && cell_h_ft > T::zero())
        || !cell_w_ft.is_finite()
        || !cell_h_ft.is_finite()
    {
        return Err(Error::InvalidArgument(format!(
            "cell dimensions must be positive, got {cell_w_ft} x {cell_h_ft}"
        )));
    }
    let area = cell_w_ft.as_f64() * cell_h_ft.as_f64();
    if policy == AreaPolicy::Competition && !(MIN_CELL_AREA_SQFT..=MAX_CELL_AREA_SQFT).contains(&area)
    {
        return Err(Error::Constraint(format!(
            "cell area {area} sq ft outside [{MIN_CELL_AREA_SQFT}, {MAX_CELL_AREA_SQFT}]"
        )));
    }
    Ok(())
}

/// Smallest cell count covering `extent`, tolerant of rounding in `extent`.
fn cover_count(extent: f64, cell: f64) -> usize {
    let q = extent / cell;
    ((q * (1.0 - 1e-12)).ceil() as usize).max(1)
}

/// Build the minimal lattice of `cell_w_ft x cell_h_ft` cells, rotated by
/// `rotation_rad` about the region centroid, that covers the region's bounding box.
pub fn build_grid<T: Real>(
    region: &StudyRegion<T>,
    cell_w_ft: T,
    cell_h_ft: T,
    rotation_rad: T,
    policy: AreaPolicy,
) -> Result<GridSpec<T>> {
    region.validate()?;
    check_cell_area(cell_w_ft, cell_h_ft, policy)?;
    check_rotation(rotation_rad)?;

    let (cx, cy) = region.centroid();
    let half_w = region.width().as_f64() / 2.0;
    let half_h = region.height().as_f64() / 2.0;
    let theta = rotation_rad.as_f64();
    let (s, c) = theta.sin_cos();
    // Half extents of the bounding box seen from the rotated frame.
    let half_u = half_w * c.abs() + half_h * s.abs();
    let half_v = half_w * s.abs() + half_h * c.abs();
    let n_cols = cover_count(2.0 * half_u, cell_w_ft.as_f64());
    let n_rows = cover_count(2.0 * half_v, cell_h_ft.as_f64());

    let mut grid = GridSpec {
        cell_w_ft,
        cell_h_ft,
        rotation_rad,
        origin_x: cx,
        origin_y: cy,
        n_cols,
        n_rows,
    };
    // Centre the lattice on the pivot: its lower-left corner sits half the lattice
    // size down and left of the centroid, in the rotated frame.
    let two = T::of(2.0);
    let corner_u = -(T::from_usize(n_cols).unwrap() * cell_w_ft) / two;
    let corner_v = -(T::from_usize(n_rows).unwrap() * cell_h_ft) / two;
    let (ox, oy) = grid.to_world(corner_u, corner_v);
    grid.origin_x = ox;
    grid.origin_y = oy;
    Ok(grid)
}

fn check_rotation<T: Real>(rotation_rad: T) -> Result<()> {
    let r = rotation_rad.as_f64();
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&r) {
        return Err(Error::InvalidArgument(format!(
            "rotation {r} rad outside [0, pi/2)"
        )));
    }
    Ok(())
}

impl<T: Real> GridSpec<T> {
    pub fn validate(&self, policy: AreaPolicy) -> Result<()> {
        check_cell_area(self.cell_w_ft, self.cell_h_ft, policy)?;
        check_rotation(self.rotation_rad)?;
        if self.n_cols == 0 || self.n_rows == 0 {
            return Err(Error::InvalidArgument("grid needs at least one cell".into()));
        }
        if !(self.origin_x.is_finite() && self.origin_y.is_finite()) {
            return Err(Error::InvalidArgument("grid origin must be finite".into()));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_cols * self.n_rows
    }

    pub fn cell_area(&self) -> T {
        self.cell_w_ft * self.cell_h_ft
    }

    /// World to lattice frame: rotate by `-rotation_rad` about the origin.
    pub fn to_lattice(&self, x: T, y: T) -> (T, T) {
        let (s, c) = self.rotation_rad.sin_cos();
        let dx = x - self.origin_x;
        let dy = y - self.origin_y;
        (c * dx + s * dy, -s * dx + c * dy)
    }

    /// Lattice to world frame.
    pub fn to_world(&self, u: T, v: T) -> (T, T) {
        let (s, c) = self.rotation_rad.sin_cos();
        (self.origin_x + c * u - s * v, self.origin_y + s * u + c * v)
    }

    pub fn cell(&self, col: usize, row: usize) -> Result<CellIndex> {
        if col >= self.n_cols || row >= self.n_rows {
            return Err(Error::InvalidCell(format!(
                "({col}, {row}) in a {}x{} grid",
                self.n_cols, self.n_rows
            )));
        }
        Ok(CellIndex {
            col,
            row,
            flat_id: row * self.n_cols + col,
        })
    }

    pub fn cell_from_flat(&self, flat_id: usize) -> Result<CellIndex> {
        if flat_id >= self.n_cells() {
            return Err(Error::InvalidCell(format!(
                "flat id {flat_id} >= {}",
                self.n_cells()
            )));
        }
        Ok(CellIndex {
            col: flat_id % self.n_cols,
            row: flat_id / self.n_cols,
            flat_id,
        })
    }

    fn check(&self, cell: CellIndex) -> Result<()> {
        let expected = self.cell(cell.col, cell.row)?;
        if expected.flat_id != cell.flat_id {
            return Err(Error::InvalidCell(format!(
                "flat id {} does not match ({}, {})",
                cell.flat_id, cell.col, cell.row
            )));
        }
        Ok(())
    }

    /// Cell containing a world point.
    pub fn point_to_cell(&self, x: T, y: T) -> Result<CellIndex> {
        let (u, v) = self.to_lattice(x, y);
        let col = axis_index(u / self.cell_w_ft, self.n_cols);
        let row = axis_index(v / self.cell_h_ft, self.n_rows);
        match (col, row) {
            (Some(col), Some(row)) => self.cell(col, row),
            _ => Err(Error::OutOfBounds {
                x: x.as_f64(),
                y: y.as_f64(),
            }),
        }
    }

    /// Like [`Self::point_to_cell`] but `None` when outside the coverage.
    pub fn try_point_to_cell(&self, x: T, y: T) -> Option<CellIndex> {
        self.point_to_cell(x, y).ok()
    }

    pub fn cell_centroid(&self, cell: CellIndex) -> Result<(T, T)> {
        self.check(cell)?;
        let half = T::of(0.5);
        let u = (T::from_usize(cell.col).unwrap() + half) * self.cell_w_ft;
        let v = (T::from_usize(cell.row).unwrap() + half) * self.cell_h_ft;
        Ok(self.to_world(u, v))
    }

    /// Centroids of every cell in flat-id order.
    pub fn centroids(&self) -> Vec<(T, T)> {
        (0..self.n_cells())
            .map(|id| {
                self.cell_centroid(self.cell_from_flat(id).expect("in range"))
                    .expect("valid cell")
            })
            .collect()
    }

    /// Corners of a cell in world coordinates, counterclockwise from the
    /// lattice lower-left corner.
    pub fn cell_polygon(&self, cell: CellIndex) -> Result<[(T, T); 4]> {
        self.check(cell)?;
        let u0 = T::from_usize(cell.col).unwrap() * self.cell_w_ft;
        let v0 = T::from_usize(cell.row).unwrap() * self.cell_h_ft;
        let u1 = u0 + self.cell_w_ft;
        let v1 = v0 + self.cell_h_ft;
        Ok([
            self.to_world(u0, v0),
            self.to_world(u1, v0),
            self.to_world(u1, v1),
            self.to_world(u0, v1),
        ])
    }

    pub fn cell_wkt(&self, cell: CellIndex) -> Result<String> {
        Ok(polygon_wkt(&self.cell_polygon(cell)?))
    }
}

fn axis_index<T: Real>(scaled: T, n: usize) -> Option<usize> {
    let s = scaled.as_f64();
    if !s.is_finite() {
        return None;
    }
    let n_f = n as f64;
    if s >= 0.0 && s < n_f {
        // floor may round up to n for s just below n
        return Some((s.floor() as usize).min(n - 1));
    }
    if s < 0.0 && s >= -EDGE_SLACK {
        return Some(0);
    }
    if s >= n_f && s <= n_f + EDGE_SLACK {
        return Some(n - 1);
    }
    None
}

/// Signed shoelace area; positive for counterclockwise rings.
pub fn polygon_area<T: Real>(vertices: &[(T, T)]) -> T {
    let n = vertices.len();
    let mut twice = T::zero();
    for i in 0..n {
        let (x0, y0) = vertices[i];
        let (x1, y1) = vertices[(i + 1) % n];
        twice = twice + (x0 * y1 - x1 * y0);
    }
    twice / T::of(2.0)
}

/// `POLYGON ((x y, ...))` with the ring closed.
pub fn polygon_wkt<T: Real>(vertices: &[(T, T)]) -> String {
    let mut ring: Vec<String> = vertices.iter().map(|(x, y)| format!("{x} {y}")).collect();
    if let Some(first) = ring.first().cloned() {
        ring.push(first);
    }
    format!("POLYGON (({}))", ring.join(", "))
}

/// Optional polygon limiting which cells take part in training and selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RegionMask<T> {
    pub vertices: Vec<(T, T)>,
}

impl<T: Real> RegionMask<T> {
    pub fn new(vertices: Vec<(T, T)>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidArgument("mask polygon needs 3+ vertices".into()));
        }
        Ok(Self { vertices })
    }

    pub fn contains(&self, x: T, y: T) -> bool {
        point_in_polygon(&self.vertices, x, y)
    }

    /// Per-cell activity flags: a cell is inactive only when it lies wholly
    /// outside the mask.
    pub fn active_cells(&self, grid: &GridSpec<T>) -> Vec<bool> {
        (0..grid.n_cells())
            .map(|id| {
                let cell = grid.cell_from_flat(id).expect("in range");
                let poly = grid.cell_polygon(cell).expect("valid cell");
                polygons_overlap(&poly, &self.vertices)
            })
            .collect()
    }
}

/// Activity flags for an optional mask; every cell is active without one.
pub fn active_cells<T: Real>(grid: &GridSpec<T>, mask: Option<&RegionMask<T>>) -> Vec<bool> {
    match mask {
        Some(m) => m.active_cells(grid),
        None => vec![true; grid.n_cells()],
    }
}

fn point_in_polygon<T: Real>(poly: &[(T, T)], x: T, y: T) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn orient<T: Real>(a: (T, T), b: (T, T), c: (T, T)) -> T {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn segments_cross<T: Real>(p1: (T, T), p2: (T, T), q1: (T, T), q2: (T, T)) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    let zero = T::zero();
    ((d1 > zero && d2 < zero) || (d1 < zero && d2 > zero))
        && ((d3 > zero && d4 < zero) || (d3 < zero && d4 > zero))
}

fn polygons_overlap<T: Real>(a: &[(T, T)], b: &[(T, T)]) -> bool {
    if a.iter().any(|&(x, y)| point_in_polygon(b, x, y))
        || b.iter().any(|&(x, y)| point_in_polygon(a, x, y))
    {
        return true;
    }
    for i in 0..a.len() {
        let (a1, a2) = (a[i], a[(i + 1) % a.len()]);
        for j in 0..b.len() {
            if segments_cross(a1, a2, b[j], b[(j + 1) % b.len()]) {
                return true;
            }
        }
    }
    false
}
