//! Static SVG renderings. Coordinates are printed with fixed precision so the
//! output is byte-stable.

use std::fmt::Write;

use rffcast::Grid;

const CANVAS: f64 = 800.0;
const MARGIN: f64 = 20.0;

pub const TRUE_POSITIVE: &str = "#2e9e44";
pub const FALSE_NEGATIVE: &str = "#d7301f";
pub const FALSE_POSITIVE: &str = "#3366cc";

/// Cell map of a forecast. With truth, selected cells that saw events are
/// green, missed cells with events red, and selected cells without events
/// blue; without truth every selected cell is blue.
pub fn forecast_map(grid: &Grid, chosen: &[usize], truth: Option<&[u32]>) -> String {
    let polys: Vec<[(f64, f64); 4]> = (0..grid.n_cells())
        .map(|id| grid.cell_polygon(grid.cell_from_flat(id).expect("in range")).expect("valid"))
        .collect();
    let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &(x, y) in polys.iter().flatten() {
        lo_x = lo_x.min(x);
        lo_y = lo_y.min(y);
        hi_x = hi_x.max(x);
        hi_y = hi_y.max(y);
    }
    let scale = (CANVAS - 2.0 * MARGIN) / (hi_x - lo_x).max(hi_y - lo_y);
    let width = (hi_x - lo_x) * scale + 2.0 * MARGIN;
    let height = (hi_y - lo_y) * scale + 2.0 * MARGIN;
    let project = |(x, y): (f64, f64)| (MARGIN + (x - lo_x) * scale, MARGIN + (hi_y - y) * scale);

    let mut selected = vec![false; grid.n_cells()];
    for &id in chosen {
        selected[id] = true;
    }
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.2} {height:.2}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    for (id, poly) in polys.iter().enumerate() {
        let hit = truth.is_some_and(|t| t[id] > 0);
        let fill = match (selected[id], truth.is_some(), hit) {
            (true, true, true) => TRUE_POSITIVE,
            (true, _, _) => FALSE_POSITIVE,
            (false, true, true) => FALSE_NEGATIVE,
            _ => "none",
        };
        let points: Vec<String> = poly
            .iter()
            .map(|&p| {
                let (x, y) = project(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        writeln!(
            out,
            r##"<polygon points="{}" fill="{fill}" stroke="#bbbbbb" stroke-width="0.3"/>"##,
            points.join(" ")
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

/// Mean approximation error against `d` on a log-scaled x axis.
pub fn error_curve(points: &[(usize, f64)]) -> String {
    let (w, h) = (640.0, 400.0);
    let pad = 50.0;
    let lx: Vec<f64> = points.iter().map(|p| (p.0.max(1) as f64).log10()).collect();
    let (x0, x1) = (lx.iter().copied().fold(f64::MAX, f64::min), lx.iter().copied().fold(f64::MIN, f64::max));
    let ymax = points.iter().map(|p| p.1).fold(0.0, f64::max).max(1e-12);
    let sx = |v: f64| pad + if x1 > x0 { (v - x0) / (x1 - x0) } else { 0.5 } * (w - 2.0 * pad);
    let sy = |v: f64| h - pad - v / ymax * (h - 2.0 * pad);
    let mut out = String::new();
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<path d="M {pad} {b} L {r} {b} M {pad} {b} L {pad} {pad}" stroke="black" fill="none"/>"#,
        b = h - pad,
        r = w - pad
    )
    .unwrap();
    let path: Vec<String> = points
        .iter()
        .zip(&lx)
        .map(|(p, &x)| format!("{:.2},{:.2}", sx(x), sy(p.1)))
        .collect();
    writeln!(out, r#"<polyline points="{}" stroke="{FALSE_POSITIVE}" fill="none" stroke-width="2"/>"#, path.join(" ")).unwrap();
    for (p, &x) in points.iter().zip(&lx) {
        writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{FALSE_POSITIVE}"/><text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            sx(x),
            sy(p.1),
            sx(x),
            h - pad + 16.0,
            p.0
        )
        .unwrap();
    }
    writeln!(out, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">random features d</text>"#, w / 2.0, h - 8.0).unwrap();
    writeln!(out, r#"<text x="14" y="{pad}" font-size="12">mean |error| (max {ymax:.4})</text>"#).unwrap();
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rffcast::geometry::{build_grid, AreaPolicy, StudyRegion};

    #[test]
    fn colors_follow_truth() {
        let region = StudyRegion::from_bounds(0.0, 0.0, 1000.0, 500.0).unwrap();
        let grid = build_grid(&region, 500.0, 500.0, 0.0, AreaPolicy::Competition).unwrap();
        let svg = forecast_map(&grid, &[0], Some(&[3, 1]));
        assert!(svg.contains(TRUE_POSITIVE) && svg.contains(FALSE_NEGATIVE));
        let svg = forecast_map(&grid, &[0, 1], Some(&[0, 2]));
        assert!(svg.contains(FALSE_POSITIVE) && svg.contains(TRUE_POSITIVE));
        let plain = forecast_map(&grid, &[1], None);
        assert!(plain.contains(FALSE_POSITIVE) && !plain.contains(TRUE_POSITIVE));
        assert_eq!(plain, forecast_map(&grid, &[1], None));
    }

    #[test]
    fn curve_has_every_point() {
        let svg = error_curve(&[(5, 0.2), (50, 0.07), (500, 0.02)]);
        assert_eq!(svg.matches("<circle").count(), 3);
    }
}
