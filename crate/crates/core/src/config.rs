//! Hyperparameter configuration and the competition-table converter.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{check_cell_area, AreaPolicy};
use crate::kde::KdeConfig;
use crate::rff::{KernelFamily, RffConfig};

/// Every tunable knob of one forecasting model. Serialized as flat JSON with
/// exactly these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    pub cell_w_ft: f64,
    pub cell_h_ft: f64,
    /// Position between the smallest (0) and largest (1) allowed forecast area.
    pub coverage_param: f64,
    pub spatial_lengthscale_ft: f64,
    pub temporal_lengthscale_days: f64,
    pub rotation_rad: f64,
    /// Random Fourier frequencies; 0 drops the feature block.
    pub d: usize,
    /// ℓ₁ weight.
    pub a: f64,
    /// ℓ₂ weight.
    pub b: f64,
    pub kde_bandwidth_ft: f64,
    pub kde_lags: usize,
    pub kde_window_days: f64,
    pub kernel_family: KernelFamily,
    pub seed: u64,
}

impl Default for HyperParams {
    /// The burglary one-week competition entry.
    fn default() -> Self {
        Self {
            cell_w_ft: 250.0,
            cell_h_ft: 250.0,
            coverage_param: 0.95,
            spatial_lengthscale_ft: 750.0,
            temporal_lengthscale_days: 7.0,
            rotation_rad: 0.0,
            d: 20,
            a: 0.0,
            b: 0.0,
            kde_bandwidth_ft: 250.0,
            kde_lags: 6,
            kde_window_days: 10.0,
            kernel_family: KernelFamily::Matern52,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self, policy: AreaPolicy) -> Result<()> {
        check_cell_area(self.cell_w_ft, self.cell_h_ft, policy)?;
        if !(0.0..=1.0).contains(&self.coverage_param) {
            return Err(Error::InvalidArgument(format!(
                "coverage_param {} outside [0, 1]",
                self.coverage_param
            )));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.rotation_rad) {
            return Err(Error::InvalidArgument(format!(
                "rotation_rad {} outside [0, pi/2)",
                self.rotation_rad
            )));
        }
        if !(self.a >= 0.0 && self.b >= 0.0) {
            return Err(Error::InvalidArgument("penalties must be non-negative".into()));
        }
        self.kde_config().validate()?;
        if let Some(rff) = self.rff_config() {
            rff.validate()?;
        }
        Ok(())
    }

    pub fn kde_config(&self) -> KdeConfig<f64> {
        KdeConfig {
            bandwidth_ft: self.kde_bandwidth_ft,
            n_lags: self.kde_lags,
            window_days: self.kde_window_days,
            cutoff_bandwidths: None,
        }
    }

    /// `None` when the random feature block is disabled (`d = 0`).
    pub fn rff_config(&self) -> Option<RffConfig<f64>> {
        (self.d > 0).then_some(RffConfig {
            d: self.d,
            spatial_lengthscale_ft: self.spatial_lengthscale_ft,
            temporal_lengthscale_days: self.temporal_lengthscale_days,
            kernel_family: self.kernel_family,
            seed: self.seed,
        })
    }

    /// Columns in the design matrix.
    pub fn n_features(&self) -> usize {
        self.kde_lags + 2 * self.d
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("serializable");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One row of the competition hyperparameter table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub hyper: HyperParams,
    pub crime_type: String,
    /// `1w`, `2w`, `1m`, `2m` or `3m`.
    pub forecast_period: String,
}

pub const TABLE_HEADER: [&str; 14] = [
    "horizontal_grid_ft",
    "vertical_grid_ft",
    "coverage_area",
    "spatial_lengthscale_ft",
    "temporal_lengthscale_days",
    "rotation_rad",
    "random_features_d",
    "l1_regularization",
    "l2_regularization",
    "kde_bandwidth_ft",
    "kde_lags",
    "kde_window_days",
    "crime_type",
    "forecast_period",
];

/// Forecast window length for a period label. Months follow the competition
/// calendar starting March 1: March, March-April, March-May.
pub fn period_days(label: &str) -> Option<f64> {
    match label {
        "1w" => Some(7.0),
        "2w" => Some(14.0),
        "1m" => Some(31.0),
        "2m" => Some(61.0),
        "3m" => Some(92.0),
        _ => None,
    }
}

/// Parse a decimal, also accepting the `5-e4` misprint of `5e-4`.
fn parse_number(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<f64>() {
        return Some(v);
    }
    let (mantissa, exp) = raw.split_once("-e")?;
    format!("{mantissa}e-{exp}").parse().ok()
}

/// `"16%"` -> 0.16, shifting the decimal point in text so no rounding is added.
fn parse_percent(raw: &str) -> Option<f64> {
    let body = raw.trim().strip_suffix('%')?;
    body.parse::<f64>().ok()?;
    format!("{body}e-2").parse().ok()
}

/// Plain decimal text of `value * 10^shift`, exact with respect to the
/// shortest representation of `value`.
fn shifted_decimal(value: f64, shift: i32) -> String {
    let sci = format!("{value:e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse::<i32>().expect("integer exponent") + shift;
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    if digits.chars().all(|c| c == '0') {
        return "0".into();
    }
    // value = 0.d1d2d3... * 10^(exp + 1)
    let point = exp + 1;
    let body = if point <= 0 {
        format!("0.{}{}", "0".repeat((-point) as usize), digits)
    } else if point as usize >= digits.len() {
        format!("{}{}", digits, "0".repeat(point as usize - digits.len()))
    } else {
        format!("{}.{}", &digits[..point as usize], &digits[point as usize..])
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

fn field<T>(line: usize, name: &str, parsed: Option<T>, raw: &str) -> Result<T> {
    parsed.ok_or_else(|| Error::Parse {
        line,
        message: format!("{name}: cannot parse {raw:?}"),
    })
}

/// Read table rows. Fields the table lacks take their [`HyperParams::default`] values
/// (Matérn-5/2 kernel, seed 0).
pub fn parse_table<R: Read>(reader: R) -> Result<Vec<TableRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != TABLE_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", TABLE_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if rec.len() != TABLE_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("{} fields, expected {}", rec.len(), TABLE_HEADER.len()),
            });
        }
        let num = |k: usize| field(line, TABLE_HEADER[k], parse_number(&rec[k]), &rec[k]);
        let int = |k: usize| field(line, TABLE_HEADER[k], rec[k].parse::<usize>().ok(), &rec[k]);
        let hyper = HyperParams {
            cell_w_ft: num(0)?,
            cell_h_ft: num(1)?,
            coverage_param: field(line, TABLE_HEADER[2], parse_percent(&rec[2]), &rec[2])?,
            spatial_lengthscale_ft: num(3)?,
            temporal_lengthscale_days: num(4)?,
            rotation_rad: num(5)?,
            d: int(6)?,
            a: num(7)?,
            b: num(8)?,
            kde_bandwidth_ft: num(9)?,
            kde_lags: int(10)?,
            kde_window_days: num(11)?,
            ..HyperParams::default()
        };
        let period = rec[13].to_string();
        if period_days(&period).is_none() {
            return Err(Error::Parse {
                line,
                message: format!("unknown forecast period {period:?}"),
            });
        }
        rows.push(TableRow {
            hyper,
            crime_type: rec[12].to_string(),
            forecast_period: period,
        });
    }
    Ok(rows)
}

pub fn write_table<W: Write>(rows: &[TableRow], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(TABLE_HEADER)?;
    for r in rows {
        let h = &r.hyper;
        wtr.write_record([
            h.cell_w_ft.to_string(),
            h.cell_h_ft.to_string(),
            format!("{}%", shifted_decimal(h.coverage_param, 2)),
            h.spatial_lengthscale_ft.to_string(),
            h.temporal_lengthscale_days.to_string(),
            h.rotation_rad.to_string(),
            h.d.to_string(),
            h.a.to_string(),
            h.b.to_string(),
            h.kde_bandwidth_ft.to_string(),
            h.kde_lags.to_string(),
            h.kde_window_days.to_string(),
            r.crime_type.clone(),
            r.forecast_period.clone(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// The twenty submitted configurations, as shipped with the crate.
pub const COMPETITION_TABLE: &str = include_str!("../data/competition_hyperparameters.csv");

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_are_the_burglary_week_row() {
        let rows = parse_table(COMPETITION_TABLE.as_bytes()).unwrap();
        let row = rows
            .iter()
            .find(|r| r.crime_type == "burglary" && r.forecast_period == "1w")
            .unwrap();
        assert_eq!(row.hyper, HyperParams::default());
        assert!(HyperParams::default().validate(AreaPolicy::Competition).is_ok());
    }

    #[test]
    fn misprinted_exponent_and_percentages() {
        assert_eq!(parse_number("5-e4"), Some(5e-4));
        assert_eq!(parse_number("5e-5"), Some(5e-5));
        assert_eq!(parse_number("x"), None);
        assert_eq!(parse_percent("16%"), Some(0.16));
        assert_eq!(parse_percent("100%"), Some(1.0));
        assert_eq!(parse_percent("16"), None);
        assert_eq!(shifted_decimal(0.16, 2), "16");
        assert_eq!(shifted_decimal(0.05, 2), "5");
        assert_eq!(shifted_decimal(0.0, 2), "0");
        assert_eq!(shifted_decimal(1.0, 2), "100");
        assert_eq!(shifted_decimal(0.00125, 2), "0.125");
    }

    #[test]
    fn json_uses_exact_field_names() {
        let json = serde_json::to_value(HyperParams::default()).unwrap();
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        for k in [
            "cell_w_ft", "cell_h_ft", "coverage_param", "spatial_lengthscale_ft",
            "temporal_lengthscale_days", "rotation_rad", "d", "a", "b", "kde_bandwidth_ft",
            "kde_lags", "kde_window_days", "kernel_family", "seed",
        ] {
            assert!(keys.contains(&k), "{k}");
        }
        assert_eq!(keys.len(), 14);
        assert_eq!(json["kernel_family"], "matern52");
        let mut obj = json.clone();
        obj["extra"] = serde_json::json!(1);
        assert!(HyperParams::from_json(&obj.to_string()).is_err());
    }

    #[test]
    fn rejects_bad_rows() {
        let bad = format!("{}\n250,250,95%,750,7,0,20,0,0,250,6,10,burglary,5y\n", TABLE_HEADER.join(","));
        assert!(matches!(parse_table(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let bad = format!("{}\n250,250,95,750,7,0,20,0,0,250,6,10,burglary,1w\n", TABLE_HEADER.join(","));
        assert!(parse_table(bad.as_bytes()).is_err());
        assert!(parse_table("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = HyperParams::default();
        let mut b = a.clone();
        b.seed = 1;
        assert_eq!(a.config_hash().len(), 16);
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash(), a.clone().config_hash());
    }

    proptest! {
        #[test]
        fn percent_text_round_trips(c in 0.0..=1.0f64) {
            let text = format!("{}%", shifted_decimal(c, 2));
            prop_assert_eq!(parse_percent(&text).unwrap().to_bits(), c.to_bits());
        }
    }
}
