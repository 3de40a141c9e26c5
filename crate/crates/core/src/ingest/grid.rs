use chrono::{DateTime, Utc};
use ndarray::Array2;

use crate::error::{Error, Result};

// tolerance, in cell units, for points sitting on the hull boundary
const HULL_EPS: f64 = 1e-9;

/// One timestamped regular lat/lon grid of a single variable.
///
/// Row `i` holds cell centers at latitude `lat0 + i * dlat`, column `j` at
/// longitude `lon0 + j * dlon`. Missing cells are NaN or equal to `missing_sentinel`.
/// Grids must not cross the antimeridian.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub timestamp: DateTime<Utc>,
    pub variable: String,
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub values: Array2<f64>,
    pub missing_sentinel: Option<f64>,
}

impl GridField {
    pub fn new(
        timestamp: DateTime<Utc>,
        variable: impl Into<String>,
        (lat0, lon0): (f64, f64),
        (dlat, dlon): (f64, f64),
        values: Array2<f64>,
    ) -> Result<Self> {
        if !(dlat > 0.0 && dlon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "grid spacing must be positive, got ({dlat}, {dlon})"
            )));
        }
        if values.is_empty() {
            return Err(Error::Empty("grid"));
        }
        Ok(GridField {
            timestamp,
            variable: variable.into(),
            lat0,
            lon0,
            dlat,
            dlon,
            values,
            missing_sentinel: None,
        })
    }

    pub fn nlat(&self) -> usize {
        self.values.nrows()
    }

    pub fn nlon(&self) -> usize {
        self.values.ncols()
    }

    pub fn center(&self, row: usize, col: usize) -> (f64, f64) {
        (self.lat0 + row as f64 * self.dlat, self.lon0 + col as f64 * self.dlon)
    }

    pub fn is_missing(&self, v: f64) -> bool {
        v.is_nan() || self.missing_sentinel == Some(v)
    }

    /// Fractional (row, col) index of a point, `None` if outside the hull of centers.
    fn fractional_index(&self, lat: f64, lon: f64) -> Option<(f64, f64)> {
        let fi = (lat - self.lat0) / self.dlat;
        let fj = (lon - self.lon0) / self.dlon;
        let max_i = (self.nlat() - 1) as f64;
        let max_j = (self.nlon() - 1) as f64;
        if !(fi >= -HULL_EPS && fi <= max_i + HULL_EPS && fj >= -HULL_EPS && fj <= max_j + HULL_EPS) {
            return None;
        }
        Some((fi.clamp(0.0, max_i), fj.clamp(0.0, max_j)))
    }
}

fn lower_cell(f: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    // coordinates that land on a center up to decimal round-off select it exactly
    let snapped = if (f - f.round()).abs() < HULL_EPS { f.round() } else { f };
    let i = (snapped.floor() as usize).min(n - 2);
    (i, snapped - i as f64)
}

/// Bilinear blend of the four cell centers surrounding `(lat, lon)`.
///
/// Corners carrying zero weight (point on a cell edge or center) are not required
/// to be present.
pub fn bilinear_sample(field: &GridField, lat: f64, lon: f64) -> Result<f64> {
    let (fi, fj) = field.fractional_index(lat, lon).ok_or(Error::OutOfGrid { lat, lon })?;
    let (i0, ty) = lower_cell(fi, field.nlat());
    let (j0, tx) = lower_cell(fj, field.nlon());
    let get = |r: usize, c: usize| -> Result<f64> {
        let v = field.values[[r, c]];
        if field.is_missing(v) {
            Err(Error::MissingCorner { row: r, col: c })
        } else {
            Ok(v)
        }
    };
    let lerp_row = |r: usize| -> Result<f64> {
        let a = get(r, j0)?;
        if tx == 0.0 {
            return Ok(a);
        }
        let b = get(r, j0 + 1)?;
        Ok(a + tx * (b - a))
    };
    let lo = lerp_row(i0)?;
    if ty == 0.0 {
        return Ok(lo);
    }
    let hi = lerp_row(i0 + 1)?;
    Ok(lo + ty * (hi - lo))
}

/// Value of the cell whose center is closest to `(lat, lon)` in degree space.
/// Ties go to the smaller row index, then the smaller column index.
pub fn nearest_sample(field: &GridField, lat: f64, lon: f64) -> Result<f64> {
    let mut best = (0, 0);
    let mut best_d = f64::INFINITY;
    for r in 0..field.nlat() {
        for c in 0..field.nlon() {
            let (clat, clon) = field.center(r, c);
            let d = (clat - lat).powi(2) + (clon - lon).powi(2);
            if d < best_d {
                best_d = d;
                best = (r, c);
            }
        }
    }
    let v = field.values[best];
    if field.is_missing(v) {
        return Err(Error::MissingCell {
            row: best.0,
            col: best.1,
        });
    }
    Ok(v)
}
