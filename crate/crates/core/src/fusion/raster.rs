//! Regular lat/lon raster with nearest-cell lookup (VS30).
//!
//! Two encodings share one parser: ESRI ASCII grid (whitespace separated)
//! and a CSV variant using the same six header keys as `key,value` rows
//! followed by comma-separated data rows, top row first.

use std::path::Path;

use super::{FusionError, SiteConditions};
use crate::geo::GeoPoint;

pub const VS30_MIN: f64 = 50.0;
pub const VS30_MAX: f64 = 3000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    pub ncols: usize,
    pub nrows: usize,
    /// Lower-left corner of the lower-left cell.
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
    pub nodata: Option<f64>,
    /// Row-major, northernmost row first.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellLookup {
    Value(f64),
    NoData,
    OutOfExtent,
}

impl RasterGrid {
    pub fn load(path: &Path) -> Result<Self, FusionError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|msg| FusionError::Input {
            source_name: path.display().to_string(),
            message: msg,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let split = |l: &str| -> Vec<String> {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect()
        };

        let (mut ncols, mut nrows, mut cellsize, mut nodata) = (None, None, None, None);
        let (mut x, mut y, mut x_center, mut y_center) = (None, None, false, false);
        let mut first_data: Option<(usize, Vec<String>)> = None;
        for (ln, line) in lines.by_ref() {
            let toks = split(line);
            let key = toks[0].to_ascii_lowercase();
            if key.parse::<f64>().is_ok() {
                first_data = Some((ln, toks));
                break;
            }
            let val: f64 = toks
                .get(1)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| format!("line {}: bad header value", ln + 1))?;
            match key.as_str() {
                "ncols" => ncols = Some(val as usize),
                "nrows" => nrows = Some(val as usize),
                "xllcorner" => x = Some(val),
                "yllcorner" => y = Some(val),
                "xllcenter" => (x, x_center) = (Some(val), true),
                "yllcenter" => (y, y_center) = (Some(val), true),
                "cellsize" => cellsize = Some(val),
                "nodata_value" | "nodata" => nodata = Some(val),
                other => return Err(format!("line {}: unknown header {other:?}", ln + 1)),
            }
        }
        let missing = |k: &str| format!("missing header {k}");
        let ncols = ncols.ok_or_else(|| missing("ncols"))?;
        let nrows = nrows.ok_or_else(|| missing("nrows"))?;
        let cellsize = cellsize.ok_or_else(|| missing("cellsize"))?;
        if !(cellsize > 0.0) || ncols == 0 || nrows == 0 {
            return Err("grid dimensions and cellsize must be positive".into());
        }
        let mut xll = x.ok_or_else(|| missing("xllcorner"))?;
        let mut yll = y.ok_or_else(|| missing("yllcorner"))?;
        if x_center {
            xll -= cellsize / 2.0;
        }
        if y_center {
            yll -= cellsize / 2.0;
        }

        let mut values = Vec::with_capacity(ncols * nrows);
        let rows = first_data.into_iter().chain(lines.map(|(ln, l)| (ln, split(l))));
        for (ln, toks) in rows {
            if toks.len() != ncols {
                return Err(format!("line {}: expected {ncols} values, found {}", ln + 1, toks.len()));
            }
            for t in toks {
                values.push(t.parse::<f64>().map_err(|_| format!("line {}: bad value {t:?}", ln + 1))?);
            }
        }
        if values.len() != ncols * nrows {
            return Err(format!("expected {} rows, found {}", nrows, values.len() / ncols));
        }
        Ok(Self {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
            nodata,
            values,
        })
    }

    /// Centre of cell (row, col), row 0 northernmost.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let lon = self.xll + (col as f64 + 0.5) * self.cellsize;
        let lat = self.yll + ((self.nrows - 1 - row) as f64 + 0.5) * self.cellsize;
        (lat, lon)
    }

    /// Value of the cell containing `p`, which is also the cell whose centre
    /// is nearest. Points on the outer edge belong to the adjacent cell.
    pub fn lookup(&self, p: GeoPoint) -> CellLookup {
        let fx = (p.lon - self.xll) / self.cellsize;
        let fy = (p.lat - self.yll) / self.cellsize;
        if !(fx >= 0.0 && fy >= 0.0 && fx <= self.ncols as f64 && fy <= self.nrows as f64) {
            return CellLookup::OutOfExtent;
        }
        let col = (fx.floor() as usize).min(self.ncols - 1);
        let row_up = (fy.floor() as usize).min(self.nrows - 1);
        let v = self.values[(self.nrows - 1 - row_up) * self.ncols + col];
        match self.nodata {
            Some(nd) if v == nd => CellLookup::NoData,
            _ if v.is_nan() => CellLookup::NoData,
            _ => CellLookup::Value(v),
        }
    }
}

/// Nearest-cell VS30 at `p`, validated against physical bounds.
pub fn sample_vs30(grid: &RasterGrid, p: GeoPoint) -> Result<SiteConditions, FusionError> {
    match grid.lookup(p) {
        CellLookup::OutOfExtent => Err(FusionError::Coverage { lat: p.lat, lon: p.lon }),
        CellLookup::NoData => Err(FusionError::NoData { lat: p.lat, lon: p.lon }),
        CellLookup::Value(v) => SiteConditions::new(v),
    }
}
