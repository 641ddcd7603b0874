//! Regular lon/lat grids in a portable text format, and point sampling.
//!
//! The text format is six header lines followed by `nrows` lines of `ncols`
//! space-separated values, northernmost row first:
//!
//! ```text
//! ncols 3
//! nrows 2
//! xllcorner 10.0
//! yllcorner 50.0
//! cellsize 0.01
//! nodata_value -9999
//! 1 2 3
//! 4 -9999 6
//! ```

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geo::{haversine_m, Point};
use crate::num::Scalar;

const HEADER_KEYS: [&str; 6] = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"];

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    ncols: usize,
    nrows: usize,
    xllcorner: T,
    yllcorner: T,
    cellsize: T,
    nodata_value: T,
    /// Row-major, row 0 = northernmost.
    values: Vec<T>,
}

/// Outcome of looking up a point in a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sample<T> {
    Value { value: T, distance_m: T, row: usize, col: usize },
    NoData { row: usize, col: usize },
    OutOfExtent,
}

impl<T: Copy> Sample<T> {
    /// The value and alignment distance, or `None` when the lookup is missing.
    pub fn value(&self) -> Option<(T, T)> {
        match *self {
            Sample::Value { value, distance_m, .. } => Some((value, distance_m)),
            _ => None,
        }
    }

    pub fn cell(&self) -> Option<(usize, usize)> {
        match *self {
            Sample::Value { row, col, .. } | Sample::NoData { row, col } => Some((row, col)),
            Sample::OutOfExtent => None,
        }
    }
}

impl<T: Scalar> Grid<T> {
    pub fn new(
        ncols: usize,
        nrows: usize,
        xllcorner: T,
        yllcorner: T,
        cellsize: T,
        nodata_value: T,
        values: Vec<T>,
    ) -> Result<Self> {
        if ncols == 0 || nrows == 0 {
            return Err(Error::MalformedHeader(format!("grid dimensions must be positive, got {ncols}x{nrows}")));
        }
        if !(cellsize.is_finite() && cellsize > T::zero()) {
            return Err(Error::MalformedHeader(format!("cellsize must be positive, got {cellsize}")));
        }
        if !xllcorner.is_finite() || !yllcorner.is_finite() {
            return Err(Error::MalformedHeader("corner coordinates must be finite".into()));
        }
        if !nodata_value.is_finite() {
            return Err(Error::MalformedHeader("nodata_value must be finite".into()));
        }
        if values.len() != ncols * nrows {
            return Err(Error::ShapeMismatch(format!("expected {} values, got {}", ncols * nrows, values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() && *v != nodata_value) {
            return Err(Error::NonNumericCell { row: i / ncols, col: i % ncols, token: format!("{}", values[i]) });
        }
        Ok(Grid { ncols, nrows, xllcorner, yllcorner, cellsize, nodata_value, values })
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn xllcorner(&self) -> T {
        self.xllcorner
    }

    pub fn yllcorner(&self) -> T {
        self.yllcorner
    }

    pub fn cellsize(&self) -> T {
        self.cellsize
    }

    pub fn nodata_value(&self) -> T {
        self.nodata_value
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.ncols + col]
    }

    pub fn is_nodata(&self, row: usize, col: usize) -> bool {
        self.get(row, col) == self.nodata_value
    }

    /// Count of cells that carry data.
    pub fn data_cells(&self) -> usize {
        self.values.iter().filter(|v| **v != self.nodata_value).count()
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point<T> {
        let half = T::lit(0.5);
        Point {
            lon: self.xllcorner + (T::from_usize_lossy(col) + half) * self.cellsize,
            lat: self.yllcorner + (T::from_usize_lossy(self.nrows - row) - half) * self.cellsize,
        }
    }

    /// Haversine length of a cell's diagonal for the cell whose center is at `lat`.
    pub fn cell_diagonal_m(&self, lat: T) -> T {
        let half = self.cellsize * T::lit(0.5);
        let sw = Point { lon: T::zero(), lat: lat - half };
        let ne = Point { lon: self.cellsize, lat: lat + half };
        let se = Point { lon: self.cellsize, lat: lat - half };
        let nw = Point { lon: T::zero(), lat: lat + half };
        haversine_m(&sw, &ne).max(haversine_m(&nw, &se))
    }

    /// Planar nearest cell: the cell containing `p`, with points on the outer
    /// east/north edges assigned to the last column/row.
    pub fn nearest_cell(&self, p: &Point<T>) -> Option<(usize, usize)> {
        let fx = (p.lon - self.xllcorner) / self.cellsize;
        let fy = (p.lat - self.yllcorner) / self.cellsize;
        let (nc, nr) = (T::from_usize_lossy(self.ncols), T::from_usize_lossy(self.nrows));
        if !(fx >= T::zero() && fx <= nc && fy >= T::zero() && fy <= nr) {
            return None;
        }
        let col = fx.floor().to_usize()?.min(self.ncols - 1);
        let from_south = fy.floor().to_usize()?.min(self.nrows - 1);
        Some((self.nrows - 1 - from_south, col))
    }

    /// Value of the nearest cell and the great-circle distance from `p` to its center.
    pub fn sample_at(&self, p: &Point<T>) -> Sample<T> {
        match self.nearest_cell(p) {
            None => Sample::OutOfExtent,
            Some((row, col)) if self.is_nodata(row, col) => Sample::NoData { row, col },
            Some((row, col)) => Sample::Value {
                value: self.get(row, col),
                distance_m: haversine_m(p, &self.cell_center(row, col)),
                row,
                col,
            },
        }
    }

    /// Applies `f` to every data cell; cells mapped to `None` become nodata.
    pub fn map_values(&self, mut f: impl FnMut(T) -> Option<T>) -> Self {
        let nodata = self.nodata_value;
        let values = self
            .values
            .iter()
            .map(|&v| if v == nodata { nodata } else { f(v).filter(|x| x.is_finite()).unwrap_or(nodata) })
            .collect();
        Grid { values, ..self.clone() }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let header = [
            self.ncols.to_string(),
            self.nrows.to_string(),
            self.xllcorner.to_string(),
            self.yllcorner.to_string(),
            self.cellsize.to_string(),
            self.nodata_value.to_string(),
        ];
        for (key, value) in HEADER_KEYS.iter().zip(header) {
            let _ = writeln!(out, "{key} {value}");
        }
        for row in self.values.chunks(self.ncols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}

impl<T: Scalar + FromStr> Grid<T> {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut header = Vec::with_capacity(6);
        for key in HEADER_KEYS {
            let line = lines.next().ok_or_else(|| Error::MalformedHeader(format!("missing `{key}` line")))?;
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(k), Some(v), None) if k.eq_ignore_ascii_case(key) => header.push(v),
                _ => return Err(Error::MalformedHeader(format!("expected `{key} <value>`, got `{line}`"))),
            }
        }
        let int = |i: usize| {
            header[i]
                .parse::<usize>()
                .map_err(|_| Error::MalformedHeader(format!("{} must be a non-negative integer", HEADER_KEYS[i])))
        };
        let float = |i: usize| {
            header[i]
                .parse::<T>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::MalformedHeader(format!("{} must be a finite number", HEADER_KEYS[i])))
        };
        let (ncols, nrows) = (int(0)?, int(1)?);
        let (xll, yll, cellsize, nodata) = (float(2)?, float(3)?, float(4)?, float(5)?);
        if ncols == 0 || nrows == 0 {
            return Err(Error::MalformedHeader(format!("grid dimensions must be positive, got {ncols}x{nrows}")));
        }

        let mut values = Vec::with_capacity(ncols * nrows);
        let mut row = 0;
        for line in lines {
            if row == nrows {
                return Err(Error::ShapeMismatch(format!("more than {nrows} data rows")));
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != ncols {
                return Err(Error::ShapeMismatch(format!("row {row} has {} values, expected {ncols}", tokens.len())));
            }
            for (col, token) in tokens.into_iter().enumerate() {
                let v = token
                    .parse::<T>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::NonNumericCell { row, col, token: token.to_owned() })?;
                values.push(v);
            }
            row += 1;
        }
        if row != nrows {
            return Err(Error::ShapeMismatch(format!("found {row} data rows, expected {nrows}")));
        }
        Grid::new(ncols, nrows, xll, yll, cellsize, nodata, values)
    }
}
