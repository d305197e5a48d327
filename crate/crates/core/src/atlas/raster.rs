//! In-memory raster layers and the ESRI ASCII grid format.
//!
//! Grid points are treated as cell centres, so the lower-left corner written to
//! the header sits half a step south-west of the southernmost, westernmost point.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{AtlasError, Result};

use super::grid::GridSpec;

pub const DEFAULT_NODATA: f64 = -9999.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    /// Integer status ranks 0..=4.
    StatusCode,
    Real,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterLayer {
    pub grid: GridSpec,
    /// Row-major, north to south.
    pub values: Vec<f64>,
    pub nodata: f64,
    pub kind: ValueKind,
}

impl RasterLayer {
    pub fn filled(grid: GridSpec, value: f64, nodata: f64, kind: ValueKind) -> Self {
        RasterLayer {
            grid,
            values: vec![value; grid.len()],
            nodata,
            kind,
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>, nodata: f64, kind: ValueKind) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(AtlasError::DimensionMismatch {
                expected: grid.len(),
                actual: values.len(),
                context: "raster values",
            });
        }
        Ok(RasterLayer {
            grid,
            values,
            nodata,
            kind,
        })
    }

    pub fn nrows(&self) -> usize {
        self.grid.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.grid.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.ncols() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let ncols = self.ncols();
        self.values[row * ncols + col] = value;
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v.is_nan() || v == self.nodata
    }

    /// Value at `(row, col)`, `None` for nodata.
    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.get(row, col);
        (!self.is_nodata(v)).then_some(v)
    }

    /// Nearest-cell value at a coordinate; `None` outside the grid or on nodata.
    pub fn sample(&self, lon: f64, lat: f64) -> Option<f64> {
        let (row, col) = self.grid.locate(lon, lat)?;
        self.value(row, col)
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.ncols();
        &self.values[row * n..(row + 1) * n]
    }

    pub fn write_ascii(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = AsciiGridWriter::create(path, &self.grid, self.nodata, self.kind)?;
        for r in 0..self.nrows() {
            w.write_row(self.row(r))?;
        }
        w.finish()
    }

    pub fn to_ascii_string(&self) -> String {
        let mut out = header_text(&self.grid, self.nodata);
        for r in 0..self.nrows() {
            out.push_str(&row_text(self.row(r), self.nodata, self.kind));
        }
        out
    }

    pub fn read_ascii(path: impl AsRef<Path>) -> Result<Self> {
        read_ascii(path.as_ref(), ValueKind::Real)
    }

    pub fn read_ascii_as(path: impl AsRef<Path>, kind: ValueKind) -> Result<Self> {
        read_ascii(path.as_ref(), kind)
    }
}

/// C `%.6g`: six significant digits, trailing zeros trimmed, exponent form
/// outside `[1e-4, 1e6)`.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".to_owned();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn format_value(v: f64, nodata: f64, kind: ValueKind) -> String {
    if v.is_nan() || v == nodata {
        return format_number(nodata);
    }
    match kind {
        ValueKind::StatusCode => format!("{}", v.round() as i64),
        ValueKind::Real => format_sig6(v),
    }
}

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn header_text(grid: &GridSpec, nodata: f64) -> String {
    let half = grid.step / 2.0;
    format!(
        "ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\nNODATA_value {}\n",
        grid.ncols(),
        grid.nrows(),
        grid.lon_min - half,
        grid.lat_max - (grid.nrows() - 1) as f64 * grid.step - half,
        grid.step,
        format_number(nodata)
    )
}

fn row_text(values: &[f64], nodata: f64, kind: ValueKind) -> String {
    let mut line = values
        .iter()
        .map(|&v| format_value(v, nodata, kind))
        .collect::<Vec<_>>()
        .join(" ");
    line.push('\n');
    line
}

/// Streams an ESRI ASCII grid row by row. Output goes to `<path>.partial` and is
/// renamed on [`AsciiGridWriter::finish`], so an aborted run leaves no file at `path`.
pub struct AsciiGridWriter {
    out: BufWriter<File>,
    path: PathBuf,
    partial: PathBuf,
    nodata: f64,
    kind: ValueKind,
    ncols: usize,
    rows_left: usize,
}

impl AsciiGridWriter {
    pub fn create(path: impl AsRef<Path>, grid: &GridSpec, nodata: f64, kind: ValueKind) -> Result<Self> {
        let path = path.as_ref().to_owned();
        let mut partial = path.clone().into_os_string();
        partial.push(".partial");
        let partial = PathBuf::from(partial);
        let file = File::create(&partial).map_err(|e| AtlasError::io(&partial, e))?;
        let mut out = BufWriter::new(file);
        out.write_all(header_text(grid, nodata).as_bytes())
            .map_err(|e| AtlasError::io(&partial, e))?;
        Ok(AsciiGridWriter {
            out,
            path,
            partial,
            nodata,
            kind,
            ncols: grid.ncols(),
            rows_left: grid.nrows(),
        })
    }

    pub fn write_row(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.ncols {
            return Err(AtlasError::DimensionMismatch {
                expected: self.ncols,
                actual: values.len(),
                context: "raster row",
            });
        }
        if self.rows_left == 0 {
            return Err(AtlasError::InvalidArgument("more rows than the grid holds".into()));
        }
        self.rows_left -= 1;
        self.out
            .write_all(row_text(values, self.nodata, self.kind).as_bytes())
            .map_err(|e| AtlasError::io(&self.partial, e))
    }

    pub fn finish(mut self) -> Result<()> {
        if self.rows_left != 0 {
            return Err(AtlasError::InvalidArgument(format!(
                "{} raster rows never written",
                self.rows_left
            )));
        }
        self.out.flush().map_err(|e| AtlasError::io(&self.partial, e))?;
        drop(self.out);
        std::fs::rename(&self.partial, &self.path).map_err(|e| AtlasError::io(&self.path, e))
    }
}

fn read_ascii(path: &Path, kind: ValueKind) -> Result<RasterLayer> {
    let file = File::open(path).map_err(|e| AtlasError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut ncols = None;
    let mut nrows = None;
    let mut x = None;
    let mut y = None;
    let mut centered = false;
    let mut cellsize = None;
    let mut nodata = DEFAULT_NODATA;
    let mut line_no = 0u64;
    let mut first_data = String::new();

    loop {
        let mut line = String::new();
        let n = reader.read_line(&mut line).map_err(|e| AtlasError::io(path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let mut tokens = line.split_whitespace();
        let Some(key) = tokens.next() else { continue };
        let lower = key.to_ascii_lowercase();
        let known = matches!(
            lower.as_str(),
            "ncols" | "nrows" | "xllcorner" | "yllcorner" | "xllcenter" | "yllcenter" | "cellsize" | "nodata_value"
        );
        if !known {
            first_data = line;
            break;
        }
        let value = tokens
            .next()
            .ok_or_else(|| AtlasError::parse(path, line_no, format!("missing value for `{key}`")))?;
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| AtlasError::parse(path, line_no, format!("bad value `{v}` for `{key}`")))
        };
        match lower.as_str() {
            "ncols" => ncols = Some(num(value)? as usize),
            "nrows" => nrows = Some(num(value)? as usize),
            "xllcorner" => x = Some(num(value)?),
            "yllcorner" => y = Some(num(value)?),
            "xllcenter" => {
                x = Some(num(value)?);
                centered = true;
            }
            "yllcenter" => {
                y = Some(num(value)?);
                centered = true;
            }
            "cellsize" => cellsize = Some(num(value)?),
            _ => nodata = num(value)?,
        }
    }

    let missing = |k: &str| AtlasError::parse(path, line_no, format!("header lacks `{k}`"));
    let ncols = ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = nrows.ok_or_else(|| missing("nrows"))?;
    let x = x.ok_or_else(|| missing("xllcorner"))?;
    let y = y.ok_or_else(|| missing("yllcorner"))?;
    let step = cellsize.ok_or_else(|| missing("cellsize"))?;
    if ncols == 0 || nrows == 0 || step.is_nan() || step <= 0.0 {
        return Err(AtlasError::parse(path, line_no, "empty raster or non-positive cellsize"));
    }
    let offset = if centered { 0.0 } else { step / 2.0 };
    let lon_min = x + offset;
    let lat_min = y + offset;
    let grid = GridSpec {
        lon_min,
        lon_max: lon_min + (ncols - 1) as f64 * step,
        lat_min,
        lat_max: lat_min + (nrows - 1) as f64 * step,
        step,
        drop_antimeridian: false,
    };
    // degenerate single-row/column grids cannot satisfy max > min
    let grid = if ncols == 1 || nrows == 1 {
        GridSpec {
            lon_max: grid.lon_max.max(lon_min + step * 1e-9),
            lat_max: grid.lat_max.max(lat_min + step * 1e-9),
            ..grid
        }
    } else {
        grid
    };

    let mut values = Vec::with_capacity(ncols * nrows);
    let mut push_tokens = |line: &str, line_no: u64| -> Result<()> {
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| AtlasError::parse(path, line_no, format!("bad cell value `{tok}`")))?;
            values.push(v);
        }
        Ok(())
    };
    push_tokens(&first_data, line_no)?;
    for line in reader.lines() {
        line_no += 1;
        let line = line.map_err(|e| AtlasError::io(path, e))?;
        push_tokens(&line, line_no)?;
    }
    if values.len() != ncols * nrows {
        return Err(AtlasError::parse(
            path,
            line_no,
            format!("expected {} cells, found {}", ncols * nrows, values.len()),
        ));
    }
    Ok(RasterLayer {
        grid,
        values,
        nodata,
        kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(1.0), "1");
        assert_eq!(format_sig6(0.5), "0.5");
        assert_eq!(format_sig6(1.0 / 3.0), "0.333333");
        assert_eq!(format_sig6(2.0 / 3.0), "0.666667");
        assert_eq!(format_sig6(123456.7), "123457");
        assert_eq!(format_sig6(1234567.0), "1.23457e+06");
        assert_eq!(format_sig6(0.0001234567), "0.000123457");
        assert_eq!(format_sig6(0.00001234567), "1.23457e-05");
        assert_eq!(format_sig6(-1.386294361), "-1.38629");
        assert_eq!(format_sig6(100.0), "100");
    }

    #[test]
    fn ascii_round_trip() {
        let grid = GridSpec::new(10.0, 10.5, -1.0, 0.0, 0.5).unwrap();
        let values = vec![0.1, 0.2, DEFAULT_NODATA, 1.0 / 3.0, 4.0, 5.5];
        let layer = RasterLayer::from_values(grid, values, DEFAULT_NODATA, ValueKind::Real).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.asc");
        layer.write_ascii(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "ncols 2\nnrows 3\nxllcorner 9.75\nyllcorner -1.25\ncellsize 0.5\nNODATA_value -9999\n0.1 0.2\n-9999 0.333333\n4 5.5\n"
        );
        assert_eq!(text, layer.to_ascii_string());
        let back = RasterLayer::read_ascii(&path).unwrap();
        assert!(back.grid.same_as(&grid));
        assert_eq!(back.value(1, 0), None);
        assert_eq!(back.get(2, 1), 5.5);
        assert!(!dir.path().join("a.asc.partial").exists());
    }

    #[test]
    fn status_codes_written_as_integers() {
        let grid = GridSpec::new(0.0, 1.0, 0.0, 1.0, 1.0).unwrap();
        let layer = RasterLayer::from_values(grid, vec![0.0, 4.0, DEFAULT_NODATA, 2.0], DEFAULT_NODATA, ValueKind::StatusCode)
            .unwrap();
        assert!(layer.to_ascii_string().ends_with("0 4\n-9999 2\n"));
    }

    #[test]
    fn reads_center_registered_and_lowercase_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.asc");
        std::fs::write(&path, "NCOLS 2\nNROWS 2\nXLLCENTER 0\nYLLCENTER 0\nCELLSIZE 1\n1 2\n3 4\n").unwrap();
        let r = RasterLayer::read_ascii(&path).unwrap();
        assert_eq!(r.grid.lon_min, 0.0);
        assert_eq!(r.grid.lat_max, 1.0);
        assert_eq!(r.sample(0.0, 1.0), Some(1.0));
        assert_eq!(r.sample(1.0, 0.0), Some(4.0));
        assert_eq!(r.nodata, DEFAULT_NODATA);
    }

    #[test]
    fn short_raster_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.asc");
        std::fs::write(&path, "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n3\n").unwrap();
        assert!(matches!(RasterLayer::read_ascii(&path), Err(AtlasError::Parse { .. })));
    }

    #[test]
    fn writer_refuses_incomplete_raster() {
        let grid = GridSpec::new(0.0, 1.0, 0.0, 1.0, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.asc");
        let mut w = AsciiGridWriter::create(&path, &grid, DEFAULT_NODATA, ValueKind::Real).unwrap();
        w.write_row(&[1.0, 2.0]).unwrap();
        assert!(w.write_row(&[1.0]).is_err());
        assert!(w.finish().is_err());
        assert!(!path.exists());
    }
}
