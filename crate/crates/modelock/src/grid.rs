//! Grid containers for parameter scans and their file formats.
//!
//! Grids serialize to a small CSV dialect: `#`-prefixed metadata lines, one
//! header row, then one line per cell in row-major order (y outer, x inner).
//! Companion image writers emit binary PPM (false colour) and PGM (scalar
//! field) with no imaging dependency. All writers are deterministic: the same
//! grid yields byte-identical files.

use std::io::{self, BufRead, Write};

use thiserror::Error;

/// Errors from grid parsing.
#[derive(Debug, Error)]
pub enum GridError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed grid file: {0}")]
    Malformed(String),
}

/// A uniformly spaced, inclusive parameter axis.
#[derive(Clone, Debug, PartialEq)]
pub struct GridAxis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn new(name: &str, min: f64, max: f64, count: usize) -> GridAxis {
        GridAxis {
            name: name.to_string(),
            min,
            max,
            count,
        }
    }

    /// The `i`-th sample; endpoints are included.
    pub fn value(&self, i: usize) -> f64 {
        if self.count <= 1 {
            self.min
        } else {
            self.min + (self.max - self.min) * (i as f64) / ((self.count - 1) as f64)
        }
    }
}

/// One resolved grid cell: a periodic solution with its rotation label.
///
/// `m = n = 0` marks a periodic solution whose itinerary is not rotational.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellLock {
    pub period: u32,
    pub m: u32,
    pub n: u32,
    pub stable: bool,
}

/// Scan results over a two-parameter grid.
#[derive(Clone, Debug)]
pub struct ScanGrid {
    pub x: GridAxis,
    pub y: GridAxis,
    /// Scan mode tag recorded in the file metadata.
    pub mode: String,
    /// Row-major cells: index `iy * x.count + ix`. `None` = no lock found.
    pub cells: Vec<Option<CellLock>>,
}

impl ScanGrid {
    pub fn new(x: GridAxis, y: GridAxis, mode: &str) -> ScanGrid {
        let cells = vec![None; x.count * y.count];
        ScanGrid {
            x,
            y,
            mode: mode.to_string(),
            cells,
        }
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.x.count + ix
    }

    pub fn cell(&self, ix: usize, iy: usize) -> Option<CellLock> {
        self.cells[self.index(ix, iy)]
    }

    /// Fraction of cells carrying a lock with rotation number `m/n`.
    pub fn fraction_with_rotation(&self, m: u32, n: u32) -> f64 {
        let hits = self
            .cells
            .iter()
            .flatten()
            .filter(|c| c.m == m && c.n == n)
            .count();
        hits as f64 / self.cells.len() as f64
    }

    /// Writes the CSV form.
    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "# modelock scan v1")?;
        writeln!(w, "# mode: {}", self.mode)?;
        writeln!(
            w,
            "# xaxis: {},{},{},{}",
            self.x.name, self.x.min, self.x.max, self.x.count
        )?;
        writeln!(
            w,
            "# yaxis: {},{},{},{}",
            self.y.name, self.y.min, self.y.max, self.y.count
        )?;
        writeln!(w, "period,m,n,stable")?;
        for cell in &self.cells {
            match cell {
                Some(c) => writeln!(
                    w,
                    "{},{},{},{}",
                    c.period,
                    c.m,
                    c.n,
                    if c.stable { 1 } else { 0 }
                )?,
                None => writeln!(w, "0,0,0,0")?,
            }
        }
        Ok(())
    }

    /// The CSV form as a string.
    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is ascii")
    }

    /// Reads a grid back from its CSV form.
    pub fn read_csv(r: impl BufRead) -> Result<ScanGrid, GridError> {
        let mut mode = String::new();
        let mut x: Option<GridAxis> = None;
        let mut y: Option<GridAxis> = None;
        let mut cells = Vec::new();
        let mut saw_header = false;
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("mode:") {
                    mode = v.trim().to_string();
                } else if let Some(v) = rest.strip_prefix("xaxis:") {
                    x = Some(parse_axis(v)?);
                } else if let Some(v) = rest.strip_prefix("yaxis:") {
                    y = Some(parse_axis(v)?);
                }
                continue;
            }
            if !saw_header {
                if line != "period,m,n,stable" {
                    return Err(GridError::Malformed(format!(
                        "unexpected header line: {line}"
                    )));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(GridError::Malformed(format!("bad cell line: {line}")));
            }
            let period: u32 = fields[0]
                .parse()
                .map_err(|_| GridError::Malformed(format!("bad period: {line}")))?;
            if period == 0 {
                cells.push(None);
            } else {
                let m = fields[1]
                    .parse()
                    .map_err(|_| GridError::Malformed(format!("bad m: {line}")))?;
                let n = fields[2]
                    .parse()
                    .map_err(|_| GridError::Malformed(format!("bad n: {line}")))?;
                let stable = fields[3] == "1";
                cells.push(Some(CellLock {
                    period,
                    m,
                    n,
                    stable,
                }));
            }
        }
        let x = x.ok_or_else(|| GridError::Malformed("missing xaxis metadata".into()))?;
        let y = y.ok_or_else(|| GridError::Malformed("missing yaxis metadata".into()))?;
        if cells.len() != x.count * y.count {
            return Err(GridError::Malformed(format!(
                "expected {} cells, found {}",
                x.count * y.count,
                cells.len()
            )));
        }
        Ok(ScanGrid { x, y, mode, cells })
    }

    /// Writes a binary PPM false-colour image, one pixel per cell, colour
    /// keyed by a hash of the rotation number. The top pixel row is the
    /// largest `y` so the image reads like a plot.
    pub fn write_ppm(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "P6")?;
        writeln!(w, "# mode: {}", self.mode)?;
        writeln!(
            w,
            "# x: {} in [{}, {}]; y: {} in [{}, {}]",
            self.x.name, self.x.min, self.x.max, self.y.name, self.y.min, self.y.max
        )?;
        writeln!(w, "{} {}", self.x.count, self.y.count)?;
        writeln!(w, "255")?;
        let mut row = Vec::with_capacity(self.x.count * 3);
        for iy in (0..self.y.count).rev() {
            row.clear();
            for ix in 0..self.x.count {
                let rgb = match self.cell(ix, iy) {
                    None => [0, 0, 0],
                    Some(c) if c.n == 0 => [40, 40, 40],
                    Some(c) => rotation_colour(c.m, c.n),
                };
                row.extend_from_slice(&rgb);
            }
            w.write_all(&row)?;
        }
        Ok(())
    }
}

fn parse_axis(text: &str) -> Result<GridAxis, GridError> {
    let parts: Vec<&str> = text.trim().split(',').collect();
    if parts.len() != 4 {
        return Err(GridError::Malformed(format!("bad axis spec: {text}")));
    }
    let min: f64 = parts[1]
        .parse()
        .map_err(|_| GridError::Malformed(format!("bad axis min: {text}")))?;
    let max: f64 = parts[2]
        .parse()
        .map_err(|_| GridError::Malformed(format!("bad axis max: {text}")))?;
    let count: usize = parts[3]
        .parse()
        .map_err(|_| GridError::Malformed(format!("bad axis count: {text}")))?;
    Ok(GridAxis::new(parts[0], min, max, count))
}

/// Deterministic bright colour for a rotation number.
pub fn rotation_colour(m: u32, n: u32) -> [u8; 3] {
    let mut h = (m as u64) << 32 | (n as u64);
    // splitmix64 finalizer
    h = h.wrapping_add(0x9e3779b97f4a7c15);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d049bb133111eb);
    h ^= h >> 31;
    [
        80 + (h % 160) as u8,
        80 + ((h >> 16) % 160) as u8,
        80 + ((h >> 32) % 160) as u8,
    ]
}

/// Writes a binary PGM image of a scalar field sampled on a grid.
///
/// `values` is row-major (y outer); the range written into the metadata
/// comments allows approximate reconstruction. Non-finite entries map to 0.
pub fn write_pgm(
    w: &mut impl Write,
    x: &GridAxis,
    y: &GridAxis,
    values: &[f64],
    label: &str,
) -> io::Result<()> {
    assert_eq!(values.len(), x.count * y.count);
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    writeln!(w, "P5")?;
    writeln!(w, "# field: {label}")?;
    writeln!(w, "# range: {lo} {hi}")?;
    writeln!(
        w,
        "# x: {} in [{}, {}]; y: {} in [{}, {}]",
        x.name, x.min, x.max, y.name, y.min, y.max
    )?;
    writeln!(w, "{} {}", x.count, y.count)?;
    writeln!(w, "255")?;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut row = Vec::with_capacity(x.count);
    for iy in (0..y.count).rev() {
        row.clear();
        for ix in 0..x.count {
            let v = values[iy * x.count + ix];
            let byte = if v.is_finite() {
                (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u8
            } else {
                0
            };
            row.push(byte);
        }
        w.write_all(&row)?;
    }
    Ok(())
}
