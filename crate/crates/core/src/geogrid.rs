//! Planar Hilbert-curve projection of latitude/longitude onto a uniform grid.
//!
//! The bounding box is split into `2^level x 2^level` cells. Cells are numbered
//! along a Hilbert curve that starts in the south-west corner, so consecutive
//! indices are always edge-adjacent cells and nearby indices tend to be nearby
//! places.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAX_LEVEL: u8 = 16;
pub const DEFAULT_LEVEL: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(pub u64);

impl CellId {
    pub fn index(self) -> u64 {
        self.0
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }
}

#[derive(Deserialize)]
struct RawGridSpec {
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
    level: u8,
}

impl TryFrom<RawGridSpec> for GridSpec {
    type Error = Error;

    fn try_from(raw: RawGridSpec) -> Result<Self> {
        GridSpec::new(raw.lat_min, raw.lat_max, raw.lon_min, raw.lon_max, raw.level)
    }
}

/// Bounding box plus curve level. Always valid once constructed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGridSpec")]
pub struct GridSpec {
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
    level: u8,
}

impl GridSpec {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64, level: u8) -> Result<Self> {
        let finite = [lat_min, lat_max, lon_min, lon_max].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidGrid("bounding box must be finite".into()));
        }
        if !(lat_min < lat_max) {
            return Err(Error::InvalidGrid(format!(
                "lat_min ({lat_min}) must be below lat_max ({lat_max})"
            )));
        }
        if !(lon_min < lon_max) {
            return Err(Error::InvalidGrid(format!(
                "lon_min ({lon_min}) must be below lon_max ({lon_max})"
            )));
        }
        if lat_min < -90.0 || lat_max > 90.0 || lon_min < -180.0 || lon_max > 180.0 {
            return Err(Error::InvalidGrid("bounding box exceeds the globe".into()));
        }
        if !(1..=MAX_LEVEL).contains(&level) {
            return Err(Error::InvalidGrid(format!(
                "level {level} not in 1..={MAX_LEVEL}"
            )));
        }
        Ok(GridSpec {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
            level,
        })
    }

    /// The unit box `[0,1] x [0,1]`, handy in tests.
    pub fn unit(level: u8) -> Result<Self> {
        GridSpec::new(0.0, 1.0, 0.0, 1.0, level)
    }

    /// A box roughly covering Switzerland at the default level (~1-2 km cells).
    pub fn switzerland() -> Self {
        GridSpec::new(45.8, 47.9, 5.9, 10.6, DEFAULT_LEVEL).expect("static spec is valid")
    }

    pub fn lat_min(&self) -> f64 {
        self.lat_min
    }
    pub fn lat_max(&self) -> f64 {
        self.lat_max
    }
    pub fn lon_min(&self) -> f64 {
        self.lon_min
    }
    pub fn lon_max(&self) -> f64 {
        self.lon_max
    }
    pub fn level(&self) -> u8 {
        self.level
    }

    /// Cells per side, `2^level`.
    pub fn side(&self) -> u64 {
        1u64 << self.level
    }

    /// Total number of cells, `4^level`.
    pub fn n_cells(&self) -> u64 {
        1u64 << (2 * self.level as u32)
    }

    pub fn contains(&self, p: LatLon) -> bool {
        p.lat >= self.lat_min && p.lat <= self.lat_max && p.lon >= self.lon_min && p.lon <= self.lon_max
    }

    fn cell_size(&self) -> (f64, f64) {
        let n = self.side() as f64;
        ((self.lat_max - self.lat_min) / n, (self.lon_max - self.lon_min) / n)
    }

    fn axis_cell(value: f64, min: f64, max: f64, n: u64) -> u64 {
        let frac = (value - min) / (max - min);
        // Half-open cells; the closing edge of the box belongs to the last cell.
        ((frac * n as f64).floor() as u64).min(n - 1)
    }

    /// Grid column/row of a point: `x` grows eastwards, `y` northwards.
    pub fn cell_xy(&self, p: LatLon) -> Result<(u64, u64)> {
        if !(p.lat >= self.lat_min && p.lat <= self.lat_max) {
            return Err(Error::out_of_range(
                "lat",
                p.lat,
                format!("[{}, {}]", self.lat_min, self.lat_max),
            ));
        }
        if !(p.lon >= self.lon_min && p.lon <= self.lon_max) {
            return Err(Error::out_of_range(
                "lon",
                p.lon,
                format!("[{}, {}]", self.lon_min, self.lon_max),
            ));
        }
        let n = self.side();
        Ok((
            Self::axis_cell(p.lon, self.lon_min, self.lon_max, n),
            Self::axis_cell(p.lat, self.lat_min, self.lat_max, n),
        ))
    }

    pub fn encode(&self, p: LatLon) -> Result<CellId> {
        let (x, y) = self.cell_xy(p)?;
        Ok(CellId(xy_to_hilbert(x, y, self.side())))
    }

    pub fn check_cell(&self, c: CellId) -> Result<()> {
        if c.0 >= self.n_cells() {
            return Err(Error::out_of_range(
                "cell index",
                c.0 as f64,
                format!("[0, {})", self.n_cells()),
            ));
        }
        Ok(())
    }

    pub fn cell_to_xy(&self, c: CellId) -> Result<(u64, u64)> {
        self.check_cell(c)?;
        Ok(hilbert_to_xy(c.0, self.side()))
    }

    /// Center of the cell.
    pub fn decode(&self, c: CellId) -> Result<LatLon> {
        let (x, y) = self.cell_to_xy(c)?;
        let (dlat, dlon) = self.cell_size();
        Ok(LatLon {
            lat: self.lat_min + (y as f64 + 0.5) * dlat,
            lon: self.lon_min + (x as f64 + 0.5) * dlon,
        })
    }

    /// `(index + 0.5) / 4^level`, the continuous embedding of a cell.
    pub fn curve_position(&self, c: CellId) -> Result<f64> {
        self.check_cell(c)?;
        Ok((c.0 as f64 + 0.5) / self.n_cells() as f64)
    }

    /// Width of one cell's interval on the unit curve.
    pub fn curve_cell_width(&self) -> f64 {
        1.0 / self.n_cells() as f64
    }

    /// Cell whose curve interval contains `pos`; positions outside `[0, 1)` are clamped.
    pub fn cell_at_position(&self, pos: f64) -> CellId {
        let n = self.n_cells();
        let idx = (pos * n as f64).floor();
        if idx <= 0.0 || idx.is_nan() {
            CellId(0)
        } else {
            CellId((idx as u64).min(n - 1))
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "[{}, {}]x[{}, {}]@{}",
            self.lat_min, self.lat_max, self.lon_min, self.lon_max, self.level
        )
    }

    /// Same box and level (the only way two specs can share cell ids).
    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch {
                expected: self.describe(),
                found: other.describe(),
            });
        }
        Ok(())
    }
}

fn rotate(n: u64, x: &mut u64, y: &mut u64, rx: u64, ry: u64) {
    if ry == 0 {
        if rx == 1 {
            *x = n - 1 - *x;
            *y = n - 1 - *y;
        }
        std::mem::swap(x, y);
    }
}

/// Hilbert index of `(x, y)` on an `n x n` grid, `n` a power of two.
pub fn xy_to_hilbert(mut x: u64, mut y: u64, n: u64) -> u64 {
    let mut d = 0;
    let mut s = n / 2;
    while s > 0 {
        let rx = u64::from(x & s > 0);
        let ry = u64::from(y & s > 0);
        d += s * s * ((3 * rx) ^ ry);
        rotate(n, &mut x, &mut y, rx, ry);
        s /= 2;
    }
    d
}

pub fn hilbert_to_xy(d: u64, n: u64) -> (u64, u64) {
    let (mut x, mut y) = (0, 0);
    let mut t = d;
    let mut s = 1;
    while s < n {
        let rx = 1 & (t / 2);
        let ry = 1 & (t ^ rx);
        rotate(s, &mut x, &mut y, rx, ry);
        x += s * rx;
        y += s * ry;
        t /= 4;
        s *= 2;
    }
    (x, y)
}
