use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::spline::Point;

/// Default cell size in meters.
pub const DEFAULT_RESOLUTION: f64 = 0.2;
/// Default local map side in cells (25.6 m at 0.2 m).
pub const DEFAULT_CELLS: usize = 128;

/// Binary occupancy grid, row-major with row 0 at the bottom.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Point,
    cells: Vec<bool>,
}

/// On-disk grid encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridFormat {
    /// Rows of `.` (free) and `#` (occupied), top row first.
    Text,
    /// Portable graymap (`P2` or `P5`), top row first; values at or above
    /// half of `maxval` are occupied.
    Pgm,
}

impl GridFormat {
    /// Picks a format from a file extension (`pgm` or anything else for text).
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("pgm") => GridFormat::Pgm,
            _ => GridFormat::Text,
        }
    }
}

impl OccupancyGrid {
    /// An all-free grid.
    pub fn new(width: usize, height: usize, resolution: f64) -> Result<Self> {
        Self::from_cells(width, height, resolution, vec![false; width * height])
    }

    pub fn from_cells(width: usize, height: usize, resolution: f64, cells: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Contract("grid dimensions must be positive".into()));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Contract(format!("invalid resolution {resolution}")));
        }
        if cells.len() != width * height {
            return Err(Error::Contract(format!(
                "{} cells for a {width}x{height} grid",
                cells.len()
            )));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin: Point::zeros(),
            cells,
        })
    }

    /// Empty 128 x 128 map at 0.2 m.
    pub fn local_map() -> Self {
        Self::new(DEFAULT_CELLS, DEFAULT_CELLS, DEFAULT_RESOLUTION).unwrap()
    }

    pub fn with_origin(mut self, origin: Point) -> Self {
        self.origin = origin;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    /// Metric size `(width, height)`.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.resolution,
            self.height as f64 * self.resolution,
        )
    }

    pub fn is_occupied(&self, cx: usize, cy: usize) -> bool {
        self.cells[cy * self.width + cx]
    }

    pub fn set(&mut self, cx: usize, cy: usize, occupied: bool) {
        self.cells[cy * self.width + cx] = occupied;
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    /// Cell containing `p`, or `None` outside the grid.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.resolution).floor();
        let fy = ((p.y - self.origin.y) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    /// Occupancy at a metric point; outside the grid is occupied.
    pub fn occupied_at(&self, p: Point) -> bool {
        match self.cell_of(p) {
            Some((cx, cy)) => self.is_occupied(cx, cy),
            None => true,
        }
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> Point {
        self.origin
            + Point::new(
                (cx as f64 + 0.5) * self.resolution,
                (cy as f64 + 0.5) * self.resolution,
            )
    }

    /// Marks every cell whose center lies in the axis-aligned box `[min, max]`.
    pub fn fill_rect(&mut self, min: Point, max: Point) {
        self.fill_where(|c| c.x >= min.x && c.x <= max.x && c.y >= min.y && c.y <= max.y);
    }

    /// Marks every cell whose center lies within `radius` of `center`.
    pub fn fill_disc(&mut self, center: Point, radius: f64) {
        self.fill_where(|c| (c - center).norm() <= radius);
    }

    /// Marks every cell whose center satisfies `inside`.
    pub fn fill_where(&mut self, inside: impl Fn(Point) -> bool) {
        for cy in 0..self.height {
            for cx in 0..self.width {
                if inside(self.cell_center(cx, cy)) {
                    self.set(cx, cy, true);
                }
            }
        }
    }

    pub fn translated(&self, by: Point) -> Self {
        Self {
            origin: self.origin + by,
            ..self.clone()
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for cy in (0..self.height).rev() {
            for cx in 0..self.width {
                out.push(if self.is_occupied(cx, cy) { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }

    /// Binary `P5` graymap, occupied cells at 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut header = String::new();
        let _ = write!(header, "P5\n{} {}\n255\n", self.width, self.height);
        let mut out = header.into_bytes();
        for cy in (0..self.height).rev() {
            for cx in 0..self.width {
                out.push(if self.is_occupied(cx, cy) { 255 } else { 0 });
            }
        }
        out
    }

    pub fn encode(&self, format: GridFormat) -> Vec<u8> {
        match format {
            GridFormat::Text => self.to_text().into_bytes(),
            GridFormat::Pgm => self.to_pgm(),
        }
    }
}

/// Parses a grid; rows are given top first.
pub fn load_grid(source: &[u8], format: GridFormat, resolution: f64) -> Result<OccupancyGrid> {
    let (width, height, top_down) = match format {
        GridFormat::Text => parse_text(source)?,
        GridFormat::Pgm => parse_pgm(source)?,
    };
    let mut cells = vec![false; width * height];
    for (row, values) in top_down.chunks(width).enumerate() {
        let cy = height - 1 - row;
        cells[cy * width..(cy + 1) * width].copy_from_slice(values);
    }
    OccupancyGrid::from_cells(width, height, resolution, cells)
}

fn parse_text(source: &[u8]) -> Result<(usize, usize, Vec<bool>)> {
    let text = std::str::from_utf8(source).map_err(|e| Error::Parse(format!("grid text: {e}")))?;
    let rows: Vec<&str> = text
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.is_empty())
        .collect();
    let width = rows.first().map_or(0, |r| r.chars().count());
    if width == 0 {
        return Err(Error::Parse("empty grid".into()));
    }
    let mut cells = Vec::with_capacity(width * rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.chars().count() != width {
            return Err(Error::Parse(format!(
                "row {i} has {} cells, expected {width}",
                row.chars().count()
            )));
        }
        for c in row.chars() {
            cells.push(match c {
                '.' => false,
                '#' => true,
                other => return Err(Error::Parse(format!("unexpected cell {other:?} in row {i}"))),
            });
        }
    }
    Ok((width, rows.len(), cells))
}

fn parse_pgm(source: &[u8]) -> Result<(usize, usize, Vec<bool>)> {
    let mut pos = 0;
    let token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < source.len() && source[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < source.len() && source[*pos] == b'#' {
                while *pos < source.len() && source[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < source.len() && !source[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::Parse("truncated graymap header".into()));
        }
        Ok(String::from_utf8_lossy(&source[start..*pos]).into_owned())
    };
    let magic = token(&mut pos)?;
    let number = |s: String| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::Parse(format!("bad graymap header field {s:?}")))
    };
    let width = number(token(&mut pos)?)?;
    let height = number(token(&mut pos)?)?;
    let maxval = number(token(&mut pos)?)?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!(
            "bad graymap dimensions {width}x{height} maxval {maxval}"
        )));
    }
    let count = width * height;
    let values: Vec<usize> = match magic.as_str() {
        "P2" => {
            let mut v = Vec::with_capacity(count);
            for _ in 0..count {
                let t = token(&mut pos)
                    .map_err(|_| Error::Parse(format!("expected {count} pixels")))?;
                v.push(number(t)?);
            }
            v
        }
        "P5" => {
            // exactly one whitespace byte separates the header from the raster
            pos += 1;
            let bytes_per = if maxval < 256 { 1 } else { 2 };
            let raster = source.get(pos..pos + count * bytes_per).ok_or_else(|| {
                Error::Parse(format!("raster shorter than {width}x{height}"))
            })?;
            if bytes_per == 1 {
                raster.iter().map(|b| *b as usize).collect()
            } else {
                raster
                    .chunks(2)
                    .map(|c| ((c[0] as usize) << 8) | c[1] as usize)
                    .collect()
            }
        }
        other => return Err(Error::Parse(format!("unsupported graymap magic {other:?}"))),
    };
    if let Some(v) = values.iter().find(|v| **v > maxval) {
        return Err(Error::Parse(format!("pixel {v} above maxval {maxval}")));
    }
    Ok((width, height, values.iter().map(|v| 2 * v >= maxval).collect()))
}
