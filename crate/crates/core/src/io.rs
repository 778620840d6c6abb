//! Field dumps and CSV reports.
//!
//! A dump is a pair of files: `<stem>.bin` holding the values as flat
//! row-major little-endian bytes (component-major for vector fields), and
//! `<stem>.hdr`, a short `key value` text header with the shape and spacing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{HomError, Result};
use crate::numerics::{Grid, ScalarField, StaggeredField};

const MAGIC: &str = "homlab-dump 1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F64,
    U8,
}

impl DType {
    fn name(self) -> &'static str {
        match self {
            DType::F64 => "f64le",
            DType::U8 => "u8",
        }
    }

    fn width(self) -> usize {
        match self {
            DType::F64 => 8,
            DType::U8 => 1,
        }
    }
}

/// Contents of a `.hdr` sidecar.
#[derive(Clone, Debug, PartialEq)]
pub struct DumpHeader {
    pub name: String,
    pub dtype: DType,
    pub dim: usize,
    /// Cells per axis, `[n, n, 1]` for planar grids.
    pub shape: [usize; 3],
    pub components: usize,
    pub spacing: f64,
    pub side: f64,
    /// Where the values live: `cell` or `face`.
    pub location: String,
}

impl DumpHeader {
    fn for_grid(name: &str, grid: &Grid, dtype: DType, components: usize, location: &str) -> Self {
        Self {
            name: name.to_string(),
            dtype,
            dim: grid.dim(),
            shape: grid.shape(),
            components,
            spacing: grid.h(),
            side: grid.side(),
            location: location.to_string(),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.shape[0], self.side)
    }

    fn values(&self) -> usize {
        self.shape.iter().product::<usize>() * self.components
    }

    fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format {MAGIC}");
        let _ = writeln!(s, "name {}", self.name);
        let _ = writeln!(s, "dtype {}", self.dtype.name());
        let _ = writeln!(s, "dim {}", self.dim);
        let _ = writeln!(s, "shape {} {} {}", self.shape[0], self.shape[1], self.shape[2]);
        let _ = writeln!(s, "components {}", self.components);
        let _ = writeln!(s, "spacing {:.17e}", self.spacing);
        let _ = writeln!(s, "side {:.17e}", self.side);
        let _ = writeln!(s, "location {}", self.location);
        let _ = writeln!(s, "order row-major, last axis fastest");
        s
    }

    fn parse(text: &str) -> Result<Self> {
        let mut h = DumpHeader {
            name: String::new(),
            dtype: DType::F64,
            dim: 0,
            shape: [0; 3],
            components: 1,
            spacing: 0.0,
            side: 0.0,
            location: "cell".into(),
        };
        let mut seen_magic = false;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            let bad = |what: &str| HomError::Parse(format!("header field {key}: {what} `{rest}`"));
            match key {
                "format" => seen_magic = rest == MAGIC,
                "name" => h.name = rest.to_string(),
                "dtype" => {
                    h.dtype = match rest {
                        "f64le" => DType::F64,
                        "u8" => DType::U8,
                        _ => return Err(bad("unknown dtype")),
                    }
                }
                "dim" => h.dim = rest.parse().map_err(|_| bad("not an integer"))?,
                "shape" => {
                    let v: Vec<usize> = rest.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad("not integers"))?;
                    if v.len() != 3 {
                        return Err(bad("expected three extents"));
                    }
                    h.shape = [v[0], v[1], v[2]];
                }
                "components" => h.components = rest.parse().map_err(|_| bad("not an integer"))?,
                "spacing" => h.spacing = rest.parse().map_err(|_| bad("not a number"))?,
                "side" => h.side = rest.parse().map_err(|_| bad("not a number"))?,
                "location" => h.location = rest.to_string(),
                _ => {}
            }
        }
        if !seen_magic {
            return Err(HomError::Parse(format!("missing `format {MAGIC}` line")));
        }
        if h.dim != 2 && h.dim != 3 {
            return Err(HomError::Parse(format!("header dim {} is not 2 or 3", h.dim)));
        }
        Ok(h)
    }
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("hdr"))
}

fn write_raw(stem: &Path, header: &DumpHeader, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = stem.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let (bin, hdr) = paths(stem);
    fs::write(bin, bytes)?;
    fs::write(hdr, header.render())?;
    Ok(())
}

fn f64_bytes<'a>(chunks: impl Iterator<Item = &'a [f64]>) -> Vec<u8> {
    let mut out = Vec::new();
    for c in chunks {
        for v in c {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_scalar(stem: &Path, name: &str, field: &ScalarField) -> Result<()> {
    let header = DumpHeader::for_grid(name, field.grid(), DType::F64, 1, "cell");
    write_raw(stem, &header, &f64_bytes(std::iter::once(field.data.as_slice())))
}

/// Face field: component `a` lives on the faces normal to axis `a`.
pub fn write_staggered(stem: &Path, name: &str, field: &StaggeredField) -> Result<()> {
    let header = DumpHeader::for_grid(name, field.grid(), DType::F64, field.comps.len(), "face");
    write_raw(stem, &header, &f64_bytes(field.comps.iter().map(Vec::as_slice)))
}

/// One byte per cell, 1 for solid.
pub fn write_mask(stem: &Path, name: &str, grid: &Grid, solid: &[bool]) -> Result<()> {
    if solid.len() != grid.len() {
        return Err(HomError::GridMismatch(format!("mask has {} entries, grid has {}", solid.len(), grid.len())));
    }
    let header = DumpHeader::for_grid(name, grid, DType::U8, 1, "cell");
    let bytes: Vec<u8> = solid.iter().map(|&s| s as u8).collect();
    write_raw(stem, &header, &bytes)
}

/// Reads a dump back as the header and its values widened to `f64`.
pub fn read_dump(stem: &Path) -> Result<(DumpHeader, Vec<f64>)> {
    let (bin, hdr) = paths(stem);
    let header = DumpHeader::parse(&fs::read_to_string(hdr)?)?;
    let bytes = fs::read(bin)?;
    let expect = header.values() * header.dtype.width();
    if bytes.len() != expect {
        return Err(HomError::Parse(format!("{} holds {} bytes, header implies {}", stem.display(), bytes.len(), expect)));
    }
    let values = match header.dtype {
        DType::F64 => bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
        DType::U8 => bytes.iter().map(|&b| b as f64).collect(),
    };
    Ok((header, values))
}

pub fn read_scalar(stem: &Path) -> Result<ScalarField> {
    let (h, values) = read_dump(stem)?;
    if h.components != 1 {
        return Err(HomError::Parse(format!("expected a scalar dump, found {} components", h.components)));
    }
    ScalarField::from_vec(h.grid()?, values)
}

pub fn read_staggered(stem: &Path) -> Result<StaggeredField> {
    let (h, values) = read_dump(stem)?;
    let grid = h.grid()?;
    if h.components != grid.dim() {
        return Err(HomError::Parse(format!("expected {} components, found {}", grid.dim(), h.components)));
    }
    let comps = values.chunks_exact(grid.len()).map(<[f64]>::to_vec).collect();
    StaggeredField::from_comps(grid, comps)
}

/// Shortest round-trip formatting, so equal inputs give byte-equal CSV.
pub fn csv_number(x: f64) -> String {
    format!("{x:e}")
}

/// Minimal CSV table writer; cells are numbers or plain identifiers.
#[derive(Clone, Debug, Default)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(HomError::Config(format!("CSV row has {} cells, header has {}", row.len(), self.header.len())));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        fs::write(path, self.render())?;
        Ok(())
    }
}
