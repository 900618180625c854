//! GMAP1 grid files: a short text header followed by channel data, either
//! as ASCII rows or as raw little-endian doubles.
//!
//! ```text
//! GMAP1 text
//! width 4
//! height 3
//! cell_size 0.25
//! origin 0 0
//! channels obstacles road
//! <H rows of W values for channel 0>
//! <H rows of W values for channel 1>
//! ```
//!
//! The binary variant starts with `GMAP1 binary`, repeats the same header,
//! then a `data` line followed by `C·H·W` little-endian `f64` values.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::GridSpec;
use crate::error::{Error, Result};

pub const GRID_MAGIC: &str = "GMAP1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridFileKind {
    Text,
    Binary,
}

/// Raw contents of a grid file. Values are not range-checked here.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFile {
    pub spec: GridSpec,
    pub names: Vec<String>,
    pub channels: Vec<Vec<f64>>,
}

pub fn write_grid_file(path: impl AsRef<Path>, file: &GridFile, kind: GridFileKind) -> Result<()> {
    fs::write(path, encode(file, kind)?)?;
    Ok(())
}

pub fn read_grid_file(path: impl AsRef<Path>) -> Result<GridFile> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode(&bytes, &path.display().to_string())
}

pub(crate) fn encode(file: &GridFile, kind: GridFileKind) -> Result<Vec<u8>> {
    let s = file.spec;
    if file.names.len() != file.channels.len() || file.names.is_empty() {
        return Err(crate::error::invalid("grid file needs at least one named channel"));
    }
    if file.names.iter().any(|n| n.is_empty() || n.chars().any(char::is_whitespace)) {
        return Err(crate::error::invalid("channel names must be nonempty and free of whitespace"));
    }
    if file.channels.iter().any(|c| c.len() != s.cells()) {
        return Err(crate::error::invalid("channel length does not match the grid"));
    }
    let mut out = Vec::new();
    let tag = match kind {
        GridFileKind::Text => "text",
        GridFileKind::Binary => "binary",
    };
    writeln!(out, "{GRID_MAGIC} {tag}")?;
    writeln!(out, "width {}", s.width)?;
    writeln!(out, "height {}", s.height)?;
    writeln!(out, "cell_size {}", s.cell_size)?;
    writeln!(out, "origin {} {}", s.origin[0], s.origin[1])?;
    writeln!(out, "channels {}", file.names.join(" "))?;
    match kind {
        GridFileKind::Text => {
            for ch in &file.channels {
                for row in ch.chunks(s.width) {
                    let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    writeln!(out, "{}", line.join(" "))?;
                }
            }
        }
        GridFileKind::Binary => {
            writeln!(out, "data")?;
            for v in file.channels.iter().flatten() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Lines<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
    path: &'a str,
}

impl<'a> Lines<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_string(),
            line: self.line,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        if self.pos >= self.bytes.len() {
            self.line += 1;
            return Err(self.err("unexpected end of file"));
        }
        let rest = &self.bytes[self.pos..];
        let end = rest.iter().position(|b| *b == b'\n').unwrap_or(rest.len());
        self.pos += end + 1;
        self.line += 1;
        std::str::from_utf8(&rest[..end])
            .map(|s| s.trim_end_matches('\r'))
            .map_err(|_| self.err("line is not valid UTF-8"))
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.next()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        Ok(parts.collect())
    }

    fn number<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("cannot parse `{s}` as a number")))
    }
}

pub(crate) fn decode(bytes: &[u8], path: &str) -> Result<GridFile> {
    let mut lines = Lines {
        bytes,
        pos: 0,
        line: 0,
        path,
    };
    let magic = lines.next()?;
    let kind = match magic.split_whitespace().collect::<Vec<_>>().as_slice() {
        [m, "text"] if *m == GRID_MAGIC => GridFileKind::Text,
        [m, "binary"] if *m == GRID_MAGIC => GridFileKind::Binary,
        _ => return Err(lines.err(format!("expected `{GRID_MAGIC} text` or `{GRID_MAGIC} binary`"))),
    };
    let single = |lines: &mut Lines, key: &str| -> Result<String> {
        let v = lines.keyed(key)?;
        if v.len() != 1 {
            return Err(lines.err(format!("`{key}` takes one value")));
        }
        Ok(v[0].to_string())
    };
    let w = single(&mut lines, "width")?;
    let width: usize = lines.number(&w)?;
    let h = single(&mut lines, "height")?;
    let height: usize = lines.number(&h)?;
    let cs = single(&mut lines, "cell_size")?;
    let cell_size: f64 = lines.number(&cs)?;
    let origin = lines.keyed("origin")?;
    if origin.len() != 2 {
        return Err(lines.err("`origin` takes two values"));
    }
    let origin = [lines.number(origin[0])?, lines.number(origin[1])?];
    let spec = GridSpec::new(width, height, cell_size, origin).map_err(|e| lines.err(e.to_string()))?;
    let names: Vec<String> = lines.keyed("channels")?.iter().map(|s| s.to_string()).collect();
    if names.is_empty() {
        return Err(lines.err("no channels declared"));
    }

    let mut channels = Vec::with_capacity(names.len());
    match kind {
        GridFileKind::Text => {
            for _ in &names {
                let mut ch = Vec::with_capacity(spec.cells());
                for _ in 0..height {
                    let row = lines.next()?;
                    let before = ch.len();
                    for tok in row.split_whitespace() {
                        ch.push(lines.number::<f64>(tok)?);
                    }
                    if ch.len() - before != width {
                        return Err(lines.err(format!("expected {width} values, found {}", ch.len() - before)));
                    }
                }
                channels.push(ch);
            }
        }
        GridFileKind::Binary => {
            if lines.next()?.trim() != "data" {
                return Err(lines.err("expected `data`"));
            }
            let need = names.len() * spec.cells() * 8;
            let body = &bytes[lines.pos.min(bytes.len())..];
            if body.len() != need {
                return Err(lines.err(format!("binary body has {} bytes, expected {need}", body.len())));
            }
            for ch in body.chunks(spec.cells() * 8) {
                channels.push(
                    ch.chunks_exact(8)
                        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                        .collect(),
                );
            }
        }
    }
    Ok(GridFile {
        spec,
        names,
        channels,
    })
}
