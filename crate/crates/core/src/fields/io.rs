//! Plain-text field files.
//!
//! ```text
//! # field dim=1 n=200 extent=1 bc=neumann
//! 1.0000000000000000e0
//! ...
//! ```
//!
//! One value per line in storage order (x fastest), 17 significant digits,
//! which round-trips every `f64` exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Boundary, Field, Grid};
use crate::error::{Error, Result};

pub fn write_field<W: Write>(mut out: W, f: &Field) -> std::io::Result<()> {
    let g = f.grid();
    let join = |xs: Vec<String>| xs.join(",");
    writeln!(
        out,
        "# field dim={} n={} extent={} bc={}",
        g.dim(),
        join(g.cells().iter().map(|n| n.to_string()).collect()),
        join(g.extent().iter().map(|l| format!("{l:?}")).collect()),
        g.bc().as_str()
    )?;
    for v in f.values() {
        writeln!(out, "{v:.16e}")?;
    }
    Ok(())
}

pub fn read_field<R: BufRead>(input: R, origin: &str) -> Result<Field> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut lines = input.lines().enumerate();
    let header = match lines.next() {
        Some((_, Ok(l))) => l,
        Some((_, Err(e))) => return Err(Error::io(origin, e)),
        None => return Err(err(1, "empty field file".into())),
    };
    let rest = header
        .strip_prefix("# field")
        .ok_or_else(|| err(1, "missing `# field` header".into()))?;

    let (mut dim, mut cells, mut extent, mut bc) = (None, None, None, None);
    for tok in rest.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| err(1, format!("malformed header token `{tok}`")))?;
        match k {
            "dim" => {
                dim = Some(
                    v.parse::<usize>()
                        .map_err(|e| err(1, format!("dim: {e}")))?,
                )
            }
            "n" => {
                cells = Some(
                    v.split(',')
                        .map(|s| s.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| err(1, format!("n: {e}")))?,
                )
            }
            "extent" => {
                extent = Some(
                    v.split(',')
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| err(1, format!("extent: {e}")))?,
                )
            }
            "bc" => bc = Some(v.parse::<Boundary>().map_err(|e| err(1, e))?),
            other => return Err(err(1, format!("unknown header key `{other}`"))),
        }
    }
    let (dim, cells, extent, bc) = match (dim, cells, extent, bc) {
        (Some(d), Some(c), Some(e), Some(b)) => (d, c, e, b),
        _ => return Err(err(1, "header needs dim, n, extent and bc".into())),
    };
    if cells.len() != dim || extent.len() != dim {
        return Err(err(1, format!("dim={dim} but n/extent have other lengths")));
    }
    let grid = Grid::new(&cells, &extent, bc).map_err(|e| err(1, e.to_string()))?;

    let mut values = Vec::with_capacity(grid.len());
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v = t
            .parse::<f64>()
            .map_err(|e| err(i + 1, format!("bad value `{t}`: {e}")))?;
        values.push(v);
    }
    if values.len() != grid.len() {
        return Err(err(
            0,
            format!("expected {} values, found {}", grid.len(), values.len()),
        ));
    }
    Field::new(grid, values)
}

pub fn save_field(path: impl AsRef<Path>, f: &Field) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_field(&mut w, f).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_field(path: impl AsRef<Path>) -> Result<Field> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_field(BufReader::new(file), &path.display().to_string())
}
