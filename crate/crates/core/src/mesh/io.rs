//! Line-oriented mesh text format.
//!
//! ```text
//! # comment
//! NV NC
//! x y            (NV lines)
//! m i_1 ... i_m  (NC lines, 0-based CCW vertex indices)
//! ```

use std::io::{self, BufRead, Write};

use nalgebra::Point2;

use super::{MeshError, PolygonalMesh};

fn parse_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses a mesh from text. Errors carry 1-based line numbers.
pub fn import_mesh(text: &str) -> Result<PolygonalMesh, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "missing header `NV NC`"))?;
    let counts: Vec<&str> = header.split_whitespace().collect();
    if counts.len() != 2 {
        return Err(parse_err(hline, format!("expected `NV NC`, found `{header}`")));
    }
    let parse_count = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_err(hline, format!("invalid count `{s}`")))
    };
    let nv = parse_count(counts[0])?;
    let nc = parse_count(counts[1])?;

    let mut vertices = Vec::with_capacity(nv);
    for k in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(hline, format!("expected {nv} vertices, found {k}")))?;
        let xy: Vec<&str> = l.split_whitespace().collect();
        if xy.len() != 2 {
            return Err(parse_err(ln, format!("expected `x y`, found `{l}`")));
        }
        let coord = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| parse_err(ln, format!("invalid coordinate `{s}`")))
        };
        vertices.push(Point2::new(coord(xy[0])?, coord(xy[1])?));
    }

    let mut cells = Vec::with_capacity(nc);
    let mut cell_lines = Vec::with_capacity(nc);
    for k in 0..nc {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(hline, format!("expected {nc} cells, found {k}")))?;
        let fields: Vec<&str> = l.split_whitespace().collect();
        let m: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(ln, format!("invalid vertex count `{}`", fields[0])))?;
        if fields.len() != m + 1 {
            return Err(parse_err(
                ln,
                format!("cell declares {m} vertices but lists {}", fields.len() - 1),
            ));
        }
        let mut cell = Vec::with_capacity(m);
        for s in &fields[1..] {
            let v: usize = s
                .parse()
                .map_err(|_| parse_err(ln, format!("invalid vertex index `{s}`")))?;
            if v >= nv {
                return Err(parse_err(
                    ln,
                    format!("vertex index {v} out of range (NV = {nv})"),
                ));
            }
            cell.push(v);
        }
        cells.push(cell);
        cell_lines.push(ln);
    }
    if let Some((ln, l)) = lines.next() {
        return Err(parse_err(ln, format!("unexpected trailing content `{l}`")));
    }

    PolygonalMesh::new(vertices, cells).map_err(|e| match e {
        MeshError::InvalidCell { cell, reason } => parse_err(cell_lines[cell], format!("cell {cell}: {reason}")),
        other => other,
    })
}

pub fn read_mesh<R: BufRead>(mut reader: R) -> Result<PolygonalMesh, MeshError> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| parse_err(0, format!("read failed: {e}")))?;
    import_mesh(&text)
}

/// Writes the mesh; coordinates use shortest round-trip formatting.
pub fn write_mesh<W: Write>(mesh: &PolygonalMesh, mut w: W) -> io::Result<()> {
    writeln!(w, "{} {}", mesh.num_vertices(), mesh.num_cells())?;
    for p in mesh.vertices() {
        writeln!(w, "{:?} {:?}", p.x, p.y)?;
    }
    for c in mesh.cells() {
        write!(w, "{}", c.vertices.len())?;
        for v in &c.vertices {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn export_mesh(mesh: &PolygonalMesh) -> String {
    let mut buf = Vec::new();
    write_mesh(mesh, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("mesh text is ASCII")
}
