//! ASCII mesh format.
//!
//! ```text
//! dim nv nc nb
//! x y [z]            (nv lines)
//! i j k [l]          (nc lines, 0-based vertex indices)
//! i j [k] TAG        (nb lines, TAG is OBSTACLE or OUTER)
//! ```

use std::io::Write;
use std::path::Path;

use super::{BoundaryTag, ExteriorMesh, MeshOptions};
use crate::error::{Error, Result};

pub fn write_mesh<W: Write>(mesh: &ExteriorMesh, mut out: W) -> Result<()> {
    let dim = mesh.dim();
    writeln!(
        out,
        "{} {} {} {}",
        dim,
        mesh.n_vertices(),
        mesh.n_cells(),
        mesh.boundary().len()
    )?;
    for v in mesh.vertices() {
        let coords: Vec<String> = v[..dim].iter().map(|x| format!("{x:.16e}")).collect();
        writeln!(out, "{}", coords.join(" "))?;
    }
    for c in 0..mesh.n_cells() {
        let idx: Vec<String> = mesh.cell(c).iter().map(|i| i.to_string()).collect();
        writeln!(out, "{}", idx.join(" "))?;
    }
    for f in mesh.boundary() {
        let idx: Vec<String> = f.nodes.iter().map(|i| i.to_string()).collect();
        writeln!(out, "{} {}", idx.join(" "), f.tag.as_str())?;
    }
    Ok(())
}

pub fn save_mesh(mesh: &ExteriorMesh, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_mesh(mesh, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<ExteriorMesh> {
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text)
}

pub fn parse_mesh(text: &str) -> Result<ExteriorMesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut last_line = 0;
    let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
        match lines.next() {
            Some((n, l)) => {
                last_line = n;
                Ok((n, l.split_whitespace().collect()))
            }
            None => Err(Error::Parse {
                line: last_line + 1,
                msg: format!("unexpected end of file, expected {what}"),
            }),
        }
    };
    fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        s.parse::<T>().map_err(|e| Error::Parse {
            line,
            msg: format!("`{s}`: {e}"),
        })
    }
    let expect_len = |line: usize, fields: &[&str], n: usize| {
        if fields.len() != n {
            Err(Error::Parse {
                line,
                msg: format!("expected {n} fields, found {}", fields.len()),
            })
        } else {
            Ok(())
        }
    };

    let (n, header) = next("header")?;
    expect_len(n, &header, 4)?;
    let dim: usize = num(n, header[0])?;
    let nv: usize = num(n, header[1])?;
    let nc: usize = num(n, header[2])?;
    let nb: usize = num(n, header[3])?;
    if dim != 2 && dim != 3 {
        return Err(Error::Parse {
            line: n,
            msg: format!("dimension {dim} not supported"),
        });
    }

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (n, f) = next("vertex")?;
        expect_len(n, &f, dim)?;
        let mut p = [0.0; 3];
        for k in 0..dim {
            p[k] = num(n, f[k])?;
        }
        vertices.push(p);
    }
    let mut cells = Vec::with_capacity(nc * (dim + 1));
    for _ in 0..nc {
        let (n, f) = next("cell")?;
        expect_len(n, &f, dim + 1)?;
        for s in f {
            cells.push(num(n, s)?);
        }
    }
    let mut boundary = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (n, f) = next("boundary face")?;
        expect_len(n, &f, dim + 1)?;
        let nodes = f[..dim].iter().map(|s| num(n, s)).collect::<Result<Vec<usize>>>()?;
        let tag: BoundaryTag = f[dim].parse().map_err(|msg| Error::Parse { line: n, msg })?;
        boundary.push((nodes, tag));
    }
    ExteriorMesh::new(dim, vertices, cells, boundary, MeshOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_annulus_2d, generate_shell_3d};

    #[test]
    fn round_trip_preserves_arrays() {
        for mesh in [
            generate_annulus_2d(1.0, 10.0, 6, 12, 1.2).unwrap(),
            generate_shell_3d(1.0, 3.0, 0, 2).unwrap(),
        ] {
            let mut buf = Vec::new();
            write_mesh(&mesh, &mut buf).unwrap();
            let back = parse_mesh(std::str::from_utf8(&buf).unwrap()).unwrap();
            assert_eq!(back.vertices(), mesh.vertices());
            assert_eq!(back.cells_flat(), mesh.cells_flat());
            assert_eq!(back.boundary(), mesh.boundary());
        }
    }

    #[test]
    fn negative_cell_is_validation_error() {
        let mesh = generate_annulus_2d(1.0, 10.0, 4, 8, 1.0).unwrap();
        let mut buf = Vec::new();
        write_mesh(&mesh, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        // Swap two indices of the first cell.
        let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
        let first_cell = 1 + mesh.n_vertices();
        let f: Vec<&str> = lines[first_cell].split_whitespace().collect();
        lines[first_cell] = format!("{} {} {}", f[1], f[0], f[2]);
        let err = parse_mesh(&lines.join("\n")).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let mesh = generate_annulus_2d(1.0, 10.0, 4, 8, 1.0).unwrap();
        let mut buf = Vec::new();
        write_mesh(&mesh, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: Vec<&str> = text.lines().take(20).collect();
        match parse_mesh(&cut.join("\n")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 21),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_mesh("2 3 1 x\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
