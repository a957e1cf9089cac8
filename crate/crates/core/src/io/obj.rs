//! Wavefront OBJ restricted to `v` and `f` records.
//!
//! Curved meshes carry their edge geometry nodes in a sidecar file with the
//! extension `.mid`, one `i j x y z` line per edge (1-based vertex indices).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::mesh::SurfaceMesh;
use crate::{Error, Result, Vec3};

/// Sidecar path holding edge geometry nodes.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("mid")
}

pub fn format_obj(mesh: &SurfaceMesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {:.16e} {:.16e} {:.16e}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

fn format_sidecar(mesh: &SurfaceMesh, nodes: &[Vec3]) -> String {
    let mut out = String::new();
    for (e, x) in mesh.edges().iter().zip(nodes) {
        let [a, b] = e.vertices;
        let _ = writeln!(out, "{} {} {:.16e} {:.16e} {:.16e}", a + 1, b + 1, x.x, x.y, x.z);
    }
    out
}

/// Writes the mesh and, for curved meshes, its `.mid` sidecar.
pub fn write_obj(path: &Path, mesh: &SurfaceMesh) -> Result<()> {
    std::fs::write(path, format_obj(mesh)).map_err(|e| Error::io(path, e))?;
    if let Some(nodes) = mesh.edge_midpoint_nodes() {
        let side = sidecar_path(path);
        std::fs::write(&side, format_sidecar(mesh, nodes)).map_err(|e| Error::io(side, e))?;
    }
    Ok(())
}

fn parse_floats<const N: usize>(fields: &[&str], err: &dyn Fn(String) -> Error) -> Result<[f64; N]> {
    if fields.len() < N {
        return Err(err(format!("expected {N} numbers, got {}", fields.len())));
    }
    let mut out = [0.0; N];
    for (o, f) in out.iter_mut().zip(fields) {
        *o = f.parse().map_err(|_| err(format!("bad number '{f}'")))?;
    }
    Ok(out)
}

fn parse_index(field: &str, n: usize, err: &dyn Fn(String) -> Error) -> Result<usize> {
    let head = field.split('/').next().unwrap_or(field);
    match head.parse::<usize>() {
        Ok(i) if i >= 1 && i <= n => Ok(i - 1),
        _ => Err(err(format!("vertex index '{field}' outside 1..={n}"))),
    }
}

/// Parses OBJ text into vertices and triangles.
pub fn parse_obj(text: &str, path: &Path) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut fields = line.split_whitespace();
        match fields.next() {
            None => {}
            Some("v") => {
                let rest: Vec<&str> = fields.collect();
                let [x, y, z] = parse_floats::<3>(&rest, &err)?;
                vertices.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                let rest: Vec<&str> = fields.collect();
                if rest.len() != 3 {
                    return Err(err(format!("only triangles are supported, got {} vertices", rest.len())));
                }
                let mut t = [0; 3];
                for (slot, f) in t.iter_mut().zip(&rest) {
                    *slot = parse_index(f, vertices.len(), &err)?;
                }
                triangles.push(t);
            }
            Some(other) => return Err(err(format!("unsupported record '{other}'"))),
        }
    }
    Ok((vertices, triangles))
}

/// Reads a mesh and, if present, its `.mid` sidecar of edge nodes.
pub fn read_obj(path: &Path) -> Result<SurfaceMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (vertices, triangles) = parse_obj(&text, path)?;
    let mesh = SurfaceMesh::new(vertices, triangles)?;
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(mesh);
    }
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let index: HashMap<[usize; 2], usize> = mesh
        .edges()
        .iter()
        .enumerate()
        .map(|(e, r)| ([r.vertices[0].min(r.vertices[1]), r.vertices[0].max(r.vertices[1])], e))
        .collect();
    let mut nodes: Vec<Option<Vec3>> = vec![None; mesh.n_edges()];
    for (i, raw) in text.lines().enumerate() {
        let err = |message: String| Error::Parse {
            path: side.clone(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 5 {
            return Err(err("expected 'i j x y z'".into()));
        }
        let a = parse_index(fields[0], mesh.n_vertices(), &err)?;
        let b = parse_index(fields[1], mesh.n_vertices(), &err)?;
        let e = *index
            .get(&[a.min(b), a.max(b)])
            .ok_or_else(|| err(format!("vertices {} and {} do not share an edge", a + 1, b + 1)))?;
        let [x, y, z] = parse_floats::<3>(&fields[2..], &err)?;
        nodes[e] = Some(Vec3::new(x, y, z));
    }
    let nodes = nodes
        .into_iter()
        .enumerate()
        .map(|(e, n)| n.ok_or_else(|| Error::Parse {
            path: side.clone(),
            line: 0,
            message: format!("missing node for edge {e}"),
        }))
        .collect::<Result<Vec<_>>>()?;
    mesh.with_edge_midpoint_nodes(nodes)
}
