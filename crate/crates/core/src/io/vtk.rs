//! Legacy ASCII VTK unstructured grids with per-point curvature data.

use std::fmt::Write as _;
use std::path::Path;

use crate::curvature::ScalarField;
use crate::mesh::DeformationState;
use crate::{Error, Result, Vec3};

const VTK_TRIANGLE: u8 = 5;
const VTK_QUADRATIC_TRIANGLE: u8 = 22;

/// Reference coordinates of the six P2 nodes in local order.
const NODES: [[f64; 2]; 6] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]];

/// Point fields sampled at vertices (and edge nodes on quadratic geometry).
struct Sampled {
    points: Vec<Vec3>,
    displacement: Vec<Vec3>,
    kappa: Vec<f64>,
    sigma: Option<Vec<f64>>,
    cells: Vec<Vec<usize>>,
    quadratic: bool,
}

fn sample(deformation: &DeformationState, kappa: &ScalarField, sigma: Option<&ScalarField>) -> Result<Sampled> {
    let mesh = deformation.mesh();
    for f in std::iter::once(kappa).chain(sigma) {
        if !std::sync::Arc::ptr_eq(f.space.mesh(), mesh) {
            return Err(Error::InvalidArgument("field and deformation live on different meshes".into()));
        }
    }
    let quadratic = !deformation.is_affine() || kappa.space.order() > 1;
    let nv = mesh.n_vertices();
    let n = if quadratic { nv + mesh.n_edges() } else { nv };
    let mut s = Sampled {
        points: vec![Vec3::zeros(); n],
        displacement: vec![Vec3::zeros(); n],
        kappa: vec![0.0; n],
        sigma: sigma.map(|_| vec![0.0; n]),
        cells: Vec::with_capacity(mesh.n_triangles()),
        quadratic,
    };
    let local = if quadratic { 6 } else { 3 };
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangles()[t];
        let edges = mesh.triangle_edges(t);
        let map = deformation.element(t);
        let reference = deformation.reference_element(t);
        let mut cell = Vec::with_capacity(local);
        for (i, xi) in NODES.iter().take(local).enumerate() {
            let p = if i < 3 { tri[i] } else { nv + edges[i - 3] };
            s.points[p] = map.point(*xi);
            s.displacement[p] = s.points[p] - reference.point(*xi);
            s.kappa[p] = kappa.eval_ref(t, *xi).0;
            if let (Some(out), Some(f)) = (s.sigma.as_mut(), sigma) {
                out[p] = f.eval_ref(t, *xi).0;
            }
            cell.push(p);
        }
        s.cells.push(cell);
    }
    Ok(s)
}

fn scalars(out: &mut String, name: &str, values: &[f64]) {
    let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for v in values {
        let _ = writeln!(out, "{v:.16e}");
    }
}

/// Legacy VTK text for a deformed surface with κ, σ (optional), ½|κ| and the displacement.
pub fn format_vtk(deformation: &DeformationState, kappa: &ScalarField, sigma: Option<&ScalarField>) -> Result<String> {
    let s = sample(deformation, kappa, sigma)?;
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0\nhelfrich surface\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {} double", s.points.len());
    for p in &s.points {
        let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", p.x, p.y, p.z);
    }
    let size: usize = s.cells.iter().map(|c| c.len() + 1).sum();
    let _ = writeln!(out, "CELLS {} {size}", s.cells.len());
    for c in &s.cells {
        let _ = write!(out, "{}", c.len());
        for p in c {
            let _ = write!(out, " {p}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "CELL_TYPES {}", s.cells.len());
    let ty = if s.quadratic { VTK_QUADRATIC_TRIANGLE } else { VTK_TRIANGLE };
    for _ in &s.cells {
        let _ = writeln!(out, "{ty}");
    }
    let _ = writeln!(out, "POINT_DATA {}", s.points.len());
    scalars(&mut out, "kappa", &s.kappa);
    if let Some(sigma) = &s.sigma {
        scalars(&mut out, "sigma", sigma);
    }
    let mean: Vec<f64> = s.kappa.iter().map(|k| 0.5 * k.abs()).collect();
    scalars(&mut out, "mean_curvature", &mean);
    let _ = writeln!(out, "VECTORS displacement double");
    for d in &s.displacement {
        let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", d.x, d.y, d.z);
    }
    Ok(out)
}

pub fn write_vtk(path: &Path, deformation: &DeformationState, kappa: &ScalarField, sigma: Option<&ScalarField>) -> Result<()> {
    let text = format_vtk(deformation, kappa, sigma)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
