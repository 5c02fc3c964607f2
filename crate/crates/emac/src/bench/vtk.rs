//! Legacy ASCII VTK dumps of velocity and pressure fields, vertex-sampled.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fem::space::{FEFunction, FieldKind};

/// Writes the mesh with the velocity as point vectors and the pressure as a
/// point scalar. Velocity midpoint DOFs are not part of the dump; the vertex
/// samples are enough for visualization.
pub fn write_fields(u: &FEFunction, p: &FEFunction, path: impl AsRef<Path>) -> Result<()> {
    assert_eq!(u.kind(), FieldKind::Velocity);
    assert_eq!(p.kind(), FieldKind::Pressure);
    let path = path.as_ref();
    let space = u.space();
    let mesh = space.mesh();
    let nv = mesh.num_vertices();
    let n = space.num_scalar_nodes();

    let mut out = String::new();
    crate::mesh::vtk_mesh_header(mesh, &mut out);
    let _ = writeln!(out, "POINT_DATA {nv}");
    let _ = writeln!(out, "VECTORS velocity double");
    for v in 0..nv {
        let _ = writeln!(out, "{:e} {:e} 0", u.coeffs()[v], u.coeffs()[n + v]);
    }
    let _ = writeln!(out, "SCALARS pressure double 1");
    let _ = writeln!(out, "LOOKUP_TABLE default");
    for v in 0..nv {
        let _ = writeln!(out, "{:e}", p.coeffs()[v]);
    }

    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::space::{interpolate_pressure, interpolate_velocity, TaylorHoodSpace};
    use crate::mesh::{build_uniform_tri_mesh, Rect};
    use std::sync::Arc;

    #[test]
    fn field_dump_structure() {
        let mesh = Arc::new(build_uniform_tri_mesh(2, 2, Rect::unit()).unwrap());
        let space = Arc::new(TaylorHoodSpace::new(mesh));
        let u = interpolate_velocity(&space, |x, y| [y, -x]);
        let p = interpolate_pressure(&space, |x, _| x);
        let dir = std::env::temp_dir().join(format!("emac-vtk-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("fields.vtk");
        write_fields(&u, &p, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("DATASET UNSTRUCTURED_GRID"));
        assert!(text.contains("POINT_DATA 9"));
        assert!(text.contains("VECTORS velocity double"));
        assert!(text.contains("SCALARS pressure double 1"));
        std::fs::remove_dir_all(&dir).ok();
    }
}
