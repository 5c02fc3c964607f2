//! Uniform triangulations of axis-aligned rectangles.
//!
//! The mesh stores:
//! - vertex coordinates (row-major grid numbering),
//! - cell-vertex connectivity (counterclockwise, each grid square split along
//!   the lower-left to upper-right diagonal),
//! - unique edges with boundary flags, discovered in cell order,
//! - per-cell edge triples matching the local edge convention
//!   `(v0,v1), (v1,v2), (v2,v0)`.
//!
//! Meshes are immutable after construction and safe to share across threads.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fem::TaylorHoodSpace;

/// Axis-aligned domain rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Rect {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Self {
        Rect {
            xmin,
            xmax,
            ymin,
            ymax,
        }
    }

    /// The unit square (0,1)^2.
    pub fn unit() -> Self {
        Rect::new(0.0, 1.0, 0.0, 1.0)
    }

    /// The square (-1/2,1/2)^2.
    pub fn centered_unit() -> Self {
        Rect::new(-0.5, 0.5, -0.5, 0.5)
    }

    pub fn area(&self) -> f64 {
        (self.xmax - self.xmin) * (self.ymax - self.ymin)
    }
}

/// Conforming triangulation of a rectangle.
#[derive(Clone, Debug)]
pub struct TriMesh {
    /// Vertex coordinates, length `nv`.
    pub vertices: Vec<[f64; 2]>,
    /// Vertex index triples, counterclockwise, length `nc`.
    pub cells: Vec<[usize; 3]>,
    /// Unique vertex pairs, smaller index first, length `ne`.
    pub edges: Vec<[usize; 2]>,
    /// Per-cell edge indices for local edges `(v0,v1), (v1,v2), (v2,v0)`.
    pub cell_edges: Vec<[usize; 3]>,
    /// True for vertices on the domain boundary.
    pub boundary_vertex: Vec<bool>,
    /// True for edges on the domain boundary.
    pub boundary_edge: Vec<bool>,
    /// Domain rectangle.
    pub bbox: Rect,
}

impl TriMesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Midpoint of an edge.
    pub fn edge_midpoint(&self, edge: usize) -> [f64; 2] {
        let [a, b] = self.edges[edge];
        let pa = self.vertices[a];
        let pb = self.vertices[b];
        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
    }

    /// Twice the signed area of a cell; positive for counterclockwise cells.
    pub fn cell_det(&self, cell: usize) -> f64 {
        let [a, b, c] = self.cells[cell];
        let pa = self.vertices[a];
        let pb = self.vertices[b];
        let pc = self.vertices[c];
        (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1])
    }

    /// Writes the triangulation as legacy ASCII VTK (unstructured grid), for
    /// visualization only; nothing in the solver consumes this.
    pub fn write_vtk(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        vtk_mesh_header(self, &mut out);
        let mut file =
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn vtk_mesh_header(mesh: &TriMesh, out: &mut String) {
    use std::fmt::Write as _;
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("triangulation\n");
    out.push_str("ASCII\n");
    out.push_str("DATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {} double", mesh.num_vertices());
    for v in &mesh.vertices {
        let _ = writeln!(out, "{:e} {:e} 0", v[0], v[1]);
    }
    let _ = writeln!(out, "CELLS {} {}", mesh.num_cells(), 4 * mesh.num_cells());
    for c in &mesh.cells {
        let _ = writeln!(out, "3 {} {} {}", c[0], c[1], c[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {}", mesh.num_cells());
    for _ in 0..mesh.num_cells() {
        out.push_str("5\n");
    }
}

/// Builds a uniform triangulation with `nx` by `ny` grid squares, each split
/// along its lower-left to upper-right diagonal. Vertices are numbered
/// row-major; edges are discovered in cell order. Identical inputs always
/// produce identical numbering.
pub fn build_uniform_tri_mesh(nx: usize, ny: usize, rect: Rect) -> Result<TriMesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::invalid(format!(
            "cell counts must be positive, got {nx}x{ny}"
        )));
    }
    if !(rect.xmax > rect.xmin && rect.ymax > rect.ymin) {
        return Err(Error::invalid(format!("degenerate rectangle {rect:?}")));
    }

    let nvx = nx + 1;
    let nvy = ny + 1;
    let hx = (rect.xmax - rect.xmin) / nx as f64;
    let hy = (rect.ymax - rect.ymin) / ny as f64;

    let mut vertices = Vec::with_capacity(nvx * nvy);
    for j in 0..nvy {
        for i in 0..nvx {
            // Endpoint coordinates are exact; interior ones come from the step.
            let x = if i == nx {
                rect.xmax
            } else {
                rect.xmin + i as f64 * hx
            };
            let y = if j == ny {
                rect.ymax
            } else {
                rect.ymin + j as f64 * hy
            };
            vertices.push([x, y]);
        }
    }

    let vid = |i: usize, j: usize| j * nvx + i;
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let v00 = vid(i, j);
            let v10 = vid(i + 1, j);
            let v01 = vid(i, j + 1);
            let v11 = vid(i + 1, j + 1);
            cells.push([v00, v10, v11]);
            cells.push([v00, v11, v01]);
        }
    }

    let mut edges: Vec<[usize; 2]> = Vec::new();
    let mut edge_of: HashMap<(usize, usize), usize> = HashMap::new();
    let mut cell_edges = Vec::with_capacity(cells.len());
    let mut edge_cell_count: Vec<u8> = Vec::new();
    for cell in &cells {
        let mut ids = [0usize; 3];
        for (k, (a, b)) in [(cell[0], cell[1]), (cell[1], cell[2]), (cell[2], cell[0])]
            .into_iter()
            .enumerate()
        {
            let key = (a.min(b), a.max(b));
            let id = *edge_of.entry(key).or_insert_with(|| {
                edges.push([key.0, key.1]);
                edge_cell_count.push(0);
                edges.len() - 1
            });
            edge_cell_count[id] += 1;
            ids[k] = id;
        }
        cell_edges.push(ids);
    }

    let boundary_edge: Vec<bool> = edge_cell_count.iter().map(|&n| n == 1).collect();
    let mut boundary_vertex = vec![false; vertices.len()];
    for (e, &is_b) in boundary_edge.iter().enumerate() {
        if is_b {
            boundary_vertex[edges[e][0]] = true;
            boundary_vertex[edges[e][1]] = true;
        }
    }

    let mesh = TriMesh {
        vertices,
        cells,
        edges,
        cell_edges,
        boundary_vertex,
        boundary_edge,
        bbox: rect,
    };
    debug_assert!(mesh.cells.iter().enumerate().all(|(c, _)| mesh.cell_det(c) > 0.0));
    Ok(mesh)
}

/// All velocity DOFs (both components) whose node lies on the domain boundary,
/// sorted ascending.
pub fn boundary_dofs(mesh: &TriMesh, space: &TaylorHoodSpace) -> Result<Vec<usize>> {
    if !std::ptr::eq(space.mesh().as_ref() as *const TriMesh, mesh as *const TriMesh)
        && (space.mesh().num_vertices() != mesh.num_vertices()
            || space.mesh().num_edges() != mesh.num_edges())
    {
        return Err(Error::invalid("space was not built on this mesh"));
    }
    let nv = mesh.num_vertices();
    let n = space.num_scalar_nodes();
    let mut dofs = Vec::new();
    for comp in 0..2 {
        for v in 0..nv {
            if mesh.boundary_vertex[v] {
                dofs.push(comp * n + v);
            }
        }
        for e in 0..mesh.num_edges() {
            if mesh.boundary_edge[e] {
                dofs.push(comp * n + nv + e);
            }
        }
    }
    dofs.sort_unstable();
    Ok(dofs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_mesh_counts() {
        let m = build_uniform_tri_mesh(1, 1, Rect::unit()).unwrap();
        assert_eq!(m.num_vertices(), 4);
        assert_eq!(m.num_cells(), 2);
        assert_eq!(m.num_edges(), 5);
        // one interior edge (the diagonal), four boundary edges
        assert_eq!(m.boundary_edge.iter().filter(|&&b| !b).count(), 1);
        assert!(m.boundary_vertex.iter().all(|&b| b));
    }

    #[test]
    fn gresho_mesh_counts() {
        let m = build_uniform_tri_mesh(48, 48, Rect::centered_unit()).unwrap();
        assert_eq!(m.num_vertices(), 2401);
        assert_eq!(m.num_cells(), 4608);
        assert_eq!(m.num_edges(), 7008);
    }

    #[test]
    fn euler_formula_and_orientation() {
        for (nx, ny) in [(1, 1), (2, 3), (7, 5), (16, 16)] {
            let m = build_uniform_tri_mesh(nx, ny, Rect::new(-1.0, 2.0, 0.5, 1.5)).unwrap();
            let (nv, ne, nc) = (m.num_vertices() as i64, m.num_edges() as i64, m.num_cells() as i64);
            assert_eq!(nv - ne + nc + 1, 2, "Euler formula at {nx}x{ny}");
            for c in 0..m.num_cells() {
                assert!(m.cell_det(c) > 0.0, "cell {c} not counterclockwise");
            }
        }
    }

    #[test]
    fn cell_areas_partition_domain() {
        for (nx, ny, rect) in [
            (3, 4, Rect::unit()),
            (48, 48, Rect::centered_unit()),
            (5, 2, Rect::new(-2.0, 1.0, -3.0, -1.0)),
        ] {
            let m = build_uniform_tri_mesh(nx, ny, rect).unwrap();
            let total: f64 = (0..m.num_cells()).map(|c| 0.5 * m.cell_det(c)).sum();
            assert!(
                (total - rect.area()).abs() <= 1e-14 * rect.area(),
                "area mismatch: {total} vs {}",
                rect.area()
            );
        }
    }

    #[test]
    fn edge_cell_incidence() {
        let m = build_uniform_tri_mesh(4, 3, Rect::unit()).unwrap();
        let mut count = vec![0usize; m.num_edges()];
        for ce in &m.cell_edges {
            for &e in ce {
                count[e] += 1;
            }
        }
        for (e, &n) in count.iter().enumerate() {
            if m.boundary_edge[e] {
                assert_eq!(n, 1, "boundary edge {e}");
            } else {
                assert_eq!(n, 2, "interior edge {e}");
            }
        }
        // each cell's edges connect exactly its vertices
        for (c, cell) in m.cells.iter().enumerate() {
            for (k, (a, b)) in [(cell[0], cell[1]), (cell[1], cell[2]), (cell[2], cell[0])]
                .into_iter()
                .enumerate()
            {
                let e = m.edges[m.cell_edges[c][k]];
                assert_eq!([a.min(b), a.max(b)], e);
            }
        }
    }

    #[test]
    fn deterministic_and_refinement_consistent() {
        let a = build_uniform_tri_mesh(6, 6, Rect::unit()).unwrap();
        let b = build_uniform_tri_mesh(6, 6, Rect::unit()).unwrap();
        assert_eq!(a.vertices, b.vertices);
        assert_eq!(a.cells, b.cells);
        assert_eq!(a.edges, b.edges);
        let fine = build_uniform_tri_mesh(12, 12, Rect::unit()).unwrap();
        assert_eq!(fine.num_cells(), 4 * a.num_cells());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_uniform_tri_mesh(0, 1, Rect::unit()).is_err());
        assert!(build_uniform_tri_mesh(1, 0, Rect::unit()).is_err());
        assert!(build_uniform_tri_mesh(2, 2, Rect::new(0.0, 0.0, 0.0, 1.0)).is_err());
        assert!(build_uniform_tri_mesh(2, 2, Rect::new(1.0, 0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn vtk_export_structure() {
        let m = build_uniform_tri_mesh(2, 2, Rect::unit()).unwrap();
        let mut s = String::new();
        vtk_mesh_header(&m, &mut s);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
        assert!(lines.contains(&"POINTS 9 double"));
        assert!(lines.contains(&"CELLS 8 32"));
    }
}
