//! Simplicial meshes of the truncated exterior domain `{x outside the obstacle, |x| < R}`.
//!
//! Points are stored with three coordinates; in two dimensions the third is zero.
//! Cells are P1 simplices (triangles or tetrahedra) stored flat with stride
//! `dim + 1`. Boundary faces carry a tag telling whether they sit on the obstacle
//! surface or on the outer truncation sphere.

mod body;
mod generate;
mod io;

use std::collections::HashMap;

pub use body::{BodyCell, BodyCellShape, BodyMesh};
pub use generate::{generate_annulus_2d, generate_disk_2d, generate_shell_3d};
pub use io::{load_mesh, parse_mesh, save_mesh, write_mesh};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Obstacle,
    Outer,
}

impl BoundaryTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Obstacle => "OBSTACLE",
            BoundaryTag::Outer => "OUTER",
        }
    }
}

impl std::str::FromStr for BoundaryTag {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "OBSTACLE" => Ok(BoundaryTag::Obstacle),
            "OUTER" => Ok(BoundaryTag::Outer),
            other => Err(format!("unknown boundary tag `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFace {
    pub nodes: Vec<usize>,
    pub tag: BoundaryTag,
    /// The single cell adjacent to this face.
    pub cell: usize,
}

/// Per-cell data for P1 elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    pub volume: f64,
    pub barycenter: Point,
    /// Gradients of the barycentric coordinates (constant on the cell).
    pub grads: [Point; 4],
    /// Normalized quality `dim · r_in / r_circ` (1 for a regular simplex).
    pub quality: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshOptions {
    pub quality_floor: f64,
    /// Relative tolerance for boundary placement checks.
    pub boundary_tol: f64,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self {
            quality_floor: 1e-3,
            boundary_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExteriorMesh {
    dim: usize,
    vertices: Vec<Point>,
    cells: Vec<usize>,
    boundary: Vec<BoundaryFace>,
    geometry: Vec<CellGeometry>,
    outer_radius: f64,
    obstacle_radius: Option<f64>,
    obstacle_interior: Option<BodyMesh>,
}

impl ExteriorMesh {
    /// Builds and validates a mesh. `boundary` lists every boundary face once
    /// with its tag.
    pub fn new(
        dim: usize,
        vertices: Vec<Point>,
        cells: Vec<usize>,
        boundary: Vec<(Vec<usize>, BoundaryTag)>,
        options: MeshOptions,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Validation(format!("dimension {dim} not supported")));
        }
        let nv = dim + 1;
        if !cells.len().is_multiple_of(nv) {
            return Err(Error::Validation("cell array length not a multiple of dim+1".into()));
        }
        if let Some(&bad) = cells.iter().find(|&&i| i >= vertices.len()) {
            return Err(Error::Validation(format!("vertex index {bad} out of range")));
        }

        let mut geometry = Vec::with_capacity(cells.len() / nv);
        for (c, cell) in cells.chunks(nv).enumerate() {
            let pts: Vec<Point> = cell.iter().map(|&i| vertices[i]).collect();
            let g = simplex_geometry(dim, &pts);
            if !(g.volume > 0.0) {
                return Err(Error::Validation(format!(
                    "cell {c} is not positively oriented (volume {:e})",
                    g.volume
                )));
            }
            if !(g.quality >= options.quality_floor) {
                return Err(Error::Validation(format!(
                    "cell {c} quality {:.3e} below floor {:.3e}",
                    g.quality, options.quality_floor
                )));
            }
            geometry.push(g);
        }

        // Face -> adjacent cells.
        let mut adjacency: HashMap<Vec<usize>, (usize, usize)> = HashMap::new();
        for (c, cell) in cells.chunks(nv).enumerate() {
            for skip in 0..nv {
                let mut face: Vec<usize> = (0..nv).filter(|&k| k != skip).map(|k| cell[k]).collect();
                face.sort_unstable();
                let entry = adjacency.entry(face).or_insert((0, c));
                entry.0 += 1;
            }
        }
        if let Some((f, _)) = adjacency.iter().find(|(_, (n, _))| *n > 2) {
            return Err(Error::Validation(format!("face {f:?} shared by more than two cells")));
        }

        let mut faces = Vec::with_capacity(boundary.len());
        let mut seen: HashMap<Vec<usize>, ()> = HashMap::new();
        for (nodes, tag) in boundary {
            if nodes.len() != dim {
                return Err(Error::Validation(format!(
                    "boundary face {nodes:?} must have {dim} vertices"
                )));
            }
            let mut key = nodes.clone();
            key.sort_unstable();
            if seen.insert(key.clone(), ()).is_some() {
                return Err(Error::Validation(format!("boundary face {nodes:?} tagged twice")));
            }
            match adjacency.get(&key) {
                Some(&(1, cell)) => faces.push(BoundaryFace { nodes, tag, cell }),
                Some(_) => {
                    return Err(Error::Validation(format!(
                        "tagged face {nodes:?} is interior (two adjacent cells)"
                    )))
                }
                None => {
                    return Err(Error::Validation(format!(
                        "tagged face {nodes:?} is not a face of any cell"
                    )))
                }
            }
        }
        let n_boundary = adjacency.values().filter(|(n, _)| *n == 1).count();
        if n_boundary != faces.len() {
            return Err(Error::Validation(format!(
                "{} boundary faces but {} tagged",
                n_boundary,
                faces.len()
            )));
        }

        let norm = |p: &Point| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let outer_radius = faces
            .iter()
            .filter(|f| f.tag == BoundaryTag::Outer)
            .flat_map(|f| f.nodes.iter())
            .map(|&i| norm(&vertices[i]))
            .fold(0.0, f64::max);
        if outer_radius == 0.0 {
            return Err(Error::Validation("no OUTER boundary faces".into()));
        }
        let tol = options.boundary_tol * outer_radius;
        for f in faces.iter().filter(|f| f.tag == BoundaryTag::Outer) {
            for &i in &f.nodes {
                if (norm(&vertices[i]) - outer_radius).abs() > tol {
                    return Err(Error::Validation(format!(
                        "OUTER vertex {i} at radius {} off the truncation sphere {outer_radius}",
                        norm(&vertices[i])
                    )));
                }
            }
        }
        let obstacle_radii: Vec<f64> = faces
            .iter()
            .filter(|f| f.tag == BoundaryTag::Obstacle)
            .flat_map(|f| f.nodes.iter())
            .map(|&i| norm(&vertices[i]))
            .collect();
        if obstacle_radii.iter().any(|&r| r >= outer_radius - tol) {
            return Err(Error::Validation(
                "OBSTACLE vertex on or outside the truncation sphere".into(),
            ));
        }
        // A centered spherical obstacle is recognized; other shapes are accepted as given.
        let obstacle_radius = match obstacle_radii.first() {
            Some(&r0) if obstacle_radii.iter().all(|&r| (r - r0).abs() <= tol) => Some(r0),
            _ => None,
        };

        Ok(Self {
            dim,
            vertices,
            cells,
            boundary: faces,
            geometry,
            outer_radius,
            obstacle_radius,
            obstacle_interior: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.geometry.len()
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let nv = self.dim + 1;
        &self.cells[c * nv..(c + 1) * nv]
    }

    pub fn cells_flat(&self) -> &[usize] {
        &self.cells
    }

    pub fn cell_geometry(&self, c: usize) -> &CellGeometry {
        &self.geometry[c]
    }

    pub fn geometry(&self) -> &[CellGeometry] {
        &self.geometry
    }

    pub fn boundary(&self) -> &[BoundaryFace] {
        &self.boundary
    }

    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    /// Radius of a centered spherical obstacle, when the OBSTACLE faces lie on one.
    pub fn obstacle_radius(&self) -> Option<f64> {
        self.obstacle_radius
    }

    pub fn obstacle_interior(&self) -> Option<&BodyMesh> {
        self.obstacle_interior.as_ref()
    }

    pub fn with_obstacle_interior(mut self, body: BodyMesh) -> Self {
        self.obstacle_interior = Some(body);
        self
    }

    pub fn total_volume(&self) -> f64 {
        self.geometry.iter().map(|g| g.volume).sum()
    }

    /// Vertices on OUTER faces (Dirichlet data there).
    pub fn outer_vertex_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.vertices.len()];
        for f in self.boundary.iter().filter(|f| f.tag == BoundaryTag::Outer) {
            for &i in &f.nodes {
                mask[i] = true;
            }
        }
        mask
    }

    /// Measure (length or area) of a boundary face.
    pub fn face_measure(&self, face: &BoundaryFace) -> f64 {
        let p: Vec<Point> = face.nodes.iter().map(|&i| self.vertices[i]).collect();
        match self.dim {
            2 => dist(&p[0], &p[1]),
            _ => 0.5 * norm(&cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0]))),
        }
    }

    pub fn face_centroid(&self, face: &BoundaryFace) -> Point {
        let mut c = [0.0; 3];
        for &i in &face.nodes {
            for k in 0..3 {
                c[k] += self.vertices[i][k];
            }
        }
        c.map(|v| v / face.nodes.len() as f64)
    }

    /// Unit normals pointing out of the flow region, one per boundary face:
    /// into the obstacle on OBSTACLE faces, radially outward on OUTER faces.
    pub fn boundary_normals(&self) -> Vec<Point> {
        self.boundary.iter().map(|f| self.face_normal(f)).collect()
    }

    pub fn face_normal(&self, face: &BoundaryFace) -> Point {
        let p: Vec<Point> = face.nodes.iter().map(|&i| self.vertices[i]).collect();
        let mut n = match self.dim {
            2 => {
                let t = sub(&p[1], &p[0]);
                [t[1], -t[0], 0.0]
            }
            _ => cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0])),
        };
        // Orient away from the vertex of the adjacent cell not on the face.
        let opposite = self
            .cell(face.cell)
            .iter()
            .find(|i| !face.nodes.contains(i))
            .copied()
            .expect("boundary face belongs to its cell");
        if dot(&n, &sub(&self.vertices[opposite], &p[0])) > 0.0 {
            n = n.map(|v| -v);
        }
        let len = norm(&n);
        n.map(|v| v / len)
    }

    /// Interior faces as `(cell_a, cell_b, unit normal from a to b, measure)`.
    pub fn interior_faces(&self) -> Vec<(usize, usize, Point, f64)> {
        let nv = self.dim + 1;
        let mut first: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut out = Vec::new();
        for (c, cell) in self.cells.chunks(nv).enumerate() {
            for skip in 0..nv {
                let mut face: Vec<usize> = (0..nv).filter(|&k| k != skip).map(|k| cell[k]).collect();
                face.sort_unstable();
                if let Some(a) = first.remove(&face) {
                    let bf = BoundaryFace {
                        nodes: face.clone(),
                        tag: BoundaryTag::Outer,
                        cell: a,
                    };
                    out.push((a, c, self.face_normal(&bf), self.face_measure(&bf)));
                } else {
                    first.insert(face, c);
                }
            }
        }
        out.sort_by_key(|&(a, b, _, _)| (a, b));
        out
    }
}

pub(crate) fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}

/// Volume, barycenter, barycentric gradients and quality of a simplex.
pub fn simplex_geometry(dim: usize, pts: &[Point]) -> CellGeometry {
    let mut barycenter = [0.0; 3];
    for p in pts {
        for k in 0..3 {
            barycenter[k] += p[k] / pts.len() as f64;
        }
    }
    let mut grads = [[0.0; 3]; 4];
    match dim {
        2 => {
            let e1 = sub(&pts[1], &pts[0]);
            let e2 = sub(&pts[2], &pts[0]);
            let det = e1[0] * e2[1] - e1[1] * e2[0];
            let volume = 0.5 * det;
            // Rows of the inverse Jacobian.
            grads[1] = [e2[1] / det, -e2[0] / det, 0.0];
            grads[2] = [-e1[1] / det, e1[0] / det, 0.0];
            grads[0] = [-grads[1][0] - grads[2][0], -grads[1][1] - grads[2][1], 0.0];
            let (a, b, c) = (dist(&pts[1], &pts[2]), dist(&pts[0], &pts[2]), dist(&pts[0], &pts[1]));
            let area = volume.abs();
            let r_in = 2.0 * area / (a + b + c);
            let r_circ = a * b * c / (4.0 * area);
            CellGeometry {
                volume,
                barycenter,
                grads,
                quality: 2.0 * r_in / r_circ,
            }
        }
        _ => {
            let e = [sub(&pts[1], &pts[0]), sub(&pts[2], &pts[0]), sub(&pts[3], &pts[0])];
            let c12 = cross(&e[1], &e[2]);
            let c20 = cross(&e[2], &e[0]);
            let c01 = cross(&e[0], &e[1]);
            let det = dot(&e[0], &c12);
            let volume = det / 6.0;
            grads[1] = c12.map(|v| v / det);
            grads[2] = c20.map(|v| v / det);
            grads[3] = c01.map(|v| v / det);
            for k in 0..3 {
                grads[0][k] = -grads[1][k] - grads[2][k] - grads[3][k];
            }
            let face_area = |a: &Point, b: &Point, c: &Point| 0.5 * norm(&cross(&sub(b, a), &sub(c, a)));
            let total_area = face_area(&pts[1], &pts[2], &pts[3])
                + face_area(&pts[0], &pts[2], &pts[3])
                + face_area(&pts[0], &pts[1], &pts[3])
                + face_area(&pts[0], &pts[1], &pts[2]);
            let r_in = 3.0 * volume.abs() / total_area;
            // Circumcenter offset o solves 2 e_i · o = |e_i|².
            let rhs = [dot(&e[0], &e[0]), dot(&e[1], &e[1]), dot(&e[2], &e[2])];
            let mut o = [0.0; 3];
            for k in 0..3 {
                o[k] = 0.5 * (rhs[0] * c12[k] + rhs[1] * c20[k] + rhs[2] * c01[k]) / det;
            }
            let r_circ = norm(&o);
            CellGeometry {
                volume,
                barycenter,
                grads,
                quality: 3.0 * r_in / r_circ,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_triangle_geometry() {
        let g = simplex_geometry(2, &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert!((g.volume - 0.5).abs() < 1e-15);
        assert_eq!(g.grads[0], [-1.0, -1.0, 0.0]);
        assert_eq!(g.grads[1], [1.0, 0.0, 0.0]);
        assert_eq!(g.grads[2], [0.0, 1.0, 0.0]);
        let h = 3f64.sqrt() / 2.0;
        let eq = simplex_geometry(2, &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, h, 0.0]]);
        assert!((eq.quality - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regular_tet_has_unit_quality() {
        let s = 1.0 / 2f64.sqrt();
        let pts = [[1.0, 0.0, -s], [-1.0, 0.0, -s], [0.0, 1.0, s], [0.0, -1.0, s]];
        let mut g = simplex_geometry(3, &pts);
        if g.volume < 0.0 {
            g = simplex_geometry(3, &[pts[1], pts[0], pts[2], pts[3]]);
        }
        assert!(g.volume > 0.0);
        assert!((g.quality - 1.0).abs() < 1e-12);
        // Gradients of barycentric coordinates sum to zero and reproduce x.
        let mut sum = [0.0; 3];
        for gr in &g.grads {
            for k in 0..3 {
                sum[k] += gr[k];
            }
        }
        assert!(norm(&sum) < 1e-14);
    }

    #[test]
    fn rejects_negatively_oriented_cell() {
        let v = vec![[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]];
        let b = vec![
            (vec![0, 1], BoundaryTag::Outer),
            (vec![1, 2], BoundaryTag::Outer),
            (vec![2, 0], BoundaryTag::Outer),
        ];
        let err = ExteriorMesh::new(2, v, vec![0, 1, 2], b, MeshOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Validation(m) if m.contains("oriented")));
    }

    #[test]
    fn rejects_untagged_boundary() {
        let v = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]];
        let b = vec![(vec![0, 1], BoundaryTag::Outer), (vec![1, 2], BoundaryTag::Outer)];
        let err = ExteriorMesh::new(2, v, vec![0, 1, 2], b, MeshOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Validation(m) if m.contains("tagged")));
    }
}
