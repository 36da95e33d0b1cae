use std::collections::HashMap;

use super::{simplex_geometry, BoundaryTag, ExteriorMesh, MeshOptions, Point};
use crate::error::{Error, Result};

/// Radii of `n + 1` rings from `inner` to `outer`, consecutive spacings in
/// geometric progression with ratio `grading`.
fn graded_radii(inner: f64, outer: f64, n: usize, grading: f64) -> Vec<f64> {
    let width = outer - inner;
    let first = if (grading - 1.0).abs() < 1e-14 {
        width / n as f64
    } else {
        width * (grading - 1.0) / (grading.powi(n as i32) - 1.0)
    };
    let mut radii = Vec::with_capacity(n + 1);
    let mut r = inner;
    let mut step = first;
    radii.push(r);
    for _ in 0..n {
        r += step;
        step *= grading;
        radii.push(r);
    }
    radii[n] = outer;
    radii
}

/// Graded polar triangulation of the annulus `inner < |x| < outer`.
///
/// Each polar quad is split into two triangles; the diagonal alternates in a
/// checkerboard so the mesh is mirror-symmetric about the x-axis when
/// `n_angular` is even.
pub fn generate_annulus_2d(
    inner_radius: f64,
    outer_radius: f64,
    n_radial: usize,
    n_angular: usize,
    grading: f64,
) -> Result<ExteriorMesh> {
    if !(inner_radius > 0.0 && inner_radius < outer_radius) {
        return Err(Error::Geometry(format!(
            "annulus radii must satisfy 0 < inner < outer (got {inner_radius}, {outer_radius})"
        )));
    }
    if n_radial < 4 || n_angular < 4 {
        return Err(Error::Geometry("annulus needs n_radial, n_angular >= 4".into()));
    }
    if !(grading >= 1.0 && grading.is_finite()) {
        return Err(Error::Geometry(format!("grading {grading} must be >= 1")));
    }
    let radii = graded_radii(inner_radius, outer_radius, n_radial, grading);
    let mut vertices = Vec::with_capacity((n_radial + 1) * n_angular);
    for &r in &radii {
        for j in 0..n_angular {
            let t = 2.0 * std::f64::consts::PI * j as f64 / n_angular as f64;
            vertices.push([r * t.cos(), r * t.sin(), 0.0]);
        }
    }
    let idx = |k: usize, j: usize| k * n_angular + (j % n_angular);
    let mut cells = Vec::with_capacity(6 * n_radial * n_angular);
    for k in 0..n_radial {
        for j in 0..n_angular {
            let (a, b, c, d) = (idx(k, j), idx(k + 1, j), idx(k + 1, j + 1), idx(k, j + 1));
            if (j + k) % 2 == 0 {
                cells.extend_from_slice(&[a, b, c, a, c, d]);
            } else {
                cells.extend_from_slice(&[a, b, d, b, c, d]);
            }
        }
    }
    let mut boundary = Vec::with_capacity(2 * n_angular);
    for j in 0..n_angular {
        boundary.push((vec![idx(0, j + 1), idx(0, j)], BoundaryTag::Obstacle));
        boundary.push((vec![idx(n_radial, j), idx(n_radial, j + 1)], BoundaryTag::Outer));
    }
    ExteriorMesh::new(2, vertices, cells, boundary, MeshOptions::default())
}

/// Polar triangulation of the full disk `|x| < radius` (no obstacle).
pub fn generate_disk_2d(radius: f64, n_radial: usize, n_angular: usize) -> Result<ExteriorMesh> {
    if !(radius > 0.0) {
        return Err(Error::Geometry("disk radius must be positive".into()));
    }
    if n_radial < 2 || n_angular < 4 {
        return Err(Error::Geometry("disk needs n_radial >= 2, n_angular >= 4".into()));
    }
    let mut vertices = vec![[0.0, 0.0, 0.0]];
    for k in 1..=n_radial {
        let r = radius * k as f64 / n_radial as f64;
        for j in 0..n_angular {
            let t = 2.0 * std::f64::consts::PI * j as f64 / n_angular as f64;
            vertices.push([r * t.cos(), r * t.sin(), 0.0]);
        }
    }
    let idx = |k: usize, j: usize| 1 + (k - 1) * n_angular + (j % n_angular);
    let mut cells = Vec::new();
    for j in 0..n_angular {
        cells.extend_from_slice(&[0, idx(1, j), idx(1, j + 1)]);
    }
    for k in 1..n_radial {
        for j in 0..n_angular {
            let (a, b, c, d) = (idx(k, j), idx(k + 1, j), idx(k + 1, j + 1), idx(k, j + 1));
            if (j + k) % 2 == 0 {
                cells.extend_from_slice(&[a, b, c, a, c, d]);
            } else {
                cells.extend_from_slice(&[a, b, d, b, c, d]);
            }
        }
    }
    let boundary = (0..n_angular)
        .map(|j| (vec![idx(n_radial, j), idx(n_radial, j + 1)], BoundaryTag::Outer))
        .collect();
    ExteriorMesh::new(2, vertices, cells, boundary, MeshOptions::default())
}

/// Icosphere triangulation of the unit sphere after `level` midpoint subdivisions.
pub fn icosphere(level: usize) -> (Vec<Point>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let unit = |p: Point| {
        let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        [p[0] / n, p[1] / n, p[2] / n]
    };
    let mut verts: Vec<Point> = raw.iter().map(|&p| unit(p)).collect();
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Point>| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push(unit([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]), 0.5 * (p[2] + q[2])]));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for &[a, b, c] in &tris {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        tris = next;
    }
    (verts, tris)
}

/// Layered tetrahedral shell `inner < |x| < outer` built on an icosphere.
///
/// Layer radii are log-uniform so every layer has the same aspect ratio. Each
/// prism between layers is split into three tetrahedra using the global vertex
/// order of its base triangle, which makes the splitting of shared quad faces
/// agree between neighbours.
pub fn generate_shell_3d(
    inner_radius: f64,
    outer_radius: f64,
    refinement_level: usize,
    n_radial: usize,
) -> Result<ExteriorMesh> {
    if !(inner_radius > 0.0 && inner_radius < outer_radius) {
        return Err(Error::Geometry(format!(
            "shell radii must satisfy 0 < inner < outer (got {inner_radius}, {outer_radius})"
        )));
    }
    if refinement_level > 3 {
        return Err(Error::Geometry("refinement_level must be <= 3".into()));
    }
    if n_radial < 1 {
        return Err(Error::Geometry("n_radial must be >= 1".into()));
    }
    let (sphere, tris) = icosphere(refinement_level);
    let ns = sphere.len();
    let ratio = outer_radius / inner_radius;
    let radii: Vec<f64> = (0..=n_radial)
        .map(|k| {
            if k == n_radial {
                outer_radius
            } else {
                inner_radius * ratio.powf(k as f64 / n_radial as f64)
            }
        })
        .collect();
    let mut vertices = Vec::with_capacity(ns * (n_radial + 1));
    for &r in &radii {
        vertices.extend(sphere.iter().map(|p| [r * p[0], r * p[1], r * p[2]]));
    }

    let mut cells = Vec::with_capacity(tris.len() * n_radial * 12);
    for k in 0..n_radial {
        for tri in &tris {
            let mut s = *tri;
            s.sort_unstable();
            let [a, b, c] = s.map(|i| k * ns + i);
            let [a2, b2, c2] = s.map(|i| (k + 1) * ns + i);
            for mut tet in [[a, b, c, c2], [a, b, b2, c2], [a, a2, b2, c2]] {
                let pts = tet.map(|i| vertices[i]);
                if simplex_geometry(3, &pts).volume < 0.0 {
                    tet.swap(0, 1);
                }
                cells.extend_from_slice(&tet);
            }
        }
    }
    let mut boundary = Vec::with_capacity(2 * tris.len());
    for tri in &tris {
        boundary.push((tri.to_vec(), BoundaryTag::Obstacle));
        boundary.push((tri.iter().map(|&i| n_radial * ns + i).collect(), BoundaryTag::Outer));
    }
    ExteriorMesh::new(3, vertices, cells, boundary, MeshOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryTag;

    fn count(mesh: &ExteriorMesh, tag: BoundaryTag) -> usize {
        mesh.boundary().iter().filter(|f| f.tag == tag).count()
    }

    #[test]
    fn annulus_counts() {
        let m = generate_annulus_2d(1.0, 10.0, 8, 16, 1.3).unwrap();
        assert_eq!(m.n_cells(), 256);
        assert_eq!(count(&m, BoundaryTag::Obstacle), 16);
        assert_eq!(count(&m, BoundaryTag::Outer), 16);
        assert_eq!(m.obstacle_radius(), Some(1.0));
        assert!((m.outer_radius() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn annulus_unit_grading_is_uniform() {
        let r = graded_radii(1.0, 5.0, 4, 1.0);
        assert_eq!(r, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let g = graded_radii(1.0, 10.0, 8, 1.3);
        for w in g.windows(3) {
            assert!((((w[2] - w[1]) / (w[1] - w[0])) - 1.3).abs() < 1e-10);
        }
    }

    #[test]
    fn annulus_rejects_bad_parameters() {
        assert!(matches!(
            generate_annulus_2d(1.0, 1.0, 8, 16, 1.0),
            Err(Error::Geometry(_))
        ));
        assert!(generate_annulus_2d(1.0, 2.0, 3, 16, 1.0).is_err());
        assert!(generate_annulus_2d(1.0, 2.0, 4, 16, 0.9).is_err());
    }

    #[test]
    fn shell_counts() {
        let m = generate_shell_3d(1.0, 4.0, 0, 4).unwrap();
        assert_eq!(m.n_cells(), 240);
        let m = generate_shell_3d(1.0, 4.0, 1, 4).unwrap();
        assert_eq!(m.n_cells(), 960);
        assert_eq!(count(&m, BoundaryTag::Obstacle), 80);
        assert_eq!(count(&m, BoundaryTag::Outer), 80);
        assert!(matches!(generate_shell_3d(2.0, 1.0, 0, 4), Err(Error::Geometry(_))));
    }

    #[test]
    fn disk_has_only_outer_boundary() {
        let m = generate_disk_2d(3.0, 4, 12).unwrap();
        assert_eq!(count(&m, BoundaryTag::Obstacle), 0);
        assert_eq!(count(&m, BoundaryTag::Outer), 12);
        assert_eq!(m.obstacle_radius(), None);
    }
}
