//! Interior discretization of a round obstacle, used to integrate the
//! Newtonian potential of a solid body.
//!
//! Cells follow the curved surface exactly: in 3D each cell is the radial
//! projection of a flat icosphere triangle swept over a radius interval, in 2D a
//! polar sector. Integration uses tensor Gauss–Legendre rules on the parameter
//! box, so the body volume is reproduced to quadrature accuracy.

use super::generate::icosphere;
use super::{cross, dist, dot, norm, Point};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

const GAUSS_ORDER: usize = 4;
const MAX_REFINE_DEPTH: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum BodyCellShape {
    /// `{ r·P/|P| : P in the flat triangle `corners`, r in [r0, r1] }`.
    RadialWedge { corners: [Point; 3], r0: f64, r1: f64 },
    /// `{ r·(cos t, sin t) : t in [t0, t1], r in [r0, r1] }`.
    PolarSector { t0: f64, t1: f64, r0: f64, r1: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyCell {
    pub shape: BodyCellShape,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyMesh {
    dim: usize,
    radius: f64,
    cells: Vec<BodyCell>,
    // Base-level quadrature nodes per cell: (point, weight × density).
    nodes: Vec<Vec<(Point, f64)>>,
    centers: Vec<Point>,
    diameters: Vec<f64>,
}

fn unit_gauss() -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(GAUSS_ORDER);
    (
        x.iter().map(|v| 0.5 * (v + 1.0)).collect(),
        w.iter().map(|v| 0.5 * v).collect(),
    )
}

impl BodyCellShape {
    fn map(&self, u: f64, v: f64, s: f64) -> (Point, f64) {
        match self {
            BodyCellShape::RadialWedge { corners, r0, r1 } => {
                let [d0, d1, d2] = corners;
                let e1 = [d1[0] - d0[0], d1[1] - d0[1], d1[2] - d0[2]];
                let e2 = [d2[0] - d0[0], d2[1] - d0[1], d2[2] - d0[2]];
                let t = v * (1.0 - u);
                let p = [
                    d0[0] + u * e1[0] + t * e2[0],
                    d0[1] + u * e1[1] + t * e2[1],
                    d0[2] + u * e1[2] + t * e2[2],
                ];
                let plen = norm(&p);
                let n = p.map(|c| c / plen);
                let r = r0 + s * (r1 - r0);
                let jac = (1.0 - u) * (r1 - r0) * r * r * dot(&n, &cross(&e1, &e2)).abs() / (plen * plen);
                (n.map(|c| r * c), jac)
            }
            BodyCellShape::PolarSector { t0, t1, r0, r1 } => {
                let t = t0 + u * (t1 - t0);
                let r = r0 + s * (r1 - r0);
                ([r * t.cos(), r * t.sin(), 0.0], (t1 - t0) * (r1 - r0) * r)
            }
        }
    }

    fn corners(&self) -> Vec<Point> {
        match self {
            BodyCellShape::RadialWedge { .. } => [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
                .iter()
                .flat_map(|&(u, v)| [self.map(u, v, 0.0).0, self.map(u, v, 1.0).0])
                .collect(),
            BodyCellShape::PolarSector { .. } => [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
                .iter()
                .map(|&(u, s)| self.map(u, 0.0, s).0)
                .collect(),
        }
    }

    fn center(&self) -> Point {
        self.map(1.0 / 3.0, 0.5, 0.5).0
    }

    fn diameter(&self) -> f64 {
        let c = self.corners();
        let mut d: f64 = 0.0;
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                d = d.max(dist(&c[i], &c[j]));
            }
        }
        d
    }

    fn split(&self) -> Vec<BodyCellShape> {
        match self {
            BodyCellShape::RadialWedge { corners, r0, r1 } => {
                let [a, b, c] = *corners;
                let mid = |p: Point, q: Point| [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]), 0.5 * (p[2] + q[2])];
                let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
                let rm = 0.5 * (r0 + r1);
                let mut out = Vec::with_capacity(8);
                for tri in [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]] {
                    for (lo, hi) in [(*r0, rm), (rm, *r1)] {
                        out.push(BodyCellShape::RadialWedge {
                            corners: tri,
                            r0: lo,
                            r1: hi,
                        });
                    }
                }
                out
            }
            BodyCellShape::PolarSector { t0, t1, r0, r1 } => {
                let tm = 0.5 * (t0 + t1);
                let rm = 0.5 * (r0 + r1);
                let mut out = Vec::with_capacity(4);
                for (a, b) in [(*t0, tm), (tm, *t1)] {
                    for (c, d) in [(*r0, rm), (rm, *r1)] {
                        out.push(BodyCellShape::PolarSector {
                            t0: a,
                            t1: b,
                            r0: c,
                            r1: d,
                        });
                    }
                }
                out
            }
        }
    }

    fn nodes(&self, gx: &[f64], gw: &[f64], scale: f64) -> Vec<(Point, f64)> {
        let mut out = Vec::new();
        match self {
            BodyCellShape::RadialWedge { .. } => {
                for (i, &u) in gx.iter().enumerate() {
                    for (j, &v) in gx.iter().enumerate() {
                        for (k, &s) in gx.iter().enumerate() {
                            let (p, jac) = self.map(u, v, s);
                            out.push((p, gw[i] * gw[j] * gw[k] * jac * scale));
                        }
                    }
                }
            }
            BodyCellShape::PolarSector { .. } => {
                for (i, &u) in gx.iter().enumerate() {
                    for (k, &s) in gx.iter().enumerate() {
                        let (p, jac) = self.map(u, 0.0, s);
                        out.push((p, gw[i] * gw[k] * jac * scale));
                    }
                }
            }
        }
        out
    }
}

impl BodyMesh {
    pub fn new(dim: usize, radius: f64, cells: Vec<BodyCell>) -> Self {
        let (gx, gw) = unit_gauss();
        let nodes = cells.iter().map(|c| c.shape.nodes(&gx, &gw, c.density)).collect();
        let centers = cells.iter().map(|c| c.shape.center()).collect();
        let diameters = cells.iter().map(|c| c.shape.diameter()).collect();
        Self {
            dim,
            radius,
            cells,
            nodes,
            centers,
            diameters,
        }
    }

    /// Solid ball of the given radius with uniform density.
    pub fn ball(radius: f64, level: usize, n_radial: usize, density: f64) -> Result<Self> {
        if !(radius > 0.0) || n_radial == 0 || level > 3 {
            return Err(Error::Geometry(
                "ball needs radius > 0, n_radial >= 1, level <= 3".into(),
            ));
        }
        let (sphere, tris) = icosphere(level);
        let mut cells = Vec::with_capacity(tris.len() * n_radial);
        for tri in &tris {
            for k in 0..n_radial {
                cells.push(BodyCell {
                    shape: BodyCellShape::RadialWedge {
                        corners: tri.map(|i| sphere[i]),
                        r0: radius * k as f64 / n_radial as f64,
                        r1: radius * (k + 1) as f64 / n_radial as f64,
                    },
                    density,
                });
            }
        }
        Ok(Self::new(3, radius, cells))
    }

    /// Solid disk of the given radius with uniform (area) density.
    pub fn disk(radius: f64, n_angular: usize, n_radial: usize, density: f64) -> Result<Self> {
        if !(radius > 0.0) || n_radial == 0 || n_angular < 3 {
            return Err(Error::Geometry(
                "disk needs radius > 0, n_radial >= 1, n_angular >= 3".into(),
            ));
        }
        let tau = 2.0 * std::f64::consts::PI;
        let mut cells = Vec::with_capacity(n_angular * n_radial);
        for j in 0..n_angular {
            for k in 0..n_radial {
                cells.push(BodyCell {
                    shape: BodyCellShape::PolarSector {
                        t0: tau * j as f64 / n_angular as f64,
                        t1: tau * (j + 1) as f64 / n_angular as f64,
                        r0: radius * k as f64 / n_radial as f64,
                        r1: radius * (k + 1) as f64 / n_radial as f64,
                    },
                    density,
                });
            }
        }
        Ok(Self::new(2, radius, cells))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn cells(&self) -> &[BodyCell] {
        &self.cells
    }

    /// Total mass `∫ ρ_s dy` (volume when the density is one).
    pub fn mass(&self) -> f64 {
        self.nodes.iter().flatten().map(|(_, w)| w).sum()
    }

    /// Visits quadrature nodes `(y, w·ρ_s)` for integrating a kernel centered
    /// at `target`; cells closer than two diameters are subdivided.
    pub fn visit_nodes(&self, target: &Point, mut visit: impl FnMut(&Point, f64)) {
        let (gx, gw) = unit_gauss();
        for (c, cell) in self.cells.iter().enumerate() {
            if dist(target, &self.centers[c]) >= 2.0 * self.diameters[c] {
                for (p, w) in &self.nodes[c] {
                    visit(p, *w);
                }
            } else {
                refine(&cell.shape, cell.density, target, 1, &gx, &gw, &mut visit);
            }
        }
    }
}

fn refine(
    shape: &BodyCellShape,
    density: f64,
    target: &Point,
    depth: usize,
    gx: &[f64],
    gw: &[f64],
    visit: &mut impl FnMut(&Point, f64),
) {
    for sub in shape.split() {
        if depth >= MAX_REFINE_DEPTH || dist(target, &sub.center()) >= 2.0 * sub.diameter() {
            for (p, w) in sub.nodes(gx, gw, density) {
                visit(&p, w);
            }
        } else {
            refine(&sub, density, target, depth + 1, gx, gw, visit);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_volume_is_exact_to_quadrature() {
        let b = BodyMesh::ball(1.0, 1, 2, 1.0).unwrap();
        let exact = 4.0 / 3.0 * std::f64::consts::PI;
        assert!((b.mass() - exact).abs() < 1e-6 * exact, "{}", b.mass());
    }

    #[test]
    fn disk_area_is_exact() {
        let d = BodyMesh::disk(2.0, 12, 3, 1.0).unwrap();
        assert!((d.mass() - 4.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn refinement_preserves_volume() {
        let b = BodyMesh::ball(1.0, 0, 1, 1.0).unwrap();
        let mut near = 0.0;
        b.visit_nodes(&[1.01, 0.0, 0.0], |_, w| near += w);
        assert!((near - b.mass()).abs() < 1e-3 * b.mass());
    }
}
