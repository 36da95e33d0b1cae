//! Conservative body-force potentials `F = ∇ψ`.
//!
//! Singular kernels always use `1/|x - y|`, also for planar problems, so that
//! ψ stays bounded on the flow region.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::interp::{parse_two_columns, MonotoneCubic};
use crate::mesh::{dist, norm, BodyMesh, ExteriorMesh, Point};

#[derive(Debug, Clone)]
pub enum ForceKind {
    Constant(f64),
    PointSources(Vec<(Point, f64)>),
    NewtonianBody {
        body: BodyMesh,
        gravity: f64,
    },
    /// ψ(x) = f(|x|) with a monotone-preserving C¹ cubic f; held constant
    /// beyond the sampled radii.
    RadialProfile(MonotoneCubic),
}

#[derive(Debug, Clone)]
pub struct ForcePotential {
    pub kind: ForceKind,
    pub dim: usize,
}

/// Diagnostics for the far-field integrability conditions on ∇ψ.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    /// `‖∂₁ψ‖` in `L^{2n/(n+2)}` over the truncated domain.
    pub d1_psi_norm: f64,
    /// `‖ |x|^β ∇ψ ‖` in `L^q` over the truncated domain.
    pub weighted_grad_norm: f64,
    /// Least-squares slope of `log max|∇ψ|` against `log r`; `None` when ∇ψ
    /// vanishes or too few annuli carry samples.
    pub fitted_exponent: Option<f64>,
    pub annuli: Vec<(f64, f64)>,
    /// `min(n/2, β + n/q - 1)`.
    pub beta_prime: f64,
    /// Whether `q > n` and `β > 1 - n/q` hold.
    pub hypotheses_hold: bool,
}

const SINGULAR_TOL: f64 = 1e-12;

impl ForcePotential {
    pub fn constant(dim: usize, c: f64) -> Self {
        Self {
            kind: ForceKind::Constant(c),
            dim,
        }
    }

    pub fn point_sources(dim: usize, sources: Vec<(Point, f64)>) -> Self {
        Self {
            kind: ForceKind::PointSources(sources),
            dim,
        }
    }

    pub fn newtonian(body: BodyMesh, gravity: f64) -> Result<Self> {
        if !(gravity > 0.0) {
            return Err(Error::Domain(format!(
                "gravitational constant {gravity} must be positive"
            )));
        }
        Ok(Self {
            dim: body.dim(),
            kind: ForceKind::NewtonianBody { body, gravity },
        })
    }

    pub fn radial_profile(dim: usize, r: Vec<f64>, psi: Vec<f64>) -> Result<Self> {
        if r.first().is_none_or(|&r0| r0 < 0.0) {
            return Err(Error::Domain("radial profile needs nonnegative radii".into()));
        }
        Ok(Self {
            kind: ForceKind::RadialProfile(MonotoneCubic::new(r, psi)?),
            dim,
        })
    }

    pub fn load_radial_profile(dim: usize, path: impl AsRef<Path>) -> Result<Self> {
        let (r, psi) = parse_two_columns(&std::fs::read_to_string(path)?)?;
        Self::radial_profile(dim, r, psi)
    }

    /// Checks that every singular point lies strictly inside the obstacle.
    pub fn check_against_mesh(&self, mesh: &ExteriorMesh) -> Result<()> {
        let Some(r_obs) = mesh.obstacle_radius() else {
            return Ok(());
        };
        let inside = |p: &Point| norm(p) < r_obs * (1.0 - 1e-9);
        match &self.kind {
            ForceKind::PointSources(src) => {
                if let Some((c, _)) = src.iter().find(|(c, _)| !inside(c)) {
                    return Err(Error::Singularity(c[0], c[1], c[2]));
                }
            }
            ForceKind::NewtonianBody { body, .. } if body.radius() > r_obs * (1.0 + 1e-9) => {
                return Err(Error::Geometry(format!(
                    "body radius {} exceeds obstacle radius {r_obs}",
                    body.radius()
                )));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn eval_psi(&self, x: &Point) -> Result<f64> {
        Ok(match &self.kind {
            ForceKind::Constant(c) => *c,
            ForceKind::PointSources(src) => {
                let mut s = 0.0;
                for (c, m) in src {
                    let r = dist(x, c);
                    if r < SINGULAR_TOL {
                        return Err(Error::Singularity(x[0], x[1], x[2]));
                    }
                    s += m / r;
                }
                s
            }
            ForceKind::NewtonianBody { body, gravity } => {
                let mut s = 0.0;
                body.visit_nodes(x, |y, w| {
                    let r = dist(x, y);
                    if r > 0.0 {
                        s += w / r;
                    }
                });
                gravity * s
            }
            ForceKind::RadialProfile(f) => f.eval(clamp_radius(f, norm(x))).value,
        })
    }

    pub fn eval_grad_psi(&self, x: &Point) -> Result<Point> {
        let mut g = [0.0; 3];
        match &self.kind {
            ForceKind::Constant(_) => {}
            ForceKind::PointSources(src) => {
                for (c, m) in src {
                    let r = dist(x, c);
                    if r < SINGULAR_TOL {
                        return Err(Error::Singularity(x[0], x[1], x[2]));
                    }
                    let f = -m / (r * r * r);
                    for k in 0..3 {
                        g[k] += f * (x[k] - c[k]);
                    }
                }
            }
            ForceKind::NewtonianBody { body, gravity } => {
                body.visit_nodes(x, |y, w| {
                    let r = dist(x, y);
                    if r > 0.0 {
                        let f = -gravity * w / (r * r * r);
                        for k in 0..3 {
                            g[k] += f * (x[k] - y[k]);
                        }
                    }
                });
            }
            ForceKind::RadialProfile(f) => {
                let r = norm(x);
                let rc = clamp_radius(f, r);
                if rc == r && r > 0.0 {
                    let d = f.eval(r).d1 / r;
                    for k in 0..3 {
                        g[k] = d * x[k];
                    }
                }
            }
        }
        if self.dim == 2 {
            g[2] = 0.0;
        }
        Ok(g)
    }

    /// ψ at the points where the solver and diagnostics sample it: vertices and
    /// cell barycenters.
    pub fn psi_range(&self, mesh: &ExteriorMesh) -> Result<(f64, f64)> {
        let values: Vec<f64> = mesh
            .vertices()
            .par_iter()
            .chain(mesh.geometry().par_iter().map(|g| &g.barycenter))
            .map(|x| self.eval_psi(x))
            .collect::<Result<_>>()?;
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok((lo, hi))
    }

    /// ψ at every cell barycenter, in cell order.
    pub fn psi_at_barycenters(&self, mesh: &ExteriorMesh) -> Result<Vec<f64>> {
        mesh.geometry()
            .par_iter()
            .map(|g| self.eval_psi(&g.barycenter))
            .collect()
    }

    pub fn decay_report(&self, mesh: &ExteriorMesh, q_exp: f64, beta: f64, n_annuli: usize) -> Result<DecayReport> {
        let n = mesh.dim() as f64;
        let p1 = 2.0 * n / (n + 2.0);
        let grads: Vec<Point> = mesh
            .geometry()
            .par_iter()
            .map(|g| self.eval_grad_psi(&g.barycenter))
            .collect::<Result<_>>()?;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (g, d) in mesh.geometry().iter().zip(&grads) {
            s1 += g.volume * d[0].abs().powf(p1);
            s2 += g.volume * (norm(&g.barycenter).powf(beta) * norm(d)).powf(q_exp);
        }

        let r_in = mesh.vertices().iter().map(norm).fold(f64::INFINITY, f64::min);
        let r_lo = 1.5 * r_in.max(1e-3 * mesh.outer_radius());
        let r_hi = 0.9 * mesh.outer_radius();
        let n_annuli = n_annuli.max(2);
        let mut maxima = vec![0.0f64; n_annuli];
        let ratio = (r_hi / r_lo).ln();
        let vgrads: Vec<Point> = mesh
            .vertices()
            .par_iter()
            .map(|x| self.eval_grad_psi(x))
            .collect::<Result<_>>()?;
        let samples = mesh
            .vertices()
            .iter()
            .zip(&vgrads)
            .chain(mesh.geometry().iter().map(|g| &g.barycenter).zip(&grads));
        for (x, d) in samples {
            let r = norm(x);
            if r < r_lo || r >= r_hi {
                continue;
            }
            let k = (((r / r_lo).ln() / ratio) * n_annuli as f64) as usize;
            let k = k.min(n_annuli - 1);
            maxima[k] = maxima[k].max(norm(d));
        }
        let annuli: Vec<(f64, f64)> = (0..n_annuli)
            .filter(|&k| maxima[k] > 0.0)
            .map(|k| (r_lo * (ratio * (k as f64 + 0.5) / n_annuli as f64).exp(), maxima[k]))
            .collect();
        let fitted_exponent = if annuli.len() >= 2 {
            let pts: Vec<(f64, f64)> = annuli.iter().map(|(r, g)| (r.ln(), g.ln())).collect();
            Some(least_squares_slope(&pts))
        } else {
            None
        };
        Ok(DecayReport {
            d1_psi_norm: s1.powf(1.0 / p1),
            weighted_grad_norm: s2.powf(1.0 / q_exp),
            fitted_exponent,
            annuli,
            beta_prime: (n / 2.0).min(beta + n / q_exp - 1.0),
            hypotheses_hold: q_exp > n && beta > 1.0 - n / q_exp,
        })
    }
}

fn clamp_radius(f: &MonotoneCubic, r: f64) -> f64 {
    r.clamp(f.x_min(), f.x_max())
}

/// Slope of the least-squares line through `(x, y)` pairs.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_annulus_2d, generate_shell_3d};
    use std::f64::consts::PI;

    fn unit_ball_source() -> ForcePotential {
        let body = BodyMesh::ball(1.0, 1, 2, 3.0 / (4.0 * PI)).unwrap();
        ForcePotential::newtonian(body, 1.0).unwrap()
    }

    #[test]
    fn constant_potential() {
        let f = ForcePotential::constant(3, 0.0);
        assert_eq!(f.eval_psi(&[3.0, -1.0, 2.0]).unwrap(), 0.0);
        let f = ForcePotential::constant(2, 7.5);
        assert_eq!(f.eval_grad_psi(&[1.0, 1.0, 0.0]).unwrap(), [0.0; 3]);
    }

    #[test]
    fn point_source_values() {
        let f = ForcePotential::point_sources(3, vec![([0.0; 3], 1.0)]);
        assert!((f.eval_psi(&[0.0, 2.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        let g = f.eval_grad_psi(&[2.0, 0.0, 0.0]).unwrap();
        assert!((g[0] + 0.25).abs() < 1e-15 && g[1] == 0.0 && g[2] == 0.0);
        assert!(matches!(f.eval_psi(&[0.0; 3]), Err(Error::Singularity(..))));
        assert!(matches!(f.eval_grad_psi(&[0.0; 3]), Err(Error::Singularity(..))));
    }

    #[test]
    fn uniform_ball_matches_point_mass() {
        let f = unit_ball_source();
        assert!((f.eval_psi(&[2.0, 0.0, 0.0]).unwrap() - 0.5).abs() < 1e-3);
        let g = f.eval_grad_psi(&[2.0, 0.0, 0.0]).unwrap();
        assert!((g[0] + 0.25).abs() < 1e-3 && g[1].abs() < 1e-3 && g[2].abs() < 1e-3);
        for x in [[1.5, 0.0, 0.0], [0.0, 1.1, 1.2], [-3.0, 2.0, 1.0]] {
            let exact = 1.0 / norm(&x);
            assert!((f.eval_psi(&x).unwrap() - exact).abs() < 1e-3 * exact);
        }
    }

    #[test]
    fn radial_profile_range_and_gradient() {
        let f = ForcePotential::radial_profile(2, vec![1.0, 10.0], vec![0.0, 0.0]).unwrap();
        let mesh = generate_annulus_2d(1.0, 10.0, 4, 8, 1.0).unwrap();
        assert_eq!(f.psi_range(&mesh).unwrap(), (0.0, 0.0));
        let f = ForcePotential::radial_profile(2, vec![1.0, 2.0, 4.0], vec![1.0, 0.5, 0.25]).unwrap();
        let g = f.eval_grad_psi(&[0.0, 2.0, 0.0]).unwrap();
        assert!(g[0] == 0.0 && g[1] < 0.0);
        assert_eq!(f.eval_grad_psi(&[0.0, 5.0, 0.0]).unwrap(), [0.0; 3]);
    }

    #[test]
    fn point_source_range_on_shell() {
        let mesh = generate_shell_3d(1.0, 10.0, 1, 4).unwrap();
        let f = ForcePotential::point_sources(3, vec![([0.0; 3], 1.0)]);
        let (lo, hi) = f.psi_range(&mesh).unwrap();
        assert!((lo - 0.1).abs() < 1e-9 && (hi - 1.0).abs() < 1e-9, "{lo} {hi}");
        assert!(f.check_against_mesh(&mesh).is_ok());
        let bad = ForcePotential::point_sources(3, vec![([2.0, 0.0, 0.0], 1.0)]);
        assert!(bad.check_against_mesh(&mesh).is_err());
    }

    #[test]
    fn decay_of_point_source() {
        let mesh = generate_shell_3d(1.0, 20.0, 2, 12).unwrap();
        let f = ForcePotential::point_sources(3, vec![([0.0; 3], 1.0)]);
        let rep = f.decay_report(&mesh, 4.0, 1.0, 6).unwrap();
        let e = rep.fitted_exponent.unwrap();
        assert!((e + 2.0).abs() < 0.05, "{e}");
        assert!((rep.beta_prime - 0.75).abs() < 1e-15);
        assert!(rep.hypotheses_hold);

        let c = ForcePotential::constant(3, 1.0)
            .decay_report(&mesh, 4.0, 1.0, 6)
            .unwrap();
        assert_eq!((c.d1_psi_norm, c.weighted_grad_norm), (0.0, 0.0));
        assert!(c.fitted_exponent.is_none());
    }
}
