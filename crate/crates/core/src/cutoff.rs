//! Subsonic truncation of the Bernoulli density.
//!
//! With `v = |∇φ|²` and `w = ψ`, the modified density is
//!
//! * `ρ̃ = h⁻¹(w − v/2)` for `v ≤ v₁ = ((1−2θ) q_cr(w))²`,
//! * a connection on `[v₁, v₂]`, `v₂ = ((1−θ) q_cr(w))²`,
//! * the constant plateau for `v ≥ v₂`.
//!
//! The plateau is the supremum over the force range of the physical density
//! at `v₂`. The energy integrand is `G(Λ, w) = ½ ∫₀^Λ ρ̃(v, w) dv`, evaluated
//! in closed form on every branch.
//!
//! The eigenvalue of `ã` along the velocity is `ρ̃ + 2vρ̃_v = dj/ds`, where
//! `s = √v` and `j = sρ̃` is the mass flux. The connection is therefore built
//! for `j(s)`: with `t = (s − s₁)/(s₂ − s₁)` its slope is
//!
//! `dj/ds = a (1−t)^k + P t^k + 6μ t(1−t)`,
//!
//! where `a` is the physical slope at `s₁`, `P` the plateau, and `μ` fixes
//! `j(s₂) = s₂P`. The exponent `k` is chosen once per cut-off so that `μ > 0`
//! over the force range, which makes the slope positive on the whole band.
//! `k = 1` is the cubic Hermite interpolant of `j`.

use crate::error::{Error, Result};
use crate::gas::GasLaw;

const PLATEAU_SAMPLES: usize = 1024;
const GOLDEN_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Physical,
    Blend,
    Plateau,
}

/// `ρ̃` and its partial derivatives at one `(v, w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoTilde {
    pub value: f64,
    pub dv: f64,
    pub dw: f64,
    pub branch: Branch,
}

/// `G(Λ, ψ)` with `G_v = ½ρ̃` and `G_vw = ½ρ̃_w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GValue {
    pub g: f64,
    pub g_v: f64,
    pub g_vw: f64,
}

/// Everything about the cut-off that depends on `w` only. Cached per cell by
/// the solver since ψ is sampled once per cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prepared {
    pub w: f64,
    /// `q_cr(w)²` and its `w`-derivative.
    pub q_sq: f64,
    dq_sq: f64,
    pub v1: f64,
    pub v2: f64,
    // Band ends in speed and the band width, with w-derivatives.
    s1: f64,
    ds1: f64,
    delta: f64,
    ddelta: f64,
    // Mass flux and its s-slope at s1; mean slope over the band; bump weight.
    j1: f64,
    dj1: f64,
    a: f64,
    da: f64,
    mu: f64,
    dmu: f64,
    p0: f64,
    p1: f64,
}

/// w-only band data that do not depend on the exponent.
struct Band {
    q_sq: f64,
    dq_sq: f64,
    s1: f64,
    ds1: f64,
    delta: f64,
    ddelta: f64,
    j1: f64,
    dj1: f64,
    a: f64,
    da: f64,
    slope: f64,
    dslope: f64,
    y1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffDensity {
    law: GasLaw,
    range: (f64, f64),
    theta: f64,
    plateau: f64,
    exponent: i32,
    tol: f64,
}

/// Sampling grid for [`CutoffDensity::ellipticity_scan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanGrid {
    pub v_min: f64,
    /// Defaults to `4 · max q_cr²` over the force range.
    pub v_max: Option<f64>,
    pub n_v: usize,
    pub n_w: usize,
}

impl Default for ScanGrid {
    fn default() -> Self {
        Self {
            v_min: 0.0,
            v_max: None,
            n_v: 400,
            n_w: 17,
        }
    }
}

/// Symmetric coefficient matrix `ã = ρ̃ I + 2ρ̃_v p⊗p` and `ρ̃_w`, which
/// multiplies `∇ψ` in the force coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoeffMatrix {
    pub dim: usize,
    pub a: [[f64; 3]; 3],
    pub rho_w: f64,
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 0.5) {
        return Err(Error::config("cutoff.theta", format!("theta {theta} outside (0, 1/2)")));
    }
    Ok(())
}

/// Physical density at the plateau junction `v₂(w)`.
fn junction_density(law: &GasLaw, w: f64, theta: f64) -> Result<f64> {
    let q = law.critical_speed(w)?;
    law.h_inv(w - 0.5 * ((1.0 - theta) * q).powi(2))
}

/// `sup_w h⁻¹(w − (1−θ)² q_cr(w)²/2)` over `[psi_min, psi_max]`: dense
/// sampling followed by golden-section refinement around the best sample.
pub fn plateau_constant(law: &GasLaw, force_range: (f64, f64), theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let (lo, hi) = force_range;
    law.check_admissible(lo, hi)?;
    if hi == lo {
        return junction_density(law, lo, theta);
    }
    let step = (hi - lo) / (PLATEAU_SAMPLES - 1) as f64;
    let mut best = (lo, f64::NEG_INFINITY);
    let mut best_k = 0;
    for k in 0..PLATEAU_SAMPLES {
        let w = if k == PLATEAU_SAMPLES - 1 {
            hi
        } else {
            lo + k as f64 * step
        };
        let r = junction_density(law, w, theta)?;
        if r > best.1 {
            best = (w, r);
            best_k = k;
        }
    }
    let mut a = lo + best_k.saturating_sub(1) as f64 * step;
    let mut b = (lo + (best_k + 1) as f64 * step).min(hi);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = junction_density(law, x1, theta)?;
    let mut f2 = junction_density(law, x2, theta)?;
    while b - a > GOLDEN_TOL * (1.0 + a.abs() + b.abs()) {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = junction_density(law, x2, theta)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = junction_density(law, x1, theta)?;
        }
    }
    Ok(best.1.max(f1).max(f2))
}

impl CutoffDensity {
    /// Builds the cut-off and rejects it unless the default ellipticity scan
    /// finds a positive lower eigenvalue bound.
    pub fn new(law: GasLaw, force_range: (f64, f64), theta: f64) -> Result<Self> {
        let plateau = plateau_constant(&law, force_range, theta)?;
        let (lo, hi) = force_range;
        let mut c = Self {
            law,
            range: force_range,
            theta,
            plateau,
            exponent: 1,
            tol: 1e-9 * (1.0 + lo.abs() + hi.abs()),
        };
        let n = if lo == hi { 1 } else { PLATEAU_SAMPLES };
        let mut ratio: f64 = 0.0;
        for k in 0..n {
            let w = if n == 1 {
                lo
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            };
            let b = c.band(w)?;
            if !(b.slope > 0.0) {
                return Err(Error::Ellipticity { lambda_min: b.slope });
            }
            ratio = ratio.max((b.a + plateau) / b.slope);
        }
        // (a + P)/(k + 1) ≤ ¾ mean slope, so μ keeps a quarter of the mean.
        c.exponent = ((4.0 * ratio / 3.0).ceil() as i32 - 1).max(1);
        c.ellipticity_scan(&ScanGrid::default())?;
        Ok(c)
    }

    /// Exponent `k` of the connection slope profile.
    pub fn exponent(&self) -> i32 {
        self.exponent
    }

    pub fn law(&self) -> &GasLaw {
        &self.law
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn plateau(&self) -> f64 {
        self.plateau
    }

    pub fn force_range(&self) -> (f64, f64) {
        self.range
    }

    fn check_w(&self, w: f64) -> Result<()> {
        let (lo, hi) = self.range;
        if !(w >= lo - self.tol && w <= hi + self.tol) {
            return Err(Error::Domain(format!(
                "psi = {w} outside the cut-off force range [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    /// Physical branch `(ρ, ρ_v, ρ_w)` at `(v, w)`.
    fn physical(&self, v: f64, w: f64) -> Result<(f64, f64, f64)> {
        let rho = self.law.h_inv(w - 0.5 * v)?;
        let c_sq = self.law.pressure(rho)?.dp;
        Ok((rho, -0.5 * rho / c_sq, rho / c_sq))
    }

    fn band(&self, w: f64) -> Result<Band> {
        let law = &self.law;
        let rho_star = law.big_h_inv(w)?;
        let js = law.pressure(rho_star)?;
        let q_sq = js.dp;
        let dq_sq = js.ddp / (0.5 * js.ddp + js.dp / rho_star);
        let q = q_sq.sqrt();
        let dq = 0.5 * dq_sq / q;
        let th = self.theta;
        let (s1, ds1) = ((1.0 - 2.0 * th) * q, (1.0 - 2.0 * th) * dq);
        let (s2, ds2) = ((1.0 - th) * q, (1.0 - th) * dq);
        let (delta, ddelta) = (th * q, th * dq);
        let v1 = s1 * s1;
        let dv1 = 2.0 * s1 * ds1;

        let y1 = law.h_inv(w - 0.5 * v1)?;
        let j1p = law.pressure(y1)?;
        let m1 = -0.5 * y1 / j1p.dp;
        let dy1 = m1 * dv1 + y1 / j1p.dp;
        let dm1 = -0.5 * (j1p.dp - y1 * j1p.ddp) / (j1p.dp * j1p.dp) * dy1;
        let j1 = s1 * y1;
        let dj1 = ds1 * y1 + s1 * dy1;
        let a = y1 + 2.0 * v1 * m1;
        let da = dy1 + 2.0 * (dv1 * m1 + v1 * dm1);
        let pl = self.plateau;
        let slope = (s2 * pl - j1) / delta;
        let dslope = (ds2 * pl - dj1) / delta - slope * ddelta / delta;
        Ok(Band {
            q_sq,
            dq_sq,
            s1,
            ds1,
            delta,
            ddelta,
            j1,
            dj1,
            a,
            da,
            slope,
            dslope,
            y1,
        })
    }

    pub fn prepare(&self, w: f64) -> Result<Prepared> {
        self.check_w(w)?;
        let w = w.clamp(self.range.0, self.range.1);
        let b = self.band(w)?;
        let k1 = (self.exponent + 1) as f64;
        let rho0 = self.law.h_inv(w)?;
        Ok(Prepared {
            w,
            q_sq: b.q_sq,
            dq_sq: b.dq_sq,
            v1: b.s1 * b.s1,
            v2: (b.s1 + b.delta).powi(2),
            s1: b.s1,
            ds1: b.ds1,
            delta: b.delta,
            ddelta: b.ddelta,
            j1: b.j1,
            dj1: b.dj1,
            a: b.a,
            da: b.da,
            mu: b.slope - (b.a + self.plateau) / k1,
            dmu: b.dslope - b.da / k1,
            p0: self.law.pressure(rho0)?.p,
            p1: self.law.pressure(b.y1)?.p,
        })
    }

    /// Band coordinate `t`, powers `(1−t)^k`, `t^k`, and the slope profile.
    fn profile(&self, pre: &Prepared, s: f64) -> (f64, f64, f64, f64) {
        let t = ((s - pre.s1) / pre.delta).clamp(0.0, 1.0);
        let uk = (1.0 - t).powi(self.exponent);
        let tk = t.powi(self.exponent);
        let d = pre.a * uk + self.plateau * tk + 6.0 * pre.mu * t * (1.0 - t);
        (t, uk, tk, d)
    }

    /// `ρ̃(v, w)` with `∂_v` and `∂_w`, reusing the `w`-only data.
    pub fn eval_prepared(&self, pre: &Prepared, v: f64) -> Result<RhoTilde> {
        if !(v >= 0.0) {
            return Err(Error::Domain(format!("negative squared speed {v}")));
        }
        if v <= pre.v1 {
            let (value, dv, dw) = self.physical(v, pre.w)?;
            return Ok(RhoTilde {
                value,
                dv,
                dw,
                branch: Branch::Physical,
            });
        }
        if v >= pre.v2 {
            return Ok(RhoTilde {
                value: self.plateau,
                dv: 0.0,
                dw: 0.0,
                branch: Branch::Plateau,
            });
        }
        let s = v.sqrt();
        let (t, uk, tk, d) = self.profile(pre, s);
        let k1 = (self.exponent + 1) as f64;
        let u = 1.0 - t;
        let f_a = (1.0 - uk * u) / k1;
        let f_mu = t * t * (3.0 - 2.0 * t);
        let f = pre.a * f_a + self.plateau * tk * t / k1 + pre.mu * f_mu;
        let j = pre.j1 + pre.delta * f;
        let value = j / s;
        let dv = (d - value) / (2.0 * v);
        // s is held fixed; the band ends, a and μ move with w.
        let dj =
            pre.dj1 + pre.ddelta * f + pre.delta * (f_a * pre.da + f_mu * pre.dmu) - d * (pre.ds1 + t * pre.ddelta);
        Ok(RhoTilde {
            value,
            dv,
            dw: dj / s,
            branch: Branch::Blend,
        })
    }

    pub fn rho_tilde(&self, v: f64, w: f64) -> Result<RhoTilde> {
        let pre = self.prepare(w)?;
        self.eval_prepared(&pre, v)
    }

    /// `∫₀^Λ ρ̃(v, w) dv` in closed form.
    fn integral(&self, pre: &Prepared, lambda: f64, rt: &RhoTilde) -> Result<f64> {
        match rt.branch {
            Branch::Physical => {
                let p_lambda = self.law.pressure(rt.value)?.p;
                Ok(2.0 * (pre.p0 - p_lambda))
            }
            _ => {
                let base = 2.0 * (pre.p0 - pre.p1);
                let s = lambda.sqrt().min(pre.s1 + pre.delta);
                let (t, _, tk, _) = self.profile(pre, s);
                let k = self.exponent as f64;
                let u = 1.0 - t;
                // ∫₀ᵗ j dτ; then ∫ρ̃ dv = 2∫ j ds = 2Δ ∫ j dτ.
                let int_j = pre.j1 * t
                    + pre.delta
                        * (pre.a / (k + 1.0) * (t - (1.0 - u.powi(self.exponent + 2)) / (k + 2.0))
                            + self.plateau * tk * t * t / ((k + 1.0) * (k + 2.0))
                            + pre.mu * t * t * t * (1.0 - 0.5 * t));
                let blend = 2.0 * pre.delta * int_j;
                let flat = self.plateau * (lambda - pre.v2).max(0.0);
                Ok(base + blend + flat)
            }
        }
    }

    /// `G(Λ, w)` together with `ρ̃` at `Λ`.
    pub fn g_prepared(&self, pre: &Prepared, lambda: f64) -> Result<(f64, RhoTilde)> {
        let rt = self.eval_prepared(pre, lambda)?;
        Ok((0.5 * self.integral(pre, lambda, &rt)?, rt))
    }

    pub fn g_eval(&self, lambda: f64, psi: f64) -> Result<GValue> {
        let pre = self.prepare(psi)?;
        let (g, rt) = self.g_prepared(&pre, lambda)?;
        Ok(GValue {
            g,
            g_v: 0.5 * rt.value,
            g_vw: 0.5 * rt.dw,
        })
    }

    pub fn coeff_matrix(&self, p: &[f64], w: f64) -> Result<CoeffMatrix> {
        let dim = p.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::Domain(format!("velocity of dimension {dim}")));
        }
        let v: f64 = p.iter().map(|x| x * x).sum();
        let rt = self.rho_tilde(v, w)?;
        let mut a = [[0.0; 3]; 3];
        for i in 0..dim {
            a[i][i] = rt.value + 2.0 * rt.dv * p[i] * p[i];
            for j in 0..i {
                a[i][j] = 2.0 * rt.dv * p[i] * p[j];
                a[j][i] = a[i][j];
            }
        }
        Ok(CoeffMatrix { dim, a, rho_w: rt.dw })
    }

    /// Extreme eigenvalues of `ã` over a `(v, w)` grid. The eigenvalues are
    /// `ρ̃` (transverse) and `ρ̃ + 2ρ̃_v v` (along the velocity).
    pub fn ellipticity_scan(&self, grid: &ScanGrid) -> Result<(f64, f64)> {
        let (lo, hi) = self.range;
        let n_w = if lo == hi { 1 } else { grid.n_w.max(2) };
        let ws: Vec<f64> = (0..n_w)
            .map(|k| {
                if n_w == 1 {
                    lo
                } else {
                    lo + (hi - lo) * k as f64 / (n_w - 1) as f64
                }
            })
            .collect();
        let preps = ws.iter().map(|&w| self.prepare(w)).collect::<Result<Vec<_>>>()?;
        let v_max = match grid.v_max {
            Some(v) => v,
            None => 4.0 * preps.iter().map(|p| p.q_sq).fold(0.0, f64::max),
        };
        let n_v = grid.n_v.max(2);
        let mut lmin = f64::INFINITY;
        let mut lmax = f64::NEG_INFINITY;
        for pre in &preps {
            let mut vs: Vec<f64> = (0..n_v)
                .map(|k| grid.v_min + (v_max - grid.v_min) * k as f64 / (n_v - 1) as f64)
                .collect();
            vs.extend([pre.v1, pre.v2].iter().filter(|&&v| v >= grid.v_min && v <= v_max));
            for v in vs {
                let rt = self.eval_prepared(pre, v)?;
                let along = rt.value + 2.0 * rt.dv * v;
                lmin = lmin.min(rt.value.min(along));
                lmax = lmax.max(rt.value.max(along));
            }
        }
        if !(lmin > 0.0) {
            return Err(Error::Ellipticity { lambda_min: lmin });
        }
        Ok((lmin, lmax))
    }
}
