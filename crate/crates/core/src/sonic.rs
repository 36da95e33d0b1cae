//! Approximating sequences toward the critical free-stream speed and their
//! convergence diagnostics.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::continuation::solve_certified;
use crate::error::{Error, Result};
use crate::force::least_squares_slope;
use crate::mesh::{dot, norm, ExteriorMesh, Point};
use crate::quadrature::simplex_degree2;
use crate::solver::{FlowState, Problem, SolveReport};

/// What the diagnostics can and cannot show.
pub const LIMIT_GAP_NOTE: &str = "Fixed mesh and truncation radius: the table exhibits bounded weak \
residuals and Cauchy behaviour on a compact annulus only; it does not construct the limit weak \
solution on the unbounded domain.";

pub const DEFAULT_BUMPS: usize = 10;

#[derive(Debug, Clone)]
pub struct LimitMember {
    pub q_inf: f64,
    pub state: FlowState,
    pub report: SolveReport,
    pub max_mach_ratio: f64,
    pub certified: bool,
    /// Needed the relaxed Newton tolerance.
    pub relaxed: bool,
}

/// Annulus `r_inner ≤ |x| ≤ r_outer` on which norms and test functions live.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactAnnulus {
    pub r_inner: f64,
    pub r_outer: f64,
}

impl CompactAnnulus {
    /// `(1.5 r_obstacle, 0.5 R)`; without an obstacle the inner radius is `0.1 R`.
    pub fn for_mesh(mesh: &ExteriorMesh) -> Self {
        let big_r = mesh.outer_radius();
        let r_inner = mesh.obstacle_radius().map_or(0.1 * big_r, |r| 1.5 * r);
        Self {
            r_inner,
            r_outer: 0.5 * big_r,
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        let r = norm(x);
        r >= self.r_inner && r <= self.r_outer
    }
}

#[derive(Debug, Clone)]
pub struct LimitSequence {
    pub q_hat: f64,
    pub theta: f64,
    pub members: Vec<LimitMember>,
    pub region: CompactAnnulus,
}

/// Solves at `q̂ (1 − 2^{−k})`, `k = 1..n_steps`, each warm-started from the
/// previous member.
pub fn build_sequence(problem: &Problem, q_hat: f64, n_steps: usize) -> Result<LimitSequence> {
    if n_steps < 3 {
        return Err(Error::Validation(format!(
            "limit sequence needs at least 3 members, got {n_steps}"
        )));
    }
    if !(q_hat > 0.0 && q_hat.is_finite()) {
        return Err(Error::Validation(format!(
            "critical speed estimate {q_hat} must be positive"
        )));
    }
    let mut members: Vec<LimitMember> = Vec::with_capacity(n_steps);
    for k in 1..=n_steps {
        let q = q_hat * (1.0 - 0.5f64.powi(k as i32));
        let r = solve_certified(problem, q, members.last().map(|m| &m.state))?;
        members.push(LimitMember {
            q_inf: q,
            max_mach_ratio: r.max_mach_ratio,
            certified: r.certified_subsonic,
            relaxed: r.relaxed,
            report: r.report,
            state: r.state,
        });
    }
    Ok(LimitSequence {
        q_hat,
        theta: problem.theta(),
        members,
        region: CompactAnnulus::for_mesh(problem.mesh()),
    })
}

fn cell_velocity(mesh: &ExteriorMesh, phi: &[f64], c: usize) -> Point {
    let g = mesh.cell_geometry(c);
    let mut u = [0.0; 3];
    for (k, &v) in mesh.cell(c).iter().enumerate() {
        for d in 0..3 {
            u[d] += phi[v] * g.grads[k][d];
        }
    }
    u
}

/// `‖∇φ_a − ∇φ_b‖` in L² over cells whose barycenter lies in `region`.
pub fn velocity_l2_difference(mesh: &ExteriorMesh, region: &CompactAnnulus, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for c in 0..mesh.n_cells() {
        let g = mesh.cell_geometry(c);
        if !region.contains(&g.barycenter) {
            continue;
        }
        let ua = cell_velocity(mesh, a, c);
        let ub = cell_velocity(mesh, b, c);
        let d = [ua[0] - ub[0], ua[1] - ub[1], ua[2] - ub[2]];
        s += g.volume * dot(&d, &d);
    }
    s.sqrt()
}

/// Pairwise L² velocity differences on the compact annulus.
pub fn cauchy_table(mesh: &ExteriorMesh, seq: &LimitSequence) -> Vec<Vec<f64>> {
    let n = seq.members.len();
    let mut t = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = velocity_l2_difference(mesh, &seq.region, &seq.members[i].state.phi, &seq.members[j].state.phi);
            t[i][j] = d;
            t[j][i] = d;
        }
    }
    t
}

/// A continuous piecewise-linear test function given by nodal values.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
}

/// Nodal hats and interpolated smooth bumps, all supported in the annulus.
#[derive(Debug, Clone)]
pub struct TestSet {
    pub functions: Vec<TestFunction>,
    pub n_hats: usize,
    pub n_bumps: usize,
}

fn vertex_stars(mesh: &ExteriorMesh) -> Vec<Vec<usize>> {
    let mut stars = vec![Vec::new(); mesh.n_vertices()];
    for c in 0..mesh.n_cells() {
        for &v in mesh.cell(c) {
            stars[v].push(c);
        }
    }
    stars
}

impl TestSet {
    pub fn new(mesh: &ExteriorMesh, region: &CompactAnnulus, n_bumps: usize, seed: u64) -> Result<Self> {
        let stars = vertex_stars(mesh);
        // A vertex may carry a nonzero value when its whole star is inside.
        let inside: Vec<bool> = (0..mesh.n_vertices())
            .map(|v| {
                stars[v]
                    .iter()
                    .all(|&c| mesh.cell(c).iter().all(|&x| region.contains(&mesh.vertices()[x])))
            })
            .collect();
        let mut functions: Vec<TestFunction> = (0..mesh.n_vertices())
            .filter(|&v| inside[v])
            .map(|v| TestFunction {
                nodes: vec![v],
                values: vec![1.0],
            })
            .collect();
        let n_hats = functions.len();
        if n_hats == 0 {
            return Err(Error::Validation(
                "compact annulus contains no interior vertex stars".into(),
            ));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = region.r_outer - region.r_inner;
        let dim = mesh.dim();
        let mut made = 0;
        let mut tries = 0;
        while made < n_bumps {
            tries += 1;
            if tries > 1000 * n_bumps.max(1) {
                return Err(Error::Validation(
                    "could not place smooth test bumps in the compact annulus".into(),
                ));
            }
            let a = rng.gen_range(0.1..0.3) * width;
            let r = rng.gen_range(region.r_inner + a..region.r_outer - a);
            let dir = loop {
                let d = [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    if dim == 3 { rng.gen_range(-1.0..1.0) } else { 0.0 },
                ];
                let n = norm(&d);
                if n > 0.1 && n <= 1.0 {
                    break [d[0] / n, d[1] / n, d[2] / n];
                }
            };
            let center = [r * dir[0], r * dir[1], r * dir[2]];
            let mut f = TestFunction {
                nodes: Vec::new(),
                values: Vec::new(),
            };
            let mut ok = true;
            for (v, x) in mesh.vertices().iter().enumerate() {
                let s2 = (0..3).map(|d| (x[d] - center[d]).powi(2)).sum::<f64>() / (a * a);
                if s2 < 1.0 {
                    if !inside[v] {
                        ok = false;
                        break;
                    }
                    f.nodes.push(v);
                    f.values.push((1.0 - 1.0 / (1.0 - s2)).exp());
                }
            }
            if ok && f.nodes.len() >= 3 {
                functions.push(f);
                made += 1;
            }
        }
        Ok(Self {
            functions,
            n_hats,
            n_bumps,
        })
    }
}

/// ψ, ∇ψ and barycentric weights at degree-2 points of the cells touched by
/// the test set.
#[derive(Debug, Clone)]
pub struct ResidualContext {
    tests: TestSet,
    // For each test: touched cells.
    supports: Vec<Vec<usize>>,
    quad: HashMap<usize, Vec<QuadPoint>>,
}

#[derive(Debug, Clone, Copy)]
struct QuadPoint {
    weight: f64,
    bary: [f64; 4],
    psi: f64,
    grad_psi: Point,
}

impl ResidualContext {
    pub fn new(problem: &Problem, tests: TestSet) -> Result<Self> {
        let mesh = problem.mesh();
        let stars = vertex_stars(mesh);
        let supports: Vec<Vec<usize>> = tests
            .functions
            .iter()
            .map(|f| {
                let mut cells: Vec<usize> = f.nodes.iter().flat_map(|&v| stars[v].iter().copied()).collect();
                cells.sort_unstable();
                cells.dedup();
                cells
            })
            .collect();
        let mut touched: Vec<usize> = supports.iter().flatten().copied().collect();
        touched.sort_unstable();
        touched.dedup();
        let rule = simplex_degree2(mesh.dim());
        let force = problem.force();
        let quad = touched
            .par_iter()
            .map(|&c| {
                let g = mesh.cell_geometry(c);
                let cell = mesh.cell(c);
                let pts = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(b, &w)| {
                        let mut x = [0.0; 3];
                        let mut bary = [0.0; 4];
                        for (k, &v) in cell.iter().enumerate() {
                            bary[k] = b[k];
                            for d in 0..3 {
                                x[d] += b[k] * mesh.vertices()[v][d];
                            }
                        }
                        Ok(QuadPoint {
                            weight: w * g.volume,
                            bary,
                            psi: force.eval_psi(&x)?,
                            grad_psi: force.eval_grad_psi(&x)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((c, pts))
            })
            .collect::<Result<HashMap<_, _>>>()?;
        Ok(Self { tests, supports, quad })
    }

    pub fn tests(&self) -> &TestSet {
        &self.tests
    }

    fn nodal(&self, i: usize) -> HashMap<usize, f64> {
        let f = &self.tests.functions[i];
        f.nodes.iter().copied().zip(f.values.iter().copied()).collect()
    }

    fn test_gradient(mesh: &ExteriorMesh, values: &HashMap<usize, f64>, c: usize) -> (Point, [f64; 4]) {
        let g = mesh.cell_geometry(c);
        let mut grad = [0.0; 3];
        let mut local = [0.0; 4];
        for (k, v) in mesh.cell(c).iter().enumerate() {
            let x = values.get(v).copied().unwrap_or(0.0);
            local[k] = x;
            for d in 0..3 {
                grad[d] += x * g.grads[k][d];
            }
        }
        (grad, local)
    }

    /// `max_χ |∫ ρ̃ u·∇χ| / ‖∇χ‖` with the cellwise solver density.
    pub fn mass_residual(&self, problem: &Problem, state: &FlowState) -> Result<f64> {
        let mesh = problem.mesh();
        let flows = problem.cell_flows(state)?;
        let worst = (0..self.tests.functions.len())
            .into_par_iter()
            .map(|i| {
                let values = self.nodal(i);
                let (mut num, mut den) = (0.0, 0.0);
                for &c in &self.supports[i] {
                    let vol = mesh.cell_geometry(c).volume;
                    let (g, _) = Self::test_gradient(mesh, &values, c);
                    num += vol * flows[c].rho.value * dot(&flows[c].velocity, &g);
                    den += vol * dot(&g, &g);
                }
                num.abs() / den.sqrt()
            })
            .reduce(|| 0.0, f64::max);
        Ok(worst)
    }

    /// `max_{χ, j} |∫ ρ u_j (u·∇χ) + p ∂_jχ + ρ ∂_jψ χ| / ‖∇χ‖` with density
    /// and pressure evaluated pointwise from the cut-off closure.
    pub fn momentum_residual(&self, problem: &Problem, state: &FlowState) -> Result<f64> {
        let mesh = problem.mesh();
        let dim = mesh.dim();
        let cutoff = problem.cutoff();
        let law = problem.law();
        let (lo, hi) = cutoff.force_range();
        let worst = (0..self.tests.functions.len())
            .into_par_iter()
            .map(|i| {
                let values = self.nodal(i);
                let mut num = [0.0; 3];
                let mut den = 0.0;
                for &c in &self.supports[i] {
                    let vol = mesh.cell_geometry(c).volume;
                    let u = cell_velocity(mesh, &state.phi, c);
                    let v = dot(&u, &u);
                    let (g, local) = Self::test_gradient(mesh, &values, c);
                    den += vol * dot(&g, &g);
                    let ug = dot(&u, &g);
                    for qp in &self.quad[&c] {
                        let rho = cutoff.rho_tilde(v, qp.psi.clamp(lo, hi))?.value;
                        let p = law.pressure(rho)?.p;
                        let chi: f64 = (0..=dim).map(|k| qp.bary[k] * local[k]).sum();
                        for j in 0..dim {
                            num[j] += qp.weight * (rho * u[j] * ug + p * g[j] + rho * qp.grad_psi[j] * chi);
                        }
                    }
                }
                let m = num[..dim].iter().fold(0.0f64, |a, x| a.max(x.abs()));
                Ok(m / den.sqrt())
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(worst.into_iter().fold(0.0, f64::max))
    }
}

/// Largest `|½|u|² + h(ρ̃) − ψ|` over physical-branch cells.
pub fn bernoulli_defect(problem: &Problem, state: &FlowState) -> Result<f64> {
    let flows = problem.cell_flows(state)?;
    let mut worst: f64 = 0.0;
    for (c, f) in flows.iter().enumerate() {
        if f.rho.branch != crate::cutoff::Branch::Physical {
            continue;
        }
        let h = problem.law().h(f.rho.value)?;
        worst = worst.max((0.5 * f.speed_sq + h - problem.cell_psi()[c]).abs());
    }
    Ok(worst)
}

/// Smallest `ρ̃_K − H⁻¹(ψ_K)`, the margin above the critical density.
pub fn critical_density_margin(problem: &Problem, state: &FlowState) -> Result<f64> {
    let flows = problem.cell_flows(state)?;
    let mut worst = f64::INFINITY;
    for (c, f) in flows.iter().enumerate() {
        let rho_star = problem.law().big_h_inv(problem.cell_psi()[c])?;
        worst = worst.min(f.rho.value - rho_star);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub exponent: f64,
    /// `(geometric-mean radius, max |∇φ − q∞e₁|)` per nonempty annulus.
    pub annuli: Vec<(f64, f64)>,
    /// `min(n/2, β + n/q − 1)` when force decay parameters are supplied.
    pub beta_prime: Option<f64>,
}

/// Least-squares decay exponent of `max |∇φ − q∞e₁|` over log-spaced annuli
/// in `(2 r_obstacle, 0.8 R)`.
pub fn farfield_decay_fit(
    problem: &Problem,
    state: &FlowState,
    n_annuli: usize,
    force_decay: Option<(f64, f64)>,
) -> Result<DecayFit> {
    if n_annuli < 5 {
        return Err(Error::Validation(format!(
            "decay fit needs at least 5 annuli, got {n_annuli}"
        )));
    }
    let mesh = problem.mesh();
    let big_r = mesh.outer_radius();
    let r_lo = mesh.obstacle_radius().map_or(0.1 * big_r, |r| 2.0 * r);
    let r_hi = 0.8 * big_r;
    if !(r_lo < r_hi) {
        return Err(Error::Fit(format!("empty fitting range ({r_lo}, {r_hi})")));
    }
    let ratio = (r_hi / r_lo).ln();
    let mut maxima = vec![None::<f64>; n_annuli];
    for c in 0..mesh.n_cells() {
        let x = mesh.cell_geometry(c).barycenter;
        let r = norm(&x);
        if r <= r_lo || r >= r_hi {
            continue;
        }
        let k = (((r / r_lo).ln() / ratio * n_annuli as f64) as usize).min(n_annuli - 1);
        let u = cell_velocity(mesh, &state.phi, c);
        let dev = norm(&[u[0] - state.q_inf, u[1], u[2]]);
        maxima[k] = Some(maxima[k].map_or(dev, |m: f64| m.max(dev)));
    }
    let annuli: Vec<(f64, f64)> = maxima
        .iter()
        .enumerate()
        .filter_map(|(k, m)| m.map(|m| (r_lo * (ratio * (k as f64 + 0.5) / n_annuli as f64).exp(), m)))
        .collect();
    if annuli.len() < 2 {
        return Err(Error::Fit("fewer than two annuli contain cells".into()));
    }
    if let Some(&(r, m)) = annuli.iter().find(|a| a.1 < 1e-12) {
        return Err(Error::Fit(format!("deviation {m:.3e} at r = {r:.3} is below 1e-12")));
    }
    let pts: Vec<(f64, f64)> = annuli.iter().map(|(r, m)| (r.ln(), m.ln())).collect();
    let n = mesh.dim() as f64;
    Ok(DecayFit {
        exponent: -least_squares_slope(&pts),
        annuli,
        beta_prime: force_decay.map(|(q, beta)| (n / 2.0).min(beta + n / q - 1.0)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemberDiagnostics {
    pub index: usize,
    pub q_inf: f64,
    pub max_mach_ratio: f64,
    pub mass_residual: f64,
    pub momentum_residual: f64,
    pub decay_exponent: Option<f64>,
}

impl MemberDiagnostics {
    pub fn csv_header() -> &'static str {
        "member,q_infinity,max_mach_ratio,mass_residual,momentum_residual,decay_exponent"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            self.index,
            self.q_inf,
            self.max_mach_ratio,
            self.mass_residual,
            self.momentum_residual,
            self.decay_exponent.map_or("nan".to_string(), |e| format!("{e:.16e}"))
        )
    }
}

pub fn diagnostics(problem: &Problem, seq: &LimitSequence, ctx: &ResidualContext) -> Result<Vec<MemberDiagnostics>> {
    seq.members
        .iter()
        .enumerate()
        .map(|(i, m)| {
            Ok(MemberDiagnostics {
                index: i,
                q_inf: m.q_inf,
                max_mach_ratio: m.max_mach_ratio,
                mass_residual: ctx.mass_residual(problem, &m.state)?,
                momentum_residual: ctx.momentum_residual(problem, &m.state)?,
                decay_exponent: farfield_decay_fit(problem, &m.state, 8, None).ok().map(|f| f.exponent),
            })
        })
        .collect()
}
