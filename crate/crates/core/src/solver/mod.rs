//! Discrete energy minimization for the cut-off potential flow problem.
//!
//! The unknown is the P1 total potential φ with Dirichlet data `φ = q∞ x₁` on
//! the outer sphere. The energy `J_h(φ) = Σ_cells |K| G(|∇φ|², ψ_K)` uses
//! barycentric ψ; its gradient is the weak form `∫ ρ̃ ∇φ·∇η` and its Hessian
//! has kernel `ã = ρ̃ I + 2ρ̃_v ∇φ⊗∇φ`. Slip on the obstacle is natural.

pub mod sparse;

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::cutoff::{Branch, CutoffDensity, Prepared, RhoTilde};
use crate::error::{Error, Result};
use crate::force::ForcePotential;
use crate::gas::GasLaw;
use crate::mesh::{dot, norm, BoundaryTag, ExteriorMesh, Point};
use sparse::{norm2, pcg, CsrMatrix};

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Absolute tolerance on the Euclidean norm of the free gradient.
    pub tol: f64,
    pub max_iter: usize,
    pub cg_rel_tol: f64,
    /// Inner iterations are capped at this multiple of the unknown count.
    pub cg_iter_factor: usize,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub min_step: f64,
    /// Combine element contributions in cell order for bit-reproducible runs.
    pub deterministic: bool,
    /// Relative padding of the sampled ψ range handed to the cut-off.
    pub range_padding: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 60,
            cg_rel_tol: 1e-8,
            cg_iter_factor: 10,
            armijo_c: 1e-4,
            backtrack: 0.5,
            min_step: 1e-10,
            deterministic: false,
            range_padding: 0.01,
        }
    }
}

/// Nodal potential with its free-stream speed.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub q_inf: f64,
    pub theta: f64,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub energy: f64,
    pub gradient_norm: f64,
    pub step: f64,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SolveReport {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub energy: f64,
    pub decorated_functional: f64,
    pub max_speed: f64,
    pub max_mach_ratio: f64,
    pub cutoff_active_cells: usize,
    pub wall_time: f64,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

#[derive(Debug, Clone)]
pub struct Assembly {
    pub energy: f64,
    /// Indexed by free-vertex number.
    pub gradient: Option<Vec<f64>>,
    pub hessian: Option<CsrMatrix>,
}

/// Velocity and cut-off density on one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellFlow {
    pub velocity: Point,
    pub speed_sq: f64,
    pub rho: RhoTilde,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachRatio {
    pub value: f64,
    pub cell: usize,
    pub location: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElResidual {
    /// Norm of the assembled free gradient.
    pub weak: f64,
    /// Per-cell flux-jump indicators.
    pub cell_indicators: Vec<f64>,
    /// `(Σ η_K²)^{1/2}`.
    pub total_jump: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassFlux {
    pub obstacle: f64,
    pub outer: f64,
}

#[derive(Debug)]
struct Structure {
    free_index: Vec<usize>,
    free_vertices: Vec<usize>,
    pattern: CsrMatrix,
    // CSR slot of local pair (k, l) per cell, NONE when either vertex is fixed.
    slots: Vec<usize>,
}

impl Structure {
    fn new(mesh: &ExteriorMesh) -> Self {
        let outer = mesh.outer_vertex_mask();
        let mut free_index = vec![NONE; mesh.n_vertices()];
        let mut free_vertices = Vec::new();
        for (v, &fixed) in outer.iter().enumerate() {
            if !fixed {
                free_index[v] = free_vertices.len();
                free_vertices.push(v);
            }
        }
        let nv = mesh.dim() + 1;
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); free_vertices.len()];
        for c in 0..mesh.n_cells() {
            for &a in mesh.cell(c) {
                let ia = free_index[a];
                if ia == NONE {
                    continue;
                }
                for &b in mesh.cell(c) {
                    if free_index[b] != NONE {
                        rows[ia].push(free_index[b]);
                    }
                }
            }
        }
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
        }
        let pattern = CsrMatrix::from_pattern(&rows);
        let mut slots = vec![NONE; mesh.n_cells() * nv * nv];
        for c in 0..mesh.n_cells() {
            let cell = mesh.cell(c);
            for k in 0..nv {
                for l in 0..nv {
                    let (i, j) = (free_index[cell[k]], free_index[cell[l]]);
                    if i != NONE && j != NONE {
                        slots[c * nv * nv + k * nv + l] = pattern.find(i, j).expect("pattern entry");
                    }
                }
            }
        }
        Self {
            free_index,
            free_vertices,
            pattern,
            slots,
        }
    }
}

/// Element contribution: energy, local gradient, local Hessian.
struct Local {
    energy: f64,
    grad: [f64; 4],
    hess: [[f64; 4]; 4],
}

/// Everything fixed for one geometry, gas law, force and θ.
#[derive(Debug, Clone)]
pub struct Problem {
    mesh: Arc<ExteriorMesh>,
    force: Arc<ForcePotential>,
    cell_psi: Arc<Vec<f64>>,
    cell_grad_psi: Arc<Vec<Point>>,
    face_psi: Arc<Vec<f64>>,
    structure: Arc<Structure>,
    cutoff: CutoffDensity,
    prepared: Arc<Vec<Prepared>>,
    pub options: SolverOptions,
}

impl Problem {
    pub fn new(
        mesh: Arc<ExteriorMesh>,
        law: GasLaw,
        force: ForcePotential,
        theta: f64,
        options: SolverOptions,
    ) -> Result<Self> {
        if force.dim != mesh.dim() {
            return Err(Error::Domain(format!(
                "force dimension {} does not match mesh dimension {}",
                force.dim,
                mesh.dim()
            )));
        }
        force.check_against_mesh(&mesh)?;
        let (lo, hi) = force.psi_range(&mesh)?;
        let pad = options.range_padding * (hi - lo);
        let range = (lo - pad, hi + pad);
        law.check_admissible(range.0, range.1)?;
        let cutoff = CutoffDensity::new(law, range, theta)?;

        let cell_psi = force.psi_at_barycenters(&mesh)?;
        let cell_grad_psi = mesh
            .geometry()
            .par_iter()
            .map(|g| force.eval_grad_psi(&g.barycenter))
            .collect::<Result<Vec<_>>>()?;
        let face_psi = mesh
            .boundary()
            .par_iter()
            .map(|f| force.eval_psi(&mesh.face_centroid(f)))
            .collect::<Result<Vec<_>>>()?;
        let prepared = prepare_cells(&cutoff, &cell_psi)?;
        let structure = Structure::new(&mesh);
        Ok(Self {
            mesh,
            force: Arc::new(force),
            cell_psi: Arc::new(cell_psi),
            cell_grad_psi: Arc::new(cell_grad_psi),
            face_psi: Arc::new(face_psi),
            structure: Arc::new(structure),
            cutoff,
            prepared: Arc::new(prepared),
            options,
        })
    }

    /// Same data with another cut-off parameter.
    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        let cutoff = CutoffDensity::new(self.cutoff.law().clone(), self.cutoff.force_range(), theta)?;
        let prepared = prepare_cells(&cutoff, &self.cell_psi)?;
        Ok(Self {
            cutoff,
            prepared: Arc::new(prepared),
            ..self.clone()
        })
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    pub fn mesh(&self) -> &ExteriorMesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> Arc<ExteriorMesh> {
        self.mesh.clone()
    }

    pub fn force(&self) -> &ForcePotential {
        &self.force
    }

    pub fn law(&self) -> &GasLaw {
        self.cutoff.law()
    }

    pub fn cutoff(&self) -> &CutoffDensity {
        &self.cutoff
    }

    pub fn theta(&self) -> f64 {
        self.cutoff.theta()
    }

    pub fn cell_psi(&self) -> &[f64] {
        &self.cell_psi
    }

    pub fn cell_grad_psi(&self) -> &[Point] {
        &self.cell_grad_psi
    }

    /// `q_cr(ψ_K)` per cell.
    pub fn cell_critical_speed(&self, c: usize) -> f64 {
        self.prepared[c].q_sq.sqrt()
    }

    pub fn n_free(&self) -> usize {
        self.structure.free_vertices.len()
    }

    pub fn free_vertices(&self) -> &[usize] {
        &self.structure.free_vertices
    }

    pub fn is_free(&self, v: usize) -> bool {
        self.structure.free_index[v] != NONE
    }

    /// Uniform flow `φ = q∞ x₁` everywhere.
    pub fn uniform_state(&self, q_inf: f64) -> FlowState {
        FlowState {
            q_inf,
            theta: self.theta(),
            phi: self.mesh.vertices().iter().map(|x| q_inf * x[0]).collect(),
        }
    }

    /// State with the given nodal values, with the Dirichlet data imposed.
    pub fn state_from(&self, q_inf: f64, mut phi: Vec<f64>) -> Result<FlowState> {
        if phi.len() != self.mesh.n_vertices() {
            return Err(Error::Domain(format!(
                "{} nodal values for {} vertices",
                phi.len(),
                self.mesh.n_vertices()
            )));
        }
        for (v, x) in self.mesh.vertices().iter().enumerate() {
            if !self.is_free(v) {
                phi[v] = q_inf * x[0];
            }
        }
        Ok(FlowState {
            q_inf,
            theta: self.theta(),
            phi,
        })
    }

    /// Warm start for a new free-stream speed: the previous potential scaled by
    /// `q_new / q_old` (the uniform flow when `q_old = 0`).
    pub fn rescaled_state(&self, prev: &FlowState, q_new: f64) -> Result<FlowState> {
        if prev.q_inf == 0.0 {
            return Ok(self.uniform_state(q_new));
        }
        let s = q_new / prev.q_inf;
        self.state_from(q_new, prev.phi.iter().map(|p| s * p).collect())
    }

    fn cell_gradient(&self, phi: &[f64], c: usize) -> Point {
        let g = self.mesh.cell_geometry(c);
        let mut u = [0.0; 3];
        for (k, &v) in self.mesh.cell(c).iter().enumerate() {
            for d in 0..3 {
                u[d] += phi[v] * g.grads[k][d];
            }
        }
        u
    }

    /// Velocity and ρ̃ on every cell.
    pub fn cell_flows(&self, state: &FlowState) -> Result<Vec<CellFlow>> {
        (0..self.mesh.n_cells())
            .into_par_iter()
            .map(|c| {
                let velocity = self.cell_gradient(&state.phi, c);
                let speed_sq = dot(&velocity, &velocity);
                let rho = self.cutoff.eval_prepared(&self.prepared[c], speed_sq)?;
                Ok(CellFlow {
                    velocity,
                    speed_sq,
                    rho,
                })
            })
            .collect()
    }

    fn local(&self, phi: &[f64], c: usize, order: Order) -> Result<Local> {
        let geo = self.mesh.cell_geometry(c);
        let nv = self.mesh.dim() + 1;
        let u = self.cell_gradient(phi, c);
        let v = dot(&u, &u);
        let (g, rt) = self.cutoff.g_prepared(&self.prepared[c], v)?;
        let mut out = Local {
            energy: geo.volume * g,
            grad: [0.0; 4],
            hess: [[0.0; 4]; 4],
        };
        if order == Order::Value {
            return Ok(out);
        }
        let mut proj = [0.0; 4];
        for k in 0..nv {
            proj[k] = dot(&u, &geo.grads[k]);
            out.grad[k] = geo.volume * rt.value * proj[k];
        }
        if order == Order::Hessian {
            for k in 0..nv {
                for l in 0..=k {
                    let h =
                        geo.volume * (rt.value * dot(&geo.grads[k], &geo.grads[l]) + 2.0 * rt.dv * proj[k] * proj[l]);
                    out.hess[k][l] = h;
                    out.hess[l][k] = h;
                }
            }
        }
        Ok(out)
    }

    pub fn assemble(&self, state: &FlowState, order: Order) -> Result<Assembly> {
        let n_cells = self.mesh.n_cells();
        let nv = self.mesh.dim() + 1;
        let st = &self.structure;
        let n_free = st.free_vertices.len();
        let nnz = st.pattern.nnz();
        let want_grad = order != Order::Value;
        let want_hess = order == Order::Hessian;

        let scatter = |acc: &mut (f64, Vec<f64>, Vec<f64>), c: usize, loc: &Local| {
            acc.0 += loc.energy;
            if !want_grad {
                return;
            }
            let cell = self.mesh.cell(c);
            for k in 0..nv {
                let i = st.free_index[cell[k]];
                if i != NONE {
                    acc.1[i] += loc.grad[k];
                }
            }
            if want_hess {
                let base = c * nv * nv;
                for k in 0..nv {
                    for l in 0..nv {
                        let s = st.slots[base + k * nv + l];
                        if s != NONE {
                            acc.2[s] += loc.hess[k][l];
                        }
                    }
                }
            }
        };
        let empty = || {
            (
                0.0,
                vec![0.0; if want_grad { n_free } else { 0 }],
                vec![0.0; if want_hess { nnz } else { 0 }],
            )
        };

        let (energy, grad, values) = if self.options.deterministic {
            let locals = (0..n_cells)
                .into_par_iter()
                .map(|c| self.local(&state.phi, c, order))
                .collect::<Result<Vec<_>>>()?;
            let mut acc = empty();
            for (c, loc) in locals.iter().enumerate() {
                scatter(&mut acc, c, loc);
            }
            acc
        } else {
            (0..n_cells)
                .into_par_iter()
                .try_fold(empty, |mut acc, c| {
                    let loc = self.local(&state.phi, c, order)?;
                    scatter(&mut acc, c, &loc);
                    Ok::<_, Error>(acc)
                })
                .try_reduce(empty, |mut a, b| {
                    a.0 += b.0;
                    for (x, y) in a.1.iter_mut().zip(&b.1) {
                        *x += y;
                    }
                    for (x, y) in a.2.iter_mut().zip(&b.2) {
                        *x += y;
                    }
                    Ok(a)
                })?
        };
        let hessian = want_hess.then(|| {
            let mut h = st.pattern.clone();
            h.values = values;
            h
        });
        Ok(Assembly {
            energy,
            gradient: want_grad.then_some(grad),
            hessian,
        })
    }

    fn with_step(&self, state: &FlowState, dir: &[f64], t: f64) -> FlowState {
        let mut next = state.clone();
        for (i, &v) in self.structure.free_vertices.iter().enumerate() {
            next.phi[v] += t * dir[i];
        }
        next
    }

    /// Damped Newton with Armijo backtracking, started from `initial`.
    pub fn newton_solve(&self, initial: FlowState) -> Result<(FlowState, SolveReport)> {
        let start = Instant::now();
        let opts = self.options;
        let mut state = self.state_from(initial.q_inf, initial.phi)?;
        let mut history = Vec::new();
        let n_free = self.n_free();
        let cg_max = (opts.cg_iter_factor * n_free).max(10);
        let mut cg_last = 0;
        let mut step_last = 0.0;
        let mut report = SolveReport::default();

        let mut asm = self.assemble(&state, Order::Hessian)?;
        for it in 0..=opts.max_iter {
            let g = asm.gradient.as_ref().expect("gradient requested");
            let gnorm = norm2(g);
            history.push(IterationRecord {
                iteration: it,
                energy: asm.energy,
                gradient_norm: gnorm,
                step: step_last,
                cg_iterations: cg_last,
            });
            report.iterations = it;
            report.gradient_norm = gnorm;
            report.energy = asm.energy;
            if gnorm < opts.tol {
                report.converged = true;
                break;
            }
            if it == opts.max_iter {
                break;
            }
            let h = asm.hessian.as_ref().expect("hessian requested");
            let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
            let (dir, cg) = pcg(h, &rhs, opts.cg_rel_tol, cg_max)?;
            cg_last = cg.iterations;
            let slope = sparse::dot(g, &dir);
            if !(slope < 0.0) {
                break;
            }

            let mut t = 1.0;
            let mut accepted = None;
            let energy_scale = energy_magnitude(self, &state)?;
            while t >= opts.min_step {
                let trial = self.with_step(&state, &dir, t);
                let e = self.assemble(&trial, Order::Value)?.energy;
                if e <= asm.energy + opts.armijo_c * t * slope {
                    accepted = Some(trial);
                    break;
                }
                // Energy differences at roundoff level: accept on gradient decrease.
                if (e - asm.energy).abs() <= 64.0 * f64::EPSILON * energy_scale {
                    let ta = self.assemble(&trial, Order::Gradient)?;
                    if norm2(ta.gradient.as_ref().unwrap()) < gnorm {
                        accepted = Some(trial);
                        break;
                    }
                }
                t *= opts.backtrack;
            }
            let Some(next) = accepted else {
                break;
            };
            step_last = t;
            state = next;
            asm = self.assemble(&state, Order::Hessian)?;
        }
        report.history = history;
        report.wall_time = start.elapsed().as_secs_f64();
        if !report.converged {
            return Err(Error::NonConvergence {
                report: Box::new(report),
            });
        }
        self.fill_report(&state, &mut report)?;
        report.wall_time = start.elapsed().as_secs_f64();
        Ok((state, report))
    }

    fn fill_report(&self, state: &FlowState, report: &mut SolveReport) -> Result<()> {
        let flows = self.cell_flows(state)?;
        report.max_speed = flows.iter().map(|f| f.speed_sq.sqrt()).fold(0.0, f64::max);
        report.max_mach_ratio = self.max_mach_ratio(state)?.value;
        report.cutoff_active_cells = flows.iter().filter(|f| f.rho.branch != Branch::Physical).count();
        report.decorated_functional = self.decorated_functional(state)?;
        Ok(())
    }

    /// `max_K |∇φ|/q_cr(ψ_K)` over cells, with its location.
    pub fn max_mach_ratio(&self, state: &FlowState) -> Result<MachRatio> {
        let mut best = MachRatio {
            value: 0.0,
            cell: 0,
            location: self.mesh.cell_geometry(0).barycenter,
        };
        for c in 0..self.mesh.n_cells() {
            let u = self.cell_gradient(&state.phi, c);
            let r = norm(&u) / self.cell_critical_speed(c);
            if r > best.value {
                best = MachRatio {
                    value: r,
                    cell: c,
                    location: self.mesh.cell_geometry(c).barycenter,
                };
            }
        }
        Ok(best)
    }

    /// The decorated functional I on the truncated domain, with ν pointing
    /// out of the flow region. The decoration is the linear part whose first
    /// variation cancels, so `I(φ) = J_h(φ) − J_h(q∞x₁)` up to quadrature
    /// of the ψ-dependent terms.
    pub fn decorated_functional(&self, state: &FlowState) -> Result<f64> {
        let q = state.q_inf;
        let q2 = q * q;
        let mesh = &*self.mesh;
        let nv = mesh.dim() + 1;
        let mut total = 0.0;
        for c in 0..mesh.n_cells() {
            let geo = mesh.cell_geometry(c);
            let u = self.cell_gradient(&state.phi, c);
            let pre = &self.prepared[c];
            let (g, _) = self.cutoff.g_prepared(pre, dot(&u, &u))?;
            let (g_inf, rt_inf) = self.cutoff.g_prepared(pre, q2)?;
            let g_v = 0.5 * rt_inf.value;
            let g_vw = 0.5 * rt_inf.dw;
            let pert: f64 = mesh
                .cell(c)
                .iter()
                .map(|&v| state.phi[v] - q * mesh.vertices()[v][0])
                .sum::<f64>()
                / nv as f64;
            total += geo.volume
                * (g - g_inf - 2.0 * g_v * q * (u[0] - q) - 2.0 * g_vw * q * self.cell_grad_psi[c][0] * pert);
        }
        for (f, face) in mesh.boundary().iter().enumerate() {
            if face.tag != BoundaryTag::Obstacle {
                continue;
            }
            let pre = self
                .cutoff
                .prepare(self.face_psi[f].clamp(self.cutoff.force_range().0, self.cutoff.force_range().1))?;
            let g_v = 0.5 * self.cutoff.eval_prepared(&pre, q2)?.value;
            let n = mesh.face_normal(face);
            let mean: f64 = face
                .nodes
                .iter()
                .map(|&v| state.phi[v] - q * mesh.vertices()[v][0])
                .sum::<f64>()
                / face.nodes.len() as f64;
            total += 2.0 * g_v * q * mean * n[0] * mesh.face_measure(face);
        }
        Ok(total)
    }

    /// Weak residual (free gradient norm) and flux-jump indicators of
    /// `div(ρ̃∇φ) = 0` across interior faces.
    pub fn el_residual(&self, state: &FlowState) -> Result<ElResidual> {
        let asm = self.assemble(state, Order::Gradient)?;
        let weak = norm2(asm.gradient.as_ref().unwrap());
        let flows = self.cell_flows(state)?;
        let flux = |c: usize| flows[c].velocity.map(|x| x * flows[c].rho.value);
        let dim = self.mesh.dim();
        let mut eta_sq = vec![0.0; self.mesh.n_cells()];
        for (a, b, n, measure) in self.mesh.interior_faces() {
            let jump = dot(&flux(b), &n) - dot(&flux(a), &n);
            let h = if dim == 2 { measure } else { measure.sqrt() };
            let contrib = 0.5 * measure * h * jump * jump;
            eta_sq[a] += contrib;
            eta_sq[b] += contrib;
        }
        let total_jump = (eta_sq.iter().sum::<f64>() * 0.5).sqrt();
        Ok(ElResidual {
            weak,
            cell_indicators: eta_sq.iter().map(|e| e.sqrt()).collect(),
            total_jump,
        })
    }

    /// Net mass flux `∮ ρ̃∇φ·ν` through OBSTACLE and OUTER faces, from the
    /// adjacent cell values.
    pub fn mass_flux_check(&self, state: &FlowState) -> Result<MassFlux> {
        let flows = self.cell_flows(state)?;
        let mut out = MassFlux {
            obstacle: 0.0,
            outer: 0.0,
        };
        for face in self.mesh.boundary() {
            let f = &flows[face.cell];
            let flux = f.rho.value * dot(&f.velocity, &self.mesh.face_normal(face)) * self.mesh.face_measure(face);
            match face.tag {
                BoundaryTag::Obstacle => out.obstacle += flux,
                BoundaryTag::Outer => out.outer += flux,
            }
        }
        Ok(out)
    }
}

fn prepare_cells(cutoff: &CutoffDensity, psi: &[f64]) -> Result<Vec<Prepared>> {
    psi.par_iter().map(|&w| cutoff.prepare(w)).collect()
}

/// `Σ |K| |G|`, the scale of rounding in the assembled energy.
fn energy_magnitude(p: &Problem, state: &FlowState) -> Result<f64> {
    let mut s = 0.0;
    for c in 0..p.mesh.n_cells() {
        let u = p.cell_gradient(&state.phi, c);
        let (g, _) = p.cutoff.g_prepared(&p.prepared[c], dot(&u, &u))?;
        s += p.mesh.cell_geometry(c).volume * g.abs();
    }
    Ok(s)
}

/// `‖∇(φ_a − φ_b)‖_{L²}` over the mesh.
pub fn gradient_l2_distance(mesh: &ExteriorMesh, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for c in 0..mesh.n_cells() {
        let g = mesh.cell_geometry(c);
        let mut d = [0.0; 3];
        for (k, &v) in mesh.cell(c).iter().enumerate() {
            for i in 0..3 {
                d[i] += (a[v] - b[v]) * g.grads[k][i];
            }
        }
        s += g.volume * dot(&d, &d);
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_annulus_2d, generate_disk_2d, MeshOptions};

    fn g2() -> GasLaw {
        GasLaw::gamma_law(1.0, 2.0).unwrap()
    }

    #[test]
    fn single_triangle_energy() {
        // One cell, all edges on the outer boundary: G(0.25, 0) = 1 − 0.9375².
        let r = 1.0;
        let pts: Vec<Point> = (0..3)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
                [r * t.cos(), r * t.sin(), 0.0]
            })
            .collect();
        let b = vec![
            (vec![0, 1], BoundaryTag::Outer),
            (vec![1, 2], BoundaryTag::Outer),
            (vec![2, 0], BoundaryTag::Outer),
        ];
        let mesh = ExteriorMesh::new(2, pts.clone(), vec![0, 1, 2], b, MeshOptions::default()).unwrap();
        let area = mesh.total_volume();
        let p = Problem::new(
            Arc::new(mesh),
            g2(),
            ForcePotential::constant(2, 0.0),
            0.1,
            SolverOptions::default(),
        )
        .unwrap();
        let state = p.uniform_state(0.5);
        let e = p.assemble(&state, Order::Value).unwrap().energy;
        assert!((e - area * 0.12109375).abs() < 1e-15);
    }

    #[test]
    fn uniform_flow_is_stationary_without_obstacle() {
        let mesh = generate_disk_2d(5.0, 6, 24).unwrap();
        let p = Problem::new(
            Arc::new(mesh),
            g2(),
            ForcePotential::constant(2, 0.0),
            0.1,
            SolverOptions::default(),
        )
        .unwrap();
        let a = p.assemble(&p.uniform_state(0.3), Order::Gradient).unwrap();
        assert!(norm2(a.gradient.as_ref().unwrap()) < 1e-12);
    }

    #[test]
    fn stagnant_gas_converges_immediately() {
        let mesh = generate_annulus_2d(1.0, 10.0, 6, 16, 1.2).unwrap();
        let p = Problem::new(
            Arc::new(mesh),
            g2(),
            ForcePotential::constant(2, 0.3),
            0.1,
            SolverOptions::default(),
        )
        .unwrap();
        let (s, rep) = p.newton_solve(p.uniform_state(0.0)).unwrap();
        assert!(rep.iterations <= 2);
        assert!(s.phi.iter().all(|&x| x == 0.0));
        assert_eq!(p.decorated_functional(&s).unwrap(), 0.0);
        let flux = p.mass_flux_check(&s).unwrap();
        assert!(flux.obstacle.abs() < 1e-12 && flux.outer.abs() < 1e-12);
    }

    #[test]
    fn hessian_is_exactly_symmetric() {
        let mesh = generate_annulus_2d(1.0, 10.0, 8, 16, 1.3).unwrap();
        for deterministic in [true, false] {
            let opts = SolverOptions {
                deterministic,
                ..Default::default()
            };
            let p = Problem::new(
                Arc::new(mesh.clone()),
                g2(),
                ForcePotential::constant(2, 0.0),
                0.1,
                opts,
            )
            .unwrap();
            let phi: Vec<f64> = mesh
                .vertices()
                .iter()
                .map(|x| 0.5 * x[0] + 0.05 * (x[1] * 3.0).sin())
                .collect();
            let s = p.state_from(0.5, phi).unwrap();
            let h = p.assemble(&s, Order::Hessian).unwrap().hessian.unwrap();
            assert_eq!(h.asymmetry(), 0.0);
        }
    }
}
