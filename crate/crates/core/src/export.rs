//! Field and table output. Every float is written with 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::continuation::ContinuationRecord;
use crate::cutoff::Branch;
use crate::error::{Error, Result};
use crate::solver::{CellFlow, FlowState, Problem, SolveReport};
use crate::sonic::MemberDiagnostics;

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

/// Per-cell quantities shared by both field formats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRecord {
    pub barycenter: [f64; 3],
    pub velocity: [f64; 3],
    pub density: f64,
    pub mach: f64,
    pub cutoff_active: bool,
}

/// Local Mach number `|u| / c(ρ̃)`.
pub fn cell_records(problem: &Problem, state: &FlowState) -> Result<Vec<CellRecord>> {
    let flows: Vec<CellFlow> = problem.cell_flows(state)?;
    let mesh = problem.mesh();
    flows
        .iter()
        .enumerate()
        .map(|(c, f)| {
            let c_snd = problem.law().sound_speed(f.rho.value)?;
            Ok(CellRecord {
                barycenter: mesh.cell_geometry(c).barycenter,
                velocity: f.velocity,
                density: f.rho.value,
                mach: f.speed_sq.sqrt() / c_snd,
                cutoff_active: f.rho.branch != Branch::Physical,
            })
        })
        .collect()
}

pub const CELL_CSV_HEADER: &str = "cell,x,y,z,u,v,w,density,mach,cutoff_active";

pub fn write_cells_csv(problem: &Problem, state: &FlowState, path: &Path) -> Result<()> {
    let records = cell_records(problem, state)?;
    write_with(path, |w| {
        writeln!(w, "{CELL_CSV_HEADER}")?;
        for (c, r) in records.iter().enumerate() {
            let [x, y, z] = r.barycenter;
            let [u, v, wz] = r.velocity;
            writeln!(
                w,
                "{c},{x:.16e},{y:.16e},{z:.16e},{u:.16e},{v:.16e},{wz:.16e},{:.16e},{:.16e},{}",
                r.density, r.mach, r.cutoff_active as u8
            )?;
        }
        Ok(())
    })
}

type Column = fn(&CellRecord) -> f64;

/// Legacy ASCII VTK unstructured grid.
pub fn write_vtk(problem: &Problem, state: &FlowState, path: &Path) -> Result<()> {
    let records = cell_records(problem, state)?;
    let mesh = problem.mesh();
    let psi: Vec<f64> = mesh
        .vertices()
        .iter()
        .map(|x| problem.force().eval_psi(x))
        .collect::<Result<_>>()?;
    let nv = mesh.dim() + 1;
    let cell_type = if mesh.dim() == 2 { 5 } else { 10 };
    write_with(path, |w| {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(
            w,
            "potential flow q_inf={:.16e} theta={:.16e}",
            state.q_inf, state.theta
        )?;
        writeln!(w, "ASCII\nDATASET UNSTRUCTURED_GRID")?;
        writeln!(w, "POINTS {} double", mesh.n_vertices())?;
        for x in mesh.vertices() {
            writeln!(w, "{:.16e} {:.16e} {:.16e}", x[0], x[1], x[2])?;
        }
        writeln!(w, "CELLS {} {}", mesh.n_cells(), mesh.n_cells() * (nv + 1))?;
        for c in 0..mesh.n_cells() {
            write!(w, "{nv}")?;
            for v in mesh.cell(c) {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        writeln!(w, "CELL_TYPES {}", mesh.n_cells())?;
        for _ in 0..mesh.n_cells() {
            writeln!(w, "{cell_type}")?;
        }
        writeln!(w, "POINT_DATA {}", mesh.n_vertices())?;
        for (name, data) in [("phi", &state.phi), ("psi", &psi)] {
            writeln!(w, "SCALARS {name} double 1\nLOOKUP_TABLE default")?;
            for v in data.iter() {
                writeln!(w, "{v:.16e}")?;
            }
        }
        writeln!(w, "CELL_DATA {}", mesh.n_cells())?;
        writeln!(w, "VECTORS velocity double")?;
        for r in &records {
            writeln!(
                w,
                "{:.16e} {:.16e} {:.16e}",
                r.velocity[0], r.velocity[1], r.velocity[2]
            )?;
        }
        let columns: [(&str, Column); 2] = [("density", |r| r.density), ("mach", |r| r.mach)];
        for (name, get) in columns {
            writeln!(w, "SCALARS {name} double 1\nLOOKUP_TABLE default")?;
            for r in &records {
                writeln!(w, "{:.16e}", get(r))?;
            }
        }
        writeln!(w, "SCALARS cutoff_active int 1\nLOOKUP_TABLE default")?;
        for r in &records {
            writeln!(w, "{}", r.cutoff_active as u8)?;
        }
        Ok(())
    })
}

pub fn write_history_csv(report: &SolveReport, path: &Path) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "iteration,energy,gradient_norm,step,cg_iterations")?;
        for h in &report.history {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{}",
                h.iteration, h.energy, h.gradient_norm, h.step, h.cg_iterations
            )?;
        }
        Ok(())
    })
}

/// `key = value` summary of one solve.
pub fn write_report(report: &SolveReport, path: &Path) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "converged = {}", report.converged)?;
        writeln!(w, "iterations = {}", report.iterations)?;
        writeln!(w, "gradient_norm = {:.16e}", report.gradient_norm)?;
        writeln!(w, "energy = {:.16e}", report.energy)?;
        writeln!(w, "decorated_functional = {:.16e}", report.decorated_functional)?;
        writeln!(w, "max_speed = {:.16e}", report.max_speed)?;
        writeln!(w, "max_mach_ratio = {:.16e}", report.max_mach_ratio)?;
        writeln!(w, "cutoff_active_cells = {}", report.cutoff_active_cells)?;
        writeln!(w, "wall_time_s = {:.16e}", report.wall_time)?;
        Ok(())
    })
}

pub fn write_continuation_csv(records: &[ContinuationRecord], path: &Path) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "{}", ContinuationRecord::csv_header())?;
        for r in records {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    })
}

pub fn write_diagnostics_csv(rows: &[MemberDiagnostics], path: &Path) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "{}", MemberDiagnostics::csv_header())?;
        for r in rows {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    })
}

/// Square matrix of pairwise distances, row and column `i` for member `i`.
pub fn write_matrix_csv(m: &[Vec<f64>], path: &Path) -> Result<()> {
    write_with(path, |w| {
        for row in m {
            let line: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    })
}
