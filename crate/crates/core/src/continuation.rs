//! Continuation in the free-stream speed and certification of subsonic solves.
//!
//! A solve at `(q∞, θ)` is certified when `𝓜 < 1 − 2θ`: the velocity then
//! stays below the first junction of the cut-off everywhere, so the modified
//! density coincides with the physical one on the solution.

use crate::error::{Error, Result};
use crate::solver::{FlowState, Problem, SolveReport, SolverOptions};

pub const DEFAULT_SCHEDULE: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

/// Newton tolerance and iteration cap for the retry of a stalled solve.
const RELAXED_TOL: f64 = 1e-8;
const RELAXED_ITER_FACTOR: usize = 3;

#[derive(Debug, Clone)]
pub struct ContinuationRecord {
    pub q_inf: f64,
    pub theta: f64,
    pub max_mach_ratio: f64,
    pub mach_cell: usize,
    pub certified_subsonic: bool,
    /// The solve needed the relaxed tolerance.
    pub relaxed: bool,
    pub report: SolveReport,
    pub state: FlowState,
}

impl ContinuationRecord {
    pub fn csv_header() -> &'static str {
        "theta,q_infinity,max_mach_ratio,certified,iterations,energy"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{},{},{:.16e}",
            self.theta,
            self.q_inf,
            self.max_mach_ratio,
            self.certified_subsonic,
            self.report.iterations,
            self.report.energy
        )
    }
}

/// Newton solve with one relaxed retry on non-convergence.
fn solve_with_relaxation(problem: &Problem, start: FlowState) -> Result<(FlowState, SolveReport, bool)> {
    match problem.newton_solve(start.clone()) {
        Ok((s, r)) => Ok((s, r, false)),
        Err(Error::NonConvergence { .. }) => {
            let o = problem.options;
            let relaxed = problem.clone().with_options(SolverOptions {
                tol: o.tol.max(RELAXED_TOL),
                max_iter: o.max_iter * RELAXED_ITER_FACTOR,
                ..o
            });
            let (s, r) = relaxed.newton_solve(start)?;
            Ok((s, r, true))
        }
        Err(e) => Err(e),
    }
}

/// Solves at `q_inf` with the problem's θ, warm-started from `warm` when given.
pub fn solve_certified(problem: &Problem, q_inf: f64, warm: Option<&FlowState>) -> Result<ContinuationRecord> {
    let theta = problem.theta();
    if !(theta > 0.0 && theta < 0.5) {
        return Err(Error::Schedule(format!("theta {theta} outside (0, 1/2)")));
    }
    if !(q_inf >= 0.0 && q_inf.is_finite()) {
        return Err(Error::Domain(format!(
            "free-stream speed {q_inf} must be finite and nonnegative"
        )));
    }
    let start = match warm {
        Some(prev) => problem.rescaled_state(prev, q_inf)?,
        None => problem.uniform_state(q_inf),
    };
    let (state, report, relaxed) = solve_with_relaxation(problem, start)?;
    let mach = problem.max_mach_ratio(&state)?;
    let certified = mach.value < 1.0 - 2.0 * theta;
    if certified && report.cutoff_active_cells != 0 {
        return Err(Error::Validation(format!(
            "certified solve at q = {q_inf}, theta = {theta} has {} cut-off-active cells",
            report.cutoff_active_cells
        )));
    }
    Ok(ContinuationRecord {
        q_inf,
        theta,
        max_mach_ratio: mach.value,
        mach_cell: mach.cell,
        certified_subsonic: certified,
        relaxed,
        report,
        state,
    })
}

#[derive(Debug)]
pub struct SweepResult {
    pub records: Vec<ContinuationRecord>,
    /// First solver failure; the records before it are kept.
    pub failure: Option<Error>,
}

/// Sequential solves over an increasing list of speeds, each warm-started
/// from the previous solution.
pub fn sweep(problem: &Problem, q_list: &[f64]) -> Result<SweepResult> {
    if q_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Validation("sweep speeds must be strictly increasing".into()));
    }
    let mut records: Vec<ContinuationRecord> = Vec::with_capacity(q_list.len());
    for &q in q_list {
        match solve_certified(problem, q, records.last().map(|r| &r.state)) {
            Ok(r) => records.push(r),
            Err(e) => {
                return Ok(SweepResult {
                    records,
                    failure: Some(e),
                })
            }
        }
    }
    Ok(SweepResult { records, failure: None })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketStep {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone)]
pub struct ThetaLevel {
    pub theta: f64,
    /// Sup of certified speeds found at this θ.
    pub q_certified: f64,
    pub q_uncertified: f64,
    /// The upper cap itself was certified; no bracket exists.
    pub capped: bool,
    pub tol_q: f64,
    pub steps: Vec<BracketStep>,
}

#[derive(Debug, Clone)]
pub struct CriticalResult {
    pub q_hat: f64,
    pub levels: Vec<ThetaLevel>,
    pub records: Vec<ContinuationRecord>,
    /// `q∞^i` nondecreasing along the schedule.
    pub nested: bool,
    /// Lower end certified, upper end uncertified, width halving, at every step.
    pub bracket_invariant: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CriticalOptions {
    /// Absolute bisection tolerance; by default `1e-3 q_cr(ψ)` at the argmax
    /// cell of the last certified solve.
    pub tol_q: Option<f64>,
    /// Upper bracket end; by default `1.5 c(1)`.
    pub q_cap: Option<f64>,
}

pub fn validate_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::Schedule("theta schedule is empty".into()));
    }
    if let Some(t) = schedule.iter().find(|t| !(**t > 0.0 && **t < 0.5)) {
        return Err(Error::Schedule(format!("theta {t} outside (0, 1/2)")));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Schedule("theta schedule must be strictly decreasing".into()));
    }
    Ok(())
}

/// Estimates the critical free-stream speed by bisection at each θ of a
/// decreasing schedule. Each level starts from the certified speed of the
/// previous one, which stays certified at smaller θ.
pub fn critical_qhat(problem: &Problem, schedule: &[f64], opts: CriticalOptions) -> Result<CriticalResult> {
    validate_schedule(schedule)?;
    let cap = match opts.q_cap {
        Some(c) if c > 0.0 => c,
        Some(c) => return Err(Error::Validation(format!("speed cap {c} must be positive"))),
        None => 1.5 * problem.law().sound_speed(1.0)?,
    };
    let mut records = Vec::new();
    let mut levels = Vec::new();
    let mut bracket_ok = true;
    let mut lower_q = 0.0;
    let mut lower_state: Option<FlowState> = None;

    for &theta in schedule {
        let p = problem.with_theta(theta)?;
        // The previous certified solution is re-certified at this θ (and
        // seeds the level with a state when the schedule starts).
        let lower = solve_certified(&p, lower_q, lower_state.as_ref())?;
        if !lower.certified_subsonic {
            return Err(Error::Validation(format!(
                "speed {lower_q} certified at a larger theta is not certified at theta = {theta}"
            )));
        }
        let mut lower_cell = Some(lower.mach_cell);
        lower_state = Some(lower.state.clone());
        records.push(lower);

        let top = solve_certified(&p, cap, lower_state.as_ref())?;
        let capped = top.certified_subsonic;
        records.push(top);
        let tol_for = |cell: Option<usize>| {
            opts.tol_q
                .unwrap_or_else(|| 1e-3 * p.cell_critical_speed(cell.unwrap_or(0)))
        };
        let mut level = ThetaLevel {
            theta,
            q_certified: lower_q,
            q_uncertified: cap,
            capped,
            tol_q: tol_for(lower_cell),
            steps: vec![BracketStep {
                lower: lower_q,
                upper: cap,
            }],
        };
        if capped {
            level.q_certified = cap;
            lower_q = cap;
            lower_state = Some(records.last().unwrap().state.clone());
            levels.push(level);
            continue;
        }
        let (mut lo, mut hi) = (lower_q, cap);
        while hi - lo >= tol_for(lower_cell) {
            let mid = 0.5 * (lo + hi);
            let r = solve_certified(&p, mid, lower_state.as_ref())?;
            let width = hi - lo;
            if r.certified_subsonic {
                lo = mid;
                lower_state = Some(r.state.clone());
                lower_cell = Some(r.mach_cell);
            } else {
                hi = mid;
            }
            records.push(r);
            bracket_ok &= ((hi - lo) - 0.5 * width).abs() <= 1e-12 * width;
            level.steps.push(BracketStep { lower: lo, upper: hi });
        }
        level.tol_q = tol_for(lower_cell);
        level.q_certified = lo;
        level.q_uncertified = hi;
        lower_q = lo;
        levels.push(level);
    }

    // Every step's ends must carry the right certification.
    for level in &levels {
        for s in &level.steps {
            let at = |q: f64| {
                records
                    .iter()
                    .find(|r| r.theta == level.theta && r.q_inf == q)
                    .map(|r| r.certified_subsonic)
            };
            bracket_ok &= at(s.lower) == Some(true);
            if !level.capped {
                bracket_ok &= at(s.upper) == Some(false);
            }
        }
    }
    let nested = levels.windows(2).all(|w| w[1].q_certified >= w[0].q_certified);
    Ok(CriticalResult {
        q_hat: levels.last().map_or(0.0, |l| l.q_certified),
        levels,
        records,
        nested,
        bracket_invariant: bracket_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::force::ForcePotential;
    use crate::gas::GasLaw;
    use crate::mesh::generate_annulus_2d;
    use std::sync::Arc;

    fn problem(law: GasLaw) -> Problem {
        let mesh = generate_annulus_2d(1.0, 10.0, 6, 24, 10f64.powf(1.0 / 6.0)).unwrap();
        Problem::new(
            Arc::new(mesh),
            law,
            ForcePotential::constant(2, 0.0),
            0.1,
            SolverOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn zero_speed_record() {
        let p = problem(GasLaw::gamma_law(1.0, 2.0).unwrap());
        let s = sweep(&p, &[0.0]).unwrap();
        assert!(s.failure.is_none());
        assert_eq!(s.records.len(), 1);
        assert_eq!(s.records[0].max_mach_ratio, 0.0);
        assert!(s.records[0].certified_subsonic);
    }

    #[test]
    fn tiny_speed_is_certified() {
        let law = GasLaw::gamma_law(1.0, 2.0).unwrap();
        let q = 0.01 * law.critical_speed(0.0).unwrap();
        let r = solve_certified(&problem(law), q, None).unwrap();
        assert!(r.certified_subsonic && r.max_mach_ratio < 0.1);
        assert_eq!(r.report.cutoff_active_cells, 0);
    }

    #[test]
    fn fast_flow_is_not_certified_but_solved() {
        let r = solve_certified(&problem(GasLaw::gamma_law(1.0, 2.0).unwrap()), 1.0, None).unwrap();
        assert!(!r.certified_subsonic);
        assert!(r.report.converged && r.report.cutoff_active_cells > 0);
    }

    #[test]
    fn isothermal_mach_ratio_is_speed_over_sqrt_kappa() {
        let kappa = 2.0;
        let p = problem(GasLaw::isothermal(kappa).unwrap());
        let r = solve_certified(&p, 0.3, None).unwrap();
        assert!((r.max_mach_ratio - r.report.max_speed / kappa.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn schedule_validation() {
        assert!(matches!(validate_schedule(&[0.1, 0.6]), Err(Error::Schedule(_))));
        assert!(matches!(validate_schedule(&[0.05, 0.1]), Err(Error::Schedule(_))));
        assert!(matches!(validate_schedule(&[]), Err(Error::Schedule(_))));
        assert!(validate_schedule(&DEFAULT_SCHEDULE).is_ok());
    }

    #[test]
    fn isothermal_critical_speed_below_sound_speed() {
        let p = problem(GasLaw::isothermal(1.0).unwrap());
        let res = critical_qhat(
            &p,
            &[0.1, 0.05],
            CriticalOptions {
                tol_q: Some(1e-2),
                q_cap: None,
            },
        )
        .unwrap();
        assert!(res.q_hat > 0.0 && res.q_hat <= 1.0, "{}", res.q_hat);
        assert!(res.nested && res.bracket_invariant);
        assert!(res.levels.iter().all(|l| !l.capped));
    }
}
