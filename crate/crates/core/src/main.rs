use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use potflow::config::{FieldFormat, RunConfig};
use potflow::continuation::{critical_qhat, sweep, CriticalOptions};
use potflow::cutoff::ScanGrid;
use potflow::error::{Error, Result};
use potflow::export;
use potflow::solver::{FlowState, Order, Problem, SolveReport};
use potflow::sonic::{self, ResidualContext, TestSet};

/// Steady compressible potential flow past an obstacle.
#[derive(Parser)]
#[command(name = "potflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    config: PathBuf,
    /// Overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Admissible band and critical speeds over the force range.
    CheckGas(Common),
    /// One solve at `flow.q_infinity`.
    Solve(Common),
    /// Warm-started solves over `continuation.q_list`.
    Sweep(Common),
    /// Critical speed by bisection along the θ schedule.
    Critical(Common),
    /// Sequence approaching the critical speed, with diagnostics.
    Limit(Common),
    /// Consistency checks on the configured problem.
    Verify(Common),
    /// Solve and write the field in the configured format.
    Export(Common),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Parse { .. } | Error::Io(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("POTFLOW_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: POTFLOW_THREADS must be a positive integer, got {n:?}");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
}

impl Ctx {
    fn new(c: &Common) -> Result<Self> {
        let cfg = RunConfig::load(&c.config)?;
        let out = match &c.out {
            Some(o) => o.clone(),
            None => cfg.resolve(&cfg.output.directory),
        };
        Ok(Self { cfg, out })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn run(cmd: Command) -> Result<u8> {
    match cmd {
        Command::CheckGas(c) => check_gas(&Ctx::new(&c)?),
        Command::Solve(c) => solve(&Ctx::new(&c)?, false),
        Command::Export(c) => solve(&Ctx::new(&c)?, true),
        Command::Sweep(c) => run_sweep(&Ctx::new(&c)?),
        Command::Critical(c) => run_critical(&Ctx::new(&c)?),
        Command::Limit(c) => run_limit(&Ctx::new(&c)?),
        Command::Verify(c) => verify(&Ctx::new(&c)?),
    }
}

fn check_gas(ctx: &Ctx) -> Result<u8> {
    let law = ctx.cfg.build_gas()?;
    let mesh = ctx.cfg.build_mesh()?;
    let force = ctx.cfg.build_force(&mesh)?;
    let (lo, hi) = law.admissible_limits();
    let (psi_min, psi_max) = force.psi_range(&mesh)?;
    println!("admissible_band = ({lo:.16e}, {hi:.16e})");
    println!("psi_range = [{psi_min:.16e}, {psi_max:.16e}]");
    let band = law.check_admissible(psi_min, psi_max).map_err(|e| match e {
        Error::Admissibility { .. } => Error::config("force", format!("force potential range is inadmissible: {e}")),
        other => other,
    });
    band?;
    println!("q_cr(psi_min) = {:.16e}", law.critical_speed(psi_min)?);
    println!("q_cr(psi_max) = {:.16e}", law.critical_speed(psi_max)?);
    println!("c(1) = {:.16e}", law.sound_speed(1.0)?);
    Ok(0)
}

fn write_state(ctx: &Ctx, p: &Problem, s: &FlowState, rep: &SolveReport, format: Option<FieldFormat>) -> Result<()> {
    export::write_report(rep, &ctx.path("report.txt"))?;
    export::write_history_csv(rep, &ctx.path("history.csv"))?;
    match format {
        Some(FieldFormat::Vtk) => export::write_vtk(p, s, &ctx.path("field.vtk")),
        Some(FieldFormat::Csv) => export::write_cells_csv(p, s, &ctx.path("cells.csv")),
        None => {
            export::write_vtk(p, s, &ctx.path("field.vtk"))?;
            export::write_cells_csv(p, s, &ctx.path("cells.csv"))
        }
    }
}

fn print_report(rep: &SolveReport) {
    println!(
        "converged = {} iterations = {} gradient_norm = {:.16e} max_mach_ratio = {:.16e} cutoff_active_cells = {}",
        rep.converged, rep.iterations, rep.gradient_norm, rep.max_mach_ratio, rep.cutoff_active_cells
    );
}

fn solve(ctx: &Ctx, only_configured_format: bool) -> Result<u8> {
    let p = ctx.cfg.build_problem()?;
    let (s, rep) = p.newton_solve(p.uniform_state(ctx.cfg.flow.q_infinity))?;
    print_report(&rep);
    let format = only_configured_format.then_some(ctx.cfg.output.format);
    write_state(ctx, &p, &s, &rep, format)?;
    Ok(0)
}

fn run_sweep(ctx: &Ctx) -> Result<u8> {
    if ctx.cfg.continuation.q_list.is_empty() {
        return Err(Error::config("continuation.q_list", "sweep needs at least one speed"));
    }
    let p = ctx.cfg.build_problem()?;
    let res = sweep(&p, &ctx.cfg.continuation.q_list)?;
    export::write_continuation_csv(&res.records, &ctx.path("continuation.csv"))?;
    for r in &res.records {
        println!("{}", r.csv_row());
    }
    match res.failure {
        Some(e) => Err(e),
        None => Ok(0),
    }
}

fn critical_options(cfg: &RunConfig) -> CriticalOptions {
    CriticalOptions {
        tol_q: cfg.continuation.tol_q,
        q_cap: cfg.continuation.q_cap,
    }
}

fn run_critical(ctx: &Ctx) -> Result<u8> {
    let p = ctx.cfg.build_problem()?;
    let res = critical_qhat(&p, &ctx.cfg.cutoff.schedule, critical_options(&ctx.cfg))?;
    export::write_continuation_csv(&res.records, &ctx.path("critical.csv"))?;
    for l in &res.levels {
        println!(
            "theta = {:.16e} q_certified = {:.16e} q_uncertified = {:.16e} capped = {} steps = {}",
            l.theta,
            l.q_certified,
            l.q_uncertified,
            l.capped,
            l.steps.len()
        );
    }
    println!("q_hat = {:.16e}", res.q_hat);
    println!("nested = {} bracket_invariant = {}", res.nested, res.bracket_invariant);
    Ok(0)
}

fn run_limit(ctx: &Ctx) -> Result<u8> {
    let base = ctx.cfg.build_problem()?;
    let schedule = &ctx.cfg.cutoff.schedule;
    let q_hat = match ctx.cfg.limit.q_hat {
        Some(q) => q,
        None => critical_qhat(&base, schedule, critical_options(&ctx.cfg))?.q_hat,
    };
    let p = base.with_theta(*schedule.last().expect("schedule validated nonempty"))?;
    let seq = sonic::build_sequence(&p, q_hat, ctx.cfg.limit.n_steps)?;
    let tests = TestSet::new(p.mesh(), &seq.region, ctx.cfg.limit.n_bumps, ctx.cfg.limit.seed)?;
    let rctx = ResidualContext::new(&p, tests)?;
    let rows = sonic::diagnostics(&p, &seq, &rctx)?;
    export::write_diagnostics_csv(&rows, &ctx.path("limit_diagnostics.csv"))?;
    export::write_matrix_csv(&sonic::cauchy_table(p.mesh(), &seq), &ctx.path("cauchy.csv"))?;
    println!("q_hat = {q_hat:.16e}");
    for r in &rows {
        println!("{}", r.csv_row());
    }
    if let Some(last) = seq.members.last() {
        let decay = match (ctx.cfg.limit.decay_q, ctx.cfg.limit.decay_beta) {
            (Some(q), Some(b)) => Some((q, b)),
            _ => None,
        };
        match sonic::farfield_decay_fit(&p, &last.state, ctx.cfg.limit.n_annuli, decay) {
            Ok(f) => {
                println!("decay_exponent = {:.16e} annuli = {}", f.exponent, f.annuli.len());
                if let Some(b) = f.beta_prime {
                    println!("predicted_exponent_lower_bound = {b:.16e}");
                }
            }
            Err(e) => println!("decay_fit = unavailable ({e})"),
        }
    }
    println!("note: {}", sonic::LIMIT_GAP_NOTE);
    Ok(0)
}

fn check(name: &str, ok: bool, detail: String) -> bool {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn verify(ctx: &Ctx) -> Result<u8> {
    let p = ctx.cfg.build_problem()?;
    let law = p.law();
    let (lo, hi) = p.cutoff().force_range();
    let mut all = true;

    let mut worst: f64 = 0.0;
    for k in 0..=16 {
        let psi = lo + (hi - lo) * k as f64 / 16.0;
        let rho = law.big_h_inv(psi)?;
        worst = worst.max((law.big_h(rho)? - psi).abs() / (1.0 + psi.abs()));
    }
    all &= check(
        "gas inverse",
        worst < 1e-12,
        format!("max |H(H^-1(psi)) - psi| = {worst:.3e}"),
    );

    let (lmin, lmax) = p.cutoff().ellipticity_scan(&ScanGrid::default())?;
    all &= check(
        "ellipticity",
        lmin > 0.0,
        format!("eigenvalues in [{lmin:.6e}, {lmax:.6e}]"),
    );

    let q = ctx.cfg.flow.q_infinity;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.limit.seed);
    let phi: Vec<f64> = p
        .mesh()
        .vertices()
        .iter()
        .map(|x| q * x[0] + rng.gen_range(-0.05..0.05))
        .collect();
    let s = p.state_from(q, phi)?;
    let asm = p.assemble(&s, Order::Hessian)?;
    let g = asm.gradient.expect("requested");
    let dir: Vec<f64> = (0..p.n_free()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let h = 1e-6;
    let energy_at = |t: f64| -> Result<f64> {
        let mut phi = s.phi.clone();
        for (i, &v) in p.free_vertices().iter().enumerate() {
            phi[v] += t * dir[i];
        }
        Ok(p.assemble(&p.state_from(q, phi)?, Order::Value)?.energy)
    };
    let fd = (energy_at(h)? - energy_at(-h)?) / (2.0 * h);
    let exact: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
    let rel = (fd - exact).abs() / exact.abs().max(f64::MIN_POSITIVE);
    all &= check("gradient", rel < 1e-6, format!("directional relative error {rel:.3e}"));
    let asym = asm.hessian.expect("requested").asymmetry();
    all &= check(
        "hessian symmetry",
        asym == 0.0,
        format!("max |H_ij - H_ji| = {asym:.3e}"),
    );

    let (sol, rep) = p.newton_solve(p.uniform_state(q))?;
    let res = p.el_residual(&sol)?;
    all &= check(
        "newton",
        rep.converged,
        format!("{} iterations, weak residual {:.3e}", rep.iterations, res.weak),
    );
    let flux = p.mass_flux_check(&sol)?;
    println!(
        "INFO mass flux: obstacle {:.6e}, outer {:.6e}, flux jump {:.6e}",
        flux.obstacle, flux.outer, res.total_jump
    );
    Ok(if all { 0 } else { 1 })
}
