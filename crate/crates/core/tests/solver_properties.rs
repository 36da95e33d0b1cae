use std::sync::Arc;

use potflow::force::ForcePotential;
use potflow::gas::GasLaw;
use potflow::mesh::{generate_annulus_2d, ExteriorMesh};
use potflow::solver::{gradient_l2_distance, Order, Problem, SolverOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 4 × 32 quads, 256 triangles.
fn small_annulus() -> Arc<ExteriorMesh> {
    Arc::new(generate_annulus_2d(1.0, 6.0, 4, 32, 6f64.powf(0.25)).unwrap())
}

fn laplace_problem(n_radial: usize, n_angular: usize) -> Problem {
    let grading = 20f64.powf(1.0 / n_radial as f64);
    let mesh = generate_annulus_2d(1.0, 20.0, n_radial, n_angular, grading).unwrap();
    Problem::new(
        Arc::new(mesh),
        GasLaw::gamma_law(100.0, 2.0).unwrap(),
        ForcePotential::constant(2, 0.0),
        0.1,
        SolverOptions::default(),
    )
    .unwrap()
}

fn source_problem(mesh: Arc<ExteriorMesh>) -> Problem {
    Problem::new(
        mesh,
        GasLaw::gamma_law(1.0, 2.0).unwrap(),
        ForcePotential::point_sources(2, vec![([0.0, 0.0, 0.0], 0.2)]),
        0.1,
        SolverOptions::default(),
    )
    .unwrap()
}

/// Random perturbation of a uniform flow; speeds reach well into the cut-off band.
fn random_phi(p: &Problem, rng: &mut ChaCha8Rng, q: f64) -> Vec<f64> {
    p.mesh()
        .vertices()
        .iter()
        .map(|x| q * x[0] + rng.gen_range(-0.15..0.15))
        .collect()
}

#[test]
fn gradient_matches_directional_differences() {
    let p = source_problem(small_annulus());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..10 {
        let q = 0.1 + 0.12 * k as f64;
        let s = p.state_from(q, random_phi(&p, &mut rng, q)).unwrap();
        let g = p.assemble(&s, Order::Gradient).unwrap().gradient.unwrap();
        let dir: Vec<f64> = (0..p.n_free()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = 1e-6;
        let shifted = |t: f64| {
            let mut phi = s.phi.clone();
            for (i, &v) in p.free_vertices().iter().enumerate() {
                phi[v] += t * dir[i];
            }
            p.assemble(&p.state_from(q, phi).unwrap(), Order::Value).unwrap().energy
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        let exact: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        assert!((fd - exact).abs() <= 1e-6 * exact.abs(), "state {k}: {fd} vs {exact}");
    }
}

#[test]
fn hessian_matches_differentiated_gradient() {
    let p = source_problem(small_annulus());
    assert_eq!(p.mesh().n_cells(), 256);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for q in [0.3, 0.9] {
        let s = p.state_from(q, random_phi(&p, &mut rng, q)).unwrap();
        let h = p.assemble(&s, Order::Hessian).unwrap().hessian.unwrap();
        let n = p.n_free();
        let eps = 1e-6;
        let (mut diff, mut total) = (0.0, 0.0);
        for j in 0..n {
            let grad_at = |t: f64| {
                let mut phi = s.phi.clone();
                phi[p.free_vertices()[j]] += t;
                p.assemble(&p.state_from(q, phi).unwrap(), Order::Gradient)
                    .unwrap()
                    .gradient
                    .unwrap()
            };
            let (gp, gm) = (grad_at(eps), grad_at(-eps));
            for i in 0..n {
                let fd = (gp[i] - gm[i]) / (2.0 * eps);
                let a = h.get(i, j);
                diff += (fd - a).powi(2);
                total += a * a;
            }
        }
        let rel = (diff / total).sqrt();
        assert!(rel < 1e-6, "q = {q}: Frobenius-relative error {rel}");
    }
}

#[test]
fn minimizer_is_independent_of_the_start() {
    let p = source_problem(small_annulus());
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let q = 0.3;
    let a = p.state_from(q, random_phi(&p, &mut rng, q)).unwrap();
    let b = p.state_from(q, random_phi(&p, &mut rng, q)).unwrap();
    let (sa, _) = p.newton_solve(a).unwrap();
    let (sb, _) = p.newton_solve(b).unwrap();
    let d = gradient_l2_distance(p.mesh(), &sa.phi, &sb.phi);
    assert!(d < 1e-8, "{d}");
}

#[test]
fn constant_shift_changes_nothing() {
    let p = source_problem(small_annulus());
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let q = 0.4;
    let phi = random_phi(&p, &mut rng, q);
    let s = p.state_from(q, phi.clone()).unwrap();
    let a = p.assemble(&s, Order::Gradient).unwrap();
    let mut shifted = s.clone();
    for v in shifted.phi.iter_mut() {
        *v += 0.375;
    }
    let b = p.assemble(&shifted, Order::Gradient).unwrap();
    assert!((a.energy - b.energy).abs() <= 1e-13 * a.energy.abs());
    for (x, y) in a.gradient.unwrap().iter().zip(b.gradient.unwrap().iter()) {
        assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
    }
    let fa = p.cell_flows(&s).unwrap();
    let fb = p.cell_flows(&shifted).unwrap();
    for (x, y) in fa.iter().zip(&fb) {
        assert!((x.rho.value - y.rho.value).abs() < 1e-12);
    }
}

#[test]
fn newton_energy_sequence_strictly_decreases() {
    let p = source_problem(small_annulus());
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let q = 0.5;
    let (_, rep) = p
        .newton_solve(p.state_from(q, random_phi(&p, &mut rng, q)).unwrap())
        .unwrap();
    assert!(rep.converged && rep.gradient_norm < 1e-10);
    for w in rep.history.windows(2) {
        let roundoff = 1e-14 * w[0].energy.abs();
        assert!(w[1].energy < w[0].energy + roundoff, "{:?}", rep.history);
    }
}

#[test]
fn weak_residual_is_the_gradient_norm() {
    let p = source_problem(small_annulus());
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let s = p.state_from(0.4, random_phi(&p, &mut rng, 0.4)).unwrap();
    let g = p.assemble(&s, Order::Gradient).unwrap().gradient.unwrap();
    let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert_eq!(p.el_residual(&s).unwrap().weak, n);
}

#[test]
fn decorated_functional_properties() {
    let p = source_problem(small_annulus());
    let q = 0.4;
    let uniform = p.uniform_state(q);
    // Zero up to the rounding of the cellwise gradient of q∞x₁.
    assert!(p.decorated_functional(&uniform).unwrap().abs() < 1e-13);
    let (s, rep) = p.newton_solve(uniform).unwrap();
    assert!(rep.decorated_functional <= 0.0);
    assert_eq!(p.decorated_functional(&s).unwrap(), rep.decorated_functional);

    // Constant ψ: I equals the energy drop exactly.
    let pc = Problem::new(
        p.mesh_arc(),
        GasLaw::gamma_law(1.0, 2.0).unwrap(),
        ForcePotential::constant(2, 0.2),
        0.1,
        SolverOptions::default(),
    )
    .unwrap();
    let (s, rep) = pc.newton_solve(pc.uniform_state(q)).unwrap();
    let e0 = pc.assemble(&pc.uniform_state(q), Order::Value).unwrap().energy;
    let e1 = pc.assemble(&s, Order::Value).unwrap().energy;
    assert!((rep.decorated_functional - (e1 - e0)).abs() < 1e-12 * e0.abs());

    // q∞ = 0 with a nonzero field.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let s = p.state_from(0.0, random_phi(&p, &mut rng, 0.0)).unwrap();
    assert!(p.decorated_functional(&s).unwrap() >= 0.0);
}

/// ‖∇(φ_h − φ)‖ / ‖∇φ‖ for φ = q(r + 1/r)cosθ, three-point edge-midpoint rule.
fn laplace_h1_error(p: &Problem, phi: &[f64], q: f64) -> f64 {
    let exact = |x: &[f64; 3]| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let r4 = r2 * r2;
        [
            q * (1.0 + (x[1] * x[1] - x[0] * x[0]) / r4),
            -2.0 * q * x[0] * x[1] / r4,
        ]
    };
    let mesh = p.mesh();
    let (mut err, mut norm) = (0.0, 0.0);
    for c in 0..mesh.n_cells() {
        let g = mesh.cell_geometry(c);
        let cell = mesh.cell(c);
        let mut uh = [0.0; 2];
        for k in 0..3 {
            uh[0] += phi[cell[k]] * g.grads[k][0];
            uh[1] += phi[cell[k]] * g.grads[k][1];
        }
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            let (xa, xb) = (mesh.vertices()[cell[a]], mesh.vertices()[cell[b]]);
            let m = [0.5 * (xa[0] + xb[0]), 0.5 * (xa[1] + xb[1]), 0.0];
            let u = exact(&m);
            err += g.volume / 3.0 * ((uh[0] - u[0]).powi(2) + (uh[1] - u[1]).powi(2));
            norm += g.volume / 3.0 * (u[0] * u[0] + u[1] * u[1]);
        }
    }
    (err / norm).sqrt()
}

#[test]
fn laplace_benchmark_converges_under_refinement() {
    let q = 1.0;
    let mut errors = Vec::new();
    let mut jumps = Vec::new();
    for level in 0..3 {
        let p = laplace_problem(24 << level, 48 << level);
        let (s, rep) = p.newton_solve(p.uniform_state(q)).unwrap();
        let e = laplace_h1_error(&p, &s.phi, q);
        let flux = p.mass_flux_check(&s).unwrap();
        let res = p.el_residual(&s).unwrap();
        println!(
            "level {level}: H1 error {e:.4e}, obstacle flux {:.3e}, outer flux {:.3e}, jump {:.4e}, iterations {}",
            flux.obstacle, flux.outer, res.total_jump, rep.iterations
        );
        assert!(res.weak < 1e-10);
        if level == 0 {
            assert!(e < 0.05);
            // ρ∞ q∞ × diameter
            assert!(flux.obstacle.abs() < 1e-3 * 2.0, "{}", flux.obstacle);
            assert!(flux.outer.abs() < 1e-3 * 2.0, "{}", flux.outer);
        }
        errors.push(e);
        jumps.push(res.total_jump);
    }
    assert!(errors[1] < errors[0] && errors[2] < errors[1], "{errors:?}");
    assert!(jumps[1] < jumps[0] && jumps[2] < jumps[1], "{jumps:?}");
}

#[test]
fn deterministic_assembly_is_bitwise_reproducible() {
    let p = source_problem(small_annulus()).with_options(SolverOptions {
        deterministic: true,
        ..Default::default()
    });
    let run = || {
        let (s, rep) = p.newton_solve(p.uniform_state(0.5)).unwrap();
        (s.phi, rep.energy.to_bits(), rep.decorated_functional.to_bits())
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Midpoint convexity of the discrete energy between two random fields.
    #[test]
    fn energy_is_convex_along_segments(seed in 0u64..1000, q in 0.0..1.2f64) {
        let p = source_problem(small_annulus());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_phi(&p, &mut rng, q);
        let b = random_phi(&p, &mut rng, q);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let e = |phi: Vec<f64>| p.assemble(&p.state_from(q, phi).unwrap(), Order::Value).unwrap().energy;
        let (ea, eb, em) = (e(a), e(b), e(mid));
        prop_assert!(em <= 0.5 * (ea + eb) + 1e-12 * (ea.abs() + eb.abs()));
    }
}
