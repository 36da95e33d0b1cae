//! Homentropic gas closure.
//!
//! A [`GasLaw`] wraps a pressure–density relation `p(ρ)` satisfying
//! `p' > 0` and `2p' + ρp'' > 0`, and derives from it
//!
//! * the enthalpy-like function `h(ρ) = ∫₁^ρ p'(τ)/τ dτ` (so `h(1) = 0`),
//! * `H(ρ) = p'(ρ)/2 + h(ρ)`, strictly increasing,
//! * the sound speed `c = √p'`, the Bernoulli density `ρ = h⁻¹(ψ − |u|²/2)`,
//! * the critical speed `q_cr(ψ) = √(2ψ − 2h(H⁻¹(ψ)))`, which equals the
//!   sound speed at the sonic state.
//!
//! The force potential `ψ` carries the Bernoulli constant: a state at rest
//! with `ψ = 0` has density one.

use std::path::Path;

use crate::error::{BandSide, Error, Result};
use crate::interp::{parse_two_columns, MonotoneCubic};
use crate::quadrature::integrate_adaptive;

pub const DEFAULT_RHO_FLOOR: f64 = 1e-8;

const BISECTION_WIDTH: f64 = 1e-6;
const INVERSE_RESIDUAL: f64 = 1e-12;
const LAW_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub enum PressureLaw {
    /// `p = κ ρ^γ`, `γ > 1`.
    GammaLaw {
        kappa: f64,
        gamma: f64,
    },
    /// `p = κ ρ`.
    Isothermal {
        kappa: f64,
    },
    Tabulated(TabulatedLaw),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedLaw {
    curve: MonotoneCubic,
    // h at each knot, integrated from rho = 1
    h_knots: Vec<f64>,
}

impl TabulatedLaw {
    fn new(rho: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if rho.first().is_some_and(|&r| r <= 0.0) {
            return Err(Error::Domain("tabulated densities must be positive".into()));
        }
        let curve = MonotoneCubic::new(rho, p)?;
        if !(curve.x_min() <= 1.0 && 1.0 <= curve.x_max()) {
            return Err(Error::Domain(
                "tabulated density range must contain the reference density 1".into(),
            ));
        }
        let integrand = |c: &MonotoneCubic, t: f64| c.eval(t).d1 / t;
        let knots = curve.knots().to_vec();
        let mut h_knots = vec![0.0; knots.len()];
        let i1 = knots.partition_point(|&k| k < 1.0);
        // Integrate outwards from rho = 1 in both directions.
        let mut acc = 0.0;
        let mut prev = 1.0;
        for (k, &x) in knots.iter().enumerate().skip(i1) {
            acc += integrate_adaptive(|t| integrand(&curve, t), prev, x, 1e-14);
            h_knots[k] = acc;
            prev = x;
        }
        acc = 0.0;
        prev = 1.0;
        for k in (0..i1).rev() {
            let x = knots[k];
            acc -= integrate_adaptive(|t| integrand(&curve, t), x, prev, 1e-14);
            h_knots[k] = acc;
            prev = x;
        }
        Ok(Self { curve, h_knots })
    }

    fn h(&self, rho: f64) -> f64 {
        let knots = self.curve.knots();
        let k = knots
            .partition_point(|&x| x <= rho)
            .saturating_sub(1)
            .min(knots.len() - 2);
        self.h_knots[k] + integrate_adaptive(|t| self.curve.eval(t).d1 / t, knots[k], rho, 1e-14)
    }
}

/// Pressure and its first two density derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureJet {
    pub p: f64,
    pub dp: f64,
    pub ddp: f64,
}

/// A pointwise state satisfying the force-modified Bernoulli law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliState {
    pub speed_sq: f64,
    pub psi: f64,
    pub rho: f64,
    pub mach: f64,
}

/// Admissible open interval for the force potential and the margins of a
/// tested range from its ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibleBand {
    pub lower: f64,
    pub upper: f64,
    pub margin_lower: f64,
    pub margin_upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GasLaw {
    pub kind: PressureLaw,
    pub rho_floor: f64,
}

impl GasLaw {
    pub fn gamma_law(kappa: f64, gamma: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::config("gas.kappa", "kappa must be positive"));
        }
        if !(gamma > 1.0 && gamma.is_finite()) {
            return Err(Error::config("gas.gamma", "gamma must exceed 1"));
        }
        Ok(Self {
            kind: PressureLaw::GammaLaw { kappa, gamma },
            rho_floor: DEFAULT_RHO_FLOOR,
        })
    }

    pub fn isothermal(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::config("gas.kappa", "kappa must be positive"));
        }
        Ok(Self {
            kind: PressureLaw::Isothermal { kappa },
            rho_floor: DEFAULT_RHO_FLOOR,
        })
    }

    /// Builds a tabulated law from `(ρ, p)` samples and checks the pressure
    /// conditions at [`LAW_SAMPLES`] points across the table.
    pub fn tabulated(rho: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        let table = TabulatedLaw::new(rho, p)?;
        let law = Self {
            rho_floor: table.curve.x_min().max(DEFAULT_RHO_FLOOR),
            kind: PressureLaw::Tabulated(table),
        };
        let (lo, hi) = (law.rho_min(), law.rho_max());
        for i in 0..LAW_SAMPLES {
            let rho = lo + (hi - lo) * i as f64 / (LAW_SAMPLES - 1) as f64;
            law.pressure(rho)?;
        }
        Ok(law)
    }

    pub fn load_table(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let (rho, p) = parse_two_columns(&text)?;
        Self::tabulated(rho, p)
    }

    pub fn with_rho_floor(mut self, rho_floor: f64) -> Result<Self> {
        if !(rho_floor > 0.0) {
            return Err(Error::config("gas.rho_floor", "rho_floor must be positive"));
        }
        if let PressureLaw::Tabulated(t) = &self.kind {
            self.rho_floor = rho_floor.max(t.curve.x_min());
        } else {
            self.rho_floor = rho_floor;
        }
        Ok(self)
    }

    /// Smallest density at which the closure is evaluated.
    pub fn rho_min(&self) -> f64 {
        self.rho_floor
    }

    /// Largest density at which the closure is evaluated.
    pub fn rho_max(&self) -> f64 {
        match &self.kind {
            PressureLaw::Tabulated(t) => t.curve.x_max(),
            _ => f64::INFINITY,
        }
    }

    fn check_rho(&self, rho: f64) -> Result<()> {
        if !(rho >= self.rho_floor) {
            return Err(Error::Domain(format!("density {rho} below floor {}", self.rho_floor)));
        }
        if rho > self.rho_max() {
            return Err(Error::Domain(format!(
                "density {rho} above table end {}",
                self.rho_max()
            )));
        }
        Ok(())
    }

    fn jet_unchecked(&self, rho: f64) -> PressureJet {
        match &self.kind {
            PressureLaw::GammaLaw { kappa, gamma } => {
                let r1 = rho.powf(gamma - 1.0);
                PressureJet {
                    p: kappa * r1 * rho,
                    dp: kappa * gamma * r1,
                    ddp: kappa * gamma * (gamma - 1.0) * r1 / rho,
                }
            }
            PressureLaw::Isothermal { kappa } => PressureJet {
                p: kappa * rho,
                dp: *kappa,
                ddp: 0.0,
            },
            PressureLaw::Tabulated(t) => {
                let j = t.curve.eval(rho);
                PressureJet {
                    p: j.value,
                    dp: j.d1,
                    ddp: j.d2,
                }
            }
        }
    }

    /// `(p, p', p'')` at `rho`.
    pub fn pressure(&self, rho: f64) -> Result<PressureJet> {
        self.check_rho(rho)?;
        let j = self.jet_unchecked(rho);
        if !(j.dp > 0.0 && 2.0 * j.dp + rho * j.ddp > 0.0) {
            return Err(Error::Law { rho });
        }
        Ok(j)
    }

    pub fn sound_speed(&self, rho: f64) -> Result<f64> {
        Ok(self.pressure(rho)?.dp.sqrt())
    }

    fn h_unchecked(&self, rho: f64) -> f64 {
        match &self.kind {
            PressureLaw::GammaLaw { kappa, gamma } => kappa * gamma / (gamma - 1.0) * (rho.powf(gamma - 1.0) - 1.0),
            PressureLaw::Isothermal { kappa } => kappa * rho.ln(),
            PressureLaw::Tabulated(t) => t.h(rho),
        }
    }

    /// `h(ρ) = ∫₁^ρ p'(τ)/τ dτ`.
    pub fn h(&self, rho: f64) -> Result<f64> {
        self.check_rho(rho)?;
        Ok(self.h_unchecked(rho))
    }

    /// `H(ρ) = p'(ρ)/2 + h(ρ)`.
    pub fn big_h(&self, rho: f64) -> Result<f64> {
        self.check_rho(rho)?;
        Ok(0.5 * self.jet_unchecked(rho).dp + self.h_unchecked(rho))
    }

    /// Analytic limits `(lim_{ρ→0+} H, lim_{ρ→∞} h)`; table ends for
    /// tabulated laws.
    pub fn admissible_limits(&self) -> (f64, f64) {
        match &self.kind {
            PressureLaw::GammaLaw { kappa, gamma } => (-kappa * gamma / (gamma - 1.0), f64::INFINITY),
            PressureLaw::Isothermal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            PressureLaw::Tabulated(t) => {
                let lo = 0.5 * t.curve.eval(self.rho_min()).d1 + t.h(self.rho_min());
                (lo, t.h(self.rho_max()))
            }
        }
    }

    /// Checks `lim h(∞) > psi_max` and `psi_min > lim H(0+)`.
    pub fn check_admissible(&self, psi_min: f64, psi_max: f64) -> Result<AdmissibleBand> {
        if psi_min > psi_max {
            return Err(Error::Domain(format!("empty force range [{psi_min}, {psi_max}]")));
        }
        let (lower, upper) = self.admissible_limits();
        if !(psi_min > lower) {
            return Err(Error::Admissibility {
                side: BandSide::Lower,
                value: psi_min,
                lower,
                upper,
            });
        }
        if !(psi_max < upper) {
            return Err(Error::Admissibility {
                side: BandSide::Upper,
                value: psi_max,
                lower,
                upper,
            });
        }
        Ok(AdmissibleBand {
            lower,
            upper,
            margin_lower: psi_min - lower,
            margin_upper: upper - psi_max,
        })
    }

    /// Upper end of a bracket with `f(hi) ≥ y`, searching upward from `start`.
    fn upper_bracket(&self, f: impl Fn(f64) -> f64, y: f64, start: f64) -> Option<f64> {
        let cap = self.rho_max();
        let mut hi = start.max(1.0);
        loop {
            if hi >= cap {
                return (f(cap) >= y).then_some(cap);
            }
            if f(hi) >= y {
                return Some(hi);
            }
            hi *= 2.0;
            if !hi.is_finite() {
                return None;
            }
        }
    }

    /// `h⁻¹(y)`; closed form for the analytic laws, otherwise a numerical
    /// inverse.
    pub fn h_inv(&self, y: f64) -> Result<f64> {
        let lo = self.rho_min();
        let h_lo = self.h_unchecked(lo);
        if y < h_lo {
            return Err(Error::Range(format!(
                "h^-1({y}) requested below h(rho_floor) = {h_lo} (vacuum)"
            )));
        }
        match self.kind {
            PressureLaw::GammaLaw { kappa, gamma } => {
                let base = 1.0 + y * (gamma - 1.0) / (kappa * gamma);
                return Ok(base.powf(1.0 / (gamma - 1.0)).max(lo));
            }
            PressureLaw::Isothermal { kappa } => return Ok((y / kappa).exp().max(lo)),
            PressureLaw::Tabulated(_) => {}
        }
        let f = |r: f64| self.h_unchecked(r);
        let hi = self
            .upper_bracket(f, y, lo)
            .ok_or_else(|| Error::Range(format!("h^-1({y}) requested above h(rho_max)")))?;
        Ok(invert_increasing(f, |r| self.jet_unchecked(r).dp / r, y, lo, hi))
    }

    /// `H⁻¹(ψ)`: the stagnation-to-sonic density at which `M = 1`.
    pub fn big_h_inv(&self, psi: f64) -> Result<f64> {
        let lo = self.rho_min();
        let big_h = |r: f64| 0.5 * self.jet_unchecked(r).dp + self.h_unchecked(r);
        let (lower, upper) = self.admissible_limits();
        let h_lo = big_h(lo);
        if !(psi > lower) || psi < h_lo {
            return Err(Error::Admissibility {
                side: BandSide::Lower,
                value: psi,
                lower: lower.max(h_lo),
                upper,
            });
        }
        let hi = self.upper_bracket(big_h, psi, lo).ok_or(Error::Admissibility {
            side: BandSide::Upper,
            value: psi,
            lower,
            upper,
        })?;
        let d_big_h = |r: f64| {
            let j = self.jet_unchecked(r);
            0.5 * j.ddp + j.dp / r
        };
        Ok(invert_increasing(big_h, d_big_h, psi, lo, hi))
    }

    /// Critical speed `q_cr(ψ)`: flow is subsonic iff `|u| < q_cr(ψ)`.
    pub fn critical_speed(&self, psi: f64) -> Result<f64> {
        let rho_star = self.big_h_inv(psi)?;
        let q_sq = 2.0 * psi - 2.0 * self.h_unchecked(rho_star);
        let c_sq = self.pressure(rho_star)?.dp;
        // Mach one at the sonic density.
        if (q_sq / c_sq - 1.0).abs() > 1e-8 {
            return Err(Error::Domain(format!(
                "sonic state inconsistent at psi = {psi}: q^2 = {q_sq}, c^2 = {c_sq}"
            )));
        }
        Ok(q_sq.max(0.0).sqrt())
    }

    /// Density and Mach number from the Bernoulli law `½|u|² + h(ρ) = ψ`.
    pub fn bernoulli_density(&self, speed_sq: f64, psi: f64) -> Result<BernoulliState> {
        if !(speed_sq >= 0.0) {
            return Err(Error::Domain(format!("negative squared speed {speed_sq}")));
        }
        let rho = self.h_inv(psi - 0.5 * speed_sq)?;
        let c = self.sound_speed(rho)?;
        Ok(BernoulliState {
            speed_sq,
            psi,
            rho,
            mach: speed_sq.sqrt() / c,
        })
    }
}

/// Inverts a strictly increasing `f` on `[lo, hi]` with `f(lo) ≤ y ≤ f(hi)`:
/// bisection down to a narrow bracket, then safeguarded Newton.
fn invert_increasing(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, y: f64, mut lo: f64, mut hi: f64) -> f64 {
    let target = INVERSE_RESIDUAL * (1.0 + y.abs());
    while hi - lo > BISECTION_WIDTH * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if f(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..60 {
        let r = f(x) - y;
        if r.abs() <= 0.01 * target {
            return x;
        }
        if r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = df(x);
        let mut next = x - r / d;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == x {
            break;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn g2() -> GasLaw {
        GasLaw::gamma_law(1.0, 2.0).unwrap()
    }

    fn iso() -> GasLaw {
        GasLaw::isothermal(1.0).unwrap()
    }

    // Independent oracles: composite Simpson and plain bisection.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + h * i as f64;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    fn bisect(f: impl Fn(f64) -> f64, y: f64, mut a: f64, mut b: f64) -> f64 {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m) < y {
                a = m
            } else {
                b = m
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn pressure_examples() {
        let j = g2().pressure(1.0).unwrap();
        assert_eq!((j.p, j.dp, j.ddp), (1.0, 2.0, 2.0));
        let j = g2().pressure(1.5).unwrap();
        assert!((j.p - 2.25).abs() < 1e-15 && (j.dp - 3.0).abs() < 1e-15);
        assert!((j.ddp - 2.0).abs() < 1e-15);
        let j = iso().pressure(2.0).unwrap();
        assert_eq!((j.p, j.dp, j.ddp), (2.0, 1.0, 0.0));
    }

    #[test]
    fn pressure_below_floor_is_domain_error() {
        assert!(matches!(g2().pressure(1e-9), Err(Error::Domain(_))));
    }

    #[test]
    fn h_examples_against_quadrature_oracle() {
        assert_eq!(g2().h(1.0).unwrap(), 0.0);
        assert_eq!(iso().h(1.0).unwrap(), 0.0);
        let oracle = simpson(|t| 2.0 * t / t, 1.0, 1.5, 200);
        assert!((oracle - 1.0).abs() < 1e-13);
        assert!((g2().h(1.5).unwrap() - oracle).abs() < 1e-13);
        let oracle = simpson(|t| 1.0 / t, 1.0, E, 2000);
        assert!((oracle - 1.0).abs() < 1e-12);
        assert!((iso().h(E).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn h_inverse_examples() {
        assert!((g2().h_inv(0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((iso().h_inv(0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((g2().h_inv(1.0).unwrap() - 1.5).abs() < 1e-12);
        assert!((iso().h_inv(-0.5).unwrap() - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn h_inverse_below_vacuum_is_range_error() {
        assert!(matches!(g2().h_inv(-2.5), Err(Error::Range(_))));
        assert!(matches!(iso().h_inv(-40.0), Err(Error::Range(_))));
    }

    #[test]
    fn big_h_inverse_examples() {
        let oracle = |psi: f64| bisect(|r| 3.0 * r - 2.0, psi, 0.0, 10.0);
        assert!((g2().big_h_inv(2.0).unwrap() - oracle(2.0)).abs() < 1e-12);
        assert!((g2().big_h_inv(2.0).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert!((g2().big_h_inv(0.0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((iso().big_h_inv(0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            g2().big_h_inv(-2.5),
            Err(Error::Admissibility {
                side: BandSide::Lower,
                ..
            })
        ));
    }

    #[test]
    fn critical_speed_examples() {
        // Oracle: bisection on H then closed-form h.
        let oracle = |psi: f64| {
            let r = bisect(|r| 3.0 * r - 2.0, psi, 0.0, 10.0);
            (2.0 * psi - 4.0 * (r - 1.0)).sqrt()
        };
        assert!((g2().critical_speed(2.0).unwrap() - oracle(2.0)).abs() < 1e-10);
        assert!((g2().critical_speed(2.0).unwrap() - 1.632_993_161_855_452).abs() < 1e-10);
        assert!((g2().critical_speed(0.0).unwrap() - 1.154_700_538_379_251_7).abs() < 1e-10);
        for psi in [-3.0, 0.0, 0.5, 7.0] {
            assert!((iso().critical_speed(psi).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn bernoulli_examples() {
        let s = g2().bernoulli_density(0.0, 0.0).unwrap();
        assert!((s.rho - 1.0).abs() < 1e-12 && s.mach == 0.0);
        let s = g2().bernoulli_density(2.0, 2.0).unwrap();
        assert!((s.rho - 1.5).abs() < 1e-12);
        assert!((s.mach - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let s = g2().bernoulli_density(8.0 / 3.0, 2.0).unwrap();
        assert!((s.rho - 4.0 / 3.0).abs() < 1e-12);
        assert!((s.mach - 1.0).abs() < 1e-10);
        assert!(matches!(g2().bernoulli_density(20.0, 0.0), Err(Error::Range(_))));
    }

    #[test]
    fn admissibility_examples() {
        let b = g2().check_admissible(-1.0, 5.0).unwrap();
        assert_eq!((b.lower, b.upper), (-2.0, f64::INFINITY));
        assert!(matches!(
            g2().check_admissible(-3.0, 0.0),
            Err(Error::Admissibility {
                side: BandSide::Lower,
                ..
            })
        ));
        let b = iso().check_admissible(-1e6, 1e6).unwrap();
        assert_eq!((b.lower, b.upper), (f64::NEG_INFINITY, f64::INFINITY));
    }

    #[test]
    fn tabulated_gamma_table_tracks_closed_form() {
        let rho: Vec<f64> = (0..=200).map(|i| 0.05 + i as f64 * 0.02).collect();
        let p: Vec<f64> = rho.iter().map(|r| r * r).collect();
        let law = GasLaw::tabulated(rho, p).unwrap();
        assert!(law.h(1.0).unwrap().abs() < 1e-14);
        for &r in &[0.3, 0.77, 1.0, 1.9, 3.5] {
            let exact = 2.0 * (r - 1.0);
            assert!((law.h(r).unwrap() - exact).abs() < 1e-4, "rho = {r}");
            let y = law.h(r).unwrap();
            assert!((law.h_inv(y).unwrap() - r).abs() < 1e-10);
        }
        let q = law.critical_speed(0.5).unwrap();
        let exact = g2().critical_speed(0.5).unwrap();
        assert!((q - exact).abs() < 1e-3);
        let (lo, hi) = law.admissible_limits();
        assert!(lo > -2.0 && hi.is_finite());
    }

    #[test]
    fn tabulated_law_rejects_bad_tables() {
        // Decreasing pressure violates p' > 0.
        let bad = GasLaw::tabulated(vec![0.5, 1.0, 2.0], vec![3.0, 2.0, 1.0]);
        assert!(matches!(bad, Err(Error::Law { .. })));
        // Reference density outside the table.
        assert!(GasLaw::tabulated(vec![1.5, 2.0, 3.0], vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(GasLaw::gamma_law(1.0, 1.0).is_err());
        assert!(GasLaw::gamma_law(-1.0, 2.0).is_err());
        assert!(GasLaw::isothermal(0.0).is_err());
    }
}
