//! Discrete energies, the dissipation rate and the per-step energy audit.
//!
//! The energy is the quadratic form
//! `½[Σ h(ρ1 v² + ρ2 w² + τ q²) + Σ_cells h(b s² + k c²) + Σ H ρ3 θ²]`,
//! the first sum over interior nodes, `c`, `s` the cell strains of
//! [`crate::solver`], `H` the trapezoid weights. Since the constrained fields
//! vanish at the ends, the node sums coincide with the trapezoid rule.

use std::fmt::Write as _;

use crate::laws::{DampingLaw, LawError};
use crate::solver::{BeamState, PhysicalParams, Semidiscrete, FIELDS, W};

/// Trapezoid value of `∫₀¹ θ dx`.
pub fn theta_mean(state: &BeamState) -> f64 {
    let n = state.nodes() - 1;
    let h = 1.0 / n as f64;
    let th = &state.theta;
    h * (0.5 * (th[0] + th[n]) + th[1..n].iter().sum::<f64>())
}

fn energy_with_reference(state: &BeamState, p: &PhysicalParams, theta_ref: f64) -> f64 {
    let n = state.nodes() - 1;
    let h = 1.0 / n as f64;
    let mut kinetic = 0.0;
    for j in 1..n {
        kinetic += p.rho1 * state.v[j].powi(2) + p.rho2 * state.w[j].powi(2) + p.tau * state.q[j].powi(2);
    }
    let mut strain = 0.0;
    for j in 0..n {
        let c = (state.phi[j + 1] - state.phi[j]) / h + 0.5 * (state.psi[j] + state.psi[j + 1]);
        let s = (state.psi[j + 1] - state.psi[j]) / h;
        strain += p.b * s * s + p.k * c * c;
    }
    let th = |j: usize| (state.theta[j] - theta_ref).powi(2);
    let heat = 0.5 * (th(0) + th(n)) + (1..n).map(th).sum::<f64>();
    0.5 * h * (kinetic + strain + p.rho3 * heat)
}

pub fn total_energy(state: &BeamState, params: &PhysicalParams) -> f64 {
    energy_with_reference(state, params, 0.0)
}

/// Energy of the deviation from the equilibrium `(0, 0, θ_ref, 0)`.
pub fn shifted_energy(state: &BeamState, params: &PhysicalParams, theta_ref: f64) -> f64 {
    energy_with_reference(state, params, theta_ref)
}

/// The same quadratic form applied to the time derivatives, which are taken
/// from the right-hand side `F(state)`.
pub fn first_order_energy(
    state: &BeamState,
    sd: &Semidiscrete,
    law: &DampingLaw,
) -> Result<f64, LawError> {
    let y = state.pack();
    let mut f = vec![0.0; y.len()];
    sd.rhs(law, &y, &mut f)?;
    Ok(total_energy(&BeamState::unpack(state.t, &f), sd.params()))
}

/// `β∫q² + ∫a w g(w)`.
pub fn dissipation(
    state: &BeamState,
    params: &PhysicalParams,
    a: &[f64],
    law: &DampingLaw,
) -> Result<f64, LawError> {
    let n = state.nodes() - 1;
    let h = 1.0 / n as f64;
    let mut d = 0.0;
    // Boundary nodes carry w = q = 0.
    for ((&aj, &w), &q) in a.iter().zip(&state.w).zip(&state.q).take(n).skip(1) {
        let damp = if aj == 0.0 { 0.0 } else { aj * w * law.eval_g(w)? };
        d += params.beta * q * q + damp;
    }
    Ok(h * d)
}

/// [`dissipation`] on the integrator's interleaved layout.
pub fn dissipation_packed(sd: &Semidiscrete, law: &DampingLaw, y: &[f64]) -> Result<f64, LawError> {
    let n = y.len() / FIELDS - 1;
    let h = 1.0 / n as f64;
    let a = sd.profile().samples();
    let beta = sd.params().beta;
    let mut d = 0.0;
    for j in 1..n {
        let w = y[FIELDS * j + W];
        let q = y[FIELDS * j + crate::solver::Q];
        let damp = if a[j] == 0.0 { 0.0 } else { a[j] * w * law.eval_g(w)? };
        d += beta * q * q + damp;
    }
    Ok(h * d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub t: f64,
    pub e: f64,
    pub estar: f64,
    pub ecal: f64,
    pub d: f64,
    pub theta_mean: f64,
}

pub fn record(
    state: &BeamState,
    sd: &Semidiscrete,
    law: &DampingLaw,
    theta_ref: f64,
) -> Result<EnergyRecord, LawError> {
    let p = sd.params();
    Ok(EnergyRecord {
        t: state.t,
        e: total_energy(state, p),
        estar: first_order_energy(state, sd, law)?,
        ecal: shifted_energy(state, p, theta_ref),
        d: dissipation(state, p, sd.profile().samples(), law)?,
        theta_mean: theta_mean(state),
    })
}

pub const ENERGY_CSV_HEADER: &str = "t,E,Estar,Ecal,D,theta_mean";

pub fn records_to_csv(records: &[EnergyRecord]) -> String {
    let mut out = String::with_capacity(128 * (records.len() + 1));
    out.push_str(ENERGY_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, r.e, r.estar, r.ecal, r.d, r.theta_mean
        );
    }
    out
}

/// Energy before and after one step together with the midpoint dissipation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepBalance {
    pub t: f64,
    pub dt: f64,
    pub e_before: f64,
    pub e_after: f64,
    pub midpoint_dissipation: f64,
}

impl StepBalance {
    pub fn residual(&self) -> f64 {
        self.e_after - self.e_before + self.dt * self.midpoint_dissipation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    /// `max |E_{n+1} − E_n + dt D_{n+½}| / max(E(0), ε)`.
    pub max_residual: f64,
    pub worst_time: f64,
    pub steps: usize,
    pub threshold: f64,
    pub passed: bool,
}

pub fn audit_dissipation(balances: &[StepBalance], threshold: f64) -> AuditReport {
    let e0 = balances.first().map_or(0.0, |b| b.e_before).max(f64::MIN_POSITIVE);
    let (mut worst, mut at) = (0.0f64, 0.0);
    for b in balances {
        let r = b.residual().abs() / e0;
        if r > worst || r.is_nan() {
            worst = r;
            at = b.t;
        }
    }
    AuditReport {
        max_residual: worst,
        worst_time: at,
        steps: balances.len(),
        threshold,
        passed: worst <= threshold,
    }
}

/// First index at which the series rises by more than `slack` over its
/// predecessor, if any.
pub fn first_increase(values: impl IntoIterator<Item = f64>, slack: f64) -> Option<usize> {
    let mut prev: Option<f64> = None;
    for (i, v) in values.into_iter().enumerate() {
        if let Some(p) = prev {
            if !(v <= p + slack) {
                return Some(i);
            }
        }
        prev = Some(v);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{DampingProfile, DefaultInitialData, Grid};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> PhysicalParams {
        PhysicalParams {
            rho1: 1.2,
            rho2: 0.8,
            rho3: 1.5,
            b: 2.0,
            k: 1.1,
            delta: 0.5,
            tau: 0.4,
            beta: 0.9,
        }
    }

    #[test]
    fn zero_state_has_no_energy() {
        let grid = Grid::new(16).unwrap();
        let s = BeamState::zeros(&grid);
        let sd = Semidiscrete::new(params(), grid, DampingProfile::global(&grid)).unwrap();
        let law = DampingLaw::power(2.0).unwrap();
        assert_eq!(total_energy(&s, &params()), 0.0);
        assert_eq!(first_order_energy(&s, &sd, &law).unwrap(), 0.0);
        assert_eq!(dissipation(&s, &params(), sd.profile().samples(), &law).unwrap(), 0.0);
    }

    #[test]
    fn heat_flux_energy() {
        use std::f64::consts::PI;
        let grid = Grid::new(64).unwrap();
        let mut s = BeamState::zeros(&grid);
        for j in 1..64 {
            s.q[j] = (PI * grid.x(j)).sin();
        }
        let p = PhysicalParams {
            tau: 2.0,
            ..params()
        };
        assert_relative_eq!(total_energy(&s, &p), 0.5, max_relative = 1e-3);
    }

    #[test]
    fn pure_heat_state_has_no_first_order_energy() {
        let grid = Grid::new(20).unwrap();
        let sd = Semidiscrete::new(params(), grid, DampingProfile::global(&grid)).unwrap();
        let mut s = BeamState::zeros(&grid);
        s.theta.iter_mut().for_each(|v| *v = -0.4);
        assert_eq!(first_order_energy(&s, &sd, &DampingLaw::linear(1.0)).unwrap(), 0.0);
        assert_eq!(shifted_energy(&s, &params(), -0.4), 0.0);
    }

    #[test]
    fn uniform_velocity_dissipation() {
        let grid = Grid::new(50).unwrap();
        let mut s = BeamState::zeros(&grid);
        let s0 = 0.3;
        for j in 1..50 {
            s.w[j] = s0;
        }
        let p = PhysicalParams { beta: 0.0, ..params() };
        let law = DampingLaw::power(3.0).unwrap();
        let d = dissipation(&s, &p, DampingProfile::global(&grid).samples(), &law).unwrap();
        // Interior nodes carry weight h; the two end nodes are constrained to zero.
        assert_relative_eq!(d, s0 * s0.powi(3) * 49.0 / 50.0, max_relative = 1e-14);
    }

    #[test]
    fn audit_flags_imbalance() {
        let good = StepBalance {
            t: 0.0,
            dt: 0.1,
            e_before: 1.0,
            e_after: 0.9,
            midpoint_dissipation: 1.0,
        };
        let bad = StepBalance {
            t: 0.1,
            e_before: 0.9,
            e_after: 0.89,
            ..good
        };
        assert!(audit_dissipation(&[good], 1e-12).passed);
        let r = audit_dissipation(&[good, bad], 1e-6);
        assert!(!r.passed);
        assert_eq!(r.worst_time, 0.1);
        assert_relative_eq!(r.max_residual, 0.09, max_relative = 1e-12);
    }

    #[test]
    fn first_increase_respects_slack() {
        assert_eq!(first_increase([3.0, 2.0, 2.0 + 1e-13, 1.0], 1e-12), None);
        assert_eq!(first_increase([3.0, 2.0, 2.5], 1e-12), Some(2));
    }

    #[test]
    fn csv_has_full_precision() {
        let r = EnergyRecord {
            t: 0.1,
            e: 1.0 / 3.0,
            estar: 2.0,
            ecal: 0.0,
            d: 0.0,
            theta_mean: -0.3,
        };
        let csv = records_to_csv(&[r]);
        let line = csv.lines().nth(1).unwrap();
        let e: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(e, 1.0 / 3.0);
        assert!(csv.starts_with("t,E,Estar,Ecal,D,theta_mean\n"));
    }

    proptest! {
        #[test]
        fn quadratic_scaling_and_decomposition(
            lambda in -3.0f64..3.0,
            amp in 0.0f64..2.0,
            mean in -1.0f64..1.0,
            theta_ref in -1.0f64..1.0,
        ) {
            let grid = Grid::new(32).unwrap();
            let p = params();
            let sd = Semidiscrete::new(p, grid, DampingProfile::global(&grid)).unwrap();
            let lin = DampingLaw::linear(1.7);
            let s = DefaultInitialData { amplitude: amp, heat_amplitude: 1.0, theta_mean: mean }.state(&grid);
            let sl = s.scaled(lambda);
            let l2 = lambda * lambda;
            let e = total_energy(&s, &p);
            prop_assert!((total_energy(&sl, &p) - l2 * e).abs() <= 1e-13 * l2 * e + 1e-300);
            let es = first_order_energy(&s, &sd, &lin).unwrap();
            let esl = first_order_energy(&sl, &sd, &lin).unwrap();
            prop_assert!((esl - l2 * es).abs() <= 1e-12 * l2 * es + 1e-300);
            let d = dissipation(&s, &p, sd.profile().samples(), &lin).unwrap();
            let dl = dissipation(&sl, &p, sd.profile().samples(), &lin).unwrap();
            prop_assert!((dl - l2 * d).abs() <= 1e-13 * l2 * d + 1e-300);

            // E = 𝓔 + ρ3 θ_ref m − ½ ρ3 θ_ref², with m the trapezoid mean.
            let m = theta_mean(&s);
            let ecal = shifted_energy(&s, &p, theta_ref);
            let rhs = ecal + p.rho3 * theta_ref * m - 0.5 * p.rho3 * theta_ref * theta_ref;
            prop_assert!((e - rhs).abs() <= 1e-13 * e.max(1.0));
            prop_assert!(ecal >= 0.0 && es >= 0.0 && d >= 0.0);
        }
    }
}
