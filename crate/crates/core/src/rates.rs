//! Comparison machinery: the constants `γ`, `σ`, the integral
//! `K(χ) = ∫_χ^upper dy/Ψ(y)` and its inverse, the comparison ODE
//! `z′ + κΨ(z) = 0`, and the two lower envelopes for the shifted energy.

use std::cell::Cell;

use thiserror::Error;

use crate::energy::EnergyRecord;
use crate::laws::{DampingLaw, LawError};
use crate::ode::{self, OdeError, Tolerance};
use crate::quad::{self, QuadError};

const K_REL_TOL: f64 = 1e-10;
const BISECT_REL_TOL: f64 = 1e-10;
const BISECT_MAX_ITER: usize = 200;
const FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RatesError {
    #[error("{0}")]
    Domain(String),
    /// `K` stays below `v` all the way down to the positive floor.
    #[error("K stays below {v:e} down to chi = {floor:e}; the value lies beyond the domain of K^-1")]
    BeyondDomain { v: f64, floor: f64 },
    #[error("threshold {threshold:e} never reached; the run is too short to find T0")]
    NotFound { threshold: f64 },
    #[error("fit window: {0}")]
    Window(String),
    #[error("K is not monotone near chi = {0:e}; check the law configuration")]
    NonMonotone(f64),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Law(#[from] LawError),
}

/// `γ = (4/ρ2)√E⋆(0)`.
pub fn gamma_const(estar0: f64, rho2: f64) -> f64 {
    4.0 / rho2 * estar0.sqrt()
}

/// `σ = α_a/ρ2 + β r0/(τ C1)`.
pub fn sigma_const(alpha_a: f64, rho2: f64, beta: f64, r0: f64, tau: f64, c1: f64) -> f64 {
    alpha_a / rho2 + beta * r0 / (tau * c1)
}

/// Default `C1`: the minorant's slope when the law is linear near the
/// origin, otherwise `g0(ε1)/ε` with `ε1 = min(r0, g0(r0))`, `ε = max(r0, g0(r0))`.
pub fn default_c1(law: &DampingLaw) -> Result<f64, LawError> {
    let r0 = law.r0();
    let g0r = law.eval_g0(r0)?;
    if law.linear_near_origin() {
        return Ok(g0r / r0);
    }
    let eps1 = r0.min(g0r);
    let eps = r0.max(g0r);
    Ok(law.eval_g0(eps1)? / eps)
}

fn check_upper(upper: f64, law: &DampingLaw) -> Result<(), RatesError> {
    let r0sq = law.r0() * law.r0();
    if !(upper > 0.0 && upper <= r0sq * (1.0 + 1e-12)) {
        return Err(RatesError::Domain(format!(
            "upper = {upper:e} must lie in (0, r0^2 = {r0sq:e}]"
        )));
    }
    Ok(())
}

/// `K(χ) = ∫_χ^upper dy/Ψ(y)` for `0 < χ <= upper <= r0²`.
#[allow(non_snake_case)]
pub fn K(chi: f64, upper: f64, law: &DampingLaw) -> Result<f64, RatesError> {
    check_upper(upper, law)?;
    if !(chi > 0.0) {
        return Err(RatesError::Domain(format!("chi = {chi:e} must be positive")));
    }
    if chi > upper {
        return Err(RatesError::Domain(format!(
            "chi = {chi:e} exceeds upper = {upper:e}"
        )));
    }
    if chi == upper {
        return Ok(0.0);
    }
    Ok(quad::integral_inverse_psi(law, chi, upper, K_REL_TOL)?)
}

/// The `χ ∈ (0, upper]` with `K(χ) = v`, by bisection in `ln χ`.
#[allow(non_snake_case)]
pub fn K_inverse(v: f64, upper: f64, law: &DampingLaw) -> Result<f64, RatesError> {
    check_upper(upper, law)?;
    if !(v >= 0.0) {
        return Err(RatesError::Domain(format!("v = {v:e} must be nonnegative")));
    }
    if v == 0.0 {
        return Ok(upper);
    }
    // Widen the bracket downward; K over [lo, hi] is accumulated piecewise
    // so each extension costs one short integral.
    let mut hi = upper;
    let mut k_hi = 0.0;
    let mut lo = upper;
    let mut k_lo = 0.0;
    while k_lo < v {
        hi = lo;
        k_hi = k_lo;
        lo = hi / 10.0;
        if lo < FLOOR {
            return Err(RatesError::BeyondDomain { v, floor: FLOOR });
        }
        let piece = quad::integral_inverse_psi(law, lo, hi, K_REL_TOL)?;
        if !(piece > 0.0) {
            return Err(RatesError::NonMonotone(lo));
        }
        k_lo = k_hi + piece;
    }
    // Invariant: K(lo) >= v > K(hi), with K(hi) = k_hi.
    for _ in 0..BISECT_MAX_ITER {
        if hi / lo - 1.0 <= BISECT_REL_TOL {
            break;
        }
        let mid = (lo * hi).sqrt();
        let k_mid = k_hi + quad::integral_inverse_psi(law, mid, hi, K_REL_TOL)?;
        if k_mid >= v {
            lo = mid;
        } else {
            hi = mid;
            k_hi = k_mid;
        }
    }
    Ok((lo * hi).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSolution {
    pub z: Vec<f64>,
    /// The trajectory hit the positive floor and was clamped there.
    pub clamped: bool,
}

/// Solves `z′ = −κΨ(z)`, `z(0) = z0` on `t_grid` (nondecreasing, starting at or after 0).
pub fn solve_comparison_ode(
    z0: f64,
    kappa: f64,
    law: &DampingLaw,
    t_grid: &[f64],
) -> Result<ComparisonSolution, RatesError> {
    let r0sq = law.r0() * law.r0();
    if !(z0 > 0.0 && z0 <= r0sq * (1.0 + 1e-12)) {
        return Err(RatesError::Domain(format!(
            "z0 = {z0:e} must lie in (0, r0^2 = {r0sq:e}]"
        )));
    }
    if !(kappa > 0.0) {
        return Err(RatesError::Domain(format!("kappa = {kappa:e} must be positive")));
    }
    let clamped = Cell::new(false);
    let rhs = |z: f64| {
        let zc = if z < FLOOR {
            clamped.set(true);
            FLOOR
        } else {
            z
        };
        law.eval_psi(zc).map_or(f64::NAN, |p| -kappa * p)
    };
    let tol = Tolerance {
        rel: 1e-9,
        floor: FLOOR,
    };
    let mut z = ode::solve(rhs, 0.0, z0, t_grid, tol)?;
    for v in &mut z {
        if *v < FLOOR {
            *v = FLOOR;
            clamped.set(true);
        }
    }
    Ok(ComparisonSolution {
        z,
        clamped: clamped.get(),
    })
}

/// `(Ψ′)⁻¹(y)` on the convex region `(0, r0²]`, by bisection in `ln x`.
pub fn psi_prime_inverse(law: &DampingLaw, y: f64) -> Result<f64, RatesError> {
    let r0sq = law.r0() * law.r0();
    let top = law.eval_psi_prime(r0sq)?;
    if !(y > 0.0) {
        return Err(RatesError::Domain(format!("Psi'^-1 needs y > 0, got {y:e}")));
    }
    if y > top {
        return Err(RatesError::Domain(format!(
            "Psi'(x) = {y:e} has no solution in (0, r0^2]: Psi'(r0^2) = {top:e}"
        )));
    }
    let mut hi = r0sq;
    let mut lo = r0sq;
    loop {
        lo /= 10.0;
        if lo < FLOOR {
            return Err(RatesError::Domain(format!(
                "Psi' stays above {y:e} down to x = {FLOOR:e}"
            )));
        }
        if law.eval_psi_prime(lo)? < y {
            break;
        }
        hi = lo;
    }
    for _ in 0..BISECT_MAX_ITER {
        if hi / lo - 1.0 <= BISECT_REL_TOL {
            break;
        }
        let mid = (lo * hi).sqrt();
        if law.eval_psi_prime(mid)? < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeParams {
    pub gamma: f64,
    pub sigma: f64,
    pub t0: f64,
    pub r0: f64,
    pub c1: f64,
    pub c_cal: f64,
    pub e_cal_t0: f64,
}

impl EnvelopeParams {
    fn upper(&self) -> f64 {
        self.gamma * self.e_cal_t0.sqrt()
    }
}

/// `(1/γ²)(K⁻¹(σ(t − T0)))²` with `K` anchored at `upper = γ√𝓔(T0)`.
pub fn lower_envelope_k(t: f64, ep: &EnvelopeParams, law: &DampingLaw) -> Result<f64, RatesError> {
    if !(t >= ep.t0) {
        return Err(RatesError::Domain(format!("t = {t} precedes T0 = {}", ep.t0)));
    }
    if !(ep.e_cal_t0 > 0.0 && ep.gamma > 0.0) {
        return Err(RatesError::Domain(
            "the K envelope needs gamma > 0 and a positive shifted energy at T0".into(),
        ));
    }
    let chi = K_inverse(ep.sigma * (t - ep.t0), ep.upper(), law)?;
    Ok((chi / ep.gamma).powi(2))
}

/// `(1/(γ² C²))(x*)²` with `Ψ′(x*) = 1/(t − T0)`.
pub fn lower_envelope_psi(
    t: f64,
    ep: &EnvelopeParams,
    law: &DampingLaw,
) -> Result<f64, RatesError> {
    if !(t > ep.t0) {
        return Err(RatesError::Domain(format!("t = {t} must exceed T0 = {}", ep.t0)));
    }
    let x = psi_prime_inverse(law, 1.0 / (t - ep.t0))?;
    Ok((x / (ep.gamma * ep.c_cal)).powi(2))
}

/// `C` making both envelopes agree at `t = T0 + t1`.
pub fn calibrate_c(ep: &EnvelopeParams, law: &DampingLaw, t1: f64) -> Result<f64, RatesError> {
    let x = psi_prime_inverse(law, 1.0 / t1)?;
    let chi = K_inverse(ep.sigma * t1, ep.upper(), law)?;
    Ok(x / chi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    /// False when `Ψ′` is constant, so `(Ψ′)⁻¹` is not a function.
    pub applicable: bool,
    pub passed: bool,
    /// `min z(t) / (Ψ′)⁻¹(R/t)` over the checked samples: the largest admissible `C`.
    pub best_c: f64,
    pub worst_t: f64,
    pub checked: usize,
    /// Samples with `R/t` above `Ψ′(r0²)`, where the inverse is undefined.
    pub skipped: usize,
}

/// Checks `z(t) >= C (Ψ′)⁻¹(R/t)` on the samples with `t >= T1`.
pub fn lemma_bound_check(
    ts: &[f64],
    zs: &[f64],
    law: &DampingLaw,
    r: f64,
    c: f64,
    t1: f64,
) -> Result<LemmaReport, RatesError> {
    let r0sq = law.r0() * law.r0();
    let top = law.eval_psi_prime(r0sq)?;
    let bottom = law.eval_psi_prime(r0sq * 1e-6)?;
    let mut report = LemmaReport {
        applicable: (top - bottom).abs() > 1e-9 * top.abs(),
        passed: true,
        best_c: f64::INFINITY,
        worst_t: f64::NAN,
        checked: 0,
        skipped: 0,
    };
    if !report.applicable {
        return Ok(report);
    }
    for (&t, &z) in ts.iter().zip(zs) {
        if t < t1 || !(t > 0.0) {
            continue;
        }
        let x = match psi_prime_inverse(law, r / t) {
            Ok(x) => x,
            Err(RatesError::Domain(_)) => {
                report.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        report.checked += 1;
        let ratio = z / x;
        if ratio < report.best_c {
            report.best_c = ratio;
            report.worst_t = t;
        }
        if z < c * x {
            report.passed = false;
        }
    }
    Ok(report)
}

/// Least-squares slope of `ln y` against `ln t` over `window`.
pub fn fit_decay_exponent(series: &[(f64, f64)], window: (f64, f64)) -> Result<f64, RatesError> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .copied()
        .collect();
    if pts.len() < 10 {
        return Err(RatesError::Window(format!(
            "{} points in [{}, {}], need at least 10",
            pts.len(),
            window.0,
            window.1
        )));
    }
    if let Some((t, y)) = pts.iter().find(|(t, y)| !(*t > 0.0 && *y > 0.0)) {
        return Err(RatesError::Window(format!(
            "log-log fit needs positive data, got ({t}, {y})"
        )));
    }
    let n = pts.len() as f64;
    let (mx, my) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + t.ln() / n, b + y.ln() / n));
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, y) in &pts {
        let dx = t.ln() - mx;
        sxy += dx * (y.ln() - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        return Err(RatesError::Window("all times coincide".into()));
    }
    Ok(sxy / sxx)
}

/// Index and time of the first record with `𝓔 <= (r0²/γ)²`.
pub fn detect_t0(records: &[EnergyRecord], gamma: f64, r0: f64) -> Result<(usize, f64), RatesError> {
    let threshold = (r0 * r0 / gamma).powi(2);
    records
        .iter()
        .position(|r| r.ecal <= threshold)
        .map(|i| (i, records[i].t))
        .ok_or(RatesError::NotFound { threshold })
}
