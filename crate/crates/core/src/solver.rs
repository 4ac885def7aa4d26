//! Semi-discretization of the damped thermoelastic Timoshenko system on
//! `(0, 1)` and the implicit-midpoint integrator.
//!
//! Strain-like quantities live on cells: the shear strain
//! `c = φ_x + ψ` is `(φ_{j+1} − φ_j)/h + (ψ_j + ψ_{j+1})/2` and the bending
//! strain is `s = (ψ_{j+1} − ψ_j)/h`. The heat pair uses centered
//! differences with summation-by-parts boundary rows for `θ`, which has no
//! boundary condition. With these choices the discrete energy of
//! [`crate::energy`] satisfies `dE/dt = −D` exactly in the semi-discrete
//! system, and the implicit midpoint rule turns that into an exact per-step
//! balance.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::banded::{BandLu, BandMatrix, SingularMatrix};
use crate::energy::{self, EnergyRecord, StepBalance};
use crate::laws::{DampingLaw, LawError};

pub const PHI: usize = 0;
pub const V: usize = 1;
pub const PSI: usize = 2;
pub const W: usize = 3;
pub const THETA: usize = 4;
pub const Q: usize = 5;
pub const FIELDS: usize = 6;

const KL: usize = 9;
const KU: usize = 7;
const LEVENBERG: f64 = 1e-12;
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 50;

#[inline]
fn idx(j: usize, f: usize) -> usize {
    FIELDS * j + f
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid parameter {name} = {value}: {requirement}")]
    Parameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("grid needs at least 8 cells, got {0}")]
    Grid(usize),
    #[error("damping profile: {0}")]
    Profile(String),
    #[error("initial data: {0}")]
    InitialData(String),
    #[error("Newton iteration did not converge at t = {t} after {iterations} iterations (residual {residual:e})")]
    Newton {
        t: f64,
        iterations: usize,
        residual: f64,
    },
    #[error("state became non-finite at t = {t}")]
    Diverged { t: f64 },
    #[error(transparent)]
    Law(#[from] LawError),
    #[error(transparent)]
    Singular(#[from] SingularMatrix),
    #[error("{0}")]
    Io(String),
}

/// Coefficients of the system. `δ` and `β` may be zero, which switches off
/// the thermal coupling or the heat-flux damping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub b: f64,
    pub k: f64,
    pub delta: f64,
    pub tau: f64,
    pub beta: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            rho1: 1.0,
            rho2: 1.0,
            rho3: 1.0,
            b: 1.0,
            k: 1.0,
            delta: 1.0,
            tau: 1.0,
            beta: 1.0,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<(), SolverError> {
        let strict = [
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("rho3", self.rho3),
            ("b", self.b),
            ("k", self.k),
            ("tau", self.tau),
        ];
        for (name, value) in strict {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SolverError::Parameter {
                    name,
                    value,
                    requirement: "must be positive",
                });
            }
        }
        for (name, value) in [("delta", self.delta), ("beta", self.beta)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(SolverError::Parameter {
                    name,
                    value,
                    requirement: "must be nonnegative",
                });
            }
        }
        Ok(())
    }
}

/// Stability number `χ = (τ − ρ1/(kρ3))(ρ2 − ρ1 b/k) − ρ1²δ²/(kρ3)`;
/// zero separates the exponentially stable linear regime from the
/// polynomially stable one.
pub fn compute_stability_number(p: &PhysicalParams) -> f64 {
    (p.tau - p.rho1 / (p.k * p.rho3)) * (p.rho2 - p.rho1 * p.b / p.k)
        - p.rho1 * p.rho1 * p.delta * p.delta / (p.k * p.rho3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(cells: usize) -> Result<Self, SolverError> {
        if cells < 8 {
            return Err(SolverError::Grid(cells));
        }
        Ok(Self { n: cells })
    }

    pub fn cells(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> usize {
        self.n + 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 / self.n as f64
    }

    /// Trapezoid weight of node `j`.
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 || j == self.n {
            0.5 * self.h()
        } else {
            self.h()
        }
    }
}

/// Nodal samples of the damping coefficient `a(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DampingProfile {
    a: Vec<f64>,
    support: Vec<(f64, f64)>,
}

impl DampingProfile {
    pub fn global(grid: &Grid) -> Self {
        Self {
            a: vec![1.0; grid.nodes()],
            support: vec![(0.0, 1.0)],
        }
    }

    /// No damping at all; violates the nonempty-support hypothesis and is
    /// meant for conservative runs.
    pub fn none(grid: &Grid) -> Self {
        Self {
            a: vec![0.0; grid.nodes()],
            support: Vec::new(),
        }
    }

    /// Smooth bump `exp(1 − 1/(1 − s²))` with peak 1 at the centre of `(lo, hi)`.
    pub fn bump(grid: &Grid, lo: f64, hi: f64) -> Result<Self, SolverError> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(SolverError::Profile(format!(
                "bump support ({lo}, {hi}) must satisfy 0 <= lo < hi <= 1"
            )));
        }
        let c = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let a = (0..grid.nodes())
            .map(|j| {
                let s = (grid.x(j) - c) / half;
                if s.abs() < 1.0 {
                    (1.0 - 1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            a,
            support: vec![(lo, hi)],
        })
    }

    pub fn from_samples(a: Vec<f64>, support: Vec<(f64, f64)>) -> Result<Self, SolverError> {
        if let Some(v) = a.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(SolverError::Profile(format!(
                "a(x) must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Self { a, support })
    }

    pub fn samples(&self) -> &[f64] {
        &self.a
    }

    pub fn support(&self) -> &[(f64, f64)] {
        &self.support
    }

    /// Discrete sup-norm `α_a`.
    pub fn alpha(&self) -> f64 {
        self.a.iter().fold(0.0, |m, &v| m.max(v))
    }

    /// Whether `a > 0` somewhere strictly inside the domain.
    pub fn has_support(&self) -> bool {
        let n = self.a.len();
        n > 2 && self.a[1..n - 1].iter().any(|&v| v > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamState {
    pub t: f64,
    pub phi: Vec<f64>,
    pub v: Vec<f64>,
    pub psi: Vec<f64>,
    pub w: Vec<f64>,
    pub theta: Vec<f64>,
    pub q: Vec<f64>,
}

impl BeamState {
    pub fn zeros(grid: &Grid) -> Self {
        let z = vec![0.0; grid.nodes()];
        Self {
            t: 0.0,
            phi: z.clone(),
            v: z.clone(),
            psi: z.clone(),
            w: z.clone(),
            theta: z.clone(),
            q: z,
        }
    }

    pub fn nodes(&self) -> usize {
        self.phi.len()
    }

    pub fn grid(&self) -> Grid {
        Grid {
            n: self.nodes() - 1,
        }
    }

    fn fields(&self) -> [&Vec<f64>; FIELDS] {
        [&self.phi, &self.v, &self.psi, &self.w, &self.theta, &self.q]
    }

    fn fields_mut(&mut self) -> [&mut Vec<f64>; FIELDS] {
        [
            &mut self.phi,
            &mut self.v,
            &mut self.psi,
            &mut self.w,
            &mut self.theta,
            &mut self.q,
        ]
    }

    /// Interleaved layout `6j + field` used by the integrator.
    pub fn pack(&self) -> Vec<f64> {
        let n = self.nodes();
        let mut out = vec![0.0; FIELDS * n];
        for (f, field) in self.fields().into_iter().enumerate() {
            for j in 0..n {
                out[idx(j, f)] = field[j];
            }
        }
        out
    }

    pub fn unpack(t: f64, data: &[f64]) -> Self {
        let n = data.len() / FIELDS;
        let mut s = Self::zeros(&Grid { n: n - 1 });
        s.t = t;
        for (f, field) in s.fields_mut().into_iter().enumerate() {
            for j in 0..n {
                field[j] = data[idx(j, f)];
            }
        }
        s
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        let mut s = self.clone();
        for field in s.fields_mut() {
            field.iter_mut().for_each(|v| *v *= lambda);
        }
        s
    }

    /// True when every constrained field vanishes at both ends.
    pub fn satisfies_boundary(&self) -> bool {
        let n = self.nodes() - 1;
        [&self.phi, &self.v, &self.psi, &self.w, &self.q]
            .iter()
            .all(|f| f[0] == 0.0 && f[n] == 0.0)
    }

    /// Zeroes the constrained fields at both ends.
    pub fn enforce_boundary(&mut self) {
        let n = self.nodes() - 1;
        for f in [
            &mut self.phi,
            &mut self.v,
            &mut self.psi,
            &mut self.w,
            &mut self.q,
        ] {
            f[0] = 0.0;
            f[n] = 0.0;
        }
    }

    pub fn to_csv(&self) -> String {
        let grid = self.grid();
        let mut out = String::from("x,phi,v,psi,w,theta,q\n");
        for j in 0..self.nodes() {
            let _ = write!(out, "{:.16e}", grid.x(j));
            for f in self.fields() {
                let _ = write!(out, ",{:.16e}", f[j]);
            }
            out.push('\n');
        }
        out
    }

    /// Reads the snapshot format (`x,phi,v,psi,w,theta,q`); the node count
    /// fixes the grid and `x` must match it.
    pub fn from_csv(text: &str) -> Result<Self, SolverError> {
        let bad = |m: String| SolverError::InitialData(m);
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.first() == Some(&"x") {
                continue;
            }
            if cells.len() != 7 {
                return Err(bad(format!(
                    "line {}: expected 7 columns, found {}",
                    lineno + 1,
                    cells.len()
                )));
            }
            let mut row = [0.0; 7];
            for (r, c) in row.iter_mut().zip(&cells) {
                *r = c
                    .parse()
                    .map_err(|_| bad(format!("line {}: '{c}' is not a number", lineno + 1)))?;
            }
            rows.push(row);
        }
        let grid = Grid::new(rows.len().saturating_sub(1))?;
        let mut s = Self::zeros(&grid);
        for (j, row) in rows.iter().enumerate() {
            if (row[0] - grid.x(j)).abs() > 1e-9 {
                return Err(bad(format!(
                    "row {j}: x = {} does not match the uniform grid ({})",
                    row[0],
                    grid.x(j)
                )));
            }
            for (f, field) in s.fields_mut().into_iter().enumerate() {
                field[j] = row[f + 1];
            }
        }
        if !s.satisfies_boundary() {
            return Err(bad(
                "phi, v, psi, w and q must vanish at x = 0 and x = 1".into(),
            ));
        }
        Ok(s)
    }
}

/// Built-in smooth initial data: `φ0 = A sin(πx)`, `ψ0 = A sin(2πx)`, zero
/// velocities, `θ0 = H cos(πx) + θ̄`, `q0 = H sin(πx)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefaultInitialData {
    pub amplitude: f64,
    pub heat_amplitude: f64,
    pub theta_mean: f64,
}

impl Default for DefaultInitialData {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            heat_amplitude: 1.0,
            theta_mean: 0.0,
        }
    }
}

impl DefaultInitialData {
    pub fn state(&self, grid: &Grid) -> BeamState {
        use std::f64::consts::PI;
        let mut s = BeamState::zeros(grid);
        for j in 0..grid.nodes() {
            let x = grid.x(j);
            s.phi[j] = self.amplitude * (PI * x).sin();
            s.psi[j] = self.amplitude * (2.0 * PI * x).sin();
            s.theta[j] = self.heat_amplitude * (PI * x).cos() + self.theta_mean;
            s.q[j] = self.heat_amplitude * (PI * x).sin();
        }
        s.enforce_boundary();
        s
    }
}

/// The semi-discrete operator: `U' = F(U)`.
#[derive(Debug, Clone)]
pub struct Semidiscrete {
    params: PhysicalParams,
    grid: Grid,
    profile: DampingProfile,
}

impl Semidiscrete {
    pub fn new(
        params: PhysicalParams,
        grid: Grid,
        profile: DampingProfile,
    ) -> Result<Self, SolverError> {
        params.validate()?;
        if profile.samples().len() != grid.nodes() {
            return Err(SolverError::Profile(format!(
                "{} samples for {} nodes",
                profile.samples().len(),
                grid.nodes()
            )));
        }
        Ok(Self {
            params,
            grid,
            profile,
        })
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn profile(&self) -> &DampingProfile {
        &self.profile
    }

    pub fn dim(&self) -> usize {
        FIELDS * self.grid.nodes()
    }

    /// Evaluates `F(y)` into `out` (both in the interleaved layout).
    pub fn rhs(&self, law: &DampingLaw, y: &[f64], out: &mut [f64]) -> Result<(), LawError> {
        let PhysicalParams {
            rho1,
            rho2,
            rho3,
            b,
            k,
            delta,
            tau,
            beta,
        } = self.params;
        let n = self.grid.cells();
        let h = self.grid.h();
        let a = self.profile.samples();
        let at = |j: usize, f: usize| y[idx(j, f)];
        let shear = |j: usize| (at(j + 1, PHI) - at(j, PHI)) / h + 0.5 * (at(j, PSI) + at(j + 1, PSI));
        let bend = |j: usize| (at(j + 1, PSI) - at(j, PSI)) / h;
        let flux = |j: usize| {
            if j == 0 || j == n {
                0.0
            } else {
                at(j, Q) + delta * at(j, W)
            }
        };

        out.iter_mut().for_each(|v| *v = 0.0);
        let mut c_left = shear(0);
        let mut s_left = bend(0);
        for j in 1..n {
            let c_right = shear(j);
            let s_right = bend(j);
            let dtheta = (at(j + 1, THETA) - at(j - 1, THETA)) / (2.0 * h);
            let wj = at(j, W);
            let damping = if a[j] == 0.0 { 0.0 } else { a[j] * law.eval_g(wj)? };
            out[idx(j, PHI)] = at(j, V);
            out[idx(j, V)] = k / rho1 * (c_right - c_left) / h;
            out[idx(j, PSI)] = wj;
            out[idx(j, W)] = (b * (s_right - s_left) / h
                - 0.5 * k * (c_left + c_right)
                - delta * dtheta
                - damping)
                / rho2;
            out[idx(j, Q)] = (-beta * at(j, Q) - dtheta) / tau;
            c_left = c_right;
            s_left = s_right;
        }
        out[idx(0, THETA)] = -flux(1) / (h * rho3);
        out[idx(n, THETA)] = flux(n - 1) / (h * rho3);
        for j in 1..n {
            out[idx(j, THETA)] = -(flux(j + 1) - flux(j - 1)) / (2.0 * h * rho3);
        }
        Ok(())
    }

    /// Nonzero entries `(row, col, value)` of the Jacobian of the linear part of `F`.
    pub fn linear_jacobian(&self) -> Vec<(usize, usize, f64)> {
        let PhysicalParams {
            rho1,
            rho2,
            rho3,
            b,
            k,
            delta,
            tau,
            beta,
        } = self.params;
        let n = self.grid.cells();
        let h = self.grid.h();
        let mut e = Vec::with_capacity(20 * (n + 1));
        for j in 1..n {
            e.push((idx(j, PHI), idx(j, V), 1.0));
            e.push((idx(j, PSI), idx(j, W), 1.0));

            let r = idx(j, V);
            let kr = k / rho1;
            e.push((r, idx(j - 1, PHI), kr / (h * h)));
            e.push((r, idx(j, PHI), -2.0 * kr / (h * h)));
            e.push((r, idx(j + 1, PHI), kr / (h * h)));
            e.push((r, idx(j - 1, PSI), -kr / (2.0 * h)));
            e.push((r, idx(j + 1, PSI), kr / (2.0 * h)));

            let r = idx(j, W);
            e.push((r, idx(j - 1, PSI), (b / (h * h) - 0.25 * k) / rho2));
            e.push((r, idx(j, PSI), (-2.0 * b / (h * h) - 0.5 * k) / rho2));
            e.push((r, idx(j + 1, PSI), (b / (h * h) - 0.25 * k) / rho2));
            e.push((r, idx(j - 1, PHI), k / (2.0 * h * rho2)));
            e.push((r, idx(j + 1, PHI), -k / (2.0 * h * rho2)));
            e.push((r, idx(j - 1, THETA), delta / (2.0 * h * rho2)));
            e.push((r, idx(j + 1, THETA), -delta / (2.0 * h * rho2)));

            let r = idx(j, Q);
            e.push((r, idx(j, Q), -beta / tau));
            e.push((r, idx(j - 1, THETA), 1.0 / (2.0 * h * tau)));
            e.push((r, idx(j + 1, THETA), -1.0 / (2.0 * h * tau)));
        }
        let mut flux = |row: usize, m: usize, coef: f64| {
            if m >= 1 && m < n {
                e.push((row, idx(m, Q), coef));
                e.push((row, idx(m, W), coef * delta));
            }
        };
        flux(idx(0, THETA), 1, -1.0 / (h * rho3));
        flux(idx(n, THETA), n - 1, 1.0 / (h * rho3));
        for j in 1..n {
            flux(idx(j, THETA), j + 1, -1.0 / (2.0 * h * rho3));
            flux(idx(j, THETA), j - 1, 1.0 / (2.0 * h * rho3));
        }
        e
    }

    /// `∂F_w/∂w` at each node: `−a_j g′(w_j)/ρ2` (zero at the ends).
    pub fn damping_jacobian(&self, law: &DampingLaw, y: &[f64]) -> Result<Vec<f64>, LawError> {
        let n = self.grid.cells();
        let a = self.profile.samples();
        let mut d = vec![0.0; n + 1];
        for j in 1..n {
            if a[j] != 0.0 {
                d[j] = -a[j] * law.g_prime(y[idx(j, W)])? / self.params.rho2;
            }
        }
        Ok(d)
    }
}

/// Outcome of one step: the new state vector and bookkeeping.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub iterations: usize,
    pub factorizations: usize,
    pub residual: f64,
    /// Dissipation rate evaluated at the midpoint state.
    pub midpoint_dissipation: f64,
}

/// Implicit midpoint rule `U⁺ = U + dt F((U + U⁺)/2)` solved by Newton's
/// method on the midpoint. The factorized Newton matrix is reused across
/// iterations and steps while it keeps contracting; for linear laws it is
/// factored once.
#[derive(Debug, Clone)]
pub struct Integrator {
    sd: Semidiscrete,
    law: DampingLaw,
    dt: f64,
    linear: Vec<(usize, usize, f64)>,
    lu: Option<BandLu>,
    work: Vec<f64>,
}

impl Integrator {
    pub fn new(sd: Semidiscrete, law: DampingLaw, dt: f64) -> Result<Self, SolverError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SolverError::Parameter {
                name: "dt",
                value: dt,
                requirement: "must be positive",
            });
        }
        let linear = sd.linear_jacobian();
        let work = vec![0.0; sd.dim()];
        Ok(Self {
            sd,
            law,
            dt,
            linear,
            lu: None,
            work,
        })
    }

    pub fn semidiscrete(&self) -> &Semidiscrete {
        &self.sd
    }

    pub fn law(&self) -> &DampingLaw {
        &self.law
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn factor_at(&mut self, y: &[f64]) -> Result<(), SolverError> {
        let n = self.sd.dim();
        let mut m = BandMatrix::zeros(n, KL, KU);
        let half = 0.5 * self.dt;
        for i in 0..n {
            m.add(i, i, 1.0 + LEVENBERG);
        }
        for &(r, c, v) in &self.linear {
            m.add(r, c, -half * v);
        }
        let d = self.sd.damping_jacobian(&self.law, y)?;
        for (j, dj) in d.iter().enumerate() {
            if *dj != 0.0 {
                m.add(idx(j, W), idx(j, W), -half * dj);
            }
        }
        self.lu = Some(m.factor()?);
        Ok(())
    }

    /// Residual `G(y) = y − u − (dt/2) F(y)` into `r`; returns `‖G‖∞`.
    fn residual(&mut self, u: &[f64], y: &[f64], r: &mut [f64]) -> Result<f64, LawError> {
        self.sd.rhs(&self.law, y, &mut self.work)?;
        let half = 0.5 * self.dt;
        let mut norm = 0.0f64;
        for i in 0..u.len() {
            r[i] = y[i] - u[i] - half * self.work[i];
            norm = norm.max(r[i].abs());
        }
        Ok(norm)
    }

    /// Advances the interleaved state `u` (at time `t`) by one step in place.
    pub fn step(&mut self, u: &mut [f64], t: f64) -> Result<StepInfo, SolverError> {
        let n = u.len();
        let scale = u.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let tol = NEWTON_TOL * scale;
        let linear_law = self.law.is_linear();

        // Explicit half-step predictor for the midpoint.
        self.sd.rhs(&self.law, u, &mut self.work)?;
        let mut y: Vec<f64> = u
            .iter()
            .zip(&self.work)
            .map(|(a, f)| a + 0.5 * self.dt * f)
            .collect();
        let mut r = vec![0.0; n];
        let mut norm = self.residual(u, &y, &mut r)?;
        let mut iterations = 0;
        let mut factorizations = 0;
        if self.lu.is_none() {
            self.factor_at(&y)?;
            factorizations += 1;
        }
        let mut prev = norm;
        while !(norm <= tol) {
            if iterations >= NEWTON_MAX_ITER || !norm.is_finite() {
                return Err(if norm.is_finite() {
                    SolverError::Newton {
                        t,
                        iterations,
                        residual: norm,
                    }
                } else {
                    SolverError::Diverged { t }
                });
            }
            r.iter_mut().for_each(|v| *v = -*v);
            self.lu.as_ref().expect("factored").solve_in_place(&mut r);
            for (yi, di) in y.iter_mut().zip(&r) {
                *yi += di;
            }
            // Pivoting can leave roundoff in the trivially constrained rows.
            let last = n / FIELDS - 1;
            for j in [0, last] {
                for f in [PHI, V, PSI, W, Q] {
                    y[idx(j, f)] = 0.0;
                }
            }
            iterations += 1;
            norm = self.residual(u, &y, &mut r)?;
            // Poor contraction: refresh the matrix at the current iterate.
            if !linear_law && norm > 0.25 * prev && norm > tol {
                self.factor_at(&y)?;
                factorizations += 1;
            }
            prev = norm;
        }
        let midpoint_dissipation = energy::dissipation_packed(&self.sd, &self.law, &y)?;
        for i in 0..n {
            u[i] = 2.0 * y[i] - u[i];
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Diverged { t: t + self.dt });
        }
        Ok(StepInfo {
            iterations,
            factorizations,
            residual: norm,
            midpoint_dissipation,
        })
    }
}

/// Everything needed to integrate one trajectory.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub semidiscrete: Semidiscrete,
    pub law: DampingLaw,
    pub dt: f64,
    pub final_time: f64,
    pub sample_every: usize,
    /// Reference temperature for the shifted energy; `None` uses the
    /// trapezoid mean of the initial temperature.
    pub theta_ref: Option<f64>,
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<EnergyRecord>,
    /// Per-step energy balance, for the dissipation audit.
    pub balances: Vec<StepBalance>,
    pub snapshots: Vec<BeamState>,
    pub final_state: BeamState,
    pub theta_ref: f64,
    pub steps: usize,
    pub newton_iterations: usize,
    pub factorizations: usize,
}

pub fn run(setup: &RunSetup, initial: &BeamState) -> Result<RunOutput, SolverError> {
    let sd = &setup.semidiscrete;
    if initial.nodes() != sd.grid().nodes() {
        return Err(SolverError::InitialData(format!(
            "{} nodes given, grid has {}",
            initial.nodes(),
            sd.grid().nodes()
        )));
    }
    if !initial.satisfies_boundary() {
        return Err(SolverError::InitialData(
            "phi, v, psi, w and q must vanish at x = 0 and x = 1".into(),
        ));
    }
    if setup.sample_every == 0 {
        return Err(SolverError::Parameter {
            name: "sample_every",
            value: 0.0,
            requirement: "must be at least 1",
        });
    }
    if !(setup.final_time > 0.0) {
        return Err(SolverError::Parameter {
            name: "T",
            value: setup.final_time,
            requirement: "must be positive",
        });
    }
    let steps = (setup.final_time / setup.dt).round().max(1.0) as usize;
    let mut integrator = Integrator::new(sd.clone(), setup.law.clone(), setup.dt)?;
    let theta_ref = setup
        .theta_ref
        .unwrap_or_else(|| energy::theta_mean(initial));
    let params = *sd.params();
    let law = &setup.law;

    let mut u = initial.pack();
    let mut state = initial.clone();
    state.t = 0.0;
    let mut records = vec![energy::record(&state, sd, law, theta_ref)?];
    let mut balances = Vec::with_capacity(steps);
    let mut snapshots = Vec::new();
    let mut pending: Vec<f64> = setup.snapshot_times.clone();
    pending.sort_by(f64::total_cmp);
    pending.reverse();
    let take_snapshots = |pending: &mut Vec<f64>, snaps: &mut Vec<BeamState>, s: &BeamState| {
        while pending.last().is_some_and(|&ts| ts <= s.t + 1e-9 * setup.dt) {
            pending.pop();
            snaps.push(s.clone());
        }
    };
    take_snapshots(&mut pending, &mut snapshots, &state);

    let mut e_before = energy::total_energy(&state, &params);
    let mut newton_iterations = 0;
    let mut factorizations = 0;
    for n in 0..steps {
        let t = n as f64 * setup.dt;
        let info = integrator.step(&mut u, t)?;
        newton_iterations += info.iterations;
        factorizations += info.factorizations;
        let t_next = (n + 1) as f64 * setup.dt;
        state = BeamState::unpack(t_next, &u);
        let e_after = energy::total_energy(&state, &params);
        balances.push(StepBalance {
            t,
            dt: setup.dt,
            e_before,
            e_after,
            midpoint_dissipation: info.midpoint_dissipation,
        });
        e_before = e_after;
        if (n + 1) % setup.sample_every == 0 || n + 1 == steps {
            records.push(energy::record(&state, sd, law, theta_ref)?);
        }
        take_snapshots(&mut pending, &mut snapshots, &state);
    }
    Ok(RunOutput {
        records,
        balances,
        snapshots,
        final_state: state,
        theta_ref,
        steps,
        newton_iterations,
        factorizations,
    })
}

pub fn write_snapshot(dir: &Path, state: &BeamState) -> Result<std::path::PathBuf, SolverError> {
    let path = dir.join(format!("snapshot_{}.csv", format_time(state.t)));
    std::fs::write(&path, state.to_csv())
        .map_err(|e| SolverError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Compact, filename-safe rendering of a time value.
pub fn format_time(t: f64) -> String {
    let s = format!("{t:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() {
        "0".into()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn setup(n: usize, params: PhysicalParams, profile: fn(&Grid) -> DampingProfile) -> Semidiscrete {
        let grid = Grid::new(n).unwrap();
        Semidiscrete::new(params, grid, profile(&grid)).unwrap()
    }

    #[test]
    fn stability_number_examples() {
        let p = PhysicalParams {
            rho1: 1.0,
            rho3: 1.0,
            k: 1.0,
            b: 2.5,
            rho2: 2.5,
            delta: 0.0,
            tau: 7.0,
            beta: 1.0,
        };
        assert_eq!(compute_stability_number(&p), 0.0);
        let ones = PhysicalParams::default();
        assert_eq!(compute_stability_number(&ones), -1.0);
        let equal_speeds = PhysicalParams {
            rho1: 2.0,
            k: 4.0,
            rho2: 1.0,
            b: 2.0,
            delta: 0.3,
            ..ones
        };
        assert!(compute_stability_number(&equal_speeds) < 0.0);
    }

    #[test]
    fn negative_coefficients_are_rejected() {
        let p = PhysicalParams {
            rho1: -1.0,
            ..Default::default()
        };
        assert!(matches!(
            p.validate(),
            Err(SolverError::Parameter { name: "rho1", .. })
        ));
        assert!(Grid::new(7).is_err());
    }

    #[test]
    fn zero_state_is_an_equilibrium() {
        let sd = setup(16, PhysicalParams::default(), DampingProfile::global);
        let law = DampingLaw::power(3.0).unwrap();
        let y = vec![0.0; sd.dim()];
        let mut f = vec![1.0; sd.dim()];
        sd.rhs(&law, &y, &mut f).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));

        let mut integ = Integrator::new(sd, law, 0.1).unwrap();
        let mut u = y.clone();
        integ.step(&mut u, 0.0).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_temperature_is_steady() {
        let sd = setup(20, PhysicalParams::default(), DampingProfile::global);
        let mut s = BeamState::zeros(sd.grid());
        s.theta.iter_mut().for_each(|v| *v = 0.7);
        let mut f = vec![0.0; sd.dim()];
        sd.rhs(&DampingLaw::linear(1.0), &s.pack(), &mut f).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
    }

    /// `(φ_x + ψ)_x` at the mid-node for `φ = sin(πx)` converges to `−π²` at second order.
    #[test]
    fn shear_operator_is_second_order() {
        use std::f64::consts::PI;
        let params = PhysicalParams::default();
        let errs: Vec<f64> = [64, 128, 256]
            .iter()
            .map(|&n| {
                let sd = setup(n, params, DampingProfile::none);
                let mut s = BeamState::zeros(sd.grid());
                for j in 0..=n {
                    s.phi[j] = (PI * sd.grid().x(j)).sin();
                }
                let mut f = vec![0.0; sd.dim()];
                sd.rhs(&DampingLaw::linear(1.0), &s.pack(), &mut f).unwrap();
                (f[idx(n / 2, V)] + PI * PI).abs()
            })
            .collect();
        for pair in errs.windows(2) {
            let order = (pair[0] / pair[1]).log2();
            assert!((order - 2.0).abs() < 0.05, "order {order}");
        }
    }

    #[test]
    fn linear_jacobian_matches_rhs() {
        let params = PhysicalParams {
            rho1: 1.3,
            rho2: 0.7,
            rho3: 1.1,
            b: 2.0,
            k: 0.9,
            delta: 0.4,
            tau: 0.3,
            beta: 0.8,
        };
        let sd = setup(12, params, DampingProfile::none);
        let mut y: Vec<f64> = (0..sd.dim()).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let mut s = BeamState::unpack(0.0, &y);
        s.enforce_boundary();
        y = s.pack();
        let mut f = vec![0.0; sd.dim()];
        sd.rhs(&DampingLaw::linear(1.0), &y, &mut f).unwrap();
        let mut jy = vec![0.0; sd.dim()];
        for (r, c, v) in sd.linear_jacobian() {
            jy[r] += v * y[c];
        }
        for (a, b) in f.iter().zip(&jy) {
            assert!((a - b).abs() <= 1e-11 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn conservative_step_preserves_energy() {
        let params = PhysicalParams {
            delta: 0.0,
            ..Default::default()
        };
        let sd = setup(64, params, DampingProfile::none);
        let init = DefaultInitialData {
            heat_amplitude: 0.0,
            ..Default::default()
        }
        .state(sd.grid());
        let e0 = energy::total_energy(&init, &params);
        let mut u = init.pack();
        let mut integ = Integrator::new(sd, DampingLaw::linear(1.0), 1e-2).unwrap();
        integ.step(&mut u, 0.0).unwrap();
        let e1 = energy::total_energy(&BeamState::unpack(0.01, &u), &params);
        assert_relative_eq!(e1, e0, max_relative = 1e-12);
    }

    #[test]
    fn linear_damping_balance_is_exact() {
        let params = PhysicalParams::default();
        let sd = setup(64, params, DampingProfile::global);
        let init = DefaultInitialData::default().state(sd.grid());
        let mut u = init.pack();
        let e0 = energy::total_energy(&init, &params);
        let mut integ = Integrator::new(sd, DampingLaw::linear(1.0), 1e-2).unwrap();
        let info = integ.step(&mut u, 0.0).unwrap();
        let e1 = energy::total_energy(&BeamState::unpack(0.01, &u), &params);
        assert!((e1 - e0 + 0.01 * info.midpoint_dissipation).abs() <= 1e-10 * e0);
    }

    #[test]
    fn snapshot_csv_round_trip() {
        let grid = Grid::new(10).unwrap();
        let s = DefaultInitialData::default().state(&grid);
        let back = BeamState::from_csv(&s.to_csv()).unwrap();
        assert_eq!(back.phi, s.phi);
        assert_eq!(back.theta, s.theta);
        assert_eq!(format_time(12.5), "12.5");
        assert_eq!(format_time(0.0), "0");
    }

    #[test]
    fn bump_profile_is_supported_inside_omega() {
        let grid = Grid::new(100).unwrap();
        let p = DampingProfile::bump(&grid, 0.3, 0.7).unwrap();
        assert_relative_eq!(p.alpha(), 1.0);
        for j in 0..=100 {
            let x = grid.x(j);
            assert_eq!(p.samples()[j] > 0.0, x > 0.3 + 1e-12 && x < 0.7 - 1e-12, "x={x}");
        }
        assert!(!DampingProfile::none(&grid).has_support());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn steps_keep_boundary_and_theta_mean(
            amp in 0.01f64..1.0,
            mean in -1.0f64..1.0,
            p in 1.5f64..4.0,
        ) {
            let sd = setup(24, PhysicalParams { tau: 0.3, ..Default::default() }, DampingProfile::global);
            let init = DefaultInitialData { amplitude: amp, heat_amplitude: amp, theta_mean: mean }
                .state(sd.grid());
            let m0 = energy::theta_mean(&init);
            let mut u = init.pack();
            let mut integ = Integrator::new(sd, DampingLaw::power(p).unwrap(), 0.05).unwrap();
            for n in 0..10 {
                integ.step(&mut u, n as f64 * 0.05).unwrap();
            }
            let s = BeamState::unpack(0.5, &u);
            prop_assert!(s.satisfies_boundary());
            prop_assert!((energy::theta_mean(&s) - m0).abs() <= 1e-13);
        }
    }
}
