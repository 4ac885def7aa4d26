//! Damping laws `g`, the convexity surrogate `Ψ(x) = √x g(√x)`, the ratio
//! `Λ(x) = Ψ(x) / (x Ψ'(x))`, and sampled validators for the growth and
//! convexity hypotheses the lower-bound machinery relies on.
//!
//! A [`DampingLaw`] is immutable after construction and is `Send + Sync`, so a
//! single law can be shared by concurrent simulation runs.

use std::path::Path;

use thiserror::Error;

use crate::quad;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LawError {
    #[error("law `{law}` is not defined at s = {s:e} (non-finite value)")]
    Domain { law: String, s: f64 },
    #[error("{what} requires {requirement}, got {value:e}")]
    Argument {
        what: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("Lambda is singular at x = {x:e}: Psi'(x) = 0")]
    Singular { x: f64 },
    #[error("invalid damping table: {0}")]
    Table(String),
    #[error("invalid law parameter: {0}")]
    Parameter(String),
}

/// Tabulated `g` on `s >= 0`, strictly increasing abscissae, linear
/// interpolation, last-segment extrapolation, odd extension to `s < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    s: Vec<f64>,
    g: Vec<f64>,
}

impl Table {
    pub fn new(mut s: Vec<f64>, mut g: Vec<f64>) -> Result<Self, LawError> {
        if s.len() != g.len() {
            return Err(LawError::Table("column lengths differ".into()));
        }
        if s.is_empty() {
            return Err(LawError::Table("empty table".into()));
        }
        if s.iter().chain(g.iter()).any(|v| !v.is_finite()) {
            return Err(LawError::Table("non-finite entry".into()));
        }
        if s[0] < 0.0 {
            return Err(LawError::Table(
                "abscissae must be nonnegative (odd extension covers s < 0)".into(),
            ));
        }
        if s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LawError::Table("s column must be strictly increasing".into()));
        }
        if s[0] == 0.0 {
            if g[0] != 0.0 {
                return Err(LawError::Table("g(0) must be 0".into()));
            }
        } else {
            s.insert(0, 0.0);
            g.insert(0, 0.0);
        }
        if s.len() < 2 {
            return Err(LawError::Table("need at least one positive abscissa".into()));
        }
        Ok(Self { s, g })
    }

    /// Reads a two-column CSV `s,g` (an optional non-numeric header line is skipped).
    pub fn from_csv(path: &Path) -> Result<Self, LawError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LawError::Table(format!("{}: {e}", path.display())))?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<Self, LawError> {
        let mut s = Vec::new();
        let mut g = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (a, b) = match (cols.next(), cols.next(), cols.next()) {
                (Some(a), Some(b), None) => (a, b),
                _ => {
                    return Err(LawError::Table(format!(
                        "line {}: expected two columns",
                        lineno + 1
                    )))
                }
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    s.push(x);
                    g.push(y);
                }
                _ if s.is_empty() && lineno == 0 => continue,
                _ => {
                    return Err(LawError::Table(format!(
                        "line {}: not a number",
                        lineno + 1
                    )))
                }
            }
        }
        Self::new(s, g)
    }

    fn segment(&self, s: f64) -> usize {
        let n = self.s.len();
        match self.s.partition_point(|&x| x <= s) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        }
    }

    fn eval(&self, s: f64) -> f64 {
        let i = self.segment(s);
        let slope = (self.g[i + 1] - self.g[i]) / (self.s[i + 1] - self.s[i]);
        self.g[i] + slope * (s - self.s[i])
    }

    fn slope(&self, s: f64) -> f64 {
        let i = self.segment(s);
        (self.g[i + 1] - self.g[i]) / (self.s[i + 1] - self.s[i])
    }
}

/// The functional form of a law on `s >= 0`; every kind is extended oddly.
#[derive(Debug, Clone, PartialEq)]
pub enum LawKind {
    /// `g(s) = c s`.
    Linear { c: f64 },
    /// `g(s) = sign(s) |s|^p`, `p > 1`.
    Power { p: f64 },
    /// `g(s) = (1/s) exp(-(ln s)^2)` for `s > 0`, `g(0) = 0`.
    Example2,
    Table(Table),
}

impl LawKind {
    fn eval_pos(&self, s: f64) -> f64 {
        debug_assert!(s >= 0.0);
        match self {
            LawKind::Linear { c } => c * s,
            LawKind::Power { p } => s.powf(*p),
            LawKind::Example2 => {
                if s == 0.0 {
                    0.0
                } else {
                    let l = s.ln();
                    (-l * l - l).exp()
                }
            }
            LawKind::Table(t) => t.eval(s),
        }
    }

    fn eval(&self, s: f64) -> f64 {
        if s < 0.0 {
            -self.eval_pos(-s)
        } else {
            self.eval_pos(s)
        }
    }

    /// Analytic derivative (even function of `s`).
    fn derivative(&self, s: f64) -> f64 {
        let a = s.abs();
        match self {
            LawKind::Linear { c } => *c,
            LawKind::Power { p } => {
                if a == 0.0 {
                    if *p > 1.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    p * a.powf(p - 1.0)
                }
            }
            LawKind::Example2 => {
                if a == 0.0 {
                    0.0
                } else {
                    let l = a.ln();
                    self.eval_pos(a) * (-2.0 * l - 1.0) / a
                }
            }
            LawKind::Table(t) => t.slope(a),
        }
    }
}

/// A scalar damping law with its hypothesis metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct DampingLaw {
    name: String,
    kind: LawKind,
    g0: Option<LawKind>,
    r0: f64,
    linear_near_origin: bool,
    analytic_derivative: bool,
}

const FD_REL_STEP: f64 = 1e-6;

impl DampingLaw {
    pub fn linear(c: f64) -> Self {
        // g0(s) = m s with m = min(|c|, 1/|c|) makes the sandwich
        // g0(|s|) <= |g(s)| <= g0^{-1}(|s|) hold for every slope c.
        let m = c.abs().min(1.0 / c.abs());
        Self {
            name: format!("linear(c={c})"),
            kind: LawKind::Linear { c },
            g0: Some(LawKind::Linear { c: m }),
            r0: 1.0,
            linear_near_origin: true,
            analytic_derivative: true,
        }
    }

    pub fn power(p: f64) -> Result<Self, LawError> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(LawError::Parameter(format!("power law needs p > 1, got {p}")));
        }
        Ok(Self {
            name: format!("power(p={p})"),
            kind: LawKind::Power { p },
            g0: None,
            r0: 1.0,
            linear_near_origin: false,
            analytic_derivative: true,
        })
    }

    /// The law of the second worked example. `r0 = e^{-3/2}` keeps `[0, r0^2]`
    /// inside the region `x < exp(-(1 + √3))` where `Ψ` is convex.
    pub fn example2() -> Self {
        Self {
            name: "example2".into(),
            kind: LawKind::Example2,
            g0: None,
            r0: (-1.5f64).exp(),
            linear_near_origin: false,
            analytic_derivative: true,
        }
    }

    pub fn table(table: Table) -> Self {
        Self {
            name: "table".into(),
            kind: LawKind::Table(table),
            g0: None,
            r0: 1.0,
            linear_near_origin: false,
            analytic_derivative: true,
        }
    }

    pub fn with_r0(mut self, r0: f64) -> Result<Self, LawError> {
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(LawError::Parameter(format!("r0 must be positive, got {r0}")));
        }
        self.r0 = r0;
        Ok(self)
    }

    pub fn with_g0(mut self, g0: LawKind) -> Self {
        self.g0 = Some(g0);
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Drops the analytic derivative; `g'` then comes from central differences.
    pub fn without_derivative(mut self) -> Self {
        self.analytic_derivative = false;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn linear_near_origin(&self) -> bool {
        self.linear_near_origin
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.analytic_derivative
    }

    /// True when `g` is exactly linear, so its Jacobian never changes.
    pub fn is_linear(&self) -> bool {
        matches!(self.kind, LawKind::Linear { .. })
    }

    fn finite(&self, s: f64, v: f64) -> Result<f64, LawError> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(LawError::Domain {
                law: self.name.clone(),
                s,
            })
        }
    }

    pub fn eval_g(&self, s: f64) -> Result<f64, LawError> {
        self.finite(s, self.kind.eval(s))
    }

    /// `g'(s)`: analytic when available, else a central difference.
    pub fn g_prime(&self, s: f64) -> Result<f64, LawError> {
        if self.analytic_derivative {
            return self.finite(s, self.kind.derivative(s));
        }
        let h = FD_REL_STEP * s.abs().max(1e-8);
        let d = (self.kind.eval(s + h) - self.kind.eval(s - h)) / (2.0 * h);
        self.finite(s, d)
    }

    pub fn eval_g0(&self, s: f64) -> Result<f64, LawError> {
        let v = match &self.g0 {
            Some(k) => k.eval(s),
            None => self.kind.eval(s),
        };
        self.finite(s, v)
    }

    /// `g0^{-1}(y)` for `y >= 0` by bisection; `None` when `g0` does not reach `y`.
    pub fn g0_inverse(&self, y: f64) -> Option<f64> {
        if y <= 0.0 {
            return Some(0.0);
        }
        let mut hi = y.max(1.0);
        let mut reached = false;
        for _ in 0..80 {
            match self.eval_g0(hi) {
                Ok(v) if v >= y => {
                    reached = true;
                    break;
                }
                Ok(_) => hi *= 2.0,
                Err(_) => return None,
            }
        }
        if !reached {
            return None;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval_g0(mid).ok()? < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    pub fn eval_psi(&self, x: f64) -> Result<f64, LawError> {
        if !(x >= 0.0) {
            return Err(LawError::Argument {
                what: "Psi",
                requirement: "x >= 0",
                value: x,
            });
        }
        if x == 0.0 {
            return Ok(0.0);
        }
        let r = x.sqrt();
        let v = r * self.kind.eval_pos(r);
        self.finite(r, v)
    }

    pub fn eval_psi_prime(&self, x: f64) -> Result<f64, LawError> {
        if !(x > 0.0) {
            return Err(LawError::Argument {
                what: "Psi'",
                requirement: "x > 0",
                value: x,
            });
        }
        let v = if self.analytic_derivative {
            let r = x.sqrt();
            // d/dx [r g(r)] with r = √x.
            match self.kind {
                LawKind::Example2 => {
                    let l = x.ln();
                    -l / (2.0 * x) * (-0.25 * l * l).exp()
                }
                _ => self.kind.eval_pos(r) / (2.0 * r) + 0.5 * self.kind.derivative(r),
            }
        } else {
            let h = FD_REL_STEP * x;
            let (a, b) = (self.eval_psi(x - h)?, self.eval_psi(x + h)?);
            (b - a) / (2.0 * h)
        };
        self.finite(x, v)
    }

    pub fn eval_lambda(&self, x: f64) -> Result<f64, LawError> {
        let r0sq = self.r0 * self.r0;
        if !(x > 0.0 && x <= r0sq * (1.0 + 1e-12)) {
            return Err(LawError::Argument {
                what: "Lambda",
                requirement: "0 < x <= r0^2",
                value: x,
            });
        }
        let dpsi = self.eval_psi_prime(x)?;
        if dpsi == 0.0 {
            return Err(LawError::Singular { x });
        }
        if let LawKind::Power { p } = self.kind {
            // Same quotient with the common factor r^{p+1} cancelled.
            if self.analytic_derivative {
                return Ok(1.0 / (0.5 + 0.5 * p));
            }
        }
        Ok(self.eval_psi(x)? / (x * dpsi))
    }

    /// Sampled check of the monotonicity / sandwich / linear-growth hypothesis.
    pub fn check_h1(&self, eps: f64, samples: usize) -> Result<H1Report, LawError> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(LawError::Argument {
                what: "check_h1",
                requirement: "0 < eps < 1",
                value: eps,
            });
        }
        if samples < 10 {
            return Err(LawError::Argument {
                what: "check_h1",
                requirement: "samples >= 10",
                value: samples as f64,
            });
        }
        let hi = 1.0 / eps;
        let lo = eps * 1e-6;
        let positive = log_grid(lo, hi, samples);
        let mut grid: Vec<f64> = positive.iter().rev().map(|s| -s).collect();
        grid.push(0.0);
        grid.extend_from_slice(&positive);

        let mut report = H1Report {
            eps,
            samples: grid.len(),
            monotone: true,
            first_violation: None,
            sandwich: None,
            sandwich_note: None,
            c1: f64::INFINITY,
            c2: 0.0,
            passed: false,
        };

        let mut prev: Option<f64> = None;
        for &s in &grid {
            let gs = self.eval_g(s)?;
            if let Some(gp) = prev {
                if gs < gp - 1e-14 * gp.abs().max(gs.abs()) {
                    report.monotone = false;
                    report.first_violation.get_or_insert(s);
                }
            }
            prev = Some(gs);
            if s.abs() >= eps {
                let ratio = gs.abs() / s.abs();
                report.c1 = report.c1.min(ratio);
                report.c2 = report.c2.max(ratio);
            }
        }

        // g0 must be increasing on the sandwich range to be invertible.
        let small: Vec<f64> = positive.iter().copied().filter(|&s| s <= eps).collect();
        let g0_increasing = small
            .windows(2)
            .all(|w| matches!((self.eval_g0(w[0]), self.eval_g0(w[1])), (Ok(a), Ok(b)) if b > a));
        if !g0_increasing {
            report.sandwich = Some(false);
            report.sandwich_note = Some("g0 is not increasing on (0, eps]".into());
        } else {
            let mut ok = true;
            for &s in &small {
                let gs = self.eval_g(s)?.abs();
                let lower = self.eval_g0(s)?;
                let Some(upper) = self.g0_inverse(s) else {
                    ok = false;
                    report.sandwich_note =
                        Some(format!("g0 is not invertible at {s:e} on the sampled range"));
                    break;
                };
                let slack = 1e-12 * gs.max(lower).max(upper);
                if lower > gs + slack || gs > upper + slack {
                    ok = false;
                    report.sandwich_note = Some(format!(
                        "g0(|s|) <= |g(s)| <= g0^-1(|s|) violated at s = {s:e}"
                    ));
                    break;
                }
            }
            report.sandwich = Some(ok);
        }
        report.passed = report.monotone
            && report.sandwich == Some(true)
            && report.c1 > 0.0
            && report.c2.is_finite();
        Ok(report)
    }

    pub fn check_h2(&self) -> Result<H2Report, LawError> {
        self.check_h2_with(&H2Options::for_law(self))
    }

    pub fn check_h2_with(&self, opts: &H2Options) -> Result<H2Report, LawError> {
        let r0sq = self.r0 * self.r0;

        // (a) slopes of Ψ between consecutive grid points must increase strictly.
        let mut xs = vec![0.0];
        xs.extend(log_grid(r0sq * 1e-12, r0sq, 240));
        let psi: Vec<f64> = xs
            .iter()
            .map(|&x| self.eval_psi(x))
            .collect::<Result<_, _>>()?;
        let slopes: Vec<f64> = (1..xs.len())
            .map(|i| (psi[i] - psi[i - 1]) / (xs[i] - xs[i - 1]))
            .collect();
        let mut strictly_convex = true;
        let mut convexity_violation = None;
        for (i, w) in slopes.windows(2).enumerate() {
            let scale = w[0].abs().max(w[1].abs());
            if !(w[1] - w[0] > 1e-9 * scale) {
                strictly_convex = false;
                convexity_violation = Some(xs[i + 1]);
                break;
            }
        }

        // (b) Λ towards 0.
        let probe: Vec<f64> = (1..=12).map(|j| r0sq * 10f64.powi(-j)).collect();
        let lambda: Vec<f64> = probe
            .iter()
            .map(|&x| self.eval_lambda(x))
            .collect::<Result<_, _>>()?;
        let lambda_limits = LimitEstimate::from_tail(&lambda);
        let branch_ratio = lambda_limits.resolved
            && lambda_limits.inf > 0.0
            && lambda_limits.sup < 1.0;

        // (c) liminf of Ψ(μx)/(μx) · ∫_x^{z1} dy/Ψ(y), paired with limsup Λ < 1.
        let mut product = Vec::with_capacity(probe.len());
        for &x in &probe {
            if x >= opts.z1 {
                continue;
            }
            let integral = quad::integral_inverse_psi(self, x, opts.z1, 1e-10)
                .map_err(|e| LawError::Parameter(format!("H2 integral: {e}")))?;
            let mx = opts.mu * x;
            product.push(self.eval_psi(mx)? / mx * integral);
        }
        let product_limits = LimitEstimate::from_tail(&product);
        let branch_integral =
            !product.is_empty() && product_limits.inf > 0.0 && lambda_limits.sup < 1.0;

        let passed = strictly_convex && (branch_ratio || branch_integral);
        Ok(H2Report {
            r0: self.r0,
            strictly_convex,
            convexity_violation,
            lambda_samples: probe.iter().copied().zip(lambda).collect(),
            lambda_liminf: lambda_limits.inf,
            lambda_limsup: lambda_limits.sup,
            lambda_resolved: lambda_limits.resolved,
            branch_ratio,
            mu: opts.mu,
            z1: opts.z1,
            product_liminf: product_limits.inf,
            branch_integral,
            passed,
        })
    }
}

/// `(mu, z1)` of the alternative convexity branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H2Options {
    pub mu: f64,
    pub z1: f64,
}

impl H2Options {
    pub fn for_law(law: &DampingLaw) -> Self {
        Self {
            mu: 2.0,
            z1: 0.5 * law.r0 * law.r0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct H1Report {
    pub eps: f64,
    pub samples: usize,
    pub monotone: bool,
    pub first_violation: Option<f64>,
    /// `None` only before the check ran; `Some(false)` carries a note.
    pub sandwich: Option<bool>,
    pub sandwich_note: Option<String>,
    pub c1: f64,
    pub c2: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct H2Report {
    pub r0: f64,
    pub strictly_convex: bool,
    pub convexity_violation: Option<f64>,
    pub lambda_samples: Vec<(f64, f64)>,
    pub lambda_liminf: f64,
    pub lambda_limsup: f64,
    pub lambda_resolved: bool,
    pub branch_ratio: bool,
    pub mu: f64,
    pub z1: f64,
    pub product_liminf: f64,
    pub branch_integral: bool,
    pub passed: bool,
}

/// Finite-sample stand-in for liminf/limsup along a sequence ordered towards
/// the limit point. The limit counts as resolved when the last three samples
/// agree to 1% relative; an unresolved monotone tail is extrapolated
/// (decreasing to 0 for the inf, increasing to +inf for the sup).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitEstimate {
    pub inf: f64,
    pub sup: f64,
    pub resolved: bool,
}

impl LimitEstimate {
    pub fn from_tail(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self {
                inf: f64::NAN,
                sup: f64::NAN,
                resolved: false,
            };
        }
        let inf = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let sup = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tail = &samples[samples.len().saturating_sub(3)..];
        let tmax = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tmin = tail.iter().copied().fold(f64::INFINITY, f64::min);
        let resolved = tail.len() == 3 && (tmax - tmin) <= 0.01 * tmax.abs().max(tmin.abs());
        if resolved {
            return Self { inf, sup, resolved };
        }
        let decreasing = tail.windows(2).all(|w| w[1] < w[0]);
        let increasing = tail.windows(2).all(|w| w[1] > w[0]);
        Self {
            inf: if decreasing { 0.0 } else { inf },
            sup: if increasing { f64::INFINITY } else { sup },
            resolved,
        }
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}
