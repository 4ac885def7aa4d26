//! One scenario end to end: simulate, evaluate energies and envelopes, grade
//! the verdicts and write `energy.csv`, `envelopes.csv`, `report.txt`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::energy::{self, AuditReport};
use crate::laws::{log_grid, DampingLaw, H1Report, H2Options, H2Report, LawKind};
use crate::rates::{self, EnvelopeParams, LemmaReport, RatesError};
use crate::solver::{
    self, compute_stability_number, BeamState, RunOutput, RunSetup, Semidiscrete,
};

use super::config::{InitChoice, RunConfig, ThetaRef};

pub const ENERGY_SLACK: f64 = 1e-10;
pub const ESTAR_SLACK: f64 = 1e-8;
pub const THETA_MEAN_TOL: f64 = 1e-10;
pub const DRIFT_TOL: f64 = 1e-8;
pub const AUDIT_TOL: f64 = 1e-6;
pub const DOMINANCE_SLACK: f64 = 1e-9;
pub const EXPONENT_REL_TOL: f64 = 0.02;
pub const ASYMPTOTE_BAND: (f64, f64) = (0.95, 1.05);
/// Elapsed-time window for envelope exponents, evaluated beyond the run.
pub const RATE_WINDOW: (f64, f64) = (1e3, 1e6);
pub const ASYMPTOTE_TIME: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

impl Status {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::NotApplicable => "N/A",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateCheck {
    pub label: String,
    pub value: f64,
    pub expected: f64,
    pub status: Status,
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub config: RunConfig,
    pub law: DampingLaw,
    pub stability_number: f64,
    pub alpha_a: f64,
    pub h0: bool,
    pub h1: H1Report,
    pub h2: H2Report,
    pub run: RunOutput,
    pub audit: AuditReport,
    pub gamma: f64,
    pub c1: f64,
    pub sigma: f64,
    pub t0: Result<(usize, f64), RatesError>,
    pub envelope: Option<EnvelopeParams>,
    pub calibration_note: Option<String>,
    /// `(t, envelope_K, envelope_psi)` on the record times.
    pub envelopes: Vec<(f64, Option<f64>, Option<f64>)>,
    pub dominance_min_ratio: Option<(f64, f64)>,
    pub lemma: Option<LemmaReport>,
    pub rate_checks: Vec<RateCheck>,
    pub diagnostics: Vec<String>,
    /// Verdicts that decide the exit status.
    pub verdicts: Vec<Verdict>,
}

impl ScenarioResult {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.status != Status::Fail)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }
}

fn initial_state(cfg: &RunConfig) -> Result<BeamState> {
    let grid = cfg.grid();
    match &cfg.init {
        InitChoice::Default(d) => Ok(d.state(&grid)),
        InitChoice::File(p) => {
            let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
            let s = BeamState::from_csv(&text).with_context(|| p.display().to_string())?;
            anyhow::ensure!(
                s.nodes() == grid.nodes(),
                "{}: {} nodes but N = {} needs {}",
                p.display(),
                s.nodes(),
                cfg.n,
                grid.nodes()
            );
            Ok(s)
        }
    }
}

/// Runs the simulation and all post-processing without touching the file system.
pub fn simulate(cfg: &RunConfig) -> Result<ScenarioResult> {
    let law = cfg.build_law().map_err(anyhow::Error::msg)?;
    let grid = cfg.grid();
    let profile = cfg.build_profile(&grid);
    let sd = Semidiscrete::new(cfg.params, grid, profile)?;
    let init = initial_state(cfg)?;
    let theta_ref = match cfg.theta_ref {
        ThetaRef::Mean => None,
        ThetaRef::LeftEnd => Some(init.theta[0]),
        ThetaRef::Value(v) => Some(v),
    };
    let setup = RunSetup {
        semidiscrete: sd.clone(),
        law: law.clone(),
        dt: cfg.dt,
        final_time: cfg.t_final,
        sample_every: cfg.sample_every,
        theta_ref,
        snapshot_times: cfg.snapshots.clone(),
    };
    let run = solver::run(&setup, &init)?;
    let p = cfg.params;
    let records = &run.records;
    let first = records[0];
    let last = *records.last().expect("at least the initial record");

    let r0 = law.r0();
    let h1 = law.check_h1(cfg.eps, 200)?;
    let h2 = law.check_h2_with(&H2Options {
        mu: cfg.mu,
        z1: cfg.z1.unwrap_or(0.5 * r0 * r0),
    })?;
    let audit = energy::audit_dissipation(&run.balances, AUDIT_TOL);
    let alpha_a = sd.profile().alpha();
    let gamma = rates::gamma_const(first.estar, p.rho2);
    let c1 = match cfg.c1 {
        Some(c) => c,
        None => rates::default_c1(&law)?,
    };
    let sigma = rates::sigma_const(alpha_a, p.rho2, p.beta, r0, p.tau, c1);
    let t0 = rates::detect_t0(records, gamma, r0);

    let mut verdicts = Vec::new();
    let mut diagnostics = Vec::new();

    let e0 = first.e;
    let bad = energy::first_increase(records.iter().map(|r| r.e), ENERGY_SLACK * e0);
    verdicts.push(Verdict {
        name: "energy nonincreasing",
        status: Status::from_bool(bad.is_none()),
        detail: match bad {
            None => format!("{} samples, slack {ENERGY_SLACK:e} E(0)", records.len()),
            Some(i) => format!("increase at t = {}", records[i].t),
        },
    });

    let es0 = first.estar;
    let bad = energy::first_increase(records.iter().map(|r| r.estar), ESTAR_SLACK * es0);
    verdicts.push(Verdict {
        name: "first-order energy nonincreasing",
        status: Status::from_bool(bad.is_none()),
        detail: match bad {
            None => format!("slack {ESTAR_SLACK:e} E*(0)"),
            Some(i) => format!(
                "increase at t = {} (E* = {:e} after {:e})",
                records[i].t,
                records[i].estar,
                records[i - 1].estar
            ),
        },
    });

    let mean_dev = records
        .iter()
        .map(|r| (r.theta_mean - first.theta_mean).abs())
        .fold(0.0, f64::max);
    verdicts.push(Verdict {
        name: "theta mean conserved",
        status: Status::from_bool(mean_dev <= THETA_MEAN_TOL),
        detail: format!("max |mean(t) - mean(0)| = {mean_dev:.3e} (tol {THETA_MEAN_TOL:e})"),
    });

    let conservative = run.balances.iter().all(|b| b.midpoint_dissipation == 0.0);
    let drift = records
        .iter()
        .map(|r| (r.e - e0).abs())
        .fold(0.0, f64::max)
        / e0.max(f64::MIN_POSITIVE);
    verdicts.push(Verdict {
        name: "energy conserved",
        status: if conservative {
            Status::from_bool(drift <= DRIFT_TOL)
        } else {
            Status::NotApplicable
        },
        detail: format!("max relative drift {drift:.3e} (tol {DRIFT_TOL:e}; checked only when D = 0)"),
    });

    verdicts.push(Verdict {
        name: "dissipation audit",
        status: Status::from_bool(audit.passed),
        detail: format!(
            "max |E(n+1) - E(n) + dt D(mid)| / E(0) = {:.3e} at t = {} over {} steps (tol {:e})",
            audit.max_residual, audit.worst_time, audit.steps, audit.threshold
        ),
    });

    // Envelopes.
    let mut envelope = None;
    let mut calibration_note = None;
    let mut envelopes: Vec<(f64, Option<f64>, Option<f64>)> =
        records.iter().map(|r| (r.t, None, None)).collect();
    let mut dominance_min_ratio = None;
    let mut lemma = None;
    let mut dominance = Verdict {
        name: "envelope dominance",
        status: Status::NotApplicable,
        detail: String::new(),
    };
    match &t0 {
        Err(e) => dominance.detail = format!("T0 not found: {e}"),
        Ok((i0, t0v)) => {
            let e_cal_t0 = records[*i0].ecal;
            let mut ep = EnvelopeParams {
                gamma,
                sigma,
                t0: *t0v,
                r0,
                c1,
                c_cal: 1.0,
                e_cal_t0,
            };
            if !(e_cal_t0 > 0.0 && gamma > 0.0 && sigma > 0.0) {
                dominance.detail = format!(
                    "degenerate constants (gamma = {gamma:e}, sigma = {sigma:e}, shifted energy at T0 = {e_cal_t0:e})"
                );
            } else {
                ep.c_cal = match cfg.c_cal {
                    Some(c) => c,
                    None => match rates::calibrate_c(&ep, &law, cfg.t1) {
                        Ok(c) => c,
                        Err(e) => {
                            calibration_note = Some(format!("calibration failed ({e}); using 1"));
                            1.0
                        }
                    },
                };
                let mut min_ratio = (f64::INFINITY, f64::NAN);
                let mut env_error = None;
                for (slot, r) in envelopes.iter_mut().zip(records).skip(*i0) {
                    match rates::lower_envelope_k(r.t, &ep, &law) {
                        Ok(v) => {
                            slot.1 = Some(v);
                            let ratio = r.ecal / v;
                            if ratio < min_ratio.0 {
                                min_ratio = (ratio, r.t);
                            }
                        }
                        Err(e) => {
                            env_error.get_or_insert(format!("t = {}: {e}", r.t));
                        }
                    }
                    slot.2 = rates::lower_envelope_psi(r.t, &ep, &law).ok();
                }
                dominance_min_ratio = Some(min_ratio);
                let ok = env_error.is_none() && min_ratio.0 >= 1.0 - DOMINANCE_SLACK;
                dominance.status = if h2.passed {
                    Status::from_bool(ok)
                } else {
                    Status::NotApplicable
                };
                dominance.detail = format!(
                    "min shifted energy / K envelope = {:.6} at t = {} for t >= T0 = {}{}{}",
                    min_ratio.0,
                    min_ratio.1,
                    t0v,
                    env_error.map(|e| format!("; envelope error {e}")).unwrap_or_default(),
                    if h2.passed { "" } else { "; convexity hypothesis fails, not graded" }
                );

                let elapsed: Vec<f64> = records[*i0..].iter().map(|r| r.t - t0v).collect();
                let upper = gamma * e_cal_t0.sqrt();
                if let Ok(sol) = rates::solve_comparison_ode(upper, sigma, &law, &elapsed) {
                    lemma = rates::lemma_bound_check(
                        &elapsed,
                        &sol.z,
                        &law,
                        cfg.r,
                        1.0 / ep.c_cal,
                        cfg.t1,
                    )
                    .ok();
                }
                envelope = Some(ep);
            }
        }
    }
    verdicts.push(dominance);

    // Rates.
    let mut rate_checks = Vec::new();
    if h2.passed {
        match law.kind() {
            LawKind::Power { p: pw } => {
                let expected = -4.0 / (pw - 1.0);
                let unit = EnvelopeParams {
                    gamma: 1.0,
                    sigma: 1.0,
                    t0: 0.0,
                    r0,
                    c1,
                    c_cal: 1.0,
                    e_cal_t0: 1.0,
                };
                let ep = envelope.unwrap_or(unit);
                let ts = log_grid(RATE_WINDOW.0, RATE_WINDOW.1, 61);
                let psi_series: Vec<(f64, f64)> = ts
                    .iter()
                    .filter_map(|&s| {
                        rates::lower_envelope_psi(ep.t0 + s, &ep, &law)
                            .ok()
                            .map(|v| (s, v))
                    })
                    .collect();
                if let Ok(slope) = rates::fit_decay_exponent(&psi_series, RATE_WINDOW) {
                    rate_checks.push(RateCheck {
                        label: format!(
                            "psi-envelope exponent vs elapsed time on [{:e}, {:e}]",
                            RATE_WINDOW.0, RATE_WINDOW.1
                        ),
                        value: slope,
                        expected,
                        status: Status::from_bool(
                            (slope - expected).abs() <= EXPONENT_REL_TOL * expected.abs(),
                        ),
                    });
                }
                if envelope.is_some() {
                    let k_series: Vec<(f64, f64)> = ts
                        .iter()
                        .filter_map(|&s| {
                            rates::lower_envelope_k(ep.t0 + s, &ep, &law)
                                .ok()
                                .map(|v| (s, v))
                        })
                        .collect();
                    if let Ok(slope) = rates::fit_decay_exponent(&k_series, RATE_WINDOW) {
                        diagnostics.push(format!(
                            "K-envelope exponent vs elapsed time on [{:e}, {:e}]: {slope:.4} (asymptotically {expected:.4})",
                            RATE_WINDOW.0, RATE_WINDOW.1
                        ));
                    }
                }
            }
            LawKind::Example2 => {
                let unit = EnvelopeParams {
                    gamma: 1.0,
                    sigma: 1.0,
                    t0: 0.0,
                    r0,
                    c1,
                    c_cal: 1.0,
                    e_cal_t0: 1.0,
                };
                let t = ASYMPTOTE_TIME;
                if let Ok(v) = rates::lower_envelope_psi(t, &unit, &law) {
                    let ratio = v.ln() / (-4.0 * t.ln().sqrt());
                    rate_checks.push(RateCheck {
                        label: format!(
                            "ln(psi envelope) / (-4 sqrt(ln t)) at t = {t:e} (gamma = C = 1, T0 = 0)"
                        ),
                        value: ratio,
                        expected: 1.0,
                        status: Status::from_bool(
                            ratio >= ASYMPTOTE_BAND.0 && ratio <= ASYMPTOTE_BAND.1,
                        ),
                    });
                }
                if let Some(ep) = envelope {
                    if let Ok(v) = rates::lower_envelope_psi(ep.t0 + t, &ep, &law) {
                        diagnostics.push(format!(
                            "same ratio with the run's constants at elapsed time {t:e}: {:.4}",
                            v.ln() / (-4.0 * t.ln().sqrt())
                        ));
                    }
                }
            }
            _ => {}
        }
    }
    let rate_status = if rate_checks.is_empty() {
        Status::NotApplicable
    } else {
        Status::from_bool(rate_checks.iter().all(|c| c.status == Status::Pass))
    };
    verdicts.push(Verdict {
        name: "decay rate",
        status: rate_status,
        detail: if rate_checks.is_empty() {
            "no closed-form rate for this law, or the convexity hypothesis fails".into()
        } else {
            rate_checks
                .iter()
                .map(|c| format!("{} = {:.4} (expected {:.4})", c.label, c.value, c.expected))
                .collect::<Vec<_>>()
                .join("; ")
        },
    });

    // Long-time behaviour, reported only.
    let ecal_ratio = last.ecal / first.ecal.max(f64::MIN_POSITIVE);
    diagnostics.push(format!(
        "shifted energy ratio E_cal(T)/E_cal(0) = {ecal_ratio:.4e}"
    ));
    let e_inf = 0.5 * p.rho3 * run.theta_ref * run.theta_ref;
    diagnostics.push(format!(
        "|E(T) - rho3 theta_ref^2 / 2| / E(0) = {:.4e} (theta_ref = {:.6e})",
        (last.e - e_inf).abs() / e0.max(f64::MIN_POSITIVE),
        run.theta_ref
    ));
    let window_lo = (cfg.t_final / 10.0).max(t0.as_ref().map_or(0.0, |x| x.1));
    let sim: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.t > 0.0 && r.ecal > 0.0)
        .map(|r| (r.t, r.ecal))
        .collect();
    if let Ok(slope) = rates::fit_decay_exponent(&sim, (window_lo.max(1e-12), cfg.t_final)) {
        diagnostics.push(format!(
            "fitted shifted-energy exponent on [{window_lo}, {}]: {slope:.4}",
            cfg.t_final
        ));
    }

    Ok(ScenarioResult {
        config: cfg.clone(),
        stability_number: compute_stability_number(&p),
        alpha_a,
        h0: sd.profile().has_support(),
        law,
        h1,
        h2,
        run,
        audit,
        gamma,
        c1,
        sigma,
        t0,
        envelope,
        calibration_note,
        envelopes,
        dominance_min_ratio,
        lemma,
        rate_checks,
        diagnostics,
        verdicts,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |x| format!("{x:.16e}"))
}

pub fn envelopes_csv(result: &ScenarioResult) -> String {
    let mut out = String::from("t,envelope_K,envelope_psi\n");
    for (t, k, psi) in &result.envelopes {
        let _ = writeln!(out, "{t:.16e},{},{}", opt(*k), opt(*psi));
    }
    out
}

pub fn render_report(r: &ScenarioResult) -> String {
    let c = &r.config;
    let p = &c.params;
    let mut s = String::new();
    let _ = writeln!(s, "timolab run report");
    let _ = writeln!(s, "scenario: {}", c.scenario.as_deref().unwrap_or("(custom)"));
    let _ = writeln!(
        s,
        "params: rho1={} rho2={} rho3={} b={} k={} delta={} tau={} beta={}",
        p.rho1, p.rho2, p.rho3, p.b, p.k, p.delta, p.tau, p.beta
    );
    let _ = writeln!(s, "law: {}, r0 = {}", c.law_label(), r.law.r0());
    let _ = writeln!(s, "profile: {}, alpha_a = {}", c.profile_label(), r.alpha_a);
    let _ = writeln!(
        s,
        "grid: N = {}, dt = {}, T = {}, steps = {}, Newton iterations = {}, factorizations = {}",
        c.n, c.dt, c.t_final, r.run.steps, r.run.newton_iterations, r.run.factorizations
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "[diagnostics]");
    let _ = writeln!(s, "stability number chi = {:.6e}", r.stability_number);
    let _ = writeln!(
        s,
        "H0 (damping support nonempty): {}",
        if r.h0 { "PASS" } else { "FAIL" }
    );
    let h1 = &r.h1;
    let _ = writeln!(
        s,
        "H1 (growth, eps = {}): {} (monotone {}, sandwich {}, c1 = {:.4e}, c2 = {:.4e}{})",
        h1.eps,
        Status::from_bool(h1.passed).label(),
        h1.monotone,
        h1.sandwich.map_or("n/a".to_string(), |b| b.to_string()),
        h1.c1,
        h1.c2,
        h1.first_violation
            .map(|v| format!(", first monotonicity violation at s = {v:.4e}"))
            .unwrap_or_default()
    );
    let h2 = &r.h2;
    let _ = writeln!(
        s,
        "H2 (convexity): {} (strictly convex {}, Lambda liminf {:.4} limsup {:.4}{}, ratio branch {}, integral branch {} [mu = {}, z1 = {:.4e}, product liminf {:.4e}])",
        Status::from_bool(h2.passed).label(),
        h2.strictly_convex,
        h2.lambda_liminf,
        h2.lambda_limsup,
        if h2.lambda_resolved { "" } else { " (unresolved)" },
        h2.branch_ratio,
        h2.branch_integral,
        h2.mu,
        h2.z1,
        h2.product_liminf
    );
    let _ = writeln!(s, "gamma = {:.6e}", r.gamma);
    let _ = writeln!(s, "C1 = {:.6e}", r.c1);
    let _ = writeln!(s, "sigma = {:.6e}", r.sigma);
    match &r.t0 {
        Ok((_, t0)) => {
            let _ = writeln!(s, "T0 = {t0}");
        }
        Err(e) => {
            let _ = writeln!(s, "T0 = not found ({e}); try a longer T");
        }
    }
    if let Some(ep) = &r.envelope {
        let _ = writeln!(
            s,
            "C_cal = {:.6e} (envelopes matched at T0 + {})",
            ep.c_cal, c.t1
        );
        let _ = writeln!(s, "shifted energy at T0 = {:.6e}", ep.e_cal_t0);
    }
    if let Some(n) = &r.calibration_note {
        let _ = writeln!(s, "note: {n}");
    }
    if let Some(l) = &r.lemma {
        if l.applicable {
            let _ = writeln!(
                s,
                "comparison lemma z >= C (Psi')^-1(R/t) with C = 1/C_cal, t >= {}: {} (largest admissible C = {:.4e} at t = {}, {} checked, {} outside the inverse's range)",
                c.t1,
                Status::from_bool(l.passed).label(),
                l.best_c,
                l.worst_t,
                l.checked,
                l.skipped
            );
        } else {
            let _ = writeln!(s, "comparison lemma: N/A (Psi' is constant)");
        }
    }
    let first = r.run.records[0];
    let last = *r.run.records.last().expect("records");
    let _ = writeln!(
        s,
        "E(0) = {:.6e}, E(T) = {:.6e}, E*(0) = {:.6e}, theta_ref = {:.6e}",
        first.e, last.e, first.estar, r.run.theta_ref
    );
    for d in &r.diagnostics {
        let _ = writeln!(s, "{d}");
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "[verdicts]");
    for v in &r.verdicts {
        let _ = writeln!(s, "{:<5} {}: {}", v.status.label(), v.name, v.detail);
    }
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "overall: {}",
        if r.passed() { "PASS" } else { "FAIL" }
    );
    s
}

pub fn write_outputs(r: &ScenarioResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
    let w = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body).with_context(|| path.display().to_string())
    };
    w("energy.csv", energy::records_to_csv(&r.run.records))?;
    w("envelopes.csv", envelopes_csv(r))?;
    for snap in &r.run.snapshots {
        solver::write_snapshot(dir, snap)?;
    }
    w("report.txt", render_report(r))
}

#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub result: Result<ScenarioResult>,
}

/// Simulates, writes all outputs and maps the result to the exit status:
/// 0 all verdicts pass, 2 some verdict fails, 1 runtime error. A report is
/// written in every case.
pub fn run_scenario(cfg: &RunConfig, out_dir: &Path) -> Outcome {
    let result = simulate(cfg);
    let exit_code = match &result {
        Ok(r) => match write_outputs(r, out_dir) {
            Ok(()) => {
                if r.passed() {
                    0
                } else {
                    2
                }
            }
            Err(e) => {
                let _ = write_error_report(out_dir, cfg.scenario.as_deref(), &e);
                1
            }
        },
        Err(e) => {
            let _ = write_error_report(out_dir, cfg.scenario.as_deref(), e);
            1
        }
    };
    Outcome {
        exit_code,
        out_dir: out_dir.to_path_buf(),
        result,
    }
}

/// Minimal `report.txt` for runs that stop before producing results.
pub fn write_error_report(dir: &Path, scenario: Option<&str>, e: &anyhow::Error) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let body = format!(
        "timolab run report\nscenario: {}\n\nerror: {e:#}\n\noverall: ERROR\n",
        scenario.unwrap_or("(custom)")
    );
    std::fs::write(dir.join("report.txt"), body)?;
    Ok(())
}
