//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations: run a preset and return its energy history, sample a
//! damping law's convex majorant Ψ and its ratio Λ, and evaluate the decay
//! envelope of a power law over a time window.

use wasm_bindgen::prelude::*;

use timolab::cli::config::RunConfig;
use timolab::cli::scenario::{render_report, simulate};
use timolab::laws::{log_grid, DampingLaw};
use timolab::rates::{self, EnvelopeParams};

/// Largest grid the page may request; keeps a run interactive.
pub const MAX_CELLS: usize = 256;
/// Largest number of time steps per run.
pub const MAX_STEPS: f64 = 50_000.0;

#[wasm_bindgen]
pub struct Simulation {
    t: Vec<f64>,
    e: Vec<f64>,
    ecal: Vec<f64>,
    d: Vec<f64>,
    report: String,
    passed: bool,
}

#[wasm_bindgen]
impl Simulation {
    pub fn times(&self) -> Vec<f64> {
        self.t.clone()
    }
    pub fn energy(&self) -> Vec<f64> {
        self.e.clone()
    }
    #[wasm_bindgen(js_name = shiftedEnergy)]
    pub fn shifted_energy(&self) -> Vec<f64> {
        self.ecal.clone()
    }
    pub fn dissipation(&self) -> Vec<f64> {
        self.d.clone()
    }
    pub fn report(&self) -> String {
        self.report.clone()
    }
    pub fn passed(&self) -> bool {
        self.passed
    }
}

pub fn run_preset_native(name: &str, cells: usize, t_final: f64) -> Result<Simulation, String> {
    let mut cfg = RunConfig::preset(name).map_err(|e| e.to_string())?;
    if !(8..=MAX_CELLS).contains(&cells) {
        return Err(format!("cells must lie in [8, {MAX_CELLS}]"));
    }
    if !(t_final > 0.0 && t_final / cfg.dt <= MAX_STEPS) {
        return Err(format!(
            "T must be positive and at most {} for this preset's dt = {}",
            MAX_STEPS * cfg.dt,
            cfg.dt
        ));
    }
    cfg.n = cells;
    cfg.t_final = t_final;
    let r = simulate(&cfg).map_err(|e| format!("{e:#}"))?;
    let rec = &r.run.records;
    Ok(Simulation {
        t: rec.iter().map(|x| x.t).collect(),
        e: rec.iter().map(|x| x.e).collect(),
        ecal: rec.iter().map(|x| x.ecal).collect(),
        d: rec.iter().map(|x| x.d).collect(),
        report: render_report(&r),
        passed: r.passed(),
    })
}

/// Runs a built-in preset with the given cell count and final time.
#[wasm_bindgen(js_name = runPreset)]
pub fn run_preset(name: &str, cells: usize, t_final: f64) -> Result<Simulation, JsError> {
    run_preset_native(name, cells, t_final).map_err(|e| JsError::new(&e))
}

/// Names of the built-in presets, newline separated.
#[wasm_bindgen(js_name = presetNames)]
pub fn preset_names() -> String {
    timolab::cli::presets::names().join("\n")
}

fn build_law(kind: &str, p: f64) -> Result<DampingLaw, String> {
    match kind {
        "linear" => Ok(DampingLaw::linear(1.0)),
        "power" => DampingLaw::power(p).map_err(|e| e.to_string()),
        "example2" => DampingLaw::example2()
            .with_r0((-1.5f64).exp())
            .map_err(|e| e.to_string()),
        other => Err(format!("unknown law '{other}' (linear, power, example2)")),
    }
}

/// Rows `x, Ψ(x), Λ(x)` on a log grid over `(0, r0²]`, flattened.
pub fn law_curves_native(kind: &str, p: f64, samples: usize) -> Result<Vec<f64>, String> {
    let law = build_law(kind, p)?;
    let top = law.r0() * law.r0();
    let mut out = Vec::with_capacity(3 * samples);
    for x in log_grid(top * 1e-8, top, samples.clamp(2, 2000)) {
        let psi = law.eval_psi(x).map_err(|e| e.to_string())?;
        let lambda = law.eval_lambda(x).unwrap_or(f64::NAN);
        out.extend([x, psi, lambda]);
    }
    Ok(out)
}

#[wasm_bindgen(js_name = lawCurves)]
pub fn law_curves(kind: &str, p: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    law_curves_native(kind, p, samples).map_err(|e| JsError::new(&e))
}

/// Rows `t, envelope(t)` of the Ψ-envelope with unit constants on
/// `[t_min, t_max]`, flattened, followed by the fitted log-log slope.
pub fn envelope_native(kind: &str, p: f64, t_min: f64, t_max: f64, samples: usize) -> Result<Vec<f64>, String> {
    if !(t_min > 0.0 && t_max > t_min) {
        return Err("need 0 < t_min < t_max".into());
    }
    let law = build_law(kind, p)?;
    let ep = EnvelopeParams {
        gamma: 1.0,
        sigma: 1.0,
        t0: 0.0,
        r0: law.r0(),
        c1: 1.0,
        c_cal: 1.0,
        e_cal_t0: 1.0,
    };
    let mut series = Vec::new();
    for t in log_grid(t_min, t_max, samples.clamp(2, 2000)) {
        if let Ok(v) = rates::lower_envelope_psi(t, &ep, &law) {
            series.push((t, v));
        }
    }
    if series.len() < 2 {
        return Err("the envelope is undefined on this window (try a later t_min)".into());
    }
    let slope = rates::fit_decay_exponent(&series, (t_min, t_max)).map_err(|e| e.to_string())?;
    let mut out: Vec<f64> = series.iter().flat_map(|&(t, v)| [t, v]).collect();
    out.push(slope);
    Ok(out)
}

#[wasm_bindgen]
pub fn envelope(kind: &str, p: f64, t_min: f64, t_max: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    envelope_native(kind, p, t_min, t_max, samples).map_err(|e| JsError::new(&e))
}
