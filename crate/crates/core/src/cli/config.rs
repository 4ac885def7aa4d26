//! `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment. A `scenario = <name>` line
//! loads that preset first; every other key in the file overrides it
//! regardless of position. Unknown and repeated keys are errors.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::laws::{DampingLaw, Table};
use crate::solver::{DampingProfile, DefaultInitialData, Grid, PhysicalParams};

use super::presets;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub origin: String,
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.origin)?;
        if let Some(l) = self.line {
            write!(f, ":{l}")?;
        }
        if let Some(k) = &self.key {
            write!(f, ": key '{k}'")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub enum LawChoice {
    Power,
    Linear,
    Example2,
    Table(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileChoice {
    Global,
    Bump { lo: f64, hi: f64 },
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitChoice {
    Default(DefaultInitialData),
    File(PathBuf),
}

/// Which constant temperature the shifted energy is measured from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaRef {
    /// Trapezoid mean of `θ0`, which the scheme conserves.
    Mean,
    /// The point value `θ0(0)`.
    LeftEnd,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Option<String>,
    pub params: PhysicalParams,
    pub law: LawChoice,
    pub p: f64,
    pub c: f64,
    pub r0: Option<f64>,
    /// Small-amplitude threshold for the growth-hypothesis check.
    pub eps: f64,
    pub profile: ProfileChoice,
    pub init: InitChoice,
    pub n: usize,
    pub dt: f64,
    pub t_final: f64,
    pub sample_every: usize,
    pub theta_ref: ThetaRef,
    pub c1: Option<f64>,
    pub c_cal: Option<f64>,
    pub r: f64,
    pub t1: f64,
    pub mu: f64,
    pub z1: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub snapshots: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            params: PhysicalParams::default(),
            law: LawChoice::Power,
            p: 2.0,
            c: 1.0,
            r0: None,
            eps: 0.1,
            profile: ProfileChoice::Global,
            init: InitChoice::Default(DefaultInitialData::default()),
            n: 200,
            dt: 1e-3,
            t_final: 10.0,
            sample_every: 10,
            theta_ref: ThetaRef::Mean,
            c1: None,
            c_cal: None,
            r: 1.0,
            t1: 10.0,
            mu: 2.0,
            z1: None,
            out: None,
            seed: 0,
            snapshots: Vec::new(),
        }
    }
}

pub const KEYS: &[(&str, &str)] = &[
    ("scenario", "preset to start from (see --list)"),
    ("rho1", "density coefficient of the transverse equation (> 0)"),
    ("rho2", "inertia coefficient of the rotation equation (> 0)"),
    ("rho3", "heat capacity coefficient (> 0)"),
    ("b", "bending stiffness (> 0)"),
    ("k", "shear stiffness (> 0)"),
    ("delta", "thermal coupling (>= 0)"),
    ("tau", "heat-flux relaxation time (> 0)"),
    ("beta", "heat-flux damping (>= 0)"),
    ("law", "power | linear | example2 | table:<csv path>"),
    ("p", "exponent of the power law (> 1)"),
    ("c", "slope of the linear law (> 0)"),
    ("r0", "right end of the convexity region (> 0)"),
    ("eps", "small-amplitude threshold for the growth check, in (0, 1)"),
    ("profile", "global | bump | none"),
    ("omega", "bump support as 'lo, hi'"),
    ("init", "default | file:<csv path> in the snapshot format"),
    ("amplitude", "scale of the default phi0, psi0"),
    ("heat_amplitude", "scale of the default cos(pi x) part of theta0 and of q0"),
    ("theta_mean", "constant added to the default theta0"),
    ("N", "number of cells (>= 8)"),
    ("dt", "time step (> 0)"),
    ("T", "final time (> 0)"),
    ("sample_every", "steps between energy records (>= 1)"),
    ("theta_ref", "mean | left | <number>: reference temperature of the shifted energy"),
    ("c1", "override of the constant C1 in sigma"),
    ("c_cal", "override of the envelope calibration constant"),
    ("R", "constant R of the comparison lemma check"),
    ("t1", "elapsed time at which the two envelopes are calibrated"),
    ("mu", "mu of the alternative convexity-ratio branch"),
    ("z1", "z1 of the alternative branch (default r0^2/2)"),
    ("out", "output directory"),
    ("seed", "reserved; runs are deterministic"),
    ("snapshots", "comma-separated times at which to dump the state"),
];

struct Ctx<'a> {
    origin: &'a str,
    line: usize,
    key: &'a str,
}

impl Ctx<'_> {
    fn err(&self, message: impl Into<String>) -> ConfigError {
        ConfigError {
            origin: self.origin.to_string(),
            line: Some(self.line),
            key: Some(self.key.to_string()),
            message: message.into(),
        }
    }

    fn real(&self, v: &str) -> Result<f64, ConfigError> {
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| self.err(format!("expected a finite number, found '{v}'")))
    }

    fn positive(&self, v: &str) -> Result<f64, ConfigError> {
        let x = self.real(v)?;
        if x > 0.0 {
            Ok(x)
        } else {
            Err(self.err(format!("must be positive, found {x}")))
        }
    }

    fn nonnegative(&self, v: &str) -> Result<f64, ConfigError> {
        let x = self.real(v)?;
        if x >= 0.0 {
            Ok(x)
        } else {
            Err(self.err(format!("must be nonnegative, found {x}")))
        }
    }

    fn integer(&self, v: &str) -> Result<usize, ConfigError> {
        v.parse::<usize>()
            .map_err(|_| self.err(format!("expected a nonnegative integer, found '{v}'")))
    }

    fn list(&self, v: &str) -> Result<Vec<f64>, ConfigError> {
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| self.real(s))
            .collect()
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

type Lines<'a> = Vec<(usize, &'a str, &'a str)>;

fn split_lines<'a>(text: &'a str, origin: &str) -> Result<Lines<'a>, ConfigError> {
    let mut out: Lines<'a> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError {
                origin: origin.into(),
                line: Some(i + 1),
                key: None,
                message: format!("expected 'key = value', found '{line}'"),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.iter().any(|(name, _)| *name == k) {
            return Err(ConfigError {
                origin: origin.into(),
                line: Some(i + 1),
                key: Some(k.into()),
                message: "unknown key".into(),
            });
        }
        if let Some((prev, _, _)) = out.iter().find(|(_, pk, _)| *pk == k) {
            return Err(ConfigError {
                origin: origin.into(),
                line: Some(i + 1),
                key: Some(k.into()),
                message: format!("repeated key (first set on line {prev})"),
            });
        }
        out.push((i + 1, k, v));
    }
    Ok(out)
}

impl RunConfig {
    /// Parses a configuration file; relative paths inside it are resolved
    /// against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            origin: origin.clone(),
            line: None,
            key: None,
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &origin, base)
    }

    pub fn parse(text: &str, origin: &str, base: &Path) -> Result<Self, ConfigError> {
        let lines = split_lines(text, origin)?;
        let mut cfg = RunConfig::default();
        let mut where_set: HashMap<String, (String, usize)> = HashMap::new();
        if let Some(&(line, key, name)) = lines.iter().find(|(_, k, _)| *k == "scenario") {
            let preset = presets::find(name).ok_or_else(|| ConfigError {
                origin: origin.into(),
                line: Some(line),
                key: Some(key.into()),
                message: format!(
                    "unknown preset '{name}' (available: {})",
                    presets::names().join(", ")
                ),
            })?;
            let porigin = format!("preset {name}");
            for (pl, pk, pv) in split_lines(preset.text, &porigin)? {
                cfg.apply(pk, pv, &Ctx { origin: &porigin, line: pl, key: pk }, base)?;
                where_set.insert(pk.to_string(), (porigin.clone(), pl));
            }
            cfg.scenario = Some(name.to_string());
        }
        for &(line, key, value) in &lines {
            if key == "scenario" {
                continue;
            }
            cfg.apply(key, value, &Ctx { origin, line, key }, base)?;
            where_set.insert(key.to_string(), (origin.to_string(), line));
        }
        cfg.validate().map_err(|(key, message)| {
            let (o, l) = where_set
                .get(key)
                .map(|(o, l)| (o.clone(), Some(*l)))
                .unwrap_or((origin.to_string(), None));
            ConfigError {
                origin: o,
                line: l,
                key: Some(key.into()),
                message,
            }
        })?;
        Ok(cfg)
    }

    /// Loads a preset with no further overrides.
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        Self::parse(&format!("scenario = {name}"), "command line", Path::new("."))
    }

    fn apply(&mut self, key: &str, v: &str, cx: &Ctx<'_>, base: &Path) -> Result<(), ConfigError> {
        let default_init = |cfg: &mut RunConfig| -> Result<DefaultInitialData, ConfigError> {
            match &cfg.init {
                InitChoice::Default(d) => Ok(*d),
                InitChoice::File(_) => Err(cx.err("default-data keys conflict with 'init = file:'")),
            }
        };
        match key {
            "rho1" => self.params.rho1 = cx.positive(v)?,
            "rho2" => self.params.rho2 = cx.positive(v)?,
            "rho3" => self.params.rho3 = cx.positive(v)?,
            "b" => self.params.b = cx.positive(v)?,
            "k" => self.params.k = cx.positive(v)?,
            "delta" => self.params.delta = cx.nonnegative(v)?,
            "tau" => self.params.tau = cx.positive(v)?,
            "beta" => self.params.beta = cx.nonnegative(v)?,
            "law" => {
                self.law = match v {
                    "power" => LawChoice::Power,
                    "linear" => LawChoice::Linear,
                    "example2" => LawChoice::Example2,
                    _ => match v.strip_prefix("table:") {
                        Some(p) if !p.trim().is_empty() => {
                            let path = resolve(base, p.trim());
                            if !path.is_file() {
                                return Err(cx.err(format!("table file {} not found", path.display())));
                            }
                            LawChoice::Table(path)
                        }
                        _ => {
                            return Err(cx.err(format!(
                                "expected power, linear, example2 or table:<path>, found '{v}'"
                            )))
                        }
                    },
                }
            }
            "p" => {
                let p = cx.real(v)?;
                if !(p > 1.0) {
                    return Err(cx.err(format!("power-law exponent must exceed 1, found {p}")));
                }
                self.p = p;
            }
            "c" => self.c = cx.positive(v)?,
            "r0" => self.r0 = Some(cx.positive(v)?),
            "eps" => {
                let e = cx.real(v)?;
                if !(e > 0.0 && e < 1.0) {
                    return Err(cx.err(format!("must lie in (0, 1), found {e}")));
                }
                self.eps = e;
            }
            "profile" => {
                self.profile = match v {
                    "global" => ProfileChoice::Global,
                    "none" => ProfileChoice::None,
                    "bump" => match self.profile {
                        b @ ProfileChoice::Bump { .. } => b,
                        _ => ProfileChoice::Bump { lo: 0.3, hi: 0.7 },
                    },
                    _ => return Err(cx.err(format!("expected global, bump or none, found '{v}'"))),
                }
            }
            "omega" => {
                let xs = cx.list(v)?;
                let [lo, hi] = xs[..] else {
                    return Err(cx.err("expected two numbers 'lo, hi'"));
                };
                if !(0.0 <= lo && lo < hi && hi <= 1.0) {
                    return Err(cx.err(format!("need 0 <= lo < hi <= 1, found ({lo}, {hi})")));
                }
                self.profile = ProfileChoice::Bump { lo, hi };
            }
            "init" => {
                self.init = if v == "default" {
                    InitChoice::Default(default_init(self).unwrap_or_default())
                } else if let Some(p) = v.strip_prefix("file:") {
                    let path = resolve(base, p.trim());
                    if !path.is_file() {
                        return Err(cx.err(format!("initial-data file {} not found", path.display())));
                    }
                    InitChoice::File(path)
                } else {
                    return Err(cx.err(format!("expected default or file:<path>, found '{v}'")));
                }
            }
            "amplitude" => {
                let mut d = default_init(self)?;
                d.amplitude = cx.real(v)?;
                self.init = InitChoice::Default(d);
            }
            "heat_amplitude" => {
                let mut d = default_init(self)?;
                d.heat_amplitude = cx.real(v)?;
                self.init = InitChoice::Default(d);
            }
            "theta_mean" => {
                let mut d = default_init(self)?;
                d.theta_mean = cx.real(v)?;
                self.init = InitChoice::Default(d);
            }
            "N" => self.n = cx.integer(v)?,
            "dt" => self.dt = cx.positive(v)?,
            "T" => self.t_final = cx.positive(v)?,
            "sample_every" => self.sample_every = cx.integer(v)?,
            "theta_ref" => {
                self.theta_ref = match v {
                    "mean" => ThetaRef::Mean,
                    "left" => ThetaRef::LeftEnd,
                    _ => ThetaRef::Value(cx.real(v)?),
                }
            }
            "c1" => self.c1 = Some(cx.positive(v)?),
            "c_cal" => self.c_cal = Some(cx.positive(v)?),
            "R" => self.r = cx.positive(v)?,
            "t1" => self.t1 = cx.positive(v)?,
            "mu" => self.mu = cx.positive(v)?,
            "z1" => self.z1 = Some(cx.positive(v)?),
            "out" => self.out = Some(resolve(base, v)),
            "seed" => {
                self.seed = v
                    .parse()
                    .map_err(|_| cx.err(format!("expected an integer, found '{v}'")))?
            }
            "snapshots" => {
                let ts = cx.list(v)?;
                if let Some(t) = ts.iter().find(|t| **t < 0.0) {
                    return Err(cx.err(format!("snapshot times must be nonnegative, found {t}")));
                }
                self.snapshots = ts;
            }
            _ => unreachable!("key list checked before apply"),
        }
        Ok(())
    }

    /// Cross-key checks; the error names the offending key.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.n < 8 {
            return Err(("N", format!("needs at least 8 cells, found {}", self.n)));
        }
        if self.sample_every < 1 {
            return Err(("sample_every", "must be at least 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(("dt", "must be positive".into()));
        }
        if !(self.t_final > 0.0) {
            return Err(("T", "must be positive".into()));
        }
        if self.dt > self.t_final {
            return Err(("dt", format!("exceeds T = {}", self.t_final)));
        }
        self.build_law().map_err(|m| ("law", m))?;
        if let InitChoice::File(p) = &self.init {
            if !p.is_file() {
                return Err(("init", format!("{} not found", p.display())));
            }
        }
        Ok(())
    }

    pub fn build_law(&self) -> Result<DampingLaw, String> {
        let law = match &self.law {
            LawChoice::Power => DampingLaw::power(self.p).map_err(|e| e.to_string())?,
            LawChoice::Linear => DampingLaw::linear(self.c),
            LawChoice::Example2 => DampingLaw::example2(),
            LawChoice::Table(path) => {
                DampingLaw::table(Table::from_csv(path).map_err(|e| e.to_string())?)
            }
        };
        match self.r0 {
            Some(r0) => law.with_r0(r0).map_err(|e| e.to_string()),
            None => Ok(law),
        }
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.n).expect("validated")
    }

    pub fn build_profile(&self, grid: &Grid) -> DampingProfile {
        match self.profile {
            ProfileChoice::Global => DampingProfile::global(grid),
            ProfileChoice::None => DampingProfile::none(grid),
            ProfileChoice::Bump { lo, hi } => DampingProfile::bump(grid, lo, hi).expect("validated"),
        }
    }

    /// A short human-readable summary of the law choice.
    pub fn law_label(&self) -> String {
        match &self.law {
            LawChoice::Power => format!("power (p = {})", self.p),
            LawChoice::Linear => format!("linear (c = {})", self.c),
            LawChoice::Example2 => "example2".into(),
            LawChoice::Table(p) => format!("table ({})", p.display()),
        }
    }

    pub fn profile_label(&self) -> String {
        match self.profile {
            ProfileChoice::Global => "global (a = 1)".into(),
            ProfileChoice::None => "none (a = 0)".into(),
            ProfileChoice::Bump { lo, hi } => format!("bump on ({lo}, {hi})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::parse(text, "test.cfg", Path::new("."))
    }

    #[test]
    fn minimal_scenario_file() {
        let cfg = parse("scenario = conservative\n").unwrap();
        assert_eq!(cfg.scenario.as_deref(), Some("conservative"));
        assert_eq!(cfg.params.delta, 0.0);
        assert_eq!(cfg.profile, ProfileChoice::None);
    }

    #[test]
    fn negative_density_is_named() {
        let e = parse("# header\nrho1 = -1\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("rho1"));
        assert_eq!(e.line, Some(2));
        assert!(e.to_string().contains("rho1") && e.to_string().contains("positive"));
    }

    #[test]
    fn power_law_round_trip() {
        let cfg = parse("law = power\np = 3\n").unwrap();
        let law = cfg.build_law().unwrap();
        assert_eq!(law.eval_g(2.0).unwrap(), 8.0);
    }

    #[test]
    fn file_keys_override_preset_in_any_order() {
        let cfg = parse("T = 3\nscenario = example1_p3\nN = 32\n").unwrap();
        assert_eq!(cfg.t_final, 3.0);
        assert_eq!(cfg.n, 32);
        assert_eq!(cfg.p, 3.0);
    }

    #[test]
    fn rejects_unknown_repeated_and_malformed() {
        assert_eq!(parse("colour = red").unwrap_err().message, "unknown key");
        let e = parse("N = 10\nN = 12").unwrap_err();
        assert!(e.message.contains("repeated"));
        assert_eq!(e.line, Some(2));
        assert!(parse("just text").is_err());
        assert!(parse("N = ten").is_err());
        assert!(parse("scenario = nope").unwrap_err().message.contains("unknown preset"));
        let e = parse("N = 4").unwrap_err();
        assert_eq!((e.key.as_deref(), e.line), (Some("N"), Some(1)));
        assert!(parse("law = table:/definitely/missing.csv").is_err());
        assert!(parse("p = 1").is_err());
        assert!(parse("omega = 0.7, 0.3").is_err());
    }

    #[test]
    fn profile_and_theta_ref_options() {
        let cfg = parse("omega = 0.2, 0.4\ntheta_ref = left\nsnapshots = 0, 1.5").unwrap();
        assert_eq!(cfg.profile, ProfileChoice::Bump { lo: 0.2, hi: 0.4 });
        assert_eq!(cfg.theta_ref, ThetaRef::LeftEnd);
        assert_eq!(cfg.snapshots, vec![0.0, 1.5]);
        assert_eq!(parse("theta_ref = 0.25").unwrap().theta_ref, ThetaRef::Value(0.25));
    }

    #[test]
    fn table_law_path_is_resolved_relative_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("g.csv"), "s,g\n0,0\n1,2\n2,5\n").unwrap();
        let cfg_path = dir.path().join("run.cfg");
        std::fs::write(&cfg_path, "law = table:g.csv\nr0 = 1\n").unwrap();
        let cfg = RunConfig::from_file(&cfg_path).unwrap();
        assert_eq!(cfg.build_law().unwrap().eval_g(1.5).unwrap(), 3.5);
    }
}
