use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

use timolab::cli::{list_presets, run_scenario, write_error_report, RunConfig};

/// Simulate the damped thermoelastic Timoshenko beam and check its energy
/// decay against lower envelopes.
#[derive(Debug, Parser)]
#[command(name = "timolab", version)]
struct Args {
    /// Configuration file (`key = value` lines).
    #[arg(long, conflicts_with = "sweep")]
    config: Option<PathBuf>,
    /// Built-in preset to run (see --list); keys in --config override it.
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory (default: `out`, or the config's `out` key).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the number of cells.
    #[arg(long = "N")]
    n: Option<usize>,
    /// Override the time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the final time.
    #[arg(long = "T")]
    t: Option<f64>,
    /// List the presets and exit.
    #[arg(long)]
    list: bool,
    /// Run every `*.cfg` in a directory concurrently, one worker per file.
    #[arg(long, value_name = "DIR")]
    sweep: Option<PathBuf>,
}

fn load(args: &Args, path: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = match (path, &args.scenario) {
        (Some(p), None) => RunConfig::from_file(p)?,
        (Some(p), Some(name)) => {
            let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
            if text.lines().any(|l| l.split('#').next().unwrap_or("").trim_start().starts_with("scenario")) {
                bail!("{}: --scenario given on the command line and in the file", p.display());
            }
            let base = p.parent().unwrap_or(Path::new("."));
            RunConfig::parse(&format!("scenario = {name}\n{text}"), &p.display().to_string(), base)?
        }
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => bail!("nothing to run: pass --config, --scenario, --sweep or --list"),
    };
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    if let Some(t) = args.t {
        cfg.t_final = t;
    }
    cfg.validate()
        .map_err(|(key, msg)| anyhow::anyhow!("command-line override: key '{key}': {msg}"))?;
    Ok(cfg)
}

fn out_dir(args: &Args, cfg: &RunConfig) -> PathBuf {
    args.out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn single(args: &Args) -> Result<i32> {
    let cfg = match load(args, args.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            if let Some(dir) = &args.out {
                if let Err(werr) = write_error_report(dir, args.scenario.as_deref(), &e) {
                    eprintln!("could not write {}: {werr:#}", dir.join("report.txt").display());
                }
            }
            return Err(e);
        }
    };
    let dir = out_dir(args, &cfg);
    let outcome = run_scenario(&cfg, &dir);
    match &outcome.result {
        Ok(r) => {
            for v in &r.verdicts {
                println!("{:<5} {}", v.status.label(), v.name);
            }
            println!("report: {}", dir.join("report.txt").display());
        }
        Err(e) => eprintln!("error: {e:#}"),
    }
    Ok(outcome.exit_code)
}

fn sweep(args: &Args, dir: &Path) -> Result<i32> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| dir.display().to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("{}: no *.cfg files", dir.display());
    }
    let base = args.out.clone().unwrap_or_else(|| dir.join("out"));
    let codes: Vec<(PathBuf, i32)> = std::thread::scope(|s| {
        let handles: Vec<_> = files
            .iter()
            .map(|f| {
                let base = &base;
                s.spawn(move || {
                    let stem = f.file_stem().unwrap_or_default();
                    match load(args, Some(f)) {
                        Ok(cfg) => run_scenario(&cfg, &base.join(stem)).exit_code,
                        Err(e) => {
                            eprintln!("{}: {e:#}", f.display());
                            let _ = write_error_report(&base.join(stem), None, &e);
                            1
                        }
                    }
                })
            })
            .collect();
        files
            .iter()
            .cloned()
            .zip(handles.into_iter().map(|h| h.join().unwrap_or(1)))
            .collect()
    });
    for (f, code) in &codes {
        let label = match code {
            0 => "PASS",
            2 => "FAIL",
            _ => "ERROR",
        };
        println!("{label:<5} {}", f.display());
    }
    Ok(if codes.iter().any(|(_, c)| *c == 1) {
        1
    } else if codes.iter().any(|(_, c)| *c == 2) {
        2
    } else {
        0
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list {
        for (name, desc) in list_presets() {
            println!("{name:<18} {desc}");
        }
        return ExitCode::SUCCESS;
    }
    let result = match &args.sweep {
        Some(dir) => sweep(&args, dir),
        None => single(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
