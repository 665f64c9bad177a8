//! Command-line surface: spectrum scans, single trajectories, grid sweeps,
//! regime classification and robustness statistics, each with a manifest.
//!
//! Configuration precedence: flags > config file > built-in defaults. The
//! config file is a flat JSON object; unknown keys are rejected. Exit
//! codes: 0 ok, 2 config error, 3 propagation failure, 4 partial sweep
//! failure.

use clap::{Args, Parser, Subcommand};
use lzsim::dynamics::{
    evolve_lindblad, evolve_unitary, initial_state, DissipationChannel, DissipationSpec, TimeGrid,
    Trajectory,
};
use lzsim::model::{ModelParams, SpectatorSpec};
use lzsim::output::{
    config_hash, manifest_path, parse_sweep_csv, spectrum_csv, sweep_csv, trajectory_csv,
    write_with_manifest, RunManifest,
};
use lzsim::qcore::DensityMatrix;
use lzsim::spectrum::{classify_regime, spectrum_scan, DeltaC2Config};
use lzsim::sweep::{
    linear_axis, log_axis, robustness_study, run_sweep_resumed, NoiseKind, SweepConfig, SweepGrid,
};
use serde_json::{json, Map, Value};
use std::collections::HashMap;
use std::path::{Path, PathBuf};

const EXIT_OK: i32 = 0;
const EXIT_CONFIG: i32 = 2;
const EXIT_PROPAGATION: i32 = 3;
const EXIT_PARTIAL_SWEEP: i32 = 4;

#[derive(Parser)]
#[command(name = "lzsim", version, about = "Landau-Zener qubit with a quantum spectator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Branch-tracked instantaneous spectrum over a time window
    Spectrum(Opts),
    /// Propagate one trajectory and record P(t), purity and entropy
    Evolve(Opts),
    /// Infidelity/purity map over the (x0/g, omega_c/x0) grid
    Sweep(Opts),
    /// Regime label and thresholds for a single parameter point
    Classify(Opts),
    /// Infidelity statistics under relative parameter noise
    Robustness(Opts),
}

#[derive(Args, Clone, Default)]
struct Opts {
    /// Flat JSON config file (flags override its keys)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long = "omega-c")]
    omega_c: Option<f64>,
    /// qubit | oscillator
    #[arg(long)]
    spectator: Option<String>,
    /// Oscillator Fock-space truncation
    #[arg(long)]
    truncation: Option<u64>,
    #[arg(long)]
    ti: Option<f64>,
    #[arg(long)]
    tf: Option<f64>,
    /// Output samples along the time window
    #[arg(long)]
    samples: Option<u64>,
    /// Adaptive-step tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Dissipation rate; 0 selects unitary propagation
    #[arg(long)]
    kappa: Option<f64>,
    /// decay | dephasing
    #[arg(long)]
    channel: Option<String>,
    /// x0/g axis as lo:hi:n[:log|lin]
    #[arg(long = "grid-x0")]
    grid_x0: Option<String>,
    /// omega_c/x0 axis as lo:hi:n[:log|lin]
    #[arg(long = "grid-wc")]
    grid_wc: Option<String>,
    #[arg(long)]
    workers: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; relative paths resolve against $LZSIM_OUT_DIR
    #[arg(long)]
    out: Option<String>,
    /// Reuse completed points of an interrupted sweep
    #[arg(long)]
    resume: bool,
    /// Relative noise amplitude for robustness
    #[arg(long = "rel-sigma")]
    rel_sigma: Option<f64>,
    /// Robustness sample count
    #[arg(long = "n-samples")]
    n_samples: Option<u64>,
    /// Gaussian instead of uniform noise
    #[arg(long)]
    gaussian: bool,
    /// Add the decoupled (x0 = 0) baseline column
    #[arg(long)]
    baseline: bool,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Propagation(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Propagation(_) => EXIT_PROPAGATION,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Propagation(m) => m,
        }
    }
}

fn cfg_err(m: impl Into<String>) -> CliError {
    CliError::Config(m.into())
}

const KNOWN_KEYS: &[&str] = &[
    "g",
    "epsilon",
    "x0",
    "omega_c",
    "spectator",
    "truncation",
    "ti",
    "tf",
    "samples",
    "tol",
    "kappa",
    "channel",
    "grid_x0",
    "grid_wc",
    "workers",
    "seed",
    "out",
    "resume",
    "rel_sigma",
    "n_samples",
    "gaussian",
    "baseline",
];

/// Defaults, config file, then flags, merged into one flat object.
fn resolve_config(opts: &Opts) -> Result<Map<String, Value>, CliError> {
    let mut m = Map::new();
    let defaults = json!({
        "g": 1.0,
        "epsilon": 2.0,
        "x0": 0.0,
        "omega_c": 0.0,
        "spectator": "qubit",
        "truncation": 2,
        "samples": 2001,
        "tol": 1e-10,
        "kappa": 0.0,
        "channel": "decay",
        "grid_x0": "0.05:8:81:log",
        "grid_wc": "0.05:8:81:log",
        "workers": 0,
        "seed": 0,
        "resume": false,
        "rel_sigma": 0.1,
        "n_samples": 100,
        "gaussian": false,
        "baseline": false,
    });
    for (k, v) in defaults.as_object().unwrap() {
        m.insert(k.clone(), v.clone());
    }
    if let Some(path) = &opts.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read config {}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| cfg_err(format!("config {} is not valid JSON: {e}", path.display())))?;
        let obj = file
            .as_object()
            .ok_or_else(|| cfg_err("config file must be a flat JSON object"))?;
        for (k, v) in obj {
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(cfg_err(format!("unknown config key {k:?}")));
            }
            if v.is_object() || v.is_array() {
                return Err(cfg_err(format!("config key {k:?} must be a scalar")));
            }
            m.insert(k.clone(), v.clone());
        }
    }
    fn set(m: &mut Map<String, Value>, k: &str, v: Option<Value>) {
        if let Some(v) = v {
            m.insert(k.to_string(), v);
        }
    }
    set(&mut m, "g", opts.g.map(Value::from));
    set(&mut m, "epsilon", opts.epsilon.map(Value::from));
    set(&mut m, "x0", opts.x0.map(Value::from));
    set(&mut m, "omega_c", opts.omega_c.map(Value::from));
    set(&mut m, "spectator", opts.spectator.clone().map(Value::from));
    set(&mut m, "truncation", opts.truncation.map(Value::from));
    set(&mut m, "ti", opts.ti.map(Value::from));
    set(&mut m, "tf", opts.tf.map(Value::from));
    set(&mut m, "samples", opts.samples.map(Value::from));
    set(&mut m, "tol", opts.tol.map(Value::from));
    set(&mut m, "kappa", opts.kappa.map(Value::from));
    set(&mut m, "channel", opts.channel.clone().map(Value::from));
    set(&mut m, "grid_x0", opts.grid_x0.clone().map(Value::from));
    set(&mut m, "grid_wc", opts.grid_wc.clone().map(Value::from));
    set(&mut m, "workers", opts.workers.map(Value::from));
    set(&mut m, "seed", opts.seed.map(Value::from));
    set(&mut m, "out", opts.out.clone().map(Value::from));
    if opts.resume {
        m.insert("resume".into(), Value::from(true));
    }
    set(&mut m, "rel_sigma", opts.rel_sigma.map(Value::from));
    set(&mut m, "n_samples", opts.n_samples.map(Value::from));
    if opts.gaussian {
        m.insert("gaussian".into(), Value::from(true));
    }
    if opts.baseline {
        m.insert("baseline".into(), Value::from(true));
    }
    // default time window depends on the resolved g and epsilon
    let g = get_f64(&m, "g")?;
    let eps = get_f64(&m, "epsilon")?;
    if g <= 0.0 || eps <= 0.0 {
        return Err(cfg_err("g and epsilon must be positive"));
    }
    let scale = g / eps;
    m.entry("ti".to_string()).or_insert(Value::from(-10.0 * scale));
    m.entry("tf".to_string()).or_insert(Value::from(10.0 * scale));
    Ok(m)
}

fn get_f64(m: &Map<String, Value>, k: &str) -> Result<f64, CliError> {
    m.get(k)
        .and_then(Value::as_f64)
        .ok_or_else(|| cfg_err(format!("config key {k:?} must be a number")))
}

fn get_usize(m: &Map<String, Value>, k: &str) -> Result<usize, CliError> {
    m.get(k)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| cfg_err(format!("config key {k:?} must be a non-negative integer")))
}

fn get_str<'a>(m: &'a Map<String, Value>, k: &str) -> Result<&'a str, CliError> {
    m.get(k)
        .and_then(Value::as_str)
        .ok_or_else(|| cfg_err(format!("config key {k:?} must be a string")))
}

fn get_bool(m: &Map<String, Value>, k: &str) -> Result<bool, CliError> {
    m.get(k)
        .and_then(Value::as_bool)
        .ok_or_else(|| cfg_err(format!("config key {k:?} must be a boolean")))
}

fn model_params(m: &Map<String, Value>) -> Result<ModelParams, CliError> {
    let spectator = match get_str(m, "spectator")? {
        "qubit" => SpectatorSpec::qubit(),
        "oscillator" => SpectatorSpec::oscillator(get_usize(m, "truncation")?),
        other => return Err(cfg_err(format!("spectator must be qubit|oscillator, got {other:?}"))),
    };
    let p = ModelParams::new(get_f64(m, "g")?, get_f64(m, "epsilon")?, get_f64(m, "x0")?, get_f64(m, "omega_c")?)
        .with_spectator(spectator);
    p.validate().map_err(|e| cfg_err(e.to_string()))?;
    Ok(p)
}

fn time_grid(m: &Map<String, Value>) -> Result<TimeGrid, CliError> {
    TimeGrid::new(get_f64(m, "ti")?, get_f64(m, "tf")?, get_usize(m, "samples")?)
        .map_err(|e| cfg_err(e.to_string()))
}

/// lo:hi:n[:log|lin]
fn parse_axis(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 && parts.len() != 4 {
        return Err(cfg_err(format!("grid axis {spec:?} must be lo:hi:n[:log|lin]")));
    }
    let lo: f64 = parts[0].parse().map_err(|_| cfg_err(format!("bad axis lo {:?}", parts[0])))?;
    let hi: f64 = parts[1].parse().map_err(|_| cfg_err(format!("bad axis hi {:?}", parts[1])))?;
    let n: usize = parts[2].parse().map_err(|_| cfg_err(format!("bad axis n {:?}", parts[2])))?;
    if !(lo < hi) || n < 2 {
        return Err(cfg_err(format!("grid axis {spec:?} needs lo < hi and n >= 2")));
    }
    match parts.get(3).copied().unwrap_or("log") {
        "log" => {
            if lo <= 0.0 {
                return Err(cfg_err("log axis requires lo > 0"));
            }
            Ok(log_axis(lo, hi, n))
        }
        "lin" => Ok(linear_axis(lo, hi, n)),
        other => Err(cfg_err(format!("axis scale must be log|lin, got {other:?}"))),
    }
}

fn out_path(m: &Map<String, Value>, default_name: &str) -> PathBuf {
    let raw = m
        .get("out")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| default_name.to_string());
    let p = PathBuf::from(&raw);
    if p.is_relative() {
        if let Ok(dir) = std::env::var("LZSIM_OUT_DIR") {
            if !dir.is_empty() {
                return Path::new(&dir).join(p);
            }
        }
    }
    p
}

/// Hash over the physics-relevant keys only: execution details (workers,
/// resume, out) must not change the identity of a result.
fn result_hash(m: &Map<String, Value>) -> String {
    let mut filtered = m.clone();
    for k in ["workers", "resume", "out"] {
        filtered.remove(k);
    }
    config_hash(&Value::Object(filtered))
}

fn manifest_for(sub: &str, m: &Map<String, Value>, seed: Option<u64>) -> RunManifest {
    let mut man = RunManifest::new(sub, Value::Object(m.clone()), seed);
    man.config_hash = result_hash(m);
    man
}

fn write_output(out: &Path, data: &str, manifest: &RunManifest) -> Result<(), CliError> {
    write_with_manifest(out, data, manifest)
        .map_err(|e| cfg_err(format!("cannot write {}: {e}", out.display())))
}

fn cmd_spectrum(m: &Map<String, Value>) -> Result<i32, CliError> {
    let p = model_params(m)?;
    let grid = time_grid(m)?;
    let scan = spectrum_scan(&p, grid.t_start, grid.t_end, grid.sample_count)
        .map_err(|e| CliError::Propagation(e.to_string()))?;
    let mut bare = p;
    bare.x0 = 0.0;
    let reference = spectrum_scan(&bare, grid.t_start, grid.t_end, grid.sample_count)
        .map_err(|e| CliError::Propagation(e.to_string()))?;
    let csv = spectrum_csv(&scan, Some(&reference));
    let out = out_path(m, "spectrum.csv");
    write_output(&out, &csv, &manifest_for("spectrum", m, None))?;
    println!("wrote {}", out.display());
    Ok(EXIT_OK)
}

fn evolve_trajectory(p: &ModelParams, m: &Map<String, Value>) -> Result<Trajectory, CliError> {
    let grid = time_grid(m)?;
    let tol = get_f64(m, "tol")?;
    let kappa = get_f64(m, "kappa")?;
    let psi0 = initial_state(p, grid.t_start).map_err(|e| cfg_err(e.to_string()))?;
    if kappa > 0.0 {
        let channel = match get_str(m, "channel")? {
            "decay" => DissipationChannel::SpectatorDecay,
            "dephasing" => DissipationChannel::SpectatorDephasing,
            other => return Err(cfg_err(format!("channel must be decay|dephasing, got {other:?}"))),
        };
        let rho0 = DensityMatrix::pure(&psi0);
        evolve_lindblad(p, &grid, &rho0, &DissipationSpec { rate: kappa, channel }, tol)
            .map_err(|e| CliError::Propagation(e.to_string()))
    } else {
        evolve_unitary(p, &grid, &psi0, tol, false)
            .map_err(|e| CliError::Propagation(e.to_string()))
    }
}

fn cmd_evolve(m: &Map<String, Value>) -> Result<i32, CliError> {
    let p = model_params(m)?;
    let traj = evolve_trajectory(&p, m)?;
    let baseline = if get_bool(m, "baseline")? {
        let bare = ModelParams::new(p.g, p.epsilon, 0.0, 0.0);
        Some(evolve_trajectory(&bare, m)?)
    } else {
        None
    };
    let csv = trajectory_csv(&traj, baseline.as_ref());
    let out = out_path(m, "trajectory.csv");
    write_output(&out, &csv, &manifest_for("evolve", m, None))?;
    println!("wrote {}", out.display());
    Ok(EXIT_OK)
}

fn worker_pool(m: &Map<String, Value>) -> Result<rayon::ThreadPool, CliError> {
    let workers = get_usize(m, "workers")?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| cfg_err(format!("cannot build worker pool: {e}")))
}

fn sweep_inputs(m: &Map<String, Value>) -> Result<(SweepGrid, SweepConfig), CliError> {
    let spectator = match get_str(m, "spectator")? {
        "qubit" => SpectatorSpec::qubit(),
        "oscillator" => SpectatorSpec::oscillator(get_usize(m, "truncation")?),
        other => return Err(cfg_err(format!("spectator must be qubit|oscillator, got {other:?}"))),
    };
    let grid = SweepGrid {
        x0_over_g: parse_axis(get_str(m, "grid_x0")?)?,
        omega_c_over_x0: parse_axis(get_str(m, "grid_wc")?)?,
        g: get_f64(m, "g")?,
        epsilon: get_f64(m, "epsilon")?,
        spectator,
    };
    grid.validate().map_err(|e| cfg_err(e.to_string()))?;
    let cfg = SweepConfig { tol: get_f64(m, "tol")?, ..SweepConfig::default() };
    Ok((grid, cfg))
}

fn cmd_sweep(m: &Map<String, Value>) -> Result<i32, CliError> {
    let (grid, cfg) = sweep_inputs(m)?;
    let out = out_path(m, "sweep.csv");
    let manifest = manifest_for("sweep", m, Some(get_usize(m, "seed")? as u64));
    let mut cache = HashMap::new();
    if get_bool(m, "resume")? && out.exists() {
        let mpath = manifest_path(&out);
        let prev: RunManifest = std::fs::read_to_string(&mpath)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .ok_or_else(|| {
                cfg_err(format!("resume requested but no readable manifest at {}", mpath.display()))
            })?;
        if prev.config_hash != manifest.config_hash {
            return Err(cfg_err(
                "resume refused: existing output was produced by a different configuration",
            ));
        }
        let text = std::fs::read_to_string(&out)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", out.display())))?;
        for row in parse_sweep_csv(&text).map_err(|e| cfg_err(e.to_string()))? {
            cache.insert((row.ix, row.iw), row);
        }
        eprintln!("resuming: {} completed points reused", cache.len());
    }
    let pool = worker_pool(m)?;
    let result = pool
        .install(|| run_sweep_resumed(&grid, &cfg, &cache))
        .map_err(|e| CliError::Propagation(e.to_string()))?;
    write_output(&out, &sweep_csv(&result), &manifest)?;
    println!("wrote {}", out.display());
    if result.failed_count > 0 {
        eprintln!("{} of {} grid points failed", result.failed_count, result.points.len());
        return Ok(EXIT_PARTIAL_SWEEP);
    }
    Ok(EXIT_OK)
}

fn cmd_classify(m: &Map<String, Value>) -> Result<i32, CliError> {
    let p = model_params(m)?;
    let class = classify_regime(&p, &DeltaC2Config::default())
        .map_err(|e| CliError::Propagation(e.to_string()))?;
    let payload = serde_json::to_string_pretty(&class).expect("classification serializes");
    println!("{payload}");
    if m.get("out").and_then(Value::as_str).is_some() {
        let out = out_path(m, "classify.json");
        write_output(&out, &payload, &manifest_for("classify", m, None))?;
    }
    Ok(EXIT_OK)
}

fn cmd_robustness(m: &Map<String, Value>) -> Result<i32, CliError> {
    let p = model_params(m)?;
    let cfg = SweepConfig { tol: get_f64(m, "tol")?, ..SweepConfig::default() };
    let noise = if get_bool(m, "gaussian")? { NoiseKind::Gaussian } else { NoiseKind::Uniform };
    let seed = get_usize(m, "seed")? as u64;
    let pool = worker_pool(m)?;
    let stats = pool
        .install(|| {
            robustness_study(&p, &cfg, get_f64(m, "rel_sigma")?, get_usize(m, "n_samples")?, seed, noise)
                .map_err(|e| CliError::Propagation(e.to_string()))
        })?;
    let payload = serde_json::to_string_pretty(&stats).expect("stats serialize");
    println!("{payload}");
    if m.get("out").and_then(Value::as_str).is_some() {
        let out = out_path(m, "robustness.json");
        write_output(&out, &payload, &manifest_for("robustness", m, Some(seed)))?;
    }
    Ok(EXIT_OK)
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    let (sub, opts) = match &cli.cmd {
        Cmd::Spectrum(o) => ("spectrum", o),
        Cmd::Evolve(o) => ("evolve", o),
        Cmd::Sweep(o) => ("sweep", o),
        Cmd::Classify(o) => ("classify", o),
        Cmd::Robustness(o) => ("robustness", o),
    };
    let outcome = resolve_config(opts).and_then(|m| match sub {
        "spectrum" => cmd_spectrum(&m),
        "evolve" => cmd_evolve(&m),
        "sweep" => cmd_sweep(&m),
        "classify" => cmd_classify(&m),
        "robustness" => cmd_robustness(&m),
        _ => unreachable!(),
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}
