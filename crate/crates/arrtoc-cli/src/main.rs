use anyhow::{anyhow, Context};
use arrtoc::control::{
    bioreactor_batch, estimate_gamma, evaporator_batch, metrics, BioreactorLoopConfig, DisturbanceKind,
    EvaporatorGains, EvaporatorLoopConfig, SimulationResult,
};
use arrtoc::plants::{BioreactorParams, CostParams, EnergyBasis, EvaporatorSetpoint};
use arrtoc::problems::{
    bioreactor_problem, bioreactor_training_data, evaporator_problem, illustrative_problem, BenchmarkId,
    ConstraintProfile, CONTROLLER_SETTINGS, EVAPORATOR_NOMINAL,
};
use arrtoc::report::{write_trace_csv, MetricsReport, RunManifest, RunMetrics, SolutionReport, SOLUTION_SCHEMA_VERSION};
use arrtoc::solver::{solve_arrtoc, solve_multistart};
use arrtoc::studies::{bioreactor_study, evaporator_study, illustrative_study, Check};
use arrtoc::surrogate;
use arrtoc::{ProblemSpec, SolverConfig, UncertaintySet};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "arrtoc", version, about = "Robust set-point optimization and closed-loop simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a built-in benchmark for a robust set-point.
    Solve(SolveArgs),
    /// Run closed-loop simulations described by a scenario file.
    Simulate(SimulateArgs),
    /// Run a full case study and print a pass/fail summary.
    Reproduce(ReproduceArgs),
}

#[derive(clap::Args)]
struct SolveArgs {
    #[arg(long)]
    benchmark: Option<BenchmarkId>,
    /// Radius on every axis.
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    /// Radius on the first axis.
    #[arg(long, allow_hyphen_values = true)]
    gamma_x: Option<f64>,
    /// Radius on the second axis.
    #[arg(long, allow_hyphen_values = true)]
    gamma_y: Option<f64>,
    /// Radius on the third axis.
    #[arg(long, allow_hyphen_values = true)]
    gamma_z: Option<f64>,
    /// Single start point, comma separated; multi-start otherwise.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    start: Option<Vec<f64>>,
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Replace the seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Case {
    Illustrative,
    Bioreactor,
    Evaporator,
}

#[derive(clap::Args)]
struct ReproduceArgs {
    case: Case,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Closed-loop runs per set-point.
    #[arg(long)]
    runs: Option<u64>,
    #[arg(long, default_value_t = 5)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    NotConverged(String),
    Aborted(String),
    Io(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::NotConverged(_) => 3,
            Failure::Aborted(_) => 4,
            Failure::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e:#}"),
            Failure::NotConverged(s) => write!(f, "solver did not converge: {s}"),
            Failure::Aborted(s) => write!(f, "simulation aborted: {s}"),
            Failure::Io(e) => write!(f, "{e:#}"),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn io_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Io(e.into())
}

/// Solve file schema. Command-line flags take precedence.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveFile {
    benchmark: Option<BenchmarkId>,
    radii: Option<Vec<f64>>,
    start: Option<Vec<f64>>,
    starts: Option<usize>,
    seed: Option<u64>,
    #[serde(default)]
    energy_basis: EnergyBasis,
    #[serde(default)]
    profile: ConstraintProfile,
    /// Surrogate training data for the bioreactor, two columns `x,q`.
    training_csv: Option<PathBuf>,
    #[serde(default)]
    solver: SolverConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "plant", rename_all = "lowercase")]
enum Scenario {
    Bioreactor(BioreactorScenario),
    Evaporator(EvaporatorScenario),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BioreactorScenario {
    seeds: Vec<u64>,
    setpoint: f64,
    horizon: Option<f64>,
    dt: Option<f64>,
    gains: Option<PiGains>,
    s_i: Option<DisturbanceKind>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PiGains {
    kc: f64,
    ki: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaporatorScenario {
    seeds: Vec<u64>,
    setpoint: EvaporatorSetpoint,
    gains: EvaporatorGainsSpec,
    horizon: Option<f64>,
    dt: Option<f64>,
    #[serde(default)]
    profile: ConstraintProfile,
    x_f: Option<DisturbanceKind>,
    f: Option<DisturbanceKind>,
    #[serde(default)]
    manual_steam: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum EvaporatorGainsSpec {
    Setting { setting: usize },
    Explicit(EvaporatorGains),
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Outcome<(T, String)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(config_err)?;
    let value = toml::from_str(&text).map_err(|e| config_err(anyhow!("{}: {e}", path.display())))?;
    Ok((value, text))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes artifacts under one directory and records their checksums.
struct Artifacts {
    dir: PathBuf,
    written: Vec<(String, String)>,
}

impl Artifacts {
    fn new(dir: &Path) -> Outcome<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(io_err)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Outcome<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display())).map_err(io_err)?;
        self.written.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Outcome<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(io_err)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn finish(mut self, command: &str, benchmark: Option<String>, config: String, seeds: Vec<u64>) -> Outcome<()> {
        let manifest = RunManifest {
            command: command.into(),
            benchmark,
            config,
            seeds,
            output_dir: self.dir.display().to_string(),
            artifacts: std::mem::take(&mut self.written),
            version: env!("CARGO_PKG_VERSION").into(),
        };
        self.json("manifest.json", &manifest)
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> arrtoc::Result<()>) -> Outcome<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(io_err)?;
    Ok(buf)
}

fn default_radii(id: BenchmarkId) -> Vec<f64> {
    match id {
        BenchmarkId::Illustrative => vec![0.3, 0.3],
        BenchmarkId::IllustrativeEllipsoid => vec![0.4, 0.15],
        BenchmarkId::Bioreactor => vec![1.0],
        BenchmarkId::Evaporator => CONTROLLER_SETTINGS[0].radii().to_vec(),
    }
}

fn build_problem(id: BenchmarkId, radii: &[f64], file: &SolveFile) -> Outcome<ProblemSpec> {
    let set = UncertaintySet::new(radii.to_vec()).map_err(config_err)?;
    let expect = |n: usize| {
        if radii.len() == n {
            Ok(())
        } else {
            Err(config_err(anyhow!("benchmark {id} needs {n} radii, got {}", radii.len())))
        }
    };
    match id {
        BenchmarkId::Illustrative | BenchmarkId::IllustrativeEllipsoid => {
            expect(2)?;
            Ok(illustrative_problem(set))
        }
        BenchmarkId::Bioreactor => {
            expect(1)?;
            let (xs, qs) = match &file.training_csv {
                Some(p) => surrogate::read_training_csv(p).map_err(config_err)?,
                None => bioreactor_training_data(20.0, &BioreactorParams::default()),
            };
            let gp = surrogate::fit(&xs, &qs).map_err(config_err)?;
            bioreactor_problem(Arc::new(gp), radii[0]).map_err(config_err)
        }
        BenchmarkId::Evaporator => {
            expect(3)?;
            let costs = CostParams { energy_basis: file.energy_basis, ..CostParams::default() };
            evaporator_problem(100.0, 0.2, [radii[0], radii[1], radii[2]], file.profile, costs).map_err(config_err)
        }
    }
}

fn cmd_solve(args: SolveArgs) -> Outcome<()> {
    let (file, text) = match &args.config {
        Some(p) => read_toml::<SolveFile>(p)?,
        None => (SolveFile::default(), String::new()),
    };
    let id = args
        .benchmark
        .or(file.benchmark)
        .ok_or_else(|| config_err(anyhow!("no benchmark given (use --benchmark or `benchmark` in the config)")))?;
    let mut radii = file.radii.clone().unwrap_or_else(|| default_radii(id));
    if let Some(g) = args.gamma {
        radii.iter_mut().for_each(|r| *r = g);
    }
    for (axis, v) in [args.gamma_x, args.gamma_y, args.gamma_z].into_iter().enumerate() {
        if let Some(v) = v {
            *radii.get_mut(axis).ok_or_else(|| config_err(anyhow!("benchmark {id} has no axis {}", axis + 1)))? = v;
        }
    }
    let mut cfg = file.solver.clone();
    if let Some(s) = args.seed.or(file.seed) {
        cfg.seed = s;
    }
    cfg.validate().map_err(config_err)?;
    let problem = build_problem(id, &radii, &file)?;
    let start = args.start.clone().or(file.start.clone()).or_else(|| match id {
        BenchmarkId::Evaporator => Some(vec![EVAPORATOR_NOMINAL.x_b, EVAPORATOR_NOMINAL.h, EVAPORATOR_NOMINAL.p]),
        _ => None,
    });
    let starts = args.starts.or(file.starts).unwrap_or(5);
    let (solution, trace) = match &start {
        Some(x0) => solve_arrtoc(&problem, x0, &cfg),
        None => solve_multistart(&problem, starts, &cfg),
    }
    .map_err(config_err)?;

    let mut out = Artifacts::new(&args.out)?;
    let report = SolutionReport {
        schema_version: SOLUTION_SCHEMA_VERSION,
        benchmark: id.to_string(),
        radii: radii.clone(),
        start: start.clone().unwrap_or_default(),
        solution: solution.clone(),
    };
    out.json("solution.json", &report)?;
    out.write("trace.csv", &csv_bytes(|w| write_trace_csv(&trace, w))?)?;
    let snapshot = SolveFile {
        benchmark: Some(id),
        radii: Some(radii),
        start,
        starts: Some(starts),
        seed: Some(cfg.seed),
        solver: cfg.clone(),
        ..file
    };
    let config = if text.is_empty() { toml::to_string(&snapshot).map_err(io_err)? } else { text };
    out.finish("solve", Some(id.to_string()), config, vec![cfg.seed])?;

    println!(
        "{id}: point {:?}, objective {:.6}, worst case {:.6}, {:?} after {} iterations",
        solution.point, solution.nominal_value, solution.worst_case_estimate, solution.termination, solution.iterations
    );
    if !solution.converged() || !solution.feasible_under_perturbation {
        return Err(Failure::NotConverged(format!("{:?}; best point written", solution.termination)));
    }
    Ok(())
}

fn gains_for(spec: &EvaporatorGainsSpec) -> Outcome<EvaporatorGains> {
    match spec {
        EvaporatorGainsSpec::Explicit(g) => Ok(*g),
        EvaporatorGainsSpec::Setting { setting } => CONTROLLER_SETTINGS
            .iter()
            .find(|s| s.id == *setting)
            .map(|s| s.gains)
            .ok_or_else(|| config_err(anyhow!("gains.setting must be 1 to 7, got {setting}"))),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Outcome<()> {
    let (mut scenario, text) = read_toml::<Scenario>(&args.config)?;
    if let Some(s) = args.seed {
        match &mut scenario {
            Scenario::Bioreactor(b) => b.seeds = vec![s],
            Scenario::Evaporator(e) => e.seeds = vec![s],
        }
    }
    let (plant, seeds, runs) = match &scenario {
        Scenario::Bioreactor(b) => {
            let mut cfg = BioreactorLoopConfig { setpoint: b.setpoint, ..Default::default() };
            if let Some(g) = &b.gains {
                (cfg.kc, cfg.ki) = (g.kc, g.ki);
            }
            cfg.horizon = b.horizon.unwrap_or(cfg.horizon);
            cfg.dt = b.dt.unwrap_or(cfg.dt);
            cfg.s_i = b.s_i.clone().unwrap_or(cfg.s_i);
            ("bioreactor", b.seeds.clone(), bioreactor_batch(&cfg, &b.seeds).map_err(config_err)?)
        }
        Scenario::Evaporator(e) => {
            let mut cfg = EvaporatorLoopConfig::new(e.setpoint, gains_for(&e.gains)?, e.profile);
            cfg.horizon = e.horizon.unwrap_or(cfg.horizon);
            cfg.dt = e.dt.unwrap_or(cfg.dt);
            cfg.x_f = e.x_f.clone().unwrap_or(cfg.x_f);
            cfg.f = e.f.clone().unwrap_or(cfg.f);
            cfg.manual_steam = e.manual_steam;
            ("evaporator", e.seeds.clone(), evaporator_batch(&cfg, &e.seeds).map_err(config_err)?)
        }
    };
    if seeds.is_empty() {
        return Err(config_err(anyhow!("`seeds` must list at least one seed")));
    }
    let mut out = Artifacts::new(&args.out)?;
    let mut per_run = Vec::new();
    for (seed, r) in seeds.iter().zip(&runs) {
        out.write(&format!("series_seed{seed}.csv"), &csv_bytes(|w| r.write_csv(w))?)?;
        let gamma = r.controlled.iter().map(|c| c.name.clone()).zip(estimate_gamma(r, 0.1)).collect();
        per_run.push(RunMetrics { seed: *seed, metrics: metrics(r).map_err(io_err)?, gamma });
    }
    let report = MetricsReport::new(plant, per_run);
    out.json("metrics.json", &report)?;
    out.finish("simulate", Some(plant.into()), text, seeds.clone())?;
    println!(
        "{plant}: {} runs, washouts {}, mean objective {:.4}, violation fraction {:.4}",
        runs.len(),
        report.washout_count,
        report.mean_objective,
        report.mean_violation_fraction
    );
    aborted(&seeds, &runs)
}

fn aborted(seeds: &[u64], runs: &[SimulationResult]) -> Outcome<()> {
    let msgs: Vec<String> = seeds
        .iter()
        .zip(runs)
        .filter_map(|(s, r)| r.abort.as_ref().map(|a| format!("seed {s}: {a}")))
        .collect();
    if msgs.is_empty() {
        Ok(())
    } else {
        Err(Failure::Aborted(msgs.join("; ")))
    }
}

fn summary_text(checks: &[Check]) -> String {
    checks
        .iter()
        .map(|c| format!("{} {}: {}\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail))
        .collect()
}

fn cmd_reproduce(args: ReproduceArgs) -> Outcome<()> {
    let cfg = SolverConfig { seed: args.seed, ..Default::default() };
    let mut out = Artifacts::new(&args.out)?;
    let (name, checks, seeds) = match args.case {
        Case::Illustrative => {
            let radii = [vec![0.3, 0.3], vec![0.1, 0.1], vec![0.4, 0.15]];
            let r = illustrative_study(&radii, 0.3, args.starts, &cfg).map_err(io_err)?;
            out.write("illustrative.csv", &csv_bytes(|w| r.write_csv(w))?)?;
            out.json("illustrative.json", &r)?;
            ("illustrative", r.checks(), vec![args.seed])
        }
        Case::Bioreactor => {
            let seeds: Vec<u64> = (0..args.runs.unwrap_or(10)).collect();
            let r = bioreactor_study(1.0, &[9.0, 8.5, 8.0], &seeds, args.starts, &cfg).map_err(io_err)?;
            out.write("bioreactor.csv", &csv_bytes(|w| r.write_csv(w))?)?;
            out.json("bioreactor.json", &r)?;
            ("bioreactor", r.checks(), seeds)
        }
        Case::Evaporator => {
            let seeds: Vec<u64> = (0..args.runs.unwrap_or(5)).collect();
            let r = evaporator_study(&seeds, ConstraintProfile::Reported, &cfg).map_err(io_err)?;
            out.write("evaporator.csv", &csv_bytes(|w| r.write_csv(w))?)?;
            out.json("evaporator.json", &r)?;
            ("evaporator", r.checks(), seeds)
        }
    };
    let text = summary_text(&checks);
    out.write("summary.txt", text.as_bytes())?;
    let config = format!("case = \"{name}\"\nstarts = {}\nseed = {}\n", args.starts, args.seed);
    out.finish("reproduce", Some(name.into()), config, seeds)?;
    print!("{text}");
    let failed = checks.iter().filter(|c| !c.pass).count();
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Reproduce(a) => cmd_reproduce(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gains_by_setting_number() {
        let g = gains_for(&EvaporatorGainsSpec::Setting { setting: 7 }).unwrap();
        assert_eq!(g, CONTROLLER_SETTINGS[6].gains);
        assert!(gains_for(&EvaporatorGainsSpec::Setting { setting: 8 }).is_err());
    }

    #[test]
    fn checksum_is_hex_sha256() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn scenario_names_missing_key() {
        let err = toml::from_str::<Scenario>("plant = \"bioreactor\"\nsetpoint = 8.5\n").unwrap_err();
        assert!(err.to_string().contains("seeds"), "{err}");
    }

    #[test]
    fn evaporator_scenario_parses() {
        let s: Scenario = toml::from_str(
            "plant = \"evaporator\"\nseeds = [0]\nsetpoint = { x_b = 0.7, h = 5.0, p = 1e5 }\ngains = { setting = 3 }\n",
        )
        .unwrap();
        assert!(matches!(s, Scenario::Evaporator(_)));
    }
}
