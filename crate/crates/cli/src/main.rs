use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::Value;

use cn2f_core::catalog;
use cn2f_core::manifest::{
    parse_deployment, parse_scenario, parse_topology, validate_with_profiles, DeploymentDoc,
    ScenarioDoc, TopologyDoc,
};
use cn2f_core::orchestrator::ClusterSim;
use cn2f_core::scenario::{
    self, builtin_file, builtin_profile, builtin_profile_names, emit_table, fit_calibration,
    parse_profile, parse_table1, parse_table2, resolve_deployments, run_scenario_with,
    CalibrationProfile, RunConfig, ScenarioError, TableFormat,
};
use cn2f_core::sim::secs;

const EXIT_VALIDATION: u8 = 1;
const EXIT_PROBE: u8 = 2;
const EXIT_STUCK: u8 = 3;

#[derive(Parser)]
#[command(
    name = "cn2f-sim",
    version,
    about = "Simulate a cloud-native 4G testbed"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and cross-check topology, deployment and scenario documents.
    Validate {
        #[arg(required = true)]
        docs: Vec<PathBuf>,
    },
    /// Run a scenario and print its result table.
    Run {
        /// Topology file, or `reference` for the shipped one.
        #[arg(long)]
        topology: String,
        /// Scenario file, or the name of a shipped scenario.
        #[arg(long)]
        scenario: String,
        /// Profile name or profile JSON file; defaults to the scenario's.
        #[arg(long)]
        profile: Option<String>,
        #[arg(long, env = "CN2F_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "tsv", value_parser = ["tsv", "pretty"])]
        format: String,
        /// Control script: one JSON message per line, optional `at_ms`.
        #[arg(long)]
        control: Option<PathBuf>,
        /// Write the orchestration event log here.
        #[arg(long)]
        event_log: Option<PathBuf>,
        /// Write the flow table here.
        #[arg(long)]
        flows: Option<PathBuf>,
    },
    /// Fit a calibration profile from placement and slicing tables.
    Calibrate {
        #[arg(long)]
        table1: PathBuf,
        #[arg(long)]
        table2: PathBuf,
        #[arg(short = 'o', long)]
        output: PathBuf,
        #[arg(long, default_value = scenario::FITTED_NAME)]
        name: String,
    },
    /// Print the VNF catalog as TSV.
    Catalog,
    /// Apply deployments to a cluster and print the event log.
    Apply {
        #[arg(long)]
        topology: String,
        #[arg(required = true)]
        docs: Vec<PathBuf>,
        /// Simulated seconds to run.
        #[arg(long, default_value_t = 300)]
        until: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate { docs } => validate(&docs),
        Command::Run {
            topology,
            scenario,
            profile,
            seed,
            format,
            control,
            event_log,
            flows,
        } => run(RunArgs {
            topology,
            scenario,
            profile,
            seed,
            format: format.parse().expect("restricted by clap"),
            control,
            event_log,
            flows,
        }),
        Command::Calibrate {
            table1,
            table2,
            output,
            name,
        } => calibrate(&table1, &table2, &output, &name),
        Command::Catalog => {
            print!("{}", catalog::catalog_tsv());
            Ok(ExitCode::SUCCESS)
        }
        Command::Apply {
            topology,
            docs,
            until,
        } => apply(&topology, &docs, until),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn load_topology(arg: &str) -> Result<TopologyDoc> {
    let path = Path::new(arg);
    if !path.exists() && arg == scenario::REFERENCE_TOPOLOGY {
        return Ok(scenario::reference_topology());
    }
    parse_topology(&read(path)?).with_context(|| arg.to_string())
}

/// Resolves deployment paths relative to `base`, falling back to shipped files.
fn resolve(doc: &mut ScenarioDoc, base: Option<&Path>) -> Result<()> {
    resolve_deployments(doc, |p| {
        if let Some(dir) = base {
            let candidate = dir.join(p);
            if candidate.exists() {
                return fs::read(&candidate).map_err(|e| e.to_string());
            }
        }
        builtin_file(p)
            .map(|t| t.as_bytes().to_vec())
            .ok_or_else(|| "no such file".to_string())
    })?;
    Ok(())
}

fn load_scenario(arg: &str) -> Result<ScenarioDoc> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(doc) = scenario::builtin_scenario(arg) {
            return Ok(doc);
        }
    }
    let mut doc = parse_scenario(&read(path)?).with_context(|| arg.to_string())?;
    resolve(&mut doc, path.parent())?;
    Ok(doc)
}

fn load_profile(arg: &str) -> Result<CalibrationProfile> {
    if let Some(p) = builtin_profile(arg) {
        return Ok(p);
    }
    let text = fs::read_to_string(arg)
        .with_context(|| format!("{arg:?} is neither a built-in profile nor a readable file"))?;
    Ok(parse_profile(&text)?)
}

enum DocKind {
    Topology,
    Deployment,
    Scenario,
}

fn classify(text: &[u8]) -> DocKind {
    let value: Value = serde_json::from_slice(text).unwrap_or(Value::Null);
    if value.get("nodes").is_some() || value.get("ip_pools").is_some() {
        DocKind::Topology
    } else if value.get("vnf_kind").is_some() {
        DocKind::Deployment
    } else {
        DocKind::Scenario
    }
}

fn validate(paths: &[PathBuf]) -> Result<ExitCode> {
    let mut topology = None;
    let mut deployments: Vec<DeploymentDoc> = Vec::new();
    let mut scenarios: Vec<ScenarioDoc> = Vec::new();
    let mut failed = false;
    for path in paths {
        let text = read(path)?;
        let name = path.display();
        let parsed = match classify(&text) {
            DocKind::Topology => parse_topology(&text).map(|t| {
                topology = Some(t);
            }),
            DocKind::Deployment => parse_deployment(&text).map(|d| deployments.push(d)),
            DocKind::Scenario => parse_scenario(&text).map(|mut s| {
                if let Err(e) = resolve(&mut s, path.parent()) {
                    println!("ERROR Unresolved {name}: {e:#}");
                    failed = true;
                }
                scenarios.push(s);
            }),
        };
        if let Err(e) = parsed {
            println!("ERROR Parse {name}: {e}");
            failed = true;
        }
    }
    let Some(topology) = topology else {
        if failed {
            return Ok(ExitCode::from(EXIT_VALIDATION));
        }
        bail!("no topology document among the inputs");
    };

    let profiles = builtin_profile_names();
    let mut runs: Vec<(Vec<DeploymentDoc>, Option<&ScenarioDoc>)> = Vec::new();
    if scenarios.is_empty() {
        runs.push((deployments.clone(), None));
    }
    for s in &scenarios {
        let mut docs = deployments.clone();
        docs.extend(s.inline_deployments().cloned());
        runs.push((docs, Some(s)));
    }
    for (docs, s) in runs {
        let report = validate_with_profiles(&topology, &docs, s, &profiles);
        for line in report.lines() {
            println!("{line}");
        }
        failed |= !report.is_runnable();
    }
    Ok(if failed {
        ExitCode::from(EXIT_VALIDATION)
    } else {
        ExitCode::SUCCESS
    })
}

struct RunArgs {
    topology: String,
    scenario: String,
    profile: Option<String>,
    seed: u64,
    format: TableFormat,
    control: Option<PathBuf>,
    event_log: Option<PathBuf>,
    flows: Option<PathBuf>,
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let topology = load_topology(&args.topology)?;
    let scenario = load_scenario(&args.scenario)?;

    let mut profiles = builtin_profile_names();
    let profile = match &args.profile {
        Some(p) => {
            // An explicit profile replaces the scenario's choice.
            profiles.push(scenario.calibration_profile.as_str());
            load_profile(p)?
        }
        None => builtin_profile(&scenario.calibration_profile)
            .unwrap_or_else(CalibrationProfile::nominal),
    };
    let docs: Vec<DeploymentDoc> = scenario.inline_deployments().cloned().collect();
    let report = validate_with_profiles(&topology, &docs, Some(&scenario), &profiles);
    for line in report.lines() {
        eprintln!("{line}");
    }
    if !report.is_runnable() {
        return Ok(ExitCode::from(EXIT_VALIDATION));
    }

    let control = match &args.control {
        Some(path) => fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(str::to_string)
            .collect(),
        None => Vec::new(),
    };
    let config = RunConfig {
        seed: args.seed,
        control,
    };
    match run_scenario_with(&scenario, &topology, &profile, &config) {
        Ok(result) => {
            print!("{}", emit_table(&result, args.format));
            for r in &result.control_responses {
                eprintln!("control: {r}");
            }
            if let Some(path) = &args.event_log {
                fs::write(path, &result.event_log)?;
            }
            if let Some(path) = &args.flows {
                fs::write(path, &result.flow_table)?;
            }
            Ok(if result.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_PROBE)
            })
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let (Some(path), Some(log)) = (&args.event_log, e.event_log()) {
                fs::write(path, log)?;
            }
            Ok(ExitCode::from(match e {
                ScenarioError::DeploymentStuck { .. } => EXIT_STUCK,
                ScenarioError::ProbeFailed { .. } => EXIT_PROBE,
                _ => EXIT_VALIDATION,
            }))
        }
    }
}

fn calibrate(table1: &Path, table2: &Path, output: &Path, name: &str) -> Result<ExitCode> {
    let t1 = parse_table1(&fs::read_to_string(table1)?)
        .with_context(|| format!("{}", table1.display()))?;
    let t2 = parse_table2(&fs::read_to_string(table2)?)
        .with_context(|| format!("{}", table2.display()))?;
    let mut profile = fit_calibration(&t1, &t2)?;
    profile.name = name.to_string();
    let mut text = serde_json::to_string_pretty(&profile)?;
    text.push('\n');
    fs::write(output, text).with_context(|| format!("writing {}", output.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn apply(topology: &str, paths: &[PathBuf], until: u64) -> Result<ExitCode> {
    let topology = load_topology(topology)?;
    let mut docs = Vec::new();
    for p in paths {
        docs.push(parse_deployment(&read(p)?).with_context(|| format!("{}", p.display()))?);
    }
    let mut sim = ClusterSim::new(&topology);
    for d in docs {
        sim.apply(d);
    }
    sim.run_until(secs(until))?;
    print!("{}", sim.cluster.event_log_tsv());
    Ok(ExitCode::SUCCESS)
}
