//! Experiment runner: parses one TOML config, executes the requested
//! experiment, and writes JSON + CSV artifacts plus a run manifest.
//!
//! Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 configuration or
//! I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;

use levyfield::config::{validate, RunConfig};
use levyfield::extremes::{
    anticluster_diagnostic, ergodic_average_check, frechet_experiment, geometry_check,
    perturbed_frechet_experiment, simulate_field_dump, tail_ratio_experiment, ExperimentResult,
};

#[derive(Parser)]
#[command(
    name = "levyfield",
    about = "Simulation and verification toolkit for heavy-tailed Lévy-driven random fields",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum EvtVariant {
    Plain,
    Perturbed,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a config file and print the report without running anything
    Validate { config: PathBuf },
    /// Cube-count limit and sandwich checks for the index-set geometry
    GeometryCheck {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Supremum-tail equivalence experiment
    TailTest {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Extreme-value (Fréchet) ladder experiment, optionally perturbed
    EvtTest {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "plain")]
        variant: EvtVariant,
    },
    /// Exact Poisson-max oracle regression (no-kernel mode)
    OracleTest {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Anti-clustering pair diagnostic
    Anticluster {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Ergodic block-average diagnostic
    ErgodicCheck {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Dump one realized field (grid CSV + atom CSV)
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Override the experiment seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the replicate count
    #[arg(long)]
    replicates: Option<usize>,
    /// Output directory (default: alongside the config)
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunManifest {
    config_digest: String,
    toolkit_version: String,
    seed: u64,
    started_unix_ms: u128,
    finished_unix_ms: u128,
    outputs: Vec<String>,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Atomic write: temp file in the target directory, then rename.
fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    ));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

fn load_config(path: &Path, run: Option<&RunArgs>) -> Result<RunConfig, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut cfg = RunConfig::from_toml(&text).map_err(|e| e.to_string())?;
    if let Some(run) = run {
        if let Some(exp) = cfg.experiment.as_mut() {
            if let Some(seed) = run.seed {
                exp.seed = seed;
            }
            if let Some(m) = run.replicates {
                exp.replicates = m;
            }
        }
    }
    let report = validate(&cfg);
    if !report.ok() {
        return Err(report.render());
    }
    Ok(cfg)
}

fn init_workers() {
    if let Ok(n) = std::env::var("LEVYFIELD_WORKERS") {
        if let Ok(n) = n.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

fn emit(
    result: &ExperimentResult,
    name: &str,
    config_path: &Path,
    out_dir: Option<&PathBuf>,
    started: u128,
) -> Result<bool, String> {
    let dir = out_dir.cloned().unwrap_or_else(|| {
        config_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf()
    });
    let json = serde_json::to_string_pretty(result).map_err(|e| e.to_string())?;
    let json_path = dir.join(format!("{name}.json"));
    let csv_path = dir.join(format!("{name}.csv"));
    write_atomic(&json_path, &json).map_err(|e| e.to_string())?;
    write_atomic(&csv_path, &result.to_csv()).map_err(|e| e.to_string())?;
    let manifest = RunManifest {
        config_digest: result.config_digest.clone(),
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: result.seed,
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        outputs: vec![
            json_path.to_string_lossy().into_owned(),
            csv_path.to_string_lossy().into_owned(),
        ],
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).map_err(|e| e.to_string())?;
    write_atomic(&dir.join(format!("{name}.manifest.json")), &manifest_json)
        .map_err(|e| e.to_string())?;

    for v in &result.verdicts {
        println!(
            "[{}] {} (tolerance {}): {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.tolerance,
            v.detail
        );
    }
    Ok(result.pass())
}

fn run_experiment<F>(config: &Path, run: &RunArgs, name: &str, f: F) -> Result<bool, String>
where
    F: FnOnce(&RunConfig) -> levyfield::Result<ExperimentResult>,
{
    let started = now_ms();
    let cfg = load_config(config, Some(run))?;
    let result = f(&cfg).map_err(|e| e.to_string())?;
    emit(&result, name, config, run.out_dir.as_ref(), started)
}

fn main() -> ExitCode {
    init_workers();
    let cli = Cli::parse();
    let outcome: Result<bool, String> = match &cli.command {
        Command::Validate { config } => {
            match fs::read_to_string(config)
                .map_err(|e| format!("cannot read {}: {e}", config.display()))
                .and_then(|text| RunConfig::from_toml(&text).map_err(|e| e.to_string()))
            {
                Ok(cfg) => {
                    let report = validate(&cfg);
                    print!("{}", report.render());
                    if report.ok() {
                        Ok(true)
                    } else {
                        return ExitCode::from(2);
                    }
                }
                Err(e) => Err(e),
            }
        }
        Command::GeometryCheck { config, run } => {
            let outcome = run_experiment(config, run, "geometry_check", geometry_check);
            // classification dump of the largest grid at the smallest k,
            // for visual inspection
            if let Ok(cfg) = load_config(config, Some(run)) {
                if let (Some(geo), Ok(base)) = (cfg.geometry.as_ref(), cfg.index_set.build()) {
                    let set = base.scale(geo.scale_max);
                    if let Ok(grid) = levyfield::geometry::build_grid(&set, geo.k_list[0], geo.l) {
                        let d = cfg.kernel.dimension;
                        let mut csv = String::new();
                        csv.push_str(
                            &(1..=d)
                                .map(|i| format!("z{i}"))
                                .collect::<Vec<_>>()
                                .join(","),
                        );
                        csv.push_str(",class\n");
                        for (z, class) in grid.classification_rows() {
                            let coords = z
                                .iter()
                                .map(|c| c.to_string())
                                .collect::<Vec<_>>()
                                .join(",");
                            csv.push_str(&format!("{coords},{class}\n"));
                        }
                        let dir = run.out_dir.clone().unwrap_or_else(|| {
                            config
                                .parent()
                                .unwrap_or_else(|| Path::new("."))
                                .to_path_buf()
                        });
                        let _ = write_atomic(&dir.join("grid_classes.csv"), &csv);
                    }
                }
            }
            outcome
        }
        Command::TailTest { config, run } => {
            run_experiment(config, run, "tail_test", tail_ratio_experiment)
        }
        Command::EvtTest {
            config,
            run,
            variant,
        } => match variant {
            EvtVariant::Plain => run_experiment(config, run, "evt_test", frechet_experiment),
            EvtVariant::Perturbed => run_experiment(
                config,
                run,
                "evt_test_perturbed",
                perturbed_frechet_experiment,
            ),
            EvtVariant::Both => {
                let plain = run_experiment(config, run, "evt_test", frechet_experiment);
                let pert = run_experiment(
                    config,
                    run,
                    "evt_test_perturbed",
                    perturbed_frechet_experiment,
                );
                match (plain, pert) {
                    (Ok(a), Ok(b)) => Ok(a && b),
                    (Err(e), _) | (_, Err(e)) => Err(e),
                }
            }
        },
        Command::OracleTest { config, run } => {
            let started = now_ms();
            match load_config(config, Some(run)) {
                Ok(cfg) => {
                    if cfg
                        .experiment
                        .as_ref()
                        .map(|e| e.mode != levyfield::config::SupremumMode::AtomMax)
                        .unwrap_or(true)
                    {
                        Err("oracle-test requires experiment.mode = \"atom_max\"".into())
                    } else {
                        frechet_experiment(&cfg)
                            .map_err(|e| e.to_string())
                            .and_then(|r| {
                                emit(&r, "oracle_test", config, run.out_dir.as_ref(), started)
                            })
                    }
                }
                Err(e) => Err(e),
            }
        }
        Command::Anticluster { config, run } => {
            run_experiment(config, run, "anticluster", anticluster_diagnostic)
        }
        Command::ErgodicCheck { config, run } => {
            run_experiment(config, run, "ergodic_check", ergodic_average_check)
        }
        Command::Simulate { config, run } => {
            let started = now_ms();
            match load_config(config, Some(run)) {
                Ok(cfg) => match simulate_field_dump(&cfg) {
                    Ok(dump) => {
                        let dir = run.out_dir.clone().unwrap_or_else(|| {
                            config
                                .parent()
                                .unwrap_or_else(|| Path::new("."))
                                .to_path_buf()
                        });
                        let d = cfg.kernel.dimension;
                        let mut field_csv = String::new();
                        field_csv.push_str(
                            &(1..=d)
                                .map(|i| format!("x{i}"))
                                .collect::<Vec<_>>()
                                .join(","),
                        );
                        field_csv.push_str(",value\n");
                        for (node, value) in &dump.nodes {
                            let coords = node
                                .iter()
                                .map(|c| c.to_string())
                                .collect::<Vec<_>>()
                                .join(",");
                            field_csv.push_str(&format!("{coords},{value}\n"));
                        }
                        let mut atoms_csv = String::new();
                        atoms_csv.push_str(
                            &(1..=d)
                                .map(|i| format!("u{i}"))
                                .collect::<Vec<_>>()
                                .join(","),
                        );
                        atoms_csv.push_str(",magnitude\n");
                        for atom in &dump.atoms {
                            let coords = atom
                                .location
                                .iter()
                                .map(|c| c.to_string())
                                .collect::<Vec<_>>()
                                .join(",");
                            atoms_csv.push_str(&format!("{coords},{}\n", atom.magnitude));
                        }
                        let field_path = dir.join("field.csv");
                        let atoms_path = dir.join("atoms.csv");
                        let r = write_atomic(&field_path, &field_csv)
                            .and_then(|_| write_atomic(&atoms_path, &atoms_csv));
                        match r {
                            Ok(_) => {
                                let manifest = RunManifest {
                                    config_digest: cfg.digest(),
                                    toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
                                    seed: cfg.experiment.as_ref().map(|e| e.seed).unwrap_or(0),
                                    started_unix_ms: started,
                                    finished_unix_ms: now_ms(),
                                    outputs: vec![
                                        field_path.to_string_lossy().into_owned(),
                                        atoms_path.to_string_lossy().into_owned(),
                                    ],
                                };
                                let _ = write_atomic(
                                    &dir.join("simulate.manifest.json"),
                                    &serde_json::to_string_pretty(&manifest).unwrap(),
                                );
                                println!(
                                    "wrote {} grid nodes, {} atoms; sup = {} (upper bound {:?})",
                                    dump.nodes.len(),
                                    dump.atoms.len(),
                                    dump.sup.sup_estimate,
                                    dump.sup.upper_bound
                                );
                                Ok(true)
                            }
                            Err(e) => Err(e.to_string()),
                        }
                    }
                    Err(e) => Err(e.to_string()),
                },
                Err(e) => Err(e),
            }
        }
    };

    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more verdicts failed");
            ExitCode::from(1)
        }
        Err(msg) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}
