//! Command-line toolkit for irregular invertible Bloom lookup tables.
//!
//! Subcommands cover the analysis pipeline end to end: `threshold` and
//! `de-trace` run density evolution, `simulate` and `sweep` run the Monte
//! Carlo harness, `optimize` searches degree distributions, and `encode`,
//! `recover`, `reconcile` operate on serialized tables.
//!
//! Every run echoes its fully resolved configuration (defaults and seeds
//! included) as a single `CONFIG {...}` line on stderr; results go to
//! stdout or the `--out` file. Exit codes: 0 success, 1 domain error
//! (invalid distribution, parameter mismatch, corrupt table), 2 I/O error.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use iblt::anneal::{optimize, AnnealConfig};
use iblt::degree::DegreeDistribution;
use iblt::density::{de_converge, find_threshold_with_grid, DEParams, DEFAULT_CONVERGENCE_EPS};
use iblt::reconcile::{recover_diff, subtract};
use iblt::sim::{estimate_pe, sweep_load, SimConfig};
use iblt::table::{Iblt, KeyValuePair};

const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (table format v1, sweep csv v1)"
);

#[derive(Parser)]
#[command(name = "iblt", version = VERSION, about = "Irregular IBLT toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the load threshold of a degree distribution.
    Threshold {
        /// Degree distribution JSON file.
        #[arg(long)]
        dist: PathBuf,
        /// Bisection tolerance on the load.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Grid points for the success condition.
        #[arg(long, default_value_t = 10_000)]
        grid: u32,
    },
    /// Emit the density-evolution trajectory as CSV `iter,p,q`.
    #[command(name = "de-trace")]
    DeTrace {
        #[arg(long)]
        dist: PathBuf,
        /// Load to evaluate at.
        #[arg(long)]
        eta: f64,
        #[arg(long = "max-iters", default_value_t = 100_000)]
        max_iters: u32,
    },
    /// Monte Carlo failure probability at a single load point.
    Simulate {
        #[arg(long)]
        dist: PathBuf,
        /// Number of cells.
        #[arg(long)]
        m: usize,
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Monte Carlo sweep over a load grid for every distribution in a directory.
    Sweep {
        /// Directory of degree distribution JSON files.
        #[arg(long)]
        dists: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long = "eta-from")]
        eta_from: f64,
        #[arg(long = "eta-to")]
        eta_to: f64,
        #[arg(long = "eta-step")]
        eta_step: f64,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulated-annealing search for a high-threshold distribution.
    Optimize {
        /// Comma-separated allowed degrees, e.g. 2,3,18.
        #[arg(long)]
        degrees: String,
        /// Cap on the degree-2 probability.
        #[arg(long = "max-l2", default_value_t = 0.15)]
        max_l2: f64,
        #[arg(long, default_value_t = 5000)]
        steps: u32,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output JSON path (distribution plus threshold annotation).
        #[arg(long)]
        out: PathBuf,
    },
    /// Subtract two serialized tables and recover the symmetric difference.
    Reconcile {
        #[arg(long = "table-a")]
        table_a: PathBuf,
        #[arg(long = "table-b")]
        table_b: PathBuf,
        /// Output JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a table from a newline-delimited hex value file.
    Encode {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Key width in bits.
        #[arg(long, default_value_t = 64)]
        nu: u16,
        /// Input file: one hex-encoded value per line, all the same length.
        #[arg(long)]
        values: PathBuf,
        /// Output path for the serialized table.
        #[arg(long)]
        out: PathBuf,
    },
    /// Peel a serialized table and list its contents.
    Recover {
        #[arg(long)]
        table: PathBuf,
        /// Output JSON path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum CliError {
    Domain(String),
    Io(String),
}

impl CliError {
    fn domain(e: impl std::fmt::Display) -> Self {
        Self::Domain(e.to_string())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_dist(path: &Path) -> Result<DegreeDistribution, CliError> {
    let text = read_text(path)?;
    DegreeDistribution::from_json_str(&text)
        .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn load_table(path: &Path) -> Result<Iblt, CliError> {
    let bytes = read_file(path)?;
    Iblt::from_bytes(&bytes).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn echo_config(value: serde_json::Value) {
    eprintln!("CONFIG {value}");
}

fn dist_json_with_threshold(dist: &DegreeDistribution, threshold: f64) -> serde_json::Value {
    json!({
        "terms": dist
            .entries()
            .iter()
            .map(|&(d, p)| json!({"degree": d, "prob": p}))
            .collect::<Vec<_>>(),
        "threshold": threshold,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Threshold { dist, tol, grid } => {
            echo_config(json!({
                "subcommand": "threshold", "dist": dist.display().to_string(),
                "tol": tol, "grid": grid,
            }));
            let d = load_dist(&dist)?;
            let report = find_threshold_with_grid(&d, tol, grid).map_err(CliError::domain)?;
            let line = serde_json::to_string(&report).expect("report serializes");
            println!("{line}");
        }
        Command::DeTrace {
            dist,
            eta,
            max_iters,
        } => {
            echo_config(json!({
                "subcommand": "de-trace", "dist": dist.display().to_string(),
                "eta": eta, "max_iters": max_iters,
                "convergence_eps": DEFAULT_CONVERGENCE_EPS,
            }));
            let d = load_dist(&dist)?;
            let params = DEParams::with_options(d, eta, max_iters, DEFAULT_CONVERGENCE_EPS, 2)
                .map_err(CliError::domain)?;
            let trace = de_converge(&params);
            println!("iter,p,q");
            for (i, (p, q)) in trace.p_sequence.iter().zip(&trace.q_sequence).enumerate() {
                println!("{i},{p},{q}");
            }
        }
        Command::Simulate {
            dist,
            m,
            eta,
            trials,
            seed,
        } => {
            echo_config(json!({
                "subcommand": "simulate", "dist": dist.display().to_string(),
                "m": m, "eta": eta, "trials": trials, "seed": seed,
            }));
            let d = load_dist(&dist)?;
            if eta <= 0.0 || (eta * m as f64).round() < 1.0 {
                return Err(CliError::Domain(format!(
                    "load {eta} rounds to an empty table"
                )));
            }
            if d.max_degree() as usize > m {
                return Err(CliError::Domain(format!(
                    "max degree {} exceeds m = {m}",
                    d.max_degree()
                )));
            }
            let mut config = SimConfig::new(d, m);
            config.eta_values = vec![eta];
            config.trials_per_point = trials;
            config.master_seed = seed;
            let result = estimate_pe(&config);
            let line = serde_json::to_string(&result.points[0]).expect("point serializes");
            println!("{line}");
        }
        Command::Sweep {
            dists,
            m,
            eta_from,
            eta_to,
            eta_step,
            trials,
            seed,
            out,
        } => {
            echo_config(json!({
                "subcommand": "sweep", "dists": dists.display().to_string(),
                "m": m, "eta_from": eta_from, "eta_to": eta_to, "eta_step": eta_step,
                "trials": trials, "seed": seed, "out": out.display().to_string(),
            }));
            if eta_step <= 0.0 {
                return Err(CliError::Domain("eta-step must be positive".into()));
            }
            if eta_from <= 0.0 || (eta_from * m as f64).round() < 1.0 {
                return Err(CliError::Domain(format!(
                    "eta-from {eta_from} rounds to an empty table at m = {m}"
                )));
            }
            let mut entries = Vec::new();
            let rd = fs::read_dir(&dists)
                .map_err(|e| CliError::Io(format!("{}: {e}", dists.display())))?;
            for entry in rd {
                let entry = entry.map_err(|e| CliError::Io(e.to_string()))?;
                let path = entry.path();
                if path.extension().is_some_and(|e| e == "json") {
                    let id = path
                        .file_stem()
                        .map(|s| s.to_string_lossy().replace(',', "_"))
                        .unwrap_or_default();
                    entries.push((id, load_dist(&path)?));
                }
            }
            if entries.is_empty() {
                return Err(CliError::Domain(format!(
                    "no .json distributions in {}",
                    dists.display()
                )));
            }
            let mut etas = Vec::new();
            let mut k = 0u32;
            loop {
                let eta = eta_from + k as f64 * eta_step;
                if eta > eta_to + 1e-9 {
                    break;
                }
                etas.push(eta);
                k += 1;
            }
            for (_, d) in &entries {
                if d.max_degree() as usize > m {
                    return Err(CliError::Domain(format!(
                        "max degree {} exceeds m = {m}",
                        d.max_degree()
                    )));
                }
            }
            let mut buf = Vec::new();
            sweep_load(&entries, m, &etas, trials, seed, None, false, &mut buf)
                .map_err(|e| CliError::Io(e.to_string()))?;
            write_file(&out, &buf)?;
        }
        Command::Optimize {
            degrees,
            max_l2,
            steps,
            seed,
            out,
        } => {
            echo_config(json!({
                "subcommand": "optimize", "degrees": degrees, "max_l2": max_l2,
                "steps": steps, "seed": seed, "out": out.display().to_string(),
            }));
            let parsed: Result<BTreeSet<u32>, _> = degrees
                .split(',')
                .map(|s| s.trim().parse::<u32>())
                .collect();
            let allowed = parsed.map_err(|e| CliError::Domain(format!("bad degree list: {e}")))?;
            let mut config = AnnealConfig::new(allowed, max_l2, seed).map_err(CliError::domain)?;
            config.steps = steps;
            let best = optimize(&config).map_err(CliError::domain)?;
            let payload = dist_json_with_threshold(&best.dist, best.threshold);
            write_file(&out, format!("{payload}\n").as_bytes())?;
        }
        Command::Reconcile {
            table_a,
            table_b,
            out,
        } => {
            echo_config(json!({
                "subcommand": "reconcile", "table_a": table_a.display().to_string(),
                "table_b": table_b.display().to_string(), "out": out.display().to_string(),
            }));
            let a = load_table(&table_a)?;
            let b = load_table(&table_b)?;
            let diff = subtract(&a, &b).map_err(CliError::domain)?;
            let outcome = recover_diff(diff);
            let payload = json!({
                "only_in_a": outcome.only_in_a.iter().map(|z| hex::encode(z.value())).collect::<Vec<_>>(),
                "only_in_b": outcome.only_in_b.iter().map(|z| hex::encode(z.value())).collect::<Vec<_>>(),
                "complete": outcome.complete,
            });
            write_file(&out, format!("{payload}\n").as_bytes())?;
        }
        Command::Encode {
            dist,
            m,
            seed,
            nu,
            values,
            out,
        } => {
            echo_config(json!({
                "subcommand": "encode", "dist": dist.display().to_string(), "m": m,
                "seed": seed, "nu": nu, "values": values.display().to_string(),
                "out": out.display().to_string(),
            }));
            let d = load_dist(&dist)?;
            let text = read_text(&values)?;
            let mut decoded = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let bytes = hex::decode(line)
                    .map_err(|e| CliError::Domain(format!("line {}: bad hex: {e}", lineno + 1)))?;
                decoded.push(bytes);
            }
            if decoded.is_empty() {
                return Err(CliError::Domain("values file holds no values".into()));
            }
            let width = decoded[0].len();
            if width == 0 || decoded.iter().any(|v| v.len() != width) {
                return Err(CliError::Domain(
                    "all values must be the same nonzero byte length".into(),
                ));
            }
            let kappa = width as u32 * 8;
            let mut table = Iblt::new(m, d, seed, nu, kappa).map_err(CliError::domain)?;
            for value in decoded {
                let z = KeyValuePair::from_value(value, nu);
                table.insert(&z).map_err(CliError::domain)?;
            }
            write_file(&out, &table.to_bytes())?;
        }
        Command::Recover { table, out } => {
            echo_config(json!({
                "subcommand": "recover", "table": table.display().to_string(),
                "out": out.as_ref().map(|p| p.display().to_string()),
            }));
            let mut t = load_table(&table)?;
            let outcome = t.recover().map_err(CliError::domain)?;
            let payload = json!({
                "recovered": outcome.recovered.iter().map(|z| hex::encode(z.value())).collect::<Vec<_>>(),
                "complete": outcome.complete,
                "residual_cells_nonzero": outcome.residual_cells_nonzero,
            });
            match out {
                Some(path) => write_file(&path, format!("{payload}\n").as_bytes())?,
                None => println!("{payload}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
