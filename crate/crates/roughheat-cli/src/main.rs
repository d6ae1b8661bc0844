//! `roughheat <experiment> --config <path> --out <dir> [--seed N ...]`
//!
//! Exit codes: 0 when every acceptance check passes, 1 on a failed check or a solver
//! abort, 2 on a configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use roughheat::experiments::{self, Outcome};
use roughheat::io::write_json;
use roughheat::Error;
use serde_json::{json, Map, Value};

const SECTIONS: [&str; 5] = ["grid", "noise", "norms", "solver", "experiment"];

#[derive(Parser, Debug)]
#[command(name = "roughheat", version, about = "Run a named roughheat experiment and write its tables")]
struct Args {
    /// kernel_scaling, norm_equivalence, heat_decay, renorm_convergence,
    /// commutator_uniformity, linear_assemble, quasilinear_contraction or stability
    experiment: String,
    /// TOML file with optional sections [grid], [noise], [norms], [solver], [experiment]
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing
    #[arg(long)]
    out: PathBuf,
    /// Seeds replacing the configured seed list
    #[arg(long = "seed", num_args = 1..)]
    seeds: Vec<u64>,
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Contraction(_) => Failure::Run(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

/// Reads the config and merges its sections into one flat parameter object.
fn load_config(path: &Path) -> Result<(Value, Value), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let table: toml::Table = text.parse().map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut flat = Map::new();
    for (section, body) in &table {
        if !SECTIONS.contains(&section.as_str()) {
            return Err(Failure::Config(format!("unknown section [{section}]; allowed: {}", SECTIONS.join(", "))));
        }
        let toml::Value::Table(body) = body else {
            return Err(Failure::Config(format!("'{section}' must be a section")));
        };
        for (k, v) in body {
            let v = serde_json::to_value(v).map_err(|e| Failure::Config(e.to_string()))?;
            if flat.insert(k.clone(), v).is_some() {
                return Err(Failure::Config(format!("key '{k}' is set in more than one section")));
            }
        }
    }
    let raw = serde_json::to_value(&table).map_err(|e| Failure::Config(e.to_string()))?;
    Ok((raw, Value::Object(flat)))
}

fn thread_cap() -> Result<Option<usize>, Failure> {
    match std::env::var("ROUGHHEAT_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::Config(format!("ROUGHHEAT_THREADS = '{s}' is not a positive integer"))),
        },
    }
}

fn write_outputs(args: &Args, raw: &Value, threads: usize, outcome: &Outcome) -> Result<(), Failure> {
    let io = |e: Error| Failure::Config(format!("cannot write to {}: {e}", args.out.display()));
    std::fs::create_dir_all(&args.out).map_err(|e| io(e.into()))?;
    let mut files = Map::new();
    for (name, table) in &outcome.tables {
        let file = format!("{name}.csv");
        table.write(&args.out.join(&file)).map_err(io)?;
        let cols: Vec<Value> =
            table.column_types().into_iter().map(|(n, t)| json!({"name": n, "type": t})).collect();
        files.insert(file, json!({"columns": cols, "rows": table.rows.len()}));
    }
    let schema = json!({
        "experiment": outcome.name,
        "format": {"separator": ",", "decimal": ".", "line_end": "LF", "encoding": "UTF-8"},
        "files": files,
    });
    write_json(&args.out.join("schema.json"), &schema).map_err(io)?;
    let manifest = json!({
        "experiment": outcome.name,
        "config_path": args.config.display().to_string(),
        "config": raw,
        "params": outcome.params,
        "seeds": outcome.seeds,
        "threads": threads,
        "versions": {
            "roughheat": roughheat::VERSION,
            "roughheat-cli": env!("CARGO_PKG_VERSION"),
            "target": format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
        },
    });
    write_json(&args.out.join("manifest.json"), &manifest).map_err(io)?;
    write_json(&args.out.join("summary.json"), &outcome.summary_json()).map_err(io)?;
    Ok(())
}

fn run(args: &Args) -> Result<bool, Failure> {
    if !experiments::NAMES.contains(&args.experiment.as_str()) {
        return Err(Failure::Config(format!(
            "unknown experiment '{}'; expected one of {}",
            args.experiment,
            experiments::NAMES.join(", ")
        )));
    }
    let (raw, params) = load_config(&args.config)?;
    if let Some(n) = thread_cap()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    let seeds = (!args.seeds.is_empty()).then(|| args.seeds.clone());
    let outcome = experiments::run(&args.experiment, params, seeds)?;
    write_outputs(args, &raw, rayon::current_num_threads(), &outcome)?;
    for c in &outcome.checks {
        println!("{} [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.criterion, c.name, c.detail);
    }
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Run(m)) => {
            eprintln!("roughheat: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("roughheat: {m}");
            ExitCode::from(2)
        }
    }
}
