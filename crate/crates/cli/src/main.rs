use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use halfstrip_core::scenario::{load_scenario, parse_scenario, run, RunRecord, Scenario};
use halfstrip_core::{Error, Result};

#[derive(Parser)]
#[command(name = "halfstrip", version, about = "Half-strip chain classification and centre-of-mass walk experiments")]
struct Cli {
    /// Seed for stochastic tasks (overrides a scenario's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for reports and tables.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classify a model from its drift profile.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',')]
        probe_xs: Option<Vec<f64>>,
        #[arg(long)]
        regime: Option<String>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Monte Carlo ensemble of passage times and occupations.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        paths: usize,
        #[arg(long)]
        steps: u64,
        #[arg(long)]
        tau_level: Option<f64>,
        #[arg(long)]
        start_x: Option<f64>,
        #[arg(long)]
        start_line: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        checkpoints: Option<Vec<u64>>,
        #[arg(long)]
        stop_at_tau: bool,
        /// Estimate the tail index of the passage times.
        #[arg(long)]
        tail_index: bool,
        #[arg(long)]
        out: Option<String>,
    },
    /// Centre-of-mass experiments.
    Com {
        #[command(subcommand)]
        cmd: ComCmd,
    },
    /// Lattice tools.
    Lattice {
        #[command(subcommand)]
        cmd: LatticeCmd,
    },
    /// Execute a scenario file.
    Run { scenario: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Walk,
    Com,
}

#[derive(Args)]
struct LawArg {
    #[arg(long)]
    law: PathBuf,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Subcommand)]
enum ComCmd {
    /// Local limit theorem check.
    Llt {
        #[command(flatten)]
        law: LawArg,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        samples: u64,
        #[arg(long, value_enum, default_value = "walk")]
        target: Target,
        /// Lattice as `H` rows separated by `;` (or a CSV file) and `b`.
        #[arg(long = "H")]
        h: Option<String>,
        #[arg(long)]
        b: Option<String>,
    },
    /// Escape exponent of `||G_n||` in d >= 2.
    Escape {
        #[command(flatten)]
        law: LawArg,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        paths: usize,
        #[arg(long)]
        checkpoints: Option<usize>,
    },
    /// Running minimum of `|G_n - x|` in d = 1.
    Recur {
        #[command(flatten)]
        law: LawArg,
        #[arg(long)]
        n: u64,
        #[arg(long, allow_hyphen_values = true)]
        x: Option<f64>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Tabulate the symmetric stable density and its centre-of-mass variant.
    Stable {
        #[arg(long)]
        law: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        x_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        x_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        out: Option<String>,
    },
}

#[derive(Subcommand)]
enum LatticeCmd {
    /// Support membership and minimality of `(H, b)` for a law.
    Verify {
        #[arg(long)]
        law: PathBuf,
        #[arg(long = "H")]
        h: Option<String>,
        #[arg(long)]
        b: Option<String>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        grid: Option<usize>,
    },
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Schema { field: "<path>".into(), message: format!("cannot read {}: {e}", path.display()) })?;
    serde_json::from_str(&text).map_err(|e| Error::Schema { field: "<root>".into(), message: e.to_string() })
}

/// A model or law file may be a bare description or a whole scenario.
fn section(path: &Path, key: &str) -> Result<Value> {
    let v = read_json(path)?;
    match v.get("task") {
        Some(_) => v
            .get(key)
            .cloned()
            .ok_or_else(|| Error::Schema { field: key.into(), message: format!("{} has no `{key}`", path.display()) }),
        None => Ok(v),
    }
}

fn parse_vec(field: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::Schema { field: field.into(), message: format!("`{t}`: {e}") })
        })
        .collect()
}

/// `H` inline as `1,0;0,1` or as a CSV file with one row per line.
fn parse_matrix(text: &str) -> Result<Vec<Vec<f64>>> {
    let body = if Path::new(text).is_file() {
        std::fs::read_to_string(text)?
    } else {
        text.replace(';', "\n")
    };
    body.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| parse_vec("H", l))
        .collect()
}

fn parse_b(text: &str) -> Result<Vec<f64>> {
    if Path::new(text).is_file() {
        parse_vec("b", &std::fs::read_to_string(text)?.replace('\n', ","))
    } else {
        parse_vec("b", text)
    }
}

fn lattice_value(h: &Option<String>, b: &Option<String>, dim: usize) -> Result<Option<Value>> {
    match (h, b) {
        (None, None) => Ok(None),
        (Some(h), b) => {
            let b = match b {
                Some(b) => parse_b(b)?,
                None => vec![0.0; dim],
            };
            Ok(Some(json!({ "H": parse_matrix(h)?, "b": b })))
        }
        (None, Some(_)) => Err(Error::Schema { field: "H".into(), message: "--b needs --H".into() }),
    }
}

fn law_dim(law: &Value) -> usize {
    match law.get("family").and_then(Value::as_str) {
        Some("table") => law["points"].get(0).and_then(Value::as_array).map_or(1, Vec::len),
        Some("heavy_tail") => 1,
        _ => law.get("d").and_then(Value::as_u64).unwrap_or(1) as usize,
    }
}

fn put<T: Into<Value>>(m: &mut Map<String, Value>, k: &str, v: Option<T>) {
    if let Some(v) = v {
        m.insert(k.into(), v.into());
    }
}

fn scenario_from(task: &str, seed: Option<u64>, parts: Vec<(&str, Value)>, params: Map<String, Value>, out: Option<String>) -> Result<Scenario> {
    let mut root = Map::new();
    root.insert("task".into(), task.into());
    put(&mut root, "seed", seed);
    for (k, v) in parts {
        root.insert(k.into(), v);
    }
    root.insert("params".into(), Value::Object(params));
    if let Some(t) = out {
        root.insert("outputs".into(), json!({ "table": t }));
    }
    parse_scenario(&Value::Object(root).to_string())
}

fn build(cli: &Cli) -> Result<Scenario> {
    let seed = cli.seed;
    match &cli.cmd {
        Cmd::Run { scenario } => {
            let mut sc = load_scenario(scenario)?;
            if seed.is_some() {
                sc.seed = seed;
            }
            Ok(sc)
        }
        Cmd::Classify { model, probe_xs, regime, out } => {
            let mut p = Map::new();
            put(&mut p, "probe_xs", probe_xs.clone());
            put(&mut p, "regime", regime.clone());
            scenario_from("classify", seed, vec![("model", section(model, "model")?)], p, out.clone())
        }
        Cmd::Simulate {
            model,
            paths,
            steps,
            tau_level,
            start_x,
            start_line,
            checkpoints,
            stop_at_tau,
            tail_index,
            out,
        } => {
            let mut p = Map::new();
            p.insert("paths".into(), (*paths).into());
            p.insert("steps".into(), (*steps).into());
            put(&mut p, "tau_level", *tau_level);
            put(&mut p, "start_x", *start_x);
            put(&mut p, "start_line", *start_line);
            put(&mut p, "checkpoints", checkpoints.clone());
            p.insert("stop_at_tau".into(), (*stop_at_tau).into());
            p.insert("tail_index".into(), (*tail_index).into());
            scenario_from("simulate", seed, vec![("model", section(model, "model")?)], p, out.clone())
        }
        Cmd::Com { cmd } => match cmd {
            ComCmd::Llt { law, n, samples, target, h, b } => {
                let lv = section(&law.law, "law")?;
                let mut parts = vec![];
                if let Some(l) = lattice_value(h, b, law_dim(&lv))? {
                    parts.push(("lattice", l));
                }
                parts.push(("law", lv));
                let mut p = Map::new();
                p.insert("n".into(), (*n).into());
                p.insert("samples".into(), (*samples).into());
                let t = match target {
                    Target::Walk => "walk",
                    Target::Com => "com",
                };
                p.insert("target".into(), t.into());
                scenario_from("llt", seed, parts, p, law.out.clone())
            }
            ComCmd::Escape { law, n, paths, checkpoints } => {
                let mut p = Map::new();
                p.insert("n_max".into(), (*n).into());
                p.insert("paths".into(), (*paths).into());
                put(&mut p, "checkpoints", *checkpoints);
                scenario_from("escape", seed, vec![("law", section(&law.law, "law")?)], p, law.out.clone())
            }
            ComCmd::Recur { law, n, x, runs } => {
                let mut p = Map::new();
                p.insert("n_max".into(), (*n).into());
                put(&mut p, "x", *x);
                put(&mut p, "runs", *runs);
                scenario_from("recur", seed, vec![("law", section(&law.law, "law")?)], p, law.out.clone())
            }
            ComCmd::Stable { law, alpha, c, x_min, x_max, points, out } => {
                let mut p = Map::new();
                put(&mut p, "alpha", *alpha);
                put(&mut p, "c", *c);
                put(&mut p, "x_min", *x_min);
                put(&mut p, "x_max", *x_max);
                put(&mut p, "points", *points);
                let parts = match law {
                    Some(l) => vec![("law", section(l, "law")?)],
                    None => vec![],
                };
                scenario_from("stable", seed, parts, p, out.clone())
            }
        },
        Cmd::Lattice {
            cmd: LatticeCmd::Verify { law, h, b, rho, grid },
        } => {
            let lv = section(law, "law")?;
            let mut parts = vec![];
            if let Some(l) = lattice_value(h, b, law_dim(&lv))? {
                parts.push(("lattice", l));
            }
            parts.push(("law", lv));
            let mut p = Map::new();
            put(&mut p, "rho", *rho);
            put(&mut p, "grid", *grid);
            scenario_from("lattice", seed, parts, p, None)
        }
    }
}

fn print_classification(rec: &RunRecord) {
    let c = &rec.summary["classification"];
    let f = |v: &Value| v.as_f64().map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
    eprintln!("verdict      {}", c["verdict"].as_str().unwrap_or("-"));
    eprintln!("regime       {}", c["regime"].as_str().unwrap_or("-"));
    eprintln!("mean drift   {}", f(&c["mean_drift"]));
    eprintln!("U            {}", f(&c["U"]));
    eprintln!("V            {}", f(&c["V"]));
    eprintln!("theta*       {}", f(&c["theta_star"]));
    if let Some(pi) = c["pi"].as_array() {
        eprintln!("line  pi");
        for (i, p) in pi.iter().enumerate() {
            eprintln!("{i:<5} {}", f(p));
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let sc = build(cli)?;
    let rec = run(&sc, &cli.out_dir)?;
    // A closed pipe (e.g. `| head`) is not an error of the run itself.
    let mut out = std::io::stdout().lock();
    if let Err(e) = writeln!(out, "{}", serde_json::to_string_pretty(&rec.summary)?) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            return Err(e.into());
        }
    }
    if matches!(cli.cmd, Cmd::Classify { .. }) {
        print_classification(&rec);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_schema() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
