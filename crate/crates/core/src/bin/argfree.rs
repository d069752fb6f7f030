use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use argfree::graph::{self, WeightedDigraph};
use argfree::harness::{self, ExperimentConfig, GraphSpec, SweepParam};
use argfree::Error;

/// Gradient-free distributed aggregative optimization experiments.
#[derive(Parser)]
#[command(name = "argfree", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and write traces and statistics.
    Run {
        config: PathBuf,
        /// Use this weight matrix instead of the configured graph.
        #[arg(long)]
        graph_file: Option<PathBuf>,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the convergence certificate of a configuration as JSON.
    Certify {
        config: PathBuf,
        #[arg(long)]
        graph_file: Option<PathBuf>,
    },
    /// Run one experiment per parameter value and print terminal statistics.
    Sweep {
        config: PathBuf,
        /// delta, alpha or momentum_kappa.
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        graph_file: Option<PathBuf>,
    },
    /// Generate a connected Erdős–Rényi graph with Metropolis weights.
    Graph {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.6)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

macro_rules! outln {
    ($out:expr, $($arg:tt)*) => {{
        $out.push_str(&format!($($arg)*));
        $out.push('\n');
    }};
}

fn load(config: &PathBuf, graph_file: Option<PathBuf>) -> argfree::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::read(config)?;
    if let Some(path) = graph_file {
        cfg.graph = GraphSpec::File { path };
        cfg.validate()?;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> argfree::Result<String> {
    let mut text = String::new();
    match cli.command {
        Command::Run { config, graph_file, out } => {
            let mut cfg = load(&config, graph_file)?;
            if out.is_some() {
                cfg.output_dir = out;
            }
            let res = harness::run_experiment(&cfg)?;
            let s = &res.stats;
            outln!(
                text,
                "{}: {} runs, k = {}, relative loss {:.6e} ± {:.3e}, ‖x − x*‖ {:.6e}",
                cfg.solver.algorithm.name(),
                s.n_runs,
                s.k.last().unwrap(),
                s.terminal_relative_loss(),
                s.relative_loss.std.last().unwrap(),
                s.terminal_error(),
            );
            if let Some(dir) = &cfg.output_dir {
                outln!(text, "wrote {}", dir.display());
            }
        }
        Command::Certify { config, graph_file } => {
            let cfg = load(&config, graph_file)?;
            let cert = harness::certify_experiment(&cfg)?;
            outln!(text, "{}", serde_json::to_string_pretty(&cert)?);
        }
        Command::Sweep { config, param, values, graph_file } => {
            let cfg = load(&config, graph_file)?;
            let rows = harness::sweep(&cfg, param, &values)?;
            outln!(text, "{param},terminal_error,terminal_relative_loss");
            for r in rows {
                outln!(text, "{:.6e},{:.6e},{:.6e}", r.value, r.mean_terminal_error, r.mean_terminal_relative_loss);
            }
        }
        Command::Graph { n, p, seed, out } => {
            let g: WeightedDigraph = if n == 1 { WeightedDigraph::singleton() } else { graph::erdos_renyi(n, p, seed)? };
            match out {
                Some(path) => g.write_json(path)?,
                None => outln!(text, "{}", g.to_json()?),
            }
        }
    }
    Ok(text)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(text) => {
            // a closed pipe (e.g. `| head`) is not an error
            match std::io::stdout().lock().write_all(text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
                _ => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Replica { source, .. } = &e {
                eprintln!("  caused by: {source}");
            }
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
