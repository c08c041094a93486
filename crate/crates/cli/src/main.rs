use clap::{Parser, Subcommand};
use muskat::io::{self, load_config, SimConfig};
use muskat::MuskatError;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "muskat", version, about = "Hele-Shaw flow in a vessel with moving contact points")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary meniscus: stationary.csv (x, h_s, h_w) and stationary.json.
    Stationary {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to output.dir of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evolve the surface and write the trajectory directory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a trajectory, write diagnostics.json and append derived columns.
    Diagnose {
        /// trajectory.csv or the directory holding it.
        #[arg(long)]
        traj: PathBuf,
    },
    /// Solver benchmarks.
    Validate {
        #[command(subcommand)]
        target: ValidateTarget,
    },
    /// Sup of the remainder quotients over a square, at step and step/2.
    #[command(name = "scan-R", alias = "scan-r")]
    ScanR {
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [-5.0, 5.0], allow_negative_numbers = true)]
        range: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        #[arg(long, default_value = "scan_R.json")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ValidateTarget {
    /// Manufactured solutions and corner wedges under refinement.
    Elliptic {
        #[arg(long, value_delimiter = ',', default_values_t = [8usize, 16, 32, 64])]
        ns: Vec<usize>,
        /// Geometric grading toward the corners; 1 is uniform.
        #[arg(long, default_value_t = 1.0)]
        grading: f64,
        #[arg(long, default_value = "validate")]
        out: PathBuf,
    },
}

fn out_dir(cfg: &SimConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| cfg.output.dir.clone())
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), MuskatError> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn dispatch(cmd: Command) -> Result<i32, MuskatError> {
    match cmd {
        Command::Stationary { config, out } => {
            let cfg = load_config(&config)?;
            let s = io::run_stationary(&cfg, &out_dir(&cfg, out))?;
            print_json(&s)?;
            Ok(0)
        }
        Command::Simulate { config, out } => {
            let cfg = load_config(&config)?;
            let dir = out_dir(&cfg, out);
            let m = io::simulate(&cfg, &dir)?;
            print_json(&m.run)?;
            Ok(io::run_exit_code(&m.run))
        }
        Command::Diagnose { traj } => {
            let r = io::diagnose(&traj)?;
            print_json(&r.verdicts)?;
            Ok(0)
        }
        Command::Validate { target: ValidateTarget::Elliptic { ns, grading, out } } => {
            let v = io::validate_elliptic(&ns, grading, &out)?;
            for r in &v.rows {
                println!("{:<14} N={:<4} L2={:.3e} order={:.3}", r.benchmark, r.n, r.l2_error, r.order);
            }
            for w in &v.wedges {
                println!("wedge omega={:.4} exponent={:.4} expected={:.4}", w.omega, w.exponent, w.lambda);
            }
            for f in &v.failures {
                eprintln!("threshold missed: {f}");
            }
            Ok(if v.failures.is_empty() { 0 } else { 1 })
        }
        Command::ScanR { range, step, out } => {
            let r = io::scan_remainder([range[0], range[1]], step, Path::new(&out))?;
            print_json(&r)?;
            Ok(if r.stable { 0 } else { 1 })
        }
    }
}

fn init_threads() -> Result<(), MuskatError> {
    if let Ok(v) = std::env::var("MUSKAT_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| MuskatError::Invalid(format!("MUSKAT_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| MuskatError::Invalid(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = init_threads().and_then(|_| dispatch(cli.command)).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
