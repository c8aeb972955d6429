use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mtflow_core::bubbles::{self, AnalysisConfig};
use mtflow_core::grid;
use mtflow_core::runner::{self, ScenarioConfig};
use mtflow_core::stationary;

#[derive(Parser)]
#[command(name = "mtflow", about = "Constrained heat flow for the Moser-Trudinger energy", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a JSON config file.
    Run {
        config: PathBuf,
    },
    /// Run a named preset scenario.
    Preset {
        /// One of: subcritical-ball, quantize-radial, quantize-cartesian,
        /// coron-annulus-sweep, dirichlet-mode-ball. Pass `list` to list them.
        name: String,
        /// Output directory (defaults to the preset's own).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted-path config overrides, e.g. --override grid.n=512.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Print the effective config instead of running.
        #[arg(long)]
        dry_run: bool,
    },
    /// Analyze a stored field snapshot for concentration bubbles.
    Analyze {
        snapshot: PathBuf,
        /// Multiplier λ at the snapshot time.
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 4.0)]
        profile_box: f64,
        #[arg(long, default_value_t = 20.0)]
        local_energy_box: f64,
        #[arg(long, default_value_t = 0.1)]
        tol_frac: f64,
        #[arg(long, default_value_t = 1.0)]
        nu_peak: f64,
    },
    /// Solve the stationary radial problem by shooting, or trace a branch.
    Shoot {
        #[arg(long)]
        lambda: f64,
        #[arg(long = "R", default_value_t = 1.0)]
        radius: f64,
        /// ODE integration steps.
        #[arg(long, default_value_t = 262_144)]
        n: usize,
        /// Amplitude bracket for the Dirichlet solve.
        #[arg(long, default_value_t = 0.05)]
        a_lo: f64,
        #[arg(long, default_value_t = 5.0)]
        a_hi: f64,
        /// Dump the radial samples (or the branch table) to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Trace a branch over a λ grid `lo:hi:count` (geometric spacing,
        /// descending from hi to lo) instead of a single solve.
        #[arg(long)]
        branch: Option<String>,
    },
    /// Run the built-in invariant corpus.
    Selftest,
}

fn run_cmd(cmd: Command) -> Result<i32, mtflow_core::Error> {
    match cmd {
        Command::Run { config } => {
            let cfg = ScenarioConfig::load(&config)?;
            let outcome = runner::run_scenario(&cfg)?;
            println!(
                "scenario finished: exit status {} (artifacts in {})",
                outcome.status.code(),
                outcome.output_dir.display()
            );
            Ok(outcome.status.code())
        }
        Command::Preset { name, out, overrides, dry_run } => {
            if name == "list" {
                for n in runner::PRESET_NAMES {
                    println!("{n}");
                }
                return Ok(0);
            }
            let mut cfg = runner::preset(&name).ok_or_else(|| {
                mtflow_core::Error::Config(format!(
                    "unknown preset `{name}`; available: {}",
                    runner::PRESET_NAMES.join(", ")
                ))
            })?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            for spec in &overrides {
                cfg = cfg.with_override(spec)?;
            }
            if dry_run {
                println!("{}", cfg.to_json());
                return Ok(0);
            }
            let outcome = runner::run_scenario(&cfg)?;
            println!(
                "preset {name}: exit status {} (artifacts in {})",
                outcome.status.code(),
                outcome.output_dir.display()
            );
            Ok(outcome.status.code())
        }
        Command::Analyze { snapshot, lambda, profile_box, local_energy_box, tol_frac, nu_peak } => {
            let field = grid::load_snapshot(&snapshot)?;
            let cfg = AnalysisConfig {
                profile_box,
                local_energy_box,
                tol_frac,
                nu_peak,
                ..Default::default()
            };
            let reports = bubbles::analyze_snapshot(&field, lambda, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&reports)?);
            Ok(0)
        }
        Command::Shoot { lambda, radius, n, a_lo, a_hi, csv, branch } => {
            if let Some(spec) = branch {
                let parts: Vec<&str> = spec.split(':').collect();
                if parts.len() != 3 {
                    return Err(mtflow_core::Error::Config("branch spec must be lo:hi:count".into()));
                }
                let lo: f64 = parts[0]
                    .parse()
                    .map_err(|_| mtflow_core::Error::Config("branch lo must be a number".into()))?;
                let hi: f64 = parts[1]
                    .parse()
                    .map_err(|_| mtflow_core::Error::Config("branch hi must be a number".into()))?;
                let count: usize = parts[2]
                    .parse()
                    .map_err(|_| mtflow_core::Error::Config("branch count must be an integer".into()))?;
                if !(lo > 0.0 && hi > lo && count >= 2) {
                    return Err(mtflow_core::Error::Config(
                        "branch needs 0 < lo < hi and count >= 2".into(),
                    ));
                }
                let ratio = (lo / hi).powf(1.0 / (count - 1) as f64);
                let lambdas: Vec<f64> = (0..count).map(|k| hi * ratio.powi(k as i32)).collect();
                let table = stationary::branch(&lambdas, radius, n)?;
                let mut text = String::from(stationary::BRANCH_CSV_HEADER);
                text.push('\n');
                for row in &table.rows {
                    text.push_str(&row.csv_row());
                    text.push('\n');
                }
                if let Some(lost) = table.lost_at {
                    text.push_str(&format!("# continuation lost at lambda = {lost}\n"));
                }
                match csv {
                    Some(path) => std::fs::write(path, text)?,
                    None => print!("{text}"),
                }
                return Ok(0);
            }
            let sol = stationary::solve_dirichlet(lambda, radius, (a_lo, a_hi), n)?;
            println!(
                "lambda = {}, a = u(0) = {:.8}, D = {:.8}, E = {:.8}, |u(R)| = {:.3e}, iterations = {}",
                sol.lambda,
                sol.amplitude,
                sol.dirichlet_energy(),
                sol.mt_energy(),
                sol.boundary_residual,
                sol.iterations
            );
            if let Some(path) = csv {
                let mut text = String::from("r,u,du\n");
                for i in 0..sol.r.len() {
                    text.push_str(&format!("{},{},{}\n", sol.r[i], sol.u[i], sol.du[i]));
                }
                std::fs::write(path, text)?;
            }
            Ok(0)
        }
        Command::Selftest => {
            let results = runner::selftest();
            let mut failed = 0;
            for r in &results {
                let status = if r.pass { "ok" } else { "FAIL" };
                println!("{status:4} {} — {}", r.name, r.detail);
                if !r.pass {
                    failed += 1;
                }
            }
            println!("{} checks, {} failed", results.len(), failed);
            Ok(if failed == 0 { 0 } else { 2 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_cmd(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                mtflow_core::Error::Config(_) | mtflow_core::Error::InvalidParameter(_) => 1,
                mtflow_core::Error::SolverStalled { .. }
                | mtflow_core::Error::ProjectionFailed(_)
                | mtflow_core::Error::Overflow { .. } => 3,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
