use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use csr_game::cli::{emit_csv, emit_report, read_scenario, run};

#[derive(Parser)]
#[command(version, about = "Nested Stackelberg CSR investment game solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario file and write <name>.trajectory.csv and <name>.report.
    Solve {
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Cross-check against the dense solve and finite-difference checks.
        #[arg(long)]
        oracle: bool,
        /// Residual max-norm accepted as success.
        #[arg(long)]
        tolerance: Option<f64>,
        /// Seed for finite-difference directions.
        #[arg(long)]
        seed: Option<u64>,
        /// Allow alpha > 1.
        #[arg(long)]
        no_strict_alpha: bool,
    },
}

fn main() -> ExitCode {
    let Command::Solve { scenario, out_dir, oracle, tolerance, seed, no_strict_alpha } =
        Cli::parse().command;

    let mut scenario = match read_scenario(&scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let opts = &mut scenario.options;
    opts.oracle |= oracle;
    opts.strict_alpha &= !no_strict_alpha;
    if let Some(t) = tolerance {
        opts.tolerance = t;
    }
    if let Some(s) = seed {
        opts.seed = s;
    }

    let start = Instant::now();
    let (trajectory, report) = match run(&scenario) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    eprintln!("solved {} in {:.3} ms", scenario.name, start.elapsed().as_secs_f64() * 1e3);

    let csv_path = scenario.csv_path(&out_dir);
    let report_path = scenario.report_path(&out_dir);
    let written = std::fs::create_dir_all(&out_dir)
        .map_err(|source| csr_game::Error::Io { path: out_dir.clone(), source })
        .and_then(|_| emit_csv(&trajectory, &csv_path))
        .and_then(|_| emit_report(&report, &scenario, &report_path));
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    println!("{}", csv_path.display());
    println!("{}", report_path.display());

    if report.residual_max <= scenario.options.tolerance {
        ExitCode::SUCCESS
    } else {
        eprintln!(
            "residual max-norm {:e} exceeds tolerance {:e}",
            report.residual_max, scenario.options.tolerance
        );
        ExitCode::from(1)
    }
}
