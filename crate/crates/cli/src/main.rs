use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bandspec::{
    diagnose, load_operator, scan, scan_to_csv, ClassifyParams, CliError, ScanSpec,
};
use bandspec_core::defaults;

/// Spectral diagnostics for band operators with matrix elements.
#[derive(Parser)]
#[command(name = "bandspec", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the operator file: band structure, invertible extreme
    /// diagonals, realized entry bound.
    Validate {
        #[command(flatten)]
        operator: OperatorArg,
        /// Validation depth (rows checked).
        #[arg(long = "K")]
        depth: Option<usize>,
    },
    /// Run every identity check and the decay classification at one λ.
    Diagnose {
        #[command(flatten)]
        operator: OperatorArg,
        /// Re λ
        #[arg(long, allow_negative_numbers = true)]
        re: f64,
        /// Im λ
        #[arg(long, allow_negative_numbers = true)]
        im: f64,
        #[command(flatten)]
        params: ParamArgs,
        /// Also write the report as JSON to this path.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Classify a rectangular λ-grid and write CSV/JSON maps.
    Scan {
        #[command(flatten)]
        operator: OperatorArg,
        #[arg(long, allow_negative_numbers = true)]
        re_min: f64,
        #[arg(long, allow_negative_numbers = true)]
        re_max: f64,
        #[arg(long, allow_negative_numbers = true)]
        im_min: f64,
        #[arg(long, allow_negative_numbers = true)]
        im_max: f64,
        /// Grid points along Re.
        #[arg(long)]
        nx: usize,
        /// Grid points along Im.
        #[arg(long)]
        ny: usize,
        #[command(flatten)]
        params: ParamArgs,
        /// Worker threads.
        #[arg(long, default_value_t = 4)]
        workers: usize,
        /// CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON output path.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Args)]
struct OperatorArg {
    /// Operator description file (JSON).
    #[arg(long)]
    operator: PathBuf,
}

#[derive(Args)]
struct ParamArgs {
    /// Recurrence depth K.
    #[arg(long = "K", default_value_t = defaults::RECURRENCE_DEPTH)]
    depth: i64,
    /// Initial finite-section size M0.
    #[arg(long = "M0", default_value_t = defaults::SECTION_START)]
    section_start: usize,
    /// Weyl doubling-gap tolerance.
    #[arg(long, default_value_t = defaults::WEYL_TOL)]
    tol: f64,
    /// Dead zone around q = 1 for classification.
    #[arg(long, default_value_t = defaults::EPS_CLASS)]
    eps_class: f64,
    /// Largest acceptable rms of the log-domain decay fit.
    #[arg(long, default_value_t = defaults::FIT_TOL)]
    fit_tol: f64,
}

impl ParamArgs {
    fn to_params(&self) -> ClassifyParams {
        ClassifyParams {
            depth: self.depth,
            section_start: self.section_start,
            tol: self.tol,
            eps_class: self.eps_class,
            fit_tol: self.fit_tol,
        }
    }
}

fn main() -> ExitCode {
    // die quietly when a downstream pager/head closes the pipe
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bandspec: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { operator, depth } => {
            let (op, report) = load_operator(&operator.operator, depth)?;
            println!(
                "ok: N={}, r={}, s={}, declared bound {:.6}, realized bound {:.6} over rows 0..={}",
                op.block_order(),
                op.upper_bandwidth(),
                op.lower_bandwidth(),
                op.bound(),
                report.realized_bound,
                report.checked_to
            );
            Ok(())
        }
        Command::Diagnose {
            operator,
            re,
            im,
            params,
            json,
        } => {
            let (op, _) = load_operator(&operator.operator, None)?;
            let report = diagnose(&op, re, im, &params.to_params());
            print!("{}", report.render_text());
            if let Some(path) = json {
                std::fs::write(&path, serde_json::to_string_pretty(&report).unwrap())?;
                println!("json report written to {}", path.display());
            }
            Ok(())
        }
        Command::Scan {
            operator,
            re_min,
            re_max,
            im_min,
            im_max,
            nx,
            ny,
            params,
            workers,
            out,
            json,
        } => {
            let (op, _) = load_operator(&operator.operator, None)?;
            let spec = ScanSpec {
                operator: operator.operator.display().to_string(),
                re_min,
                re_max,
                im_min,
                im_max,
                nx,
                ny,
                params: params.to_params(),
                workers,
            };
            let result = scan(&op, &spec)?;
            let mut counts = [0usize; 3];
            for row in &result.rows {
                use bandspec_core::Classification::*;
                match row.outcome.class {
                    Resolvent => counts[0] += 1,
                    NotResolvent => counts[1] += 1,
                    Inconclusive => counts[2] += 1,
                }
            }
            println!(
                "{} points: {} resolvent, {} not_resolvent, {} inconclusive",
                result.rows.len(),
                counts[0],
                counts[1],
                counts[2]
            );
            if let Some(path) = &out {
                std::fs::write(path, scan_to_csv(&result))?;
                println!("csv written to {}", path.display());
            }
            if let Some(path) = &json {
                std::fs::write(path, serde_json::to_string_pretty(&result).unwrap())?;
                println!("json written to {}", path.display());
            }
            if out.is_none() && json.is_none() {
                print!("{}", scan_to_csv(&result));
            }
            Ok(())
        }
    }
}
