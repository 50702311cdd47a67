use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use resilquant::commands::{self, AnalysisOptions, ReportFormat};
use resilquant::dataset::DEFAULT_MEDIAN_WINDOW_S;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "resilquant", version, about = "Cyber-resilience analysis pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic design grid of run files and a manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Median-filter every run and average across seeds per condition.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MEDIAN_WINDOW_S)]
        median_window: f64,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Resilience of each attack condition against its baseline.
    Resilience(Analysis),
    /// Resilience plus impact-model fits and model curves.
    Fit {
        #[command(flatten)]
        analysis: Analysis,
        /// Refine the fast fit by least squares.
        #[arg(long)]
        refine: bool,
    },
    /// Convert a report to JSON or CSV tables.
    Report {
        /// report.json or a tidy.csv.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
        format: ReportFormat,
    },
}

#[derive(Args)]
struct Analysis {
    /// Processed dataset directory or its dataset.json.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, requires = "window_end")]
    window_start: Option<f64>,
    #[arg(long, requires = "window_start")]
    window_end: Option<f64>,
    /// Utility weights, e.g. `fuel_efficiency=0.5,speed=0.5`.
    #[arg(long)]
    weights: Option<String>,
    /// Seed of the bootstrap resampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    #[arg(long, default_value_t = 2000)]
    resamples: usize,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl Analysis {
    fn options(&self, refine: bool) -> Result<AnalysisOptions> {
        Ok(AnalysisOptions {
            window: self.window_start.zip(self.window_end),
            weights: self.weights.as_deref().map(commands::parse_weights).transpose()?,
            confidence: self.confidence,
            resamples: self.resamples,
            seed: self.seed,
            refine,
        })
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, jobs } => {
            let entries = commands::with_jobs(jobs, || commands::simulate(&config, &out))?;
            println!("wrote {} runs to {}", entries.len(), out.display());
        }
        Command::Preprocess {
            manifest,
            out,
            median_window,
            jobs,
        } => {
            let ds = commands::with_jobs(jobs, || commands::preprocess(&manifest, &out, median_window))?;
            println!("wrote {} cells to {}", ds.cells.len(), out.display());
        }
        Command::Resilience(a) => {
            let opts = a.options(false)?;
            let r = commands::with_jobs(a.jobs, || commands::resilience(&a.manifest, &a.out, &opts))?;
            println!("wrote {} conditions to {}", r.entries.len(), a.out.display());
        }
        Command::Fit { analysis: a, refine } => {
            let opts = a.options(refine)?;
            let r = commands::with_jobs(a.jobs, || commands::fit(&a.manifest, &a.out, &opts))?;
            println!("wrote {} fitted conditions to {}", r.entries.len(), a.out.display());
        }
        Command::Report { report, out, format } => {
            for p in commands::report(&report, &out, format)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
