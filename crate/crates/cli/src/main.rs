use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use infbeta_cli::dataset::ModelFormula;
use infbeta_cli::diagnose::{cmd_diagnose, summary_line, DiagnoseKind, DiagnoseRequest};
use infbeta_cli::fit::{cmd_fit, report, AlphaArg, FitRequest};
use infbeta_cli::generate::cmd_generate;
use infbeta_cli::simulate::{self, cmd_simulate, SimulateOverrides};
use infbeta_cli::exit_code;
use robust_infbeta::{EstimatorKind, Execution, Inflation, Link, LinkSpec};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "infbeta", version, about = "Robust zero-or-one inflated beta regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one or more estimators to a CSV file.
    Fit(FitArgs),
    /// Run a Monte Carlo study described by a TOML scenario file.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value = "sim-out")]
        out: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run replications on one thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Residuals, envelopes or weights from a fit artifact.
    Diagnose {
        artifact: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, value_parser = parse_estimator)]
        estimator: Option<EstimatorKind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 100)]
        n_sim: usize,
        #[arg(long, default_value_t = 0.95)]
        band: f64,
        /// Refit the estimator on every simulated sample.
        #[arg(long)]
        refit: bool,
        #[arg(long)]
        svg: bool,
        #[arg(long, default_value = "diagnose-out")]
        out: PathBuf,
        #[arg(long)]
        sequential: bool,
    },
    /// Write one sample of a scenario as CSV.
    Generate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        rep: u64,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Residuals,
    Envelope,
    Weights,
}

#[derive(clap::Args)]
struct FitArgs {
    csv: PathBuf,
    /// `y ~ a + b` for every submodel, or `y ~ discrete | mean | precision`.
    #[arg(long)]
    formula: String,
    /// Inflation point, 0 or 1.
    #[arg(long, default_value_t = 0.0)]
    inflation: f64,
    #[arg(long, value_delimiter = ',', default_value = "mle,mlse,mlme", value_parser = parse_estimator)]
    estimator: Vec<EstimatorKind>,
    #[arg(long, default_value = "auto")]
    alpha_disc: AlphaArg,
    #[arg(long, default_value = "auto")]
    alpha_cont: AlphaArg,
    /// Shorthand setting both parts.
    #[arg(long)]
    alpha: Option<AlphaArg>,
    #[arg(long, default_value = "logit", value_parser = parse_link)]
    link_theta: Link,
    #[arg(long, default_value = "logit", value_parser = parse_link)]
    link_mu: Link,
    #[arg(long, default_value = "log", value_parser = parse_link)]
    link_phi: Link,
    /// Move responses on the opposite boundary inside by this amount.
    #[arg(long)]
    clamp: Option<f64>,
    /// 1-based data rows to exclude.
    #[arg(long, value_delimiter = ',')]
    drop_rows: Vec<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "fit-out")]
    out: PathBuf,
}

fn parse_estimator(s: &str) -> std::result::Result<EstimatorKind, String> {
    s.parse().map_err(|e: robust_infbeta::Error| e.to_string())
}

fn parse_link(s: &str) -> std::result::Result<Link, String> {
    s.parse().map_err(|e: robust_infbeta::Error| e.to_string())
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(a) => {
            let links = LinkSpec::new(a.link_theta, a.link_mu, a.link_phi)?;
            let formula = ModelFormula::parse(&a.formula, Inflation::from_value(a.inflation)?, links)?;
            let req = FitRequest {
                csv: a.csv,
                formula,
                estimators: a.estimator,
                alpha_disc: a.alpha.unwrap_or(a.alpha_disc),
                alpha_cont: a.alpha.unwrap_or(a.alpha_cont),
                clamp: a.clamp,
                drop_rows: a.drop_rows,
                seed: a.seed,
                out: a.out,
            };
            let art = cmd_fit(&req)?;
            print!("{}", report(&art)?);
        }
        Command::Simulate { config, out, reps, seed, sequential } => {
            let summary = cmd_simulate(&config, &out, &SimulateOverrides { reps, seed }, execution(sequential))?;
            print!("{}", simulate::report(&summary)?);
        }
        Command::Diagnose { artifact, kind, estimator, seed, n_sim, band, refit, svg, out, sequential } => {
            let req = DiagnoseRequest {
                artifact,
                kind: match kind {
                    Kind::Residuals => DiagnoseKind::Residuals,
                    Kind::Envelope => DiagnoseKind::Envelope,
                    Kind::Weights => DiagnoseKind::Weights,
                },
                estimator,
                seed,
                n_sim,
                band,
                refit,
                svg,
                out,
            };
            let d = cmd_diagnose(&req, execution(sequential))?;
            println!("{}", summary_line(&d, &req.out));
        }
        Command::Generate { config, out, rep, seed } => {
            let obs = cmd_generate(&config, &out, rep, seed)?;
            println!("{} rows written to {}", obs.n(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
