use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ssep::harness::{emit, parse_pair, run_chaos_experiment, run_experiment, Engine, Family, Format, Settings};
use ssep::verify::{run_all, run_criterion, Scale};

/// Exclusion process with finite reservoirs: run scaling experiments and
/// the verification suite.
#[derive(Parser, Debug)]
#[command(name = "ssep", version)]
struct Cli {
    /// Worker threads for replicate ensembles (default: all cores).
    #[arg(long, env = "SSEP_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ideal-reservoir regimes: alpha' = 0 (heat equation) or 0 < alpha' < alpha (linear profile).
    Ideal(ExperimentArgs),
    /// alpha' = alpha: linear profile between relaxing boundary densities.
    Adiabatic(ExperimentArgs),
    /// alpha' > alpha: relaxation to the average boundary density.
    Global(ExperimentArgs),
    /// Two-point covariances from KMC ensembles.
    Chaos(ExperimentArgs),
    /// Run the acceptance checks and print one line per check.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// key=value file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Channel length N.
    #[arg(long)]
    n: Option<usize>,
    /// Reservoir exponent: M = round(N^(1 + alpha)).
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Time exponent: microscopic time N^(2 + alpha') t.
    #[arg(long)]
    alpha_prime: Option<f64>,
    /// Macroscopic probe time; repeat or separate with commas.
    #[arg(long = "t", value_delimiter = ',')]
    t: Vec<f64>,
    /// Replicates for the kmc engine.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// ode, kmc or both.
    #[arg(long)]
    engine: Option<String>,
    /// Initial profile: const:c, linear, sine, step:a,b or affine:a,b
    /// (default: the line between the boundary densities).
    #[arg(long)]
    u0: Option<String>,
    #[arg(long)]
    v_minus: Option<f64>,
    #[arg(long)]
    v_plus: Option<f64>,
    /// Output file, `-` for stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Refuse kmc runs whose estimated event count exceeds this.
    #[arg(long)]
    budget_events: Option<f64>,
    /// Macroscopic site pair r1,r2 for covariances; repeatable.
    #[arg(long)]
    pair: Vec<String>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Only the deterministic checks.
    #[arg(long)]
    quick: bool,
    /// Run only this check; repeatable.
    #[arg(long)]
    criterion: Vec<u8>,
}

impl ExperimentArgs {
    fn settings(&self) -> ssep::Result<Settings> {
        let base = match &self.config {
            Some(path) => Settings::parse_config(&std::fs::read_to_string(path)?)?,
            None => Settings::default(),
        };
        let flags = Settings {
            n: self.n,
            alpha: self.alpha,
            alpha_prime: self.alpha_prime,
            times: self.t.clone(),
            k: self.k,
            seed: self.seed,
            engine: self.engine.as_deref().map(str::parse::<Engine>).transpose()?,
            u0: self.u0.clone(),
            v_minus: self.v_minus,
            v_plus: self.v_plus,
            out: self.out.clone(),
            format: self.format.as_deref().map(str::parse::<Format>).transpose()?,
            budget_events: self.budget_events,
            pairs: self.pair.iter().map(|p| parse_pair(p)).collect::<ssep::Result<_>>()?,
        };
        Ok(base.overlay(flags))
    }
}

fn run(family: Family, args: &ExperimentArgs) -> ssep::Result<()> {
    let settings = args.settings()?;
    let spec = settings.spec(family)?;
    let result = match family {
        Family::Chaos => run_chaos_experiment(&spec, &settings.pairs_or_default())?,
        _ => run_experiment(&spec)?,
    };
    let out = spec.out.clone().unwrap_or_else(|| PathBuf::from("-"));
    emit(&result, spec.format, &out)
}

fn verify(args: &VerifyArgs) -> bool {
    let reports = if args.criterion.is_empty() {
        run_all(if args.quick { Scale::Quick } else { Scale::Full })
    } else {
        args.criterion.iter().filter_map(|&id| run_criterion(id)).collect()
    };
    for r in &reports {
        println!("{r}");
    }
    reports.iter().all(|r| r.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("ssep: cannot size thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match &cli.command {
        Command::Ideal(a) => run(Family::Ideal, a),
        Command::Adiabatic(a) => run(Family::Adiabatic, a),
        Command::Global(a) => run(Family::Global, a),
        Command::Chaos(a) => run(Family::Chaos, a),
        Command::Verify(a) => {
            return if verify(a) { ExitCode::SUCCESS } else { ExitCode::FAILURE };
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ssep: {e}");
            ExitCode::from(2)
        }
    }
}
