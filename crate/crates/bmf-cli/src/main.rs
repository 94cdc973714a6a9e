use std::path::PathBuf;
use std::process::ExitCode;

use bmf_cli::commands::{self, FitOptions};
use bmf_core::synth::SynthConfig;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bmf",
    version,
    about = "Probabilistic Boolean matrix factorization with flip-noise estimation",
    after_help = "Exit codes: 0 converged, 1 error, 2 usage, 3 EM hit its outer iteration cap.\n\
                  BMF_THREADS sets the bench worker count (default 1)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct FitArgs {
    /// Input matrix (bmf-dense or bmf-sparse file)
    #[arg(long)]
    input: PathBuf,
    /// Number of latent factors
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    rank: u64,
    /// Beta prior shape alpha
    #[arg(long, default_value_t = 0.95)]
    alpha: f64,
    /// Beta prior shape beta
    #[arg(long, default_value_t = 0.95)]
    beta: f64,
    /// Stop the EM loop when the flip-probability estimate moves less than this
    #[arg(long = "eps-tol", default_value_t = 1e-3)]
    eps_tolerance: f64,
    /// Outer EM iteration cap
    #[arg(long = "max-outer", default_value_t = 50)]
    max_outer: usize,
    /// Inner Rprop iteration cap per M-step
    #[arg(long = "max-inner", default_value_t = 2000)]
    max_inner: usize,
    /// Consecutive stable reconstructions ending an M-step
    #[arg(long, default_value_t = 30)]
    stability_window: usize,
    /// RNG seed for the parameter initialization
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Estimate noise as mean |X - P*| instead of reconstruction disagreement
    #[arg(long)]
    exact_noise: bool,
    /// Output prefix (defaults to the input path)
    #[arg(long)]
    out_prefix: Option<PathBuf>,
}

impl FitArgs {
    fn options(&self) -> FitOptions {
        FitOptions {
            rank: self.rank as usize,
            alpha: self.alpha,
            beta: self.beta,
            eps_tolerance: self.eps_tolerance,
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            stability_window: self.stability_window,
            seed: self.seed,
            exact_noise: self.exact_noise,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Factorize a binary matrix; writes mu, zeta, and the reconstruction
    Factorize(FitArgs),
    /// Complete a partially observed matrix with the denoised reconstruction
    Complete {
        #[command(flatten)]
        fit: FitArgs,
        /// Also write the imputed (previously missing) cells as a sparse file
        #[arg(long)]
        heldout_out: Option<PathBuf>,
    },
    /// Generate a synthetic benchmark instance
    Synth {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        m: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        rank: u64,
        /// Target Pr(X = 1) of the clean matrix
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        /// Half-width of the per-column Bernoulli prior interval
        #[arg(long, default_value_t = 0.2)]
        spread: f64,
        /// True flip probability
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Fraction of cells kept observed
        #[arg(long, default_value_t = 1.0)]
        observed: f64,
        /// Share one calibrated Bernoulli rate across latent columns
        #[arg(long)]
        fixed_priors: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output prefix for the instance files
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Run a sweep described by a TOML spec and write a results table
    Bench {
        /// Sweep specification file
        #[arg(long)]
        spec: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Factorize(args) => {
            commands::cmd_factorize(&args.input, &args.options(), &args.out_prefix)
        }
        Command::Complete { fit, heldout_out } => {
            commands::cmd_complete(&fit.input, &fit.options(), &fit.out_prefix, heldout_out)
        }
        Command::Synth {
            n,
            m,
            rank,
            density,
            spread,
            noise,
            observed,
            fixed_priors,
            seed,
            out_prefix,
        } => {
            let mut config = SynthConfig::new(*n as usize, *m as usize, *rank as usize);
            config.target_density = *density;
            config.prior_spread = *spread;
            config.noise = *noise;
            config.observed_fraction = *observed;
            config.vary_priors = !fixed_priors;
            config.seed = *seed;
            commands::cmd_synth(&config, out_prefix)
        }
        Command::Bench { spec } => commands::cmd_bench(spec),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
