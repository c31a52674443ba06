//! `gpp`: simulation, df evaluation, max-stable checks and lifting from the
//! command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_policy, ConfigError, GpConfig, RunConfig};
use gpp_core::lifting::SelectionPolicy;

#[derive(Parser)]
#[command(
    name = "gpp",
    version,
    about = "Simple and generalized Pareto processes"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand. Flags override the config file.
#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "GPP_OUT_DIR")]
    out: Option<PathBuf>,
    /// Profile kind: constant, gaussian_moving_max, rescaled_positive_field, bernoulli_pair.
    #[arg(long, global = true)]
    spec: Option<String>,
    #[arg(long, global = true)]
    omega0: Option<f64>,
    #[arg(long, global = true)]
    bandwidth: Option<f64>,
    #[arg(long, global = true)]
    corr_length: Option<f64>,
    /// Sites per axis.
    #[arg(long, global = true)]
    sites: Option<usize>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    lower: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    upper: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw simple (optionally generalized) Pareto fields.
    Simulate {
        #[arg(long)]
        n: Option<usize>,
        /// Condition on sup W > r * omega0.
        #[arg(long)]
        r: Option<f64>,
        /// stability or rejection.
        #[arg(long)]
        method: Option<String>,
        #[arg(long, allow_hyphen_values = true, requires_all = ["gp_sigma", "gp_gamma"])]
        gp_mu: Option<f64>,
        #[arg(long, requires_all = ["gp_mu", "gp_gamma"])]
        gp_sigma: Option<f64>,
        #[arg(long, allow_hyphen_values = true, requires_all = ["gp_mu", "gp_sigma"])]
        gp_gamma: Option<f64>,
    },
    /// Evaluate distribution-function queries against direct simulation.
    DfBattery {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        n_mc: Option<usize>,
        #[arg(long)]
        n_oracle: Option<usize>,
    },
    /// Simulate a max-stable process and run its validation checks.
    MaxstableCheck {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        truncation: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        n_rep: Option<usize>,
    },
    /// Estimate norming functions and lift the exceedances of a sample.
    Lift {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        t0: Option<f64>,
        /// sup_anywhere or sites:i,j,...
        #[arg(long, value_parser = parse_policy)]
        policy: Option<SelectionPolicy>,
        #[arg(long)]
        smooth: Option<usize>,
    },
    /// The moving-maximum lifting example with figure data.
    Scenario43 {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long)]
        truncation: Option<f64>,
    },
    /// Run the verification suite; exit 1 if any check fails.
    VerifyAll {
        #[arg(long)]
        quick: bool,
    },
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn resolve(common: &Common, command: &Command) -> anyhow::Result<RunConfig> {
    let mut c = RunConfig::load(common.config.as_deref())?;
    if common.seed.is_some() {
        c.seed = common.seed;
    }
    if common.out.is_some() {
        c.out = common.out.clone();
    }
    set(&mut c.spectral.kind, common.spec.clone());
    set(&mut c.spectral.omega0, common.omega0);
    set(&mut c.spectral.bandwidth, common.bandwidth);
    set(&mut c.spectral.corr_length, common.corr_length);
    set(&mut c.grid.sites, common.sites);
    set(&mut c.grid.dim, common.dim);
    set(&mut c.grid.lower, common.lower);
    set(&mut c.grid.upper, common.upper);
    match command {
        Command::Simulate {
            n,
            r,
            method,
            gp_mu,
            gp_sigma,
            gp_gamma,
        } => {
            set(&mut c.simulate.n, *n);
            if r.is_some() {
                c.simulate.r = *r;
            }
            set(&mut c.simulate.method, method.clone());
            if let (Some(mu), Some(sigma), Some(gamma)) = (gp_mu, gp_sigma, gp_gamma) {
                c.gp = Some(GpConfig {
                    mu: *mu,
                    sigma: *sigma,
                    gamma: *gamma,
                });
            }
        }
        Command::DfBattery {
            input,
            n_mc,
            n_oracle,
        } => {
            if input.is_some() {
                c.df_battery.input = input.clone();
            }
            set(&mut c.df_battery.n_mc, *n_mc);
            set(&mut c.df_battery.n_oracle, *n_oracle);
        }
        Command::MaxstableCheck {
            n,
            truncation,
            t,
            n_rep,
        } => {
            set(&mut c.maxstable.n, *n);
            set(&mut c.maxstable.truncation, *truncation);
            set(&mut c.maxstable.t, *t);
            set(&mut c.maxstable.n_rep, *n_rep);
        }
        Command::Lift {
            input,
            k,
            t0,
            policy,
            smooth,
        } => {
            if input.is_some() {
                c.lift.input = input.clone();
            }
            if k.is_some() {
                c.lift.k = *k;
            }
            set(&mut c.lift.t0, *t0);
            set(&mut c.lift.policy, policy.clone());
            if smooth.is_some() {
                c.lift.smooth = *smooth;
            }
        }
        Command::Scenario43 {
            n,
            k,
            t0,
            truncation,
        } => {
            let s = &mut c.scenario43;
            set(&mut s.n, *n);
            set(&mut s.k, *k);
            set(&mut s.t0, *t0);
            set(&mut s.truncation, *truncation);
            set(&mut s.sites, common.sites);
            set(&mut s.bandwidth, common.bandwidth);
        }
        Command::VerifyAll { quick } => {
            c.verify.quick |= *quick;
        }
    }
    Ok(c)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(&cli.common, &cli.command).and_then(|cfg| match &cli.command {
        Command::Simulate { .. } => commands::simulate(&cfg),
        Command::DfBattery { .. } => commands::df_battery(&cfg),
        Command::MaxstableCheck { .. } => commands::maxstable_check(&cfg),
        Command::Lift { .. } => commands::lift(&cfg),
        Command::Scenario43 { .. } => commands::scenario43(&cfg),
        Command::VerifyAll { .. } => commands::verify_all(&cfg),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
