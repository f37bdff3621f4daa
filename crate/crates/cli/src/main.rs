use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bai_core::fluid::{Dynamics, FluidControls, FluidModel};
use bai_core::harness::{self, output, RawConfig};
use bai_core::oracle::{solve_beta_optimal, solve_optimal, DEFAULT_TOL};
use bai_core::rng::{StreamRole, Substream};
use bai_core::samplers::{simulate, Capture, StoppingRule};
use bai_core::BaiError;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bai", version, about = "Anchored top-two best-arm identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal proportions, common index and characteristic time as JSON.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Constrain the best arm's proportion to this value.
        #[arg(long)]
        beta: Option<f64>,
    },
    /// One stopped run of the first policy; prints the outcome as JSON.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        run_id: u64,
    },
    /// Replicated runs of every policy; summary CSV to stdout or --out.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary JSON (includes wall time).
        #[arg(long)]
        json: Option<PathBuf>,
        /// Per-run CSV.
        #[arg(long)]
        runs_csv: Option<PathBuf>,
    },
    /// Fluid trajectory CSV.
    Fluid {
        #[command(flatten)]
        common: Common,
        /// Initial allocations, comma separated (default: uniform).
        #[arg(long, value_delimiter = ',')]
        init: Option<Vec<f64>>,
        /// Total of the default uniform start.
        #[arg(long, default_value_t = 1.0)]
        n0: f64,
        /// Final total, as a multiple of the initial total.
        #[arg(long, default_value_t = 100.0)]
        span: f64,
        /// Beta-EB fluid model instead of the anchored one.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value_t = 10)]
        sample_stride: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Events sidecar JSON.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Run-averaged trajectories with the stopping rule disabled.
    Diag {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        stride: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML configuration file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Instance as family:m1,m2,... (e.g. gaussian:1,0 or gaussian/2:1,0).
    #[arg(long)]
    instance: Option<String>,
    /// Policy (at2, iat2, eb-tcb:<beta>, eb-itcb:<beta>, optional @<alpha>); repeatable.
    #[arg(long = "policy")]
    policies: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_parser = ["gk16", "kk21"])]
    threshold: Option<String>,
    #[arg(long)]
    cap: Option<u64>,
}

impl Common {
    fn raw(&self) -> Result<RawConfig, BaiError> {
        let file = match &self.config {
            Some(p) => RawConfig::from_file(p)?,
            None => RawConfig::default(),
        };
        let (family, sigma, means) = match &self.instance {
            Some(text) => {
                let inst = harness::parse_instance(text)?;
                let (name, sigma) = match inst.family() {
                    bai_core::spef::SpefFamily::Gaussian { sigma } => ("gaussian".to_string(), Some(sigma)),
                    other => (other.to_string(), None),
                };
                (Some(name), sigma, Some(inst.means().to_vec()))
            }
            None => (None, None, None),
        };
        let flags = RawConfig {
            family,
            sigma,
            means,
            policies: (!self.policies.is_empty()).then(|| self.policies.clone()),
            alpha: self.alpha,
            delta: self.delta,
            threshold: self.threshold.clone(),
            runs: self.runs,
            seed: self.seed,
            cap: self.cap,
            ..RawConfig::default()
        };
        Ok(file.merge(flags))
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), BaiError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| BaiError::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

fn execute(command: Command) -> Result<(), BaiError> {
    match command {
        Command::Solve { common, beta } => {
            let inst = common.raw()?.instance()?;
            let sol = match beta {
                Some(b) => solve_beta_optimal(&inst, b, DEFAULT_TOL)?,
                None => solve_optimal(&inst, DEFAULT_TOL)?,
            };
            emit(None, &json(&sol))
        }
        Command::Run { common, run_id } => {
            let config = common.raw()?.resolve()?;
            let rule = StoppingRule { delta: config.delta, threshold: config.threshold };
            let stream = Substream::new(config.master_seed, run_id, StreamRole::Rewards);
            let rec = simulate(&config.instance, &config.policies[0], Some(rule), stream, config.cap, Capture::default())?;
            emit(None, &json(&rec.outcome))
        }
        Command::Bench { common, out, json: json_path, runs_csv } => {
            let config = common.raw()?.resolve()?;
            let report = harness::bench(&config)?;
            if let Some(p) = json_path {
                emit(Some(&p), &output::summary_json(&config, &report.summary))?;
            }
            if let Some(p) = runs_csv {
                emit(Some(&p), &output::runs_csv(&config, &report))?;
            }
            emit(out.as_deref(), &output::summary_csv(&config, &report.summary))
        }
        Command::Fluid { common, init, n0, span, beta, sample_stride, out, events } => {
            let inst = common.raw()?.instance()?;
            let k = inst.num_arms();
            let init = init.unwrap_or_else(|| vec![n0 / k as f64; k]);
            let dynamics = match beta {
                Some(beta) => Dynamics::BetaEb { beta },
                None => Dynamics::Anchored,
            };
            let controls = FluidControls { dynamics, sample_stride, ..FluidControls::default() };
            let model = FluidModel::with_dynamics(&inst, dynamics)?;
            let total: f64 = init.iter().sum();
            let traj = model.integrate(&init, total * span, &controls)?;
            #[derive(serde::Serialize)]
            struct Header<'a> {
                instance: &'a bai_core::spef::BanditInstance,
                initial: &'a [f64],
                horizon: f64,
                controls: &'a FluidControls,
            }
            let header = Header { instance: &inst, initial: &init, horizon: total * span, controls: &controls };
            if let Some(p) = events {
                emit(Some(&p), &output::fluid_events_json(&traj))?;
            }
            emit(out.as_deref(), &output::fluid_csv(&header, &traj))
        }
        Command::Diag { common, horizon, stride, out } => {
            let mut raw = common.raw()?;
            raw.horizon = horizon.or(raw.horizon);
            raw.stride = stride.or(raw.stride);
            let config = raw.resolve()?;
            let omega = solve_optimal(&config.instance, DEFAULT_TOL)?.omega;
            let diags = harness::diag_capture(&config, Some(&omega))?;
            emit(out.as_deref(), &output::diag_csv(&config, &diags))
        }
    }
}

fn exit_code(e: &BaiError) -> u8 {
    match e {
        BaiError::NonConvergence { .. } | BaiError::StepUnderflow { .. } => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
