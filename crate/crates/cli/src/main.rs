use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lda_handover::benchmarks::oracle_dp;
use lda_handover::harness::{
    emit_metrics, emit_sweep, gamma_sweep, run_experiment, Algorithm, ExperimentConfig,
    ForecasterSpec, OutputFormat, SeedSpec,
};
use lda_handover::scenarios::{build_scenario, ingest_trace, TracePaths};
use lda_handover::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_BUDGET: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "ldasim", version, about = "Run UE association experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured algorithm and seed on one scenario.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Repeat a run for several switching-cost weights on the same trace.
    Sweep {
        config: PathBuf,
        /// Comma-separated gamma values.
        #[arg(long, value_delimiter = ',', required = true)]
        gamma: Vec<f64>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Solve the offline optimum exactly (small instances only).
    Oracle {
        config: PathBuf,
        #[arg(long, env = "LDASIM_OUT_DIR")]
        out_dir: Option<PathBuf>,
    },
    /// Check trace files and report what ingestion repaired.
    Validate {
        /// SINR observations `slot,ue_id,bs_id,sinr_db`.
        sinr: PathBuf,
        /// Station metadata.
        #[arg(long)]
        bs: PathBuf,
        /// UE metadata.
        #[arg(long)]
        ue: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunOpts {
    /// Seed count (`20`) or list (`1,2,3`).
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory; overrides the config.
    #[arg(long, env = "LDASIM_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Comma-separated: lda,lda2,maxsinr,random,oracle.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<String>>,
    /// none, oracle or file:<path>.
    #[arg(long)]
    forecaster: Option<String>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::BudgetExceeded { .. } => EXIT_BUDGET,
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn load(path: &Path, opts: Option<&RunOpts>) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(o) = opts {
        if let Some(s) = &o.seeds {
            cfg.run.seeds = s.parse::<SeedSpec>()?;
        }
        if let Some(d) = &o.out_dir {
            cfg.run.out_dir = Some(d.clone());
        }
        if let Some(f) = &o.format {
            cfg.run.format = f.parse::<OutputFormat>()?;
        }
        if let Some(a) = &o.algorithms {
            cfg.run.algorithms = a.iter().map(|s| s.parse::<Algorithm>()).collect::<Result<_, _>>()?;
        }
        if let Some(f) = &o.forecaster {
            cfg.run.forecaster = f.parse::<ForecasterSpec>()?;
        }
        cfg.validate()?;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.run.out_dir.clone().unwrap_or_else(|| PathBuf::from("ldasim-out"))
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Run { config, opts } => {
            let (cfg, base) = load(&config, Some(&opts))?;
            let report = run_experiment(&cfg, &base)?;
            let dir = out_dir(&cfg);
            for p in emit_metrics(&report, &dir, cfg.run.format)? {
                println!("wrote {}", p.display());
            }
            for s in &report.summaries {
                println!(
                    "{:<9} g={:.2} ho_cost={:.2} f={:.2} switches/ue={:.2}",
                    s.algorithm.as_str(),
                    s.mean_total_g,
                    s.mean_total_ho_cost,
                    s.mean_total_f,
                    s.mean_switches_per_ue
                );
            }
            Ok(refusal(&report.oracle))
        }
        Command::Sweep { config, gamma, opts } => {
            let (cfg, base) = load(&config, Some(&opts))?;
            let report = gamma_sweep(&cfg, &gamma, &base)?;
            for p in emit_sweep(&report, &out_dir(&cfg), cfg.run.format)? {
                println!("wrote {}", p.display());
            }
            println!("gamma,algorithm,cum_g,neg_cum_h,cum_f,switches_per_ue");
            for r in &report.rows {
                println!(
                    "{},{},{:.3},{:.3},{:.3},{:.3}",
                    r.gamma, r.algorithm, r.cum_g, r.neg_cum_h, r.cum_f, r.switches_per_ue
                );
            }
            let refused = report.experiments.iter().map(|e| refusal(&e.oracle)).max();
            Ok(refused.unwrap_or(0))
        }
        Command::Oracle { config, out_dir: dir } => {
            let (mut cfg, base) = load(&config, None)?;
            if dir.is_some() {
                cfg.run.out_dir = dir;
            }
            let scenario = build_scenario(&cfg.scenario, &base)?;
            let path = oracle_dp(&scenario.trace, &scenario.delay, &cfg.run.budget())?;
            let dir = out_dir(&cfg);
            std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
            let file = dir.join("oracle.json");
            let text = serde_json::to_string_pretty(&path).expect("path serializes");
            std::fs::write(&file, text).map_err(|e| Error::Io { path: file.clone(), source: e })?;
            println!("total_f={} path_length={}", path.total_f, path.path_length);
            println!("wrote {}", file.display());
            Ok(0)
        }
        Command::Validate { sinr, bs, ue } => {
            let (trace, rep) = ingest_trace(&TracePaths { sinr, bs, ue })?;
            println!(
                "ok: T={} I={} J={} observations={} imputed_cells={} duplicate_rows={}",
                trace.horizon, trace.ues, trace.bss, rep.observations, rep.imputed_cells, rep.duplicate_rows
            );
            Ok(0)
        }
    }
}

fn refusal(status: &lda_handover::harness::OracleStatus) -> u8 {
    match status {
        lda_handover::harness::OracleStatus::Refused { message } => {
            eprintln!("oracle refused: {message}");
            EXIT_BUDGET
        }
        _ => 0,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
