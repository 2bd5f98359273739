use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use relaynet::config::{parse_config_str, OutputFormat, RunConfig, SEED_ENV};
use relaynet::queueing::{compare_queues, TorusChainOracle};
use relaynet::report;
use relaynet::sim::{estimate_scaling, run_trial_logged, sweep, ScalingEstimate, SweepTable};

/// Two-hop relay network simulator and exact torus-walk oracles.
#[derive(Parser, Debug)]
#[command(name = "relaynet", version, about)]
struct Cli {
    /// `key = value` configuration file; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// One trial; per-pair throughput and delay.
    Simulate,
    /// Trials over several n with scaling estimates.
    Sweep,
    /// Monte Carlo inter-meeting moments against the oracle.
    Moments,
    /// Exact hitting-time and return-time moments of the pair walk.
    Oracle,
    /// Fraction of typical configurations over seeds.
    Typical,
    /// Simulated relay-queue bounds against their analytic values.
    Queues,
}

/// Every configuration key as a flag. Values are parsed and checked by the
/// configuration layer so file and flag errors read the same.
#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long, global = true)]
    n: Option<String>,
    #[arg(long, global = true)]
    delta: Option<String>,
    #[arg(long = "p-delta", global = true)]
    p_delta: Option<String>,
    #[arg(long, global = true)]
    alpha: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    trials: Option<String>,
    #[arg(long, global = true)]
    slots: Option<String>,
    #[arg(long, global = true)]
    warmup: Option<String>,
    #[arg(long = "band-low", global = true)]
    band_low: Option<String>,
    #[arg(long = "band-high", global = true)]
    band_high: Option<String>,
    /// Output file (stdout when absent).
    #[arg(long = "out", global = true, value_name = "PATH")]
    out_path: Option<String>,
    /// csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Write every transmission attempt of `simulate` to `<out>.events.csv`
    /// (or `events.csv`).
    #[arg(long = "log-events", global = true)]
    log_events: bool,
    /// Comma-separated sizes for `sweep`.
    #[arg(long = "n-list", global = true)]
    n_list: Option<String>,
    #[arg(long, global = true)]
    m: Option<String>,
    /// natural-product or simple-2d.
    #[arg(long, global = true)]
    kind: Option<String>,
    #[arg(long, global = true)]
    samples: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(String, String)> {
        let fields: [(&str, &Option<String>); 16] = [
            ("n", &self.n),
            ("delta", &self.delta),
            ("p_delta", &self.p_delta),
            ("alpha", &self.alpha),
            ("seed", &self.seed),
            ("trials", &self.trials),
            ("slots", &self.slots),
            ("warmup", &self.warmup),
            ("band_low", &self.band_low),
            ("band_high", &self.band_high),
            ("out_path", &self.out_path),
            ("format", &self.format),
            ("n_list", &self.n_list),
            ("m", &self.m),
            ("kind", &self.kind),
            ("samples", &self.samples),
        ];
        let mut out: Vec<(String, String)> = fields
            .iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        if self.log_events {
            out.push(("log_events".into(), "true".into()));
        }
        out
    }
}

const USAGE_ERROR: u8 = 2;
const RUNTIME_ERROR: u8 = 1;

/// Slots for `queues` when none are configured.
const QUEUE_SLOTS: u64 = 10_000_000;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("relaynet: {e:#}");
            return ExitCode::from(USAGE_ERROR);
        }
    };
    match dispatch(cli.command, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("relaynet: {e:#}");
            ExitCode::from(RUNTIME_ERROR)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_config_str(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => Vec::new(),
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    Ok(RunConfig::resolve(&file, env_seed.as_deref(), &cli.overrides.pairs())?)
}

fn emit(cfg: &RunConfig, text: &str) -> Result<()> {
    match &cfg.out_path {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn events_path(out: Option<&Path>) -> PathBuf {
    match out {
        Some(p) => {
            let mut s = p.as_os_str().to_owned();
            s.push(".events.csv");
            PathBuf::from(s)
        }
        None => PathBuf::from("events.csv"),
    }
}

#[derive(serde::Serialize)]
struct SweepOutput<'a> {
    table: &'a SweepTable,
    scaling: Option<ScalingEstimate>,
}

fn dispatch(command: Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Simulate => {
            let (slots, warmup) = cfg.slots_rule().budget(cfg.n);
            let params = cfg.trial_params();
            let result = if cfg.log_events {
                let path = events_path(cfg.out_path.as_deref());
                let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                let mut w = BufWriter::new(file);
                let r = run_trial_logged(&params, cfg.n, cfg.seed, slots, warmup, Some(&mut w))?;
                w.flush()?;
                r
            } else {
                run_trial_logged(&params, cfg.n, cfg.seed, slots, warmup, None)?
            };
            let summary = result.summary();
            if !summary.conservation.holds() {
                anyhow::bail!("packet conservation violated in {} checks", summary.conservation.violations);
            }
            match cfg.format_or(OutputFormat::Json) {
                OutputFormat::Json => emit(cfg, &report::to_json(&summary)),
                OutputFormat::Csv => emit(cfg, &report::trial_csv(&summary)),
            }
        }
        Command::Sweep => {
            let table = sweep(&cfg.trial_params(), &cfg.n_list, cfg.trials, cfg.slots_rule(), cfg.seed);
            match cfg.format_or(OutputFormat::Csv) {
                OutputFormat::Csv => emit(cfg, &report::sweep_csv(&table)),
                OutputFormat::Json => {
                    let scaling = estimate_scaling(&table).ok();
                    emit(cfg, &report::to_json(&SweepOutput { table: &table, scaling }))
                }
            }
        }
        Command::Moments => {
            let r = report::moments_report(cfg.m, cfg.samples, cfg.seed)?;
            match cfg.format_or(OutputFormat::Json) {
                OutputFormat::Json => emit(cfg, &report::to_json(&r)),
                OutputFormat::Csv => emit(cfg, &report::moments_csv(&r)),
            }
        }
        Command::Oracle => {
            let s = TorusChainOracle::new(cfg.m, cfg.kind)?.summary()?;
            match cfg.format_or(OutputFormat::Json) {
                OutputFormat::Json => emit(cfg, &report::to_json(&s)),
                OutputFormat::Csv => emit(cfg, &report::oracle_csv(&s)),
            }
        }
        Command::Typical => {
            let r = report::typical_frequencies(cfg.n, cfg.delta, cfg.band(), cfg.trials, cfg.seed)?;
            match cfg.format_or(OutputFormat::Json) {
                OutputFormat::Json => emit(cfg, &report::to_json(&r)),
                OutputFormat::Csv => emit(cfg, &report::typical_csv(&r)),
            }
        }
        Command::Queues => {
            let r = compare_queues(cfg.n, cfg.slots.unwrap_or(QUEUE_SLOTS), cfg.seed)?;
            match cfg.format_or(OutputFormat::Csv) {
                OutputFormat::Csv => emit(cfg, &report::queues_csv(&r)),
                OutputFormat::Json => emit(cfg, &report::to_json(&r)),
            }
        }
    }
}
