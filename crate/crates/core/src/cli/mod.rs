//! The `kernbound` command line tool.
//!
//! ```text
//! kernbound <gram|bound|estimate|verify|train|certify|sweep> --config <path>
//!     [--rho R] [--delta D] [--family l1|l2] [--trials N] [--seed S]
//!     [--threads T] [--out PATH] [--model PATH] [--labels auto|last|none]
//! ```
//!
//! Settings come from the TOML file first; each flag then replaces the
//! matching key. Exit codes: 0 success, 1 verification failure, 2 usage or
//! configuration error, 3 data error.

pub mod config;
pub mod report;

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::bounds::{dictionary_reports, sweep_bounds, sweep_bounds_params, sweep_csv, Family};
use crate::certify::{certify, BoundChoice};
use crate::dataset::{read_dataset, write_gram_cache, write_new, CsvOptions, DataFormat, LabelColumn};
use crate::kernel::{
    build_dictionary, validate_psd, CeilingPolicy, Constraint, KernelDictionary, KernelSpec, Sample,
    PSD_TOLERANCE,
};
use crate::learner::{train, Model, TrainerConfig};
use crate::proof_checks::{run_suite, SuiteConfig};
use crate::rademacher::{estimate_exact, estimate_mc, HypothesisFamily, DEFAULT_EXACT_CAP};
use crate::{bounds::MarginConfig, Error};
use config::Config;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Lib(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Lib(Error::Parameter(_) | Error::Capacity { .. }) => 2,
            CliError::Lib(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Gram,
    Bound,
    Estimate,
    Verify,
    Train,
    Certify,
    Sweep,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Gram => "gram",
            Command::Bound => "bound",
            Command::Estimate => "estimate",
            Command::Verify => "verify",
            Command::Train => "train",
            Command::Certify => "certify",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LabelsArg {
    Auto,
    Last,
    None,
}

#[derive(Debug, Parser)]
#[command(name = "kernbound", version, about = "Generalization bounds for learning kernels")]
pub struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Monte Carlo trials for `estimate`.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for automatic. Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory for reports; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model file for `certify`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// CSV label column handling.
    #[arg(long, value_enum)]
    labels: Option<LabelsArg>,
}

/// Runs the tool and returns its exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("kernbound: {e}");
            e.exit_code()
        }
    }
}

fn effective_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(v) = cli.rho {
        cfg.set("rho", v);
    }
    if let Some(v) = cli.delta {
        cfg.set("delta", v);
    }
    if let Some(f) = cli.family {
        cfg.set("family", match f {
            FamilyArg::L1 => "l1",
            FamilyArg::L2 => "l2",
        });
    }
    if let Some(v) = cli.trials {
        cfg.set("estimate.trials", to_int(v)?);
    }
    if let Some(v) = cli.seed {
        cfg.set("seed", to_int(v)?);
    }
    if let Some(v) = cli.threads {
        cfg.set("threads", to_int(v as u64)?);
    }
    if let Some(p) = &cli.model {
        cfg.set("certify.model", p.to_string_lossy().into_owned());
    }
    if let Some(l) = cli.labels {
        cfg.set("data.labels", match l {
            LabelsArg::Auto => "auto",
            LabelsArg::Last => "last",
            LabelsArg::None => "none",
        });
    }
    Ok(cfg)
}

fn to_int(v: u64) -> Result<i64, CliError> {
    i64::try_from(v).map_err(|_| CliError::Config(format!("{v} is too large")))
}

pub fn run(cli: &Cli) -> Result<i32, CliError> {
    let cfg = effective_config(cli)?;
    if let Some(threads) = cfg.usize("threads")? {
        // a second initialization in the same process is harmless to ignore
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let seed = cfg.u64("seed")?.unwrap_or(0);
    let command = cli.command;
    let Outcome { result, code, extra } = match command {
        Command::Gram => gram(&cfg, cli.out.as_deref())?,
        Command::Bound => bound(&cfg)?,
        Command::Estimate => estimate(&cfg, seed)?,
        Command::Verify => verify(seed)?,
        Command::Train => train_cmd(&cfg)?,
        Command::Certify => certify_cmd(&cfg, seed)?,
        Command::Sweep => sweep(&cfg)?,
    };
    let text = report::canonical(command.name(), cfg.echo(), seed, &result)?;
    match &cli.out {
        Some(out) => {
            let extra: Vec<(&str, &[u8])> = extra.iter().map(|(e, b)| (*e, b.as_slice())).collect();
            let path = report::emit(out, command.name(), &text, &extra)?;
            println!("{}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(code)
}

struct Outcome {
    result: serde_json::Value,
    code: i32,
    /// Sibling artifacts written next to the report, by extension.
    extra: Vec<(&'static str, Vec<u8>)>,
}

impl Outcome {
    fn ok<T: Serialize>(result: &T) -> Result<Self, CliError> {
        Ok(Self {
            result: serde_json::to_value(result).map_err(Error::from)?,
            code: 0,
            extra: Vec::new(),
        })
    }
}

fn rho(cfg: &Config) -> Result<f64, CliError> {
    cfg.require("rho", cfg.f64("rho")?)
}

fn margin(cfg: &Config) -> Result<MarginConfig, CliError> {
    let delta = cfg.f64("delta")?.unwrap_or(0.05);
    Ok(MarginConfig::new(rho(cfg)?, delta)?)
}

fn family(cfg: &Config) -> Result<Family, CliError> {
    match cfg.str("family")?.unwrap_or("l1") {
        "l1" | "L1" => Ok(Family::L1),
        "l2" | "L2" => Ok(Family::L2),
        other => Err(CliError::Config(format!("`family` must be l1 or l2, found `{other}`"))),
    }
}

fn hypothesis_family(cfg: &Config) -> Result<HypothesisFamily, CliError> {
    let constraint = match cfg.str("family")?.unwrap_or("l1") {
        "l2signed" | "L2Signed" => Constraint::L2SphereSigned,
        _ => match family(cfg)? {
            Family::L1 => Constraint::L1Simplex,
            Family::L2 => Constraint::L2Sphere,
        },
    };
    Ok(HypothesisFamily::new(constraint, rho(cfg)?)?)
}

fn load_sample(cfg: &Config) -> Result<Sample, CliError> {
    let path = cfg.require("data.path", cfg.path("data.path")?)?;
    let format = match cfg.str("data.format")?.unwrap_or("csv") {
        "csv" => DataFormat::Csv,
        "sparse" => DataFormat::Sparse,
        other => return Err(CliError::Config(format!("unknown data.format `{other}`"))),
    };
    let labels = match cfg.str("data.labels")?.unwrap_or("auto") {
        "auto" => LabelColumn::Auto,
        "last" => LabelColumn::Last,
        "none" => LabelColumn::None,
        other => return Err(CliError::Config(format!("unknown data.labels `{other}`"))),
    };
    let opts = CsvOptions {
        header: cfg.bool("data.header")?.unwrap_or(false),
        labels,
    };
    read_dataset(&path, format, opts).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())).into(),
        other => other.into(),
    })
}

fn kernel_specs(cfg: &Config) -> Result<Vec<KernelSpec>, CliError> {
    let specs: Vec<KernelSpec> = cfg.require("kernels", cfg.typed("kernels")?)?;
    if specs.is_empty() {
        return Err(CliError::Config("`kernels` is empty".into()));
    }
    Ok(specs)
}

fn ceiling_policy(cfg: &Config) -> Result<CeilingPolicy, CliError> {
    Ok(match cfg.f64("kernel.ceiling")? {
        Some(r2) => CeilingPolicy::UserValue(r2),
        None => CeilingPolicy::FromSample,
    })
}

fn dictionary(cfg: &Config, sample: &Sample, specs: &[KernelSpec]) -> Result<KernelDictionary, CliError> {
    Ok(build_dictionary(sample, specs, ceiling_policy(cfg)?)?)
}

fn gram(cfg: &Config, out: Option<&Path>) -> Result<Outcome, CliError> {
    let sample = load_sample(cfg)?;
    let specs = kernel_specs(cfg)?;
    let dict = dictionary(cfg, &sample, &specs)?;
    let cache_dir = match cfg.path("gram.cache_dir")? {
        Some(dir) => Some(dir),
        None => out.map(|o| o.join("gram")),
    };
    let mut rows = Vec::new();
    for (spec, g) in specs.iter().zip(dict.grams()) {
        let diag = validate_psd(g, PSD_TOLERANCE)?;
        let meta = match &cache_dir {
            Some(dir) => {
                let path = write_gram_cache(dir, spec, g)?;
                Some(path.file_name().map(|f| f.to_string_lossy().into_owned()))
            }
            None => None,
        };
        rows.push(json!({
            "kernel": spec.name,
            "m": g.m(),
            "trace": g.trace(),
            "minEig": diag.min_eig,
            "maxEig": diag.max_eig,
            "symmetricDefect": diag.symmetric_defect,
            "cacheFile": meta.flatten().unwrap_or_default(),
        }));
    }
    Outcome::ok(&json!({
        "sampleHash": sample.content_hash(),
        "dictionaryHash": dict.content_hash(),
        "kernelCeilingR2": dict.kernel_ceiling_r2(),
        "kernels": rows,
    }))
}

fn bound(cfg: &Config) -> Result<Outcome, CliError> {
    let sample = load_sample(cfg)?;
    let dict = dictionary(cfg, &sample, &kernel_specs(cfg)?)?;
    let family = family(cfg)?;
    let rs: Vec<u32> = match cfg.typed("bound.r")? {
        Some(rs) => rs,
        None if family == Family::L1 => vec![2, 4, 6, 8],
        None => vec![2, 4],
    };
    Outcome::ok(&dictionary_reports(&dict, rho(cfg)?, family, &rs)?)
}

fn estimate(cfg: &Config, seed: u64) -> Result<Outcome, CliError> {
    let sample = load_sample(cfg)?;
    let dict = dictionary(cfg, &sample, &kernel_specs(cfg)?)?;
    let h = hypothesis_family(cfg)?;
    let est = match cfg.str("estimate.method")?.unwrap_or("mc") {
        "mc" => estimate_mc(&dict, &h, cfg.u64("estimate.trials")?.unwrap_or(10_000), seed)?,
        "exact" => {
            let cap = cfg.usize("estimate.exact_cap")?.unwrap_or(DEFAULT_EXACT_CAP);
            estimate_exact(&dict, &h, cap)?
        }
        other => return Err(CliError::Config(format!("unknown estimate.method `{other}`"))),
    };
    Outcome::ok(&est)
}

fn verify(seed: u64) -> Result<Outcome, CliError> {
    let suite = SuiteConfig {
        seed,
        ..SuiteConfig::default()
    };
    let summaries = run_suite(&suite)?;
    let all_hold = summaries.iter().all(|s| s.pass);
    let mut outcome = Outcome::ok(&json!({
        "allHold": all_hold,
        "suite": suite,
        "checks": summaries,
    }))?;
    if !all_hold {
        outcome.code = 1;
    }
    Ok(outcome)
}

fn trainer_config(cfg: &Config) -> Result<TrainerConfig, CliError> {
    let mut t = TrainerConfig::default();
    if let Some(c) = cfg.f64("train.reg_c")? {
        t.reg_c = c;
    }
    if let Some(n) = cfg.usize("train.max_outer")? {
        t.max_outer = n;
    }
    if let Some(tol) = cfg.f64("train.tol")? {
        t.tol = tol;
    }
    Ok(t)
}

fn train_cmd(cfg: &Config) -> Result<Outcome, CliError> {
    let sample = load_sample(cfg)?;
    let dict = dictionary(cfg, &sample, &kernel_specs(cfg)?)?;
    let model = train(&sample, &dict, family(cfg)?, &trainer_config(cfg)?)?;
    if let Some(warning) = model.trainer_log.as_ref().and_then(|l| l.warning.as_ref()) {
        eprintln!("kernbound: warning: {warning}");
    }
    if let Some(path) = cfg.path("train.model")? {
        let mut text = serde_json::to_string_pretty(&model).map_err(Error::from)?;
        text.push('\n');
        write_new(&path, text.as_bytes())?;
    }
    Outcome::ok(&model)
}

fn bound_choice(cfg: &Config, seed: u64) -> Result<BoundChoice, CliError> {
    Ok(match cfg.str("certify.bound")?.unwrap_or("ceiling") {
        "ceiling" => BoundChoice::Ceiling,
        "trace" => BoundChoice::TraceR {
            r: cfg.u64("certify.r")?.unwrap_or(2) as u32,
        },
        "exact" => BoundChoice::EmpiricalExact {
            cap: cfg.usize("estimate.exact_cap")?.unwrap_or(DEFAULT_EXACT_CAP),
        },
        "mc" => BoundChoice::EmpiricalMc {
            trials: cfg.u64("estimate.trials")?.unwrap_or(10_000),
            seed,
        },
        other => return Err(CliError::Config(format!("unknown certify.bound `{other}`"))),
    })
}

fn certify_cmd(cfg: &Config, seed: u64) -> Result<Outcome, CliError> {
    let path = cfg.require("certify.model", cfg.path("certify.model")?)?;
    let text = std::fs::read_to_string(&path).map_err(Error::from)?;
    let model: Model = serde_json::from_str(&text).map_err(Error::from)?;
    let sample = load_sample(cfg)?;
    if sample.content_hash() != model.train_sample_hash {
        return Err(Error::Data(format!(
            "{} was trained on a different sample",
            path.display()
        ))
        .into());
    }
    if model.kernel_specs.is_empty() {
        return Err(Error::Data("model does not list its kernels".into()).into());
    }
    let dict = dictionary(cfg, &sample, &model.kernel_specs)?;
    let cert = certify(&model, &sample, &dict, &margin(cfg)?, bound_choice(cfg, seed)?)?;
    Outcome::ok(&cert)
}

fn sweep(cfg: &Config) -> Result<Outcome, CliError> {
    let p_values: Vec<usize> = cfg.require("sweep.p_values", cfg.typed("sweep.p_values")?)?;
    let rho = rho(cfg)?;
    let rows = if cfg.contains("data.path") {
        let sample = load_sample(cfg)?;
        sweep_bounds(&dictionary(cfg, &sample, &kernel_specs(cfg)?)?, rho, &p_values)?
    } else {
        let m = cfg.require("sweep.m", cfg.usize("sweep.m")?)?;
        let r2 = cfg.f64("sweep.r2")?.unwrap_or(1.0);
        sweep_bounds_params(m, r2, rho, &p_values, None)?
    };
    let csv = sweep_csv(&rows);
    let mut outcome = Outcome::ok(&json!({ "rows": rows, "csv": csv }))?;
    outcome.extra.push(("csv", csv.into_bytes()));
    Ok(outcome)
}
