mod analyze;
mod config;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use hypersmc::experiments::study::TraceOutput;
use hypersmc::experiments::{run_study, StudyModel, StudySpec};
use hypersmc::hyper::HyperPrior;
use hypersmc::models::source::ClgModelConfig;
use hypersmc::smc::run_sampler;
use hypersmc::SmcError;

use analyze::Mode;
use config::{model_of, read_json_value, resolve, set_path, RunConfig};

#[derive(Parser)]
#[command(name = "hypersmc", version, about = "Noise-level inference from one tempered SMC run")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset and its ground truth.
    Generate {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the tempered sampler on a dataset and write its trace.
    Run(RunArgs),
    /// Hyper-parameter analysis of an existing trace.
    Analyze(AnalyzeArgs),
    /// Replicate study comparing the proposed methods with the baselines.
    Study(StudyArgs),
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModelArg {
    Toy,
    Clg,
}

impl From<ModelArg> for StudyModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Toy => StudyModel::Toy,
            ModelArg::Clg => StudyModel::Clg,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON run config; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    print_config: bool,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Trace path; `.gz` compresses.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    n_particles: Option<usize>,
    #[arg(long)]
    n_iterations: Option<usize>,
    /// geometric | adaptive
    #[arg(long)]
    schedule_mode: Option<String>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    ess_target_fraction: Option<f64>,
    #[arg(long)]
    resample_threshold_fraction: Option<f64>,
    #[arg(long)]
    theta_star: Option<f64>,
    #[arg(long)]
    theta_max: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// all | last-only | nothing | every:K
    #[arg(long)]
    snapshots: Option<String>,
    #[arg(long)]
    mcmc_sweeps: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// One log line per iteration on stderr.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Hyper-prior JSON `{family, params, support}`; default Gamma(2, 4 theta_star)
    /// over the explored range.
    #[arg(long)]
    prior: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    mode: Mode,
    /// Dataset the trace was run on; needed for EB reweighting.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run config, for the source-model options.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StudyArgs {
    /// Study spec JSON; flags override its keys.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    print_config: bool,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    n_replicates: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Replicates run concurrently.
    #[arg(long)]
    jobs: Option<usize>,
    /// Particle-level threads inside each run.
    #[arg(long)]
    threads: Option<usize>,
    /// none | json | gzip
    #[arg(long)]
    traces: Option<String>,
}

/// Errors from the numerics rather than from the user's input.
fn is_numerical(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(
            c.downcast_ref::<SmcError>(),
            Some(SmcError::DegeneratePopulation { .. } | SmcError::ModelEvaluation(_) | SmcError::NotPositiveDefinite(_))
        )
    })
}

fn snapshots_value(s: &str) -> Result<Value> {
    Ok(match s {
        "all" => json!({"kind": "all"}),
        "last-only" => json!({"kind": "last-only"}),
        "nothing" => json!({"kind": "nothing"}),
        _ => match s.strip_prefix("every:").map(str::parse::<usize>) {
            Some(Ok(k)) if k > 0 => json!({"kind": "every", "every": k}),
            _ => bail!("snapshots: expected all, last-only, nothing or every:K, got '{s}'"),
        },
    })
}

fn put<T: serde::Serialize>(flags: &mut Value, key: &str, v: Option<T>) {
    if let Some(v) = v {
        set_path(flags, key, serde_json::to_value(v).expect("flag value"));
    }
}

fn run_config(a: &RunArgs) -> Result<RunConfig> {
    let file = a.config.as_deref().map(read_json_value).transpose()?;
    let model = model_of(a.model.map(Into::into), file.as_ref())?;
    let mut flags = json!({});
    put(&mut flags, "model", Some(model));
    put(&mut flags, "data", a.data.as_ref());
    put(&mut flags, "output", a.output.as_ref());
    put(&mut flags, "n_particles", a.n_particles);
    put(&mut flags, "n_iterations", a.n_iterations);
    put(&mut flags, "schedule.mode", a.schedule_mode.as_ref());
    put(&mut flags, "schedule.alpha1", a.alpha1);
    put(&mut flags, "schedule.ess_target_fraction", a.ess_target_fraction);
    put(&mut flags, "resample_threshold_fraction", a.resample_threshold_fraction);
    put(&mut flags, "theta_star", a.theta_star);
    put(&mut flags, "theta_max", a.theta_max);
    put(&mut flags, "seed", a.seed);
    put(&mut flags, "mcmc_sweeps", a.mcmc_sweeps);
    put(&mut flags, "threads", a.threads);
    if let Some(s) = &a.snapshots {
        set_path(&mut flags, "snapshots", snapshots_value(s)?);
    }
    let cfg: RunConfig = resolve(&RunConfig::defaults(model), file, flags)?;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let cfg = run_config(&a)?;
    if a.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let Some(data_path) = &cfg.data else {
        bail!("data: a dataset is required (--data or the config's \"data\" key)");
    };
    let dataset = data::load_dataset(data_path)?;
    if dataset.model() != cfg.model {
        bail!("model: config says {:?} but the dataset holds {:?} data", cfg.model, dataset.model());
    }
    let mut sampler = cfg.sampler_config()?;
    sampler.verbose = a.verbose;
    let trace = match cfg.model {
        StudyModel::Toy => run_sampler(&dataset.toy_model(cfg.theta_star)?, &sampler)?,
        StudyModel::Clg => {
            let mc = ClgModelConfig { theta_star: cfg.theta_star, ..cfg.clg_model.clone() };
            run_sampler(&dataset.clg_model(&mc)?, &sampler)?
        }
    };
    let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from("trace.json"));
    data::write_trace(&trace, &out)?;
    eprintln!("wrote {} ({} records)", out.display(), trace.records.len());
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let trace = data::read_trace(&a.trace)?;
    let run_cfg = match &a.config {
        Some(p) => {
            let file = read_json_value(p)?;
            let model = model_of(None, Some(&file))?;
            Some(resolve(&RunConfig::defaults(model), Some(file), json!({}))?)
        }
        None => None,
    };
    let prior: HyperPrior = match (&a.prior, run_cfg.as_ref().and_then(|c| c.hyper_prior)) {
        (Some(p), _) => serde_json::from_value(read_json_value(p)?).context("prior: expected {family, params, support}")?,
        (None, Some(p)) => p,
        (None, None) => analyze::default_prior(&trace)?,
    };
    let dataset = a.data.as_deref().map(data::load_dataset).transpose()?;
    let clg_model = run_cfg.map(|c| c.clg_model).unwrap_or_default();
    let summary = analyze::analyze(&trace, &prior, a.mode, dataset.as_ref(), &clg_model, &a.out)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn study_spec(a: &StudyArgs) -> Result<StudySpec> {
    let file = a.spec.as_deref().map(read_json_value).transpose()?;
    let model = model_of(a.model.map(Into::into), file.as_ref())?;
    let n = match model {
        StudyModel::Toy => 100,
        StudyModel::Clg => 50,
    };
    let mut flags = json!({});
    put(&mut flags, "model", Some(model));
    put(&mut flags, "n_replicates", a.n_replicates);
    put(&mut flags, "base_seed", a.base_seed);
    put(&mut flags, "output_dir", a.output_dir.as_ref());
    put(&mut flags, "jobs", a.jobs);
    if let Some(t) = &a.traces {
        let t: TraceOutput = serde_json::from_value(json!(t)).context("traces: expected none, json or gzip")?;
        put(&mut flags, "traces", Some(t));
    }
    // unresolved defaults, so that settings-dependent ones follow the file
    let spec: StudySpec = resolve(&StudySpec::new(model, n, 1), file, flags)?;
    spec.validate()?;
    let mut spec = spec.resolved()?;
    if let (Some(t), Some(smc)) = (a.threads, spec.smc.as_mut()) {
        smc.threads = t;
    }
    spec.validate()?;
    Ok(spec)
}

fn cmd_study(a: StudyArgs) -> Result<()> {
    let spec = study_spec(&a)?;
    if a.print_config {
        println!("{}", serde_json::to_string_pretty(&spec)?);
        return Ok(());
    }
    let out_dir = spec.output_dir.clone().unwrap_or_else(|| PathBuf::from("study"));
    let spec = StudySpec { output_dir: Some(out_dir.clone()), ..spec };
    let outcome = run_study(&spec)?;
    outcome.write(&out_dir)?;
    let failed = outcome.rows.iter().filter(|r| r.status != "ok").count();
    eprintln!("wrote {} ({} rows, {failed} failed)", out_dir.display(), outcome.rows.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.command {
        Command::Generate { model, seed, out } => data::generate(model.into(), seed, &out),
        Command::Run(a) => cmd_run(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Study(a) => cmd_study(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_numerical(&e) { 2 } else { 1 })
        }
    }
}
