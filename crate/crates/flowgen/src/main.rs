use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flowgen::commands::{cmd_ablate, cmd_evaluate, cmd_report, cmd_run, CommandError, Services};
use flowgen::config::{
    BenchmarkSection, ConfigFile, LinterSection, Manifest, ProviderSection, SandboxSection,
};
use flowgen_core::Ablation;

/// Process-model code generation: run pipelines over a benchmark, ablate
/// activities, score stored runs and render reports.
#[derive(Parser)]
#[command(name = "flowgen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every problem x repeat not yet on disk, then score and report.
    Run(RunArgs),
    /// Full pipeline plus one run per removed activity, with a delta table.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated flags removed together, e.g. `rm-test,rm-design`;
        /// repeat for several sub-runs. Defaults to one run per activity.
        #[arg(long = "set")]
        sets: Vec<String>,
    },
    /// Re-score stored runs (oracle tests and code quality) offline.
    Evaluate(RunArgs),
    /// Combined report over every run under an output directory.
    Report {
        #[arg(long, default_value = "runs")]
        output_dir: PathBuf,
        /// Row label compared against, e.g. `Waterfall`.
        #[arg(long)]
        baseline: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    model_version: Option<String>,
    #[arg(long)]
    refinement_limit_t: Option<u32>,
    #[arg(long)]
    max_full_restarts: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    ablation: Option<Vec<String>>,
    #[arg(long)]
    repeats: Option<u32>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    benchmark: Option<String>,
    #[arg(long)]
    benchmark_path: Option<PathBuf>,
    #[arg(long)]
    et_path: Option<PathBuf>,
    /// live, record or replay.
    #[arg(long)]
    provider_mode: Option<String>,
    /// openai or scripted.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    cassette_dir: Option<PathBuf>,
    #[arg(long)]
    timeout_s: Option<f64>,
    #[arg(long)]
    python: Option<PathBuf>,
    #[arg(long)]
    shim: Option<PathBuf>,
    #[arg(long)]
    linter_version: Option<String>,
    #[arg(long)]
    no_lint: bool,
    #[arg(long)]
    codet_versions_n: Option<u32>,
    #[arg(long)]
    codet_assertions_m: Option<u32>,
    #[arg(long)]
    meeting_shuffle_seed: Option<u64>,
    #[arg(long)]
    history_window: Option<usize>,
}

impl RunArgs {
    fn manifest(self) -> Result<Manifest, CommandError> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let over = ConfigFile {
            model: self.model,
            temperature: self.temperature,
            model_version: self.model_version,
            refinement_limit_t: self.refinement_limit_t,
            max_full_restarts: self.max_full_restarts,
            ablation: self.ablation,
            repeats: self.repeats,
            parallelism: self.parallelism,
            output_dir: self.output_dir,
            codet_versions_n: self.codet_versions_n,
            codet_assertions_m: self.codet_assertions_m,
            meeting_shuffle_seed: self.meeting_shuffle_seed,
            history_window: self.history_window,
            benchmark: BenchmarkSection {
                kind: self.benchmark,
                path: self.benchmark_path,
                et_path: self.et_path,
            },
            provider: ProviderSection {
                mode: self.provider_mode,
                backend: self.backend,
                base_url: self.base_url,
                cassette_dir: self.cassette_dir,
            },
            sandbox: SandboxSection {
                timeout_s: self.timeout_s,
                python: self.python.clone(),
                shim: self.shim,
                max_parallel: None,
            },
            linter: LinterSection {
                version: self.linter_version,
                enabled: self.no_lint.then_some(false),
                python: self.python,
            },
        };
        Ok(Manifest::resolve(file.merged(over))?)
    }
}

fn parse_sets(sets: &[String]) -> Result<Option<Vec<BTreeSet<Ablation>>>, CommandError> {
    if sets.is_empty() {
        return Ok(None);
    }
    let mut out = Vec::new();
    for set in sets {
        let flags: Result<BTreeSet<Ablation>, _> = set
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| Ablation::parse(s.trim()))
            .collect();
        out.push(flags.map_err(|e| CommandError::Config(e.to_string()))?);
    }
    Ok(Some(out))
}

fn execute(cli: Cli) -> Result<(), CommandError> {
    match cli.command {
        Command::Run(args) => {
            let s = cmd_run(&args.manifest()?, Services::default())?;
            println!(
                "run {}: {} written, {} resumed, {} provider calls, Pass@1 per repeat {:?}",
                s.config_hash, s.records_written, s.records_skipped, s.backend_calls, s.pass_at_1
            );
        }
        Command::Ablate { run, sets } => {
            let sets = parse_sets(&sets)?;
            let s = cmd_ablate(&run.manifest()?, sets, Services::default())?;
            print!("{}", s.markdown);
        }
        Command::Evaluate(args) => {
            for hash in cmd_evaluate(&args.manifest()?, Services::default())? {
                println!("evaluated {hash}");
            }
        }
        Command::Report {
            output_dir,
            baseline,
        } => print!("{}", cmd_report(&output_dir, baseline.as_deref())?),
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "flowgen=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
