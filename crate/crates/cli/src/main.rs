//! `ctxqa`: build, synthesize and evaluate contextual-QA uncertainty data.

mod commands;
mod config;
mod error;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ctxqa", version, about)]
struct Cli {
    /// Render prompts without their task preamble.
    #[arg(long, global = true)]
    no_preamble: bool,
    /// Emit logs on standard error as JSON lines.
    #[arg(long, global = true)]
    log_json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a known/unknown benchmark from sub-question groups.
    BuildBench(BuildBench),
    /// Sample balanced Sufficient/Insufficient tuning pairs.
    SynthUt(SynthUt),
    /// Run the generate/review loop over known items with a teacher model.
    SynthSt(SynthSt),
    /// Ask a teacher for candidate causal instructions.
    GenCausal(GenCausal),
    /// Query an endpoint on a benchmark and grade its answers.
    Evaluate(Evaluate),
    /// Recompute metrics from graded records.
    Report(Report),
}

#[derive(Debug, Args)]
struct BuildBench {
    #[arg(long)]
    groups: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Subsample each class to this many items.
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Debug, Args)]
struct SynthUt {
    #[arg(long)]
    items: PathBuf,
    #[arg(long, default_value_t = 646)]
    per_class: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EndpointArgs {
    /// Endpoint section name in the config file.
    #[arg(long)]
    endpoint: String,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthSt {
    #[arg(long)]
    items: PathBuf,
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    endpoint: EndpointArgs,
    /// Separate reviewer endpoint; defaults to the generator.
    #[arg(long)]
    reviewer: Option<String>,
    #[arg(long, default_value_t = ctxqa_core::tuneset::DEFAULT_MAX_ITERATIONS)]
    max_iters: u32,
    #[arg(long)]
    concurrency: Option<usize>,
    /// Keep non-converged transcripts in the main output.
    #[arg(long)]
    include_unconverged: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct GenCausal {
    #[command(flatten)]
    endpoint: EndpointArgs,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EvalTemplate {
    Trustworthy,
    Postfix,
}

#[derive(Debug, Args)]
struct Evaluate {
    #[arg(long)]
    bench: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalTemplate::Trustworthy)]
    template: EvalTemplate,
    #[command(flatten)]
    endpoint: EndpointArgs,
    /// Grade known answers with this endpoint instead of substring matching.
    #[arg(long)]
    judge: Option<String>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    out_records: PathBuf,
    #[arg(long)]
    out_report: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
struct Report {
    #[arg(long)]
    records: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
}

fn init_logging(json: bool) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    let builder = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr);
    if json {
        builder.json().init();
    } else {
        builder.init();
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    init_logging(cli.log_json);
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    match runtime.block_on(commands::dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.exit_code() == 1 {
                eprintln!("run `ctxqa --help` for usage");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
