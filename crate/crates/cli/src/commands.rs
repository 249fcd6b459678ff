use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use ctxqa_core::bench::build_benchmark;
use ctxqa_core::eval::{compute_metrics, run_eval, EndpointJudge, EvalOptions, EvalRecord};
use ctxqa_core::gateway::Message;
use ctxqa_core::prompt::{render_causal_generation, TemplateKind};
use ctxqa_core::record::{group_rows, read_jsonl, write_jsonl, GroupRow};
use ctxqa_core::tuneset::{export_st, export_ut, synth_st, synth_ut, ReviewConfig, Teachers};
use ctxqa_core::ContextualQA;
use regex::Regex;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::LoadedConfig;
use crate::error::CliError;
use crate::provenance::Recorder;
use crate::{Cli, Command, EvalTemplate, ReportFormat};

pub async fn dispatch(cli: Cli) -> Result<(), CliError> {
    let no_preamble = cli.no_preamble;
    match cli.command {
        Command::BuildBench(a) => build_bench(a),
        Command::SynthUt(a) => synth_ut_cmd(a, no_preamble),
        Command::SynthSt(a) => synth_st_cmd(a, no_preamble).await,
        Command::GenCausal(a) => gen_causal(a).await,
        Command::Evaluate(a) => evaluate(a, no_preamble).await,
        Command::Report(a) => report(a),
    }
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    read_jsonl(bytes.as_slice()).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<std::fs::File>, CliError> {
    std::fs::File::create(path).map(BufWriter::new).map_err(CliError::io(path))
}

fn write_lines<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, rows)?;
    std::fs::write(path, buf).map_err(CliError::io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, json + "\n").map_err(CliError::io(path))
}

fn build_bench(a: crate::BuildBench) -> Result<(), CliError> {
    let mut rec = Recorder::start("build-bench", &crate::config::sha256_hex(b""));
    rec.seed = Some(a.seed);
    rec.input(&a.groups)?;
    let groups = group_rows(read_lines::<GroupRow>(&a.groups)?);
    let bench = build_benchmark(&groups, a.seed, a.per_class)?;
    write_lines(&a.out, &bench.records())?;
    write_json(&a.manifest, &bench.manifest)?;
    tracing::info!(known = bench.manifest.known_count, unknown = bench.manifest.unknown_count, "benchmark built");
    rec.finish(&a.out, &[&a.out, &a.manifest])
}

fn synth_ut_cmd(a: crate::SynthUt, no_preamble: bool) -> Result<(), CliError> {
    let config = LoadedConfig::load(None)?;
    let mut rec = Recorder::start("synth-ut", &config.hash);
    rec.seed = Some(a.seed);
    rec.input(&a.items)?;
    let items: Vec<ContextualQA> = read_lines(&a.items)?;
    let records = synth_ut(&items, a.per_class, a.seed, config.render(no_preamble))?;
    export_ut(&records, create(&a.out)?)?;
    rec.finish(&a.out, &[&a.out])
}

fn side_path(out: &Path, suffix: &str) -> std::path::PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    out.with_file_name(name)
}

async fn synth_st_cmd(a: crate::SynthSt, no_preamble: bool) -> Result<(), CliError> {
    let config = LoadedConfig::load(a.endpoint.config.as_deref())?;
    let seed = config.seed(a.seed)?;
    let mut rec = Recorder::start("synth-st", &config.hash);
    rec.seed = Some(seed);
    rec.input(&a.items)?;
    let items: Vec<ContextualQA> = read_lines(&a.items)?;
    let generator = config.endpoint(&a.endpoint.endpoint)?;
    rec.endpoint(&a.endpoint.endpoint, &generator);
    let reviewer = match &a.reviewer {
        Some(name) => {
            let e = config.endpoint(name)?;
            rec.endpoint(name, &e);
            e
        }
        None => generator.clone(),
    };
    let teachers = Teachers { generator, reviewer };
    let review = ReviewConfig { max_iterations: a.max_iters, render: config.render(no_preamble), ..ReviewConfig::default() };
    let run = synth_st(&items, a.n, seed, &teachers, review, config.concurrency(a.concurrency)).await?;

    if run.transcripts.is_empty() && !run.failures.is_empty() {
        write_json(&a.report, &serde_json::json!({ "report": run.report, "failures": run.failures }))?;
        let first = &run.failures[0];
        return Err(CliError::Outage(format!(
            "every review loop failed; first ({}): {}",
            first.item_id, first.error
        )));
    }

    let mut outputs = vec![a.out.clone(), a.report.clone()];
    if a.include_unconverged {
        export_st(&run.transcripts, true, create(&a.out)?)?;
    } else {
        let (done, open): (Vec<_>, Vec<_>) = run.transcripts.iter().cloned().partition(|t| t.converged);
        export_st(&done, false, create(&a.out)?)?;
        if !open.is_empty() {
            let side = side_path(&a.out, ".unconverged.jsonl");
            tracing::warn!(count = open.len(), path = %side.display(), "non-converged transcripts set aside");
            export_st(&open, true, create(&side)?)?;
            outputs.push(side);
        }
    }
    write_json(&a.report, &serde_json::json!({ "report": run.report, "failures": run.failures }))?;
    eprintln!(
        "synth-st: {} converged, {} unconverged, {} failed of {} requested",
        run.report.converged, run.report.unconverged, run.report.failed, run.report.requested
    );
    let refs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
    rec.finish(&a.out, &refs)
}

/// Candidate lines from a list-shaped reply. Falls back to one candidate
/// per non-empty line when no list markers are present.
pub fn parse_candidates(reply: &str) -> (Vec<String>, bool) {
    let item = Regex::new(r"^\s*(?:\(?\d+[.):]|[-*\u{2022}])\s+(.+?)\s*$").expect("valid regex");
    let listed: Vec<String> = reply
        .lines()
        .filter_map(|l| item.captures(l).map(|c| c[1].to_string()))
        .collect();
    if !listed.is_empty() {
        return (listed, true);
    }
    let lines = reply.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
    (lines, false)
}

const GEN_CAUSAL_MAX_ROUNDS: usize = 10;

async fn gen_causal(a: crate::GenCausal) -> Result<(), CliError> {
    let config = LoadedConfig::load(a.endpoint.config.as_deref())?;
    let mut rec = Recorder::start("gen-causal", &config.hash);
    let mut candidates: Vec<String> = Vec::new();
    if a.n > 0 {
        let teacher = config.endpoint(&a.endpoint.endpoint)?;
        rec.endpoint(&a.endpoint.endpoint, &teacher);
        let prompt = render_causal_generation();
        for round in 0..GEN_CAUSAL_MAX_ROUNDS {
            let reply = teacher.complete(&[Message::user(prompt.text.clone())]).await?;
            let (lines, structured) = parse_candidates(&reply.response_text);
            if !structured {
                tracing::warn!(round, "reply has no list structure; splitting on lines");
                eprintln!("warning: teacher reply had no list structure; used line split");
            }
            let before = candidates.len();
            for line in lines {
                if candidates.len() < a.n && !candidates.contains(&line) {
                    candidates.push(line);
                }
            }
            if candidates.len() >= a.n || candidates.len() == before {
                break;
            }
        }
        if candidates.len() < a.n {
            eprintln!("warning: collected {} of {} requested candidates", candidates.len(), a.n);
        }
    }
    let mut text = candidates.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    std::fs::write(&a.out, text).map_err(CliError::io(&a.out))?;
    rec.finish(&a.out, &[&a.out])
}

async fn evaluate(a: crate::Evaluate, no_preamble: bool) -> Result<(), CliError> {
    let config = LoadedConfig::load(a.endpoint.config.as_deref())?;
    let mut rec = Recorder::start("evaluate", &config.hash);
    rec.input(&a.bench)?;
    let bench: Vec<ContextualQA> = read_lines(&a.bench)?;
    let endpoint = config.endpoint(&a.endpoint.endpoint)?;
    rec.endpoint(&a.endpoint.endpoint, &endpoint);
    let mut options = EvalOptions {
        concurrency: config.concurrency(a.concurrency),
        render: config.render(no_preamble),
        ..EvalOptions::default()
    };
    if let Some(name) = &a.judge {
        let judge = config.endpoint(name)?;
        rec.endpoint(name, &judge);
        options.judge = Arc::new(EndpointJudge { endpoint: judge });
    }
    let template = match a.template {
        EvalTemplate::Trustworthy => TemplateKind::TrustworthyQa,
        EvalTemplate::Postfix => TemplateKind::PostfixQa,
    };
    let run = run_eval(&bench, template, &endpoint, &options).await?;
    write_lines(&a.out_records, &run.records)?;
    write_json(&a.out_report, &serde_json::json!({ "report": run.report, "failures": run.failures }))?;
    print!("{}", run.report.to_table());
    rec.finish(&a.out_report, &[&a.out_records, &a.out_report])
}

fn report(a: crate::Report) -> Result<(), CliError> {
    let records: Vec<EvalRecord> = read_lines(&a.records)?;
    let metrics = compute_metrics(&records)?;
    match a.format {
        ReportFormat::Text => print!("{}", metrics.to_table()),
        ReportFormat::Json => {
            println!("{}", serde_json::to_string_pretty(&metrics).expect("report serializes"))
        }
    }
    Ok(())
}
