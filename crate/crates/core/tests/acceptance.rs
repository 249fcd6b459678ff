//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use ctxqa_core::bench::build_benchmark;
use ctxqa_core::eval::{compute_metrics, round1, run_eval, EvalOptions, EvalRecord};
use ctxqa_core::gateway::{mock_endpoint, MockBackend};
use ctxqa_core::prompt::{causal_by_id, TemplateKind};
use ctxqa_core::record::write_jsonl;
use ctxqa_core::tuneset::{
    export_st, export_ut, import_st, import_ut, review_loop, synth_ut, ReviewConfig, Teachers, UtTarget,
};
use ctxqa_core::{ContextualQA, Label, ResponseClass, Source};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg.into()) }
}

/// (model, Acc_known, Acc_unknown, published F1).
const F1_ROWS: &[(&str, f64, f64, f64)] = &[
    ("GPT-4o", 80.2, 85.6, 82.8),
    ("GPT-4", 79.6, 83.6, 81.6),
    ("GPT-3.5", 82.1, 51.8, 63.5),
    ("Vicuna-7B", 74.6, 43.8, 55.2),
    ("Self-RAG-7B", 67.9, 48.1, 56.3),
    ("Llama2 vanilla", 79.3, 58.3, 67.2),
    ("Llama2 UT", 52.4, 84.4, 64.6),
    ("Llama2 UT+HotpotQA", 77.0, 20.9, 32.8),
    ("Llama2 US-Tuning", 79.7, 93.0, 85.8),
    ("Mistral vanilla", 85.1, 63.0, 72.4),
    ("Mistral UT", 77.5, 75.8, 76.6),
    ("Mistral UT+HotpotQA", 87.1, 52.4, 65.5),
    ("Mistral US-Tuning", 87.3, 75.3, 80.9),
    ("Gemma UT", 76.1, 86.2, 80.8),
    ("Gemma UT+HotpotQA", 91.3, 20.8, 33.9),
    ("Gemma US-Tuning", 87.6, 81.2, 84.3),
];

/// Row printed with an F1 that is not the harmonic mean of its accuracies.
const F1_INCONSISTENT: (&str, f64, f64, f64) = ("Gemma vanilla", 86.1, 74.1, 73.5);

/// 1000 known and 1000 unknown records hitting the given accuracies exactly.
fn records_for(acc_known: f64, acc_unknown: f64) -> Vec<EvalRecord> {
    let hits = |acc: f64| (acc * 10.0).round() as usize;
    let mut out = Vec::with_capacity(2000);
    for i in 0..1000 {
        let class = if i < hits(acc_known) { ResponseClass::Correct } else { ResponseClass::Wrong };
        out.push(EvalRecord::new(format!("k{i}"), Label::Known, "r".into(), class, None).unwrap());
        let class = if i < hits(acc_unknown) { ResponseClass::Rejected } else { ResponseClass::Hallucinated };
        out.push(EvalRecord::new(format!("u{i}"), Label::Unknown, "r".into(), class, None).unwrap());
    }
    out
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    for &(name, k, u, published) in F1_ROWS {
        let report = compute_metrics(&records_for(k, u)).map_err(|e| e.to_string())?;
        let f1 = report.f1.ok_or("f1 undefined")?;
        let oracle = 2.0 * k * u / (k + u);
        check((f1 - oracle).abs() < 1e-9, format!("{name}: f1 {f1} != oracle {oracle}"))?;
        check(
            (round1(f1) - published).abs() <= 0.1 + 1e-9,
            format!("{name}: {:.1} vs published {published}", round1(f1)),
        )?;
    }
    let (name, k, u, published) = F1_INCONSISTENT;
    let f1 = compute_metrics(&records_for(k, u)).unwrap().f1.unwrap();
    check((round1(f1) - published).abs() > 0.1, format!("{name} unexpectedly consistent"))?;
    Ok(format!(
        "{} rows within 0.1 in {:?}; {name} excluded (harmonic mean {:.1}, printed {published})",
        F1_ROWS.len(),
        started.elapsed(),
        round1(f1)
    ))
}

fn criterion_2() -> Outcome {
    let (correct, wrong, rejected) = (343, 37, 53);
    let mut records = Vec::new();
    for i in 0..correct + wrong + rejected {
        let class = if i < correct {
            ResponseClass::Correct
        } else if i < correct + wrong {
            ResponseClass::Wrong
        } else {
            ResponseClass::Rejected
        };
        records.push(EvalRecord::new(format!("k{i}"), Label::Known, format!("r{i}"), class, None).unwrap());
    }
    let p = compute_metrics(&records).map_err(|e| e.to_string())?.known_portions.ok_or("no portions")?;
    let shown = (round1(p.correct), round1(p.wrong), round1(p.rejected));
    check(shown == (79.2, 8.5, 12.2), format!("portions {shown:?}"))?;
    check((p.sum() - 100.0).abs() <= 0.1, format!("sum {}", p.sum()))?;
    Ok(format!("n_known=433 gives {shown:?}, sum {:.3}", p.sum()))
}

fn bench_bytes(groups: &[ctxqa_core::SubQuestionGroup], seed: u64) -> Vec<u8> {
    let bench = build_benchmark(groups, seed, None).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &bench.records()).unwrap();
    buf
}

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let groups = random_groups(1000, 1..=8, 2024);
    let bench = build_benchmark(&groups, 7, None).map_err(|e| e.to_string())?;
    let mut unknown = 0;
    for b in bench.items.iter().filter(|b| b.item.label == Label::Unknown) {
        unknown += 1;
        check(b.lineage.question_index != b.lineage.context_index, format!("fixed point in {}", b.lineage.group_id))?;
    }
    for g in groups.iter().filter(|g| g.pairs.len() == 1) {
        let leaked = bench.items.iter().any(|b| b.item.label == Label::Unknown && b.lineage.group_id == g.group_id);
        check(!leaked, format!("size-1 group {} produced unknown items", g.group_id))?;
    }
    check(bench_bytes(&groups, 7) == bench_bytes(&groups, 7), "same seed gave different bytes")?;
    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(5), format!("took {elapsed:?}"))?;
    Ok(format!("{unknown} unknown items, no fixed points, byte-identical rebuild, {elapsed:?}"))
}

async fn criterion_4() -> Outcome {
    let teachers = Teachers::single(endpoint(example_backend([EXAMPLE_ANSWER, EXAMPLE_REVISED])));
    let causal = causal_by_id(6).map_err(|e| e.to_string())?;
    let t = review_loop(&example_item(), causal, &teachers, ReviewConfig::default())
        .await
        .map_err(|e| e.to_string())?;
    check(t.iterations == 2 && t.converged, format!("{} iterations, converged={}", t.iterations, t.converged))?;
    check(t.final_answer == "Jack Chen was a famous singer in China.", "final answer is not the second")?;

    let stuck = Arc::new(
        MockBackend::builder()
            .on_repeat("CHECKING:", EXAMPLE_CHECK_1)
            .fallback_repeat(EXAMPLE_ANSWER)
            .build()
            .unwrap(),
    );
    let config = ReviewConfig { max_iterations: 5, ..ReviewConfig::default() };
    let t = review_loop(&example_item(), causal, &Teachers::single(endpoint(stuck)), config)
        .await
        .map_err(|e| e.to_string())?;
    check(t.iterations == 5 && !t.converged, format!("cap run: {} iterations", t.iterations))?;
    let roles: Vec<_> = t.turns.iter().map(|t| format!("{:?}", t.role)).collect();
    Ok(format!("worked example: 2 iterations; cap 5: 5 unconverged; pattern {}", roles.join(",")))
}

fn criterion_5() -> Outcome {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let item = ContextualQA::new("golden", "<query>", "<context>", ["<gold>".to_string()], Label::Known, Source::Other);
    let mut checked = 0;
    for kind in TemplateKind::ALL {
        let text = match kind {
            TemplateKind::CausalGeneration => ctxqa_core::prompt::render_causal_generation().text,
            TemplateKind::ReviewWrapper => {
                let qa = ctxqa_core::prompt::render(TemplateKind::Qa, &item, Default::default()).unwrap();
                let qa = ctxqa_core::prompt::inject_causal(&qa, causal_by_id(6).unwrap()).unwrap();
                ctxqa_core::prompt::render_review_wrapper(&qa).text
            }
            other => ctxqa_core::prompt::render(other, &item, Default::default()).map_err(|e| e.to_string())?.text,
        };
        let golden = std::fs::read_to_string(dir.join(format!("{}.txt", kind.slug()))).map_err(|e| e.to_string())?;
        check(text == golden, format!("{} differs from golden", kind.slug()))?;
        check(text.contains(anchor(kind)), format!("{} missing anchor", kind.slug()))?;
        checked += 1;
    }
    Ok(format!("{checked} templates byte-identical with anchors"))
}

fn desk_benchmark() -> (Vec<ContextualQA>, Arc<MockBackend>) {
    let groups = random_groups(25, 2..=2, 99);
    let items = build_benchmark(&groups, 3, Some(25)).unwrap().records();
    let mut builder = MockBackend::builder();
    for (i, item) in items.iter().enumerate() {
        let gold = item.gold_answers.iter().next().cloned().unwrap_or_default();
        let reply = match (item.label, i % 3) {
            (Label::Known, 0) => "Not Provided".to_string(),
            (Label::Known, 1) => "Something unrelated.".to_string(),
            (Label::Known, _) => format!("The answer is {gold}."),
            (Label::Unknown, 0) => "Not Provided".to_string(),
            (Label::Unknown, _) => "A confident guess.".to_string(),
        };
        builder = builder.on_repeat(&item.context, reply);
    }
    (items, Arc::new(builder.build().unwrap()))
}

async fn criterion_6() -> Outcome {
    let started = Instant::now();
    let mut reports = Vec::new();
    for concurrency in [1, 8] {
        let (items, backend) = desk_benchmark();
        let options = EvalOptions { concurrency, ..EvalOptions::default() };
        let run = run_eval(&items, TemplateKind::TrustworthyQa, &mock_endpoint(backend, 0), &options)
            .await
            .map_err(|e| e.to_string())?;
        check(run.records.len() == 50, format!("{} records", run.records.len()))?;
        reports.push(run.report);
    }
    check(reports[0] == reports[1], "concurrency 1 and 8 disagree")?;
    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(10), format!("took {elapsed:?}"))?;
    let r = &reports[0];
    Ok(format!(
        "50 items, Acc_known {:.1}, Acc_unknown {:.1}, identical at concurrency 1 and 8, {elapsed:?}",
        r.acc_known.unwrap_or(f64::NAN),
        r.acc_unknown.unwrap_or(f64::NAN)
    ))
}

async fn criterion_7() -> Outcome {
    let groups = random_groups(200, 2..=4, 5);
    let items = build_benchmark(&groups, 5, None).unwrap().records();
    let ut = synth_ut(&items, 120, 9, Default::default()).map_err(|e| e.to_string())?;
    let sufficient = ut.iter().filter(|r| r.target == UtTarget::Sufficient).count();
    check(sufficient == 120 && ut.len() == 240, format!("UT balance {sufficient}/{}", ut.len()))?;
    let mut buf = Vec::new();
    export_ut(&ut, &mut buf).map_err(|e| e.to_string())?;
    check(import_ut(buf.as_slice()).map_err(|e| e.to_string())? == ut, "UT export not lossless")?;

    let teachers = Teachers::single(endpoint(example_backend([EXAMPLE_ANSWER, EXAMPLE_REVISED])));
    let t = review_loop(&example_item(), causal_by_id(6).unwrap(), &teachers, ReviewConfig::default())
        .await
        .map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    export_st(std::slice::from_ref(&t), false, &mut buf).map_err(|e| e.to_string())?;
    check(import_st(buf.as_slice()).map_err(|e| e.to_string())? == vec![t], "ST export not lossless")?;
    Ok("UT 120/120 balanced and lossless; ST conversation lossless; model results not reproduced".into())
}

fn main() -> ExitCode {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let results: Vec<(&str, Outcome)> = vec![
        ("1 metric regression", criterion_1()),
        ("2 known-response portions", criterion_2()),
        ("3 derangement property", criterion_3()),
        ("4 review-loop conformance", rt.block_on(criterion_4())),
        ("5 template goldens", criterion_5()),
        ("6 desk-scale evaluation", rt.block_on(criterion_6())),
        ("7 trainer-ready export", rt.block_on(criterion_7())),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
