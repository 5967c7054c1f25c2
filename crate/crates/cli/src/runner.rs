use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use serde::Serialize;

use reflectbench::analysis::summarize;
use reflectbench::dataset::load_dataset;
use reflectbench::economics::trace_cost;
use reflectbench::engine::{read_traces, trace_to_line, write_header, Engine, SampleTrace, TraceHeader};
use reflectbench::model::{FeedbackKind, Sample, StrategyConfig};
use reflectbench::prompts::TemplateSet;
use reflectbench::provider::{build_provider, ChatProvider};
use reflectbench::verifier::{LatexNormalizer, Verifier};

use crate::config::LoadedConfig;
use crate::CliError;

pub const TRACES_FILE: &str = "traces.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub traces_path: PathBuf,
    pub executed: usize,
    pub skipped: usize,
    pub truncated: usize,
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    label: String,
    model_id: String,
    family: String,
    n: usize,
    accuracy: f64,
    mean_latency_s: f64,
    p50_latency_s: f64,
    p95_latency_s: f64,
    mean_cost_usd: Option<String>,
    truncated: usize,
    estimated_usage: bool,
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn build_engine(c: &LoadedConfig) -> Result<(Engine, Verifier), CliError> {
    let templates = match &c.config.templates_dir {
        Some(d) => TemplateSet::load_dir(&c.resolve(d)).map_err(|e| CliError::Config(e.to_string()))?,
        None => TemplateSet::default(),
    };
    let mut verifier = Verifier {
        translation_pass: c.config.translation_pass,
        symbolic_seed: c.config.seed,
        ..Verifier::default()
    };
    if let Some(p) = &c.config.unit_words {
        let p = c.resolve(p);
        let words = fs::read_to_string(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        verifier.normalizer = LatexNormalizer::with_unit_words(&words);
    }
    let engine = Engine {
        templates,
        base_params: c.config.generation.clone(),
        ..Engine::default()
    };
    Ok((engine, verifier))
}

/// Existing traces, after cutting off a torn final line left by an interrupted run.
fn load_existing(path: &Path) -> Result<Vec<SampleTrace>, CliError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(runtime)?;
    let traces = read_traces(text.as_bytes(), true).map_err(runtime)?;
    let torn = !text.is_empty() && !text.ends_with('\n');
    if torn {
        let keep = text.rfind('\n').map(|i| i + 1).unwrap_or(0);
        let f = OpenOptions::new().write(true).open(path).map_err(runtime)?;
        f.set_len(keep as u64).map_err(runtime)?;
    }
    Ok(traces)
}

struct Job<'a> {
    sample: &'a Sample,
    strategy: &'a StrategyConfig,
}

/// Executes every missing (sample, strategy) pair and appends traces in job order.
pub fn run(c: &LoadedConfig, dry_run: bool) -> Result<RunOutcome, CliError> {
    let samples = load_dataset(&c.manifest, &c.manifest_dir).map_err(|e| CliError::Config(e.to_string()))?;
    let (engine, verifier) = build_engine(c)?;
    let out_dir = c.output_dir();
    let traces_path = out_dir.join(TRACES_FILE);

    let existing = if dry_run && !traces_path.exists() {
        Vec::new()
    } else {
        load_existing(&traces_path)?
    };
    let done: HashSet<(String, String)> = existing.iter().map(SampleTrace::key).collect();
    let mut jobs = Vec::new();
    for strategy in &c.config.strategies {
        let label = strategy.label();
        for sample in &samples {
            if !done.contains(&(sample.id.clone(), label.clone())) {
                jobs.push(Job { sample, strategy });
            }
        }
    }
    let skipped = samples.len() * c.config.strategies.len() - jobs.len();
    if dry_run {
        println!(
            "{} samples x {} strategies: {} to run, {} already in {}",
            samples.len(),
            c.config.strategies.len(),
            jobs.len(),
            skipped,
            traces_path.display()
        );
        return Ok(RunOutcome {
            traces_path,
            executed: 0,
            skipped,
            truncated: 0,
        });
    }

    fs::create_dir_all(&out_dir).map_err(|e| CliError::Config(format!("{}: {e}", out_dir.display())))?;
    let providers = build_providers(c)?;
    let fresh = !traces_path.exists() || fs::metadata(&traces_path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&traces_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", traces_path.display())))?;
    let mut writer = BufWriter::new(file);
    if fresh {
        write_header(&mut writer, &TraceHeader::now()).map_err(runtime)?;
    }

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Result<SampleTrace, CliError>)>();
    let workers = c.config.concurrency.min(jobs.len()).max(1);
    let mut truncated = 0;
    let mut written = 0;
    let mut failure = None;

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (jobs, next, abort, providers) = (&jobs, &next, &abort, &providers);
            let (engine, verifier) = (&engine, &verifier);
            scope.spawn(move || loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let result = execute(c, engine, verifier, providers, job);
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // single appender: a reorder buffer keeps file order equal to job order
        let mut pending: BTreeMap<usize, Result<SampleTrace, CliError>> = BTreeMap::new();
        let mut cursor = 0;
        for (i, r) in rx {
            pending.insert(i, r);
            while let Some(r) = pending.remove(&cursor) {
                cursor += 1;
                match r {
                    Ok(trace) if failure.is_none() => {
                        truncated += usize::from(trace.truncation.is_some());
                        let res = writeln!(writer, "{}", trace_to_line(&trace)).and_then(|_| writer.flush());
                        if let Err(e) = res {
                            failure = Some(runtime(e));
                            abort.store(true, Ordering::Relaxed);
                        } else {
                            written += 1;
                        }
                    }
                    Ok(_) => {}
                    Err(e) => {
                        if failure.is_none() {
                            failure = Some(e);
                        }
                        abort.store(true, Ordering::Relaxed);
                    }
                }
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    drop(writer);
    write_summary(&traces_path, &out_dir.join(SUMMARY_FILE))?;
    Ok(RunOutcome {
        traces_path,
        executed: written,
        skipped,
        truncated,
    })
}

type Providers = HashMap<String, Arc<dyn ChatProvider>>;

fn build_providers(c: &LoadedConfig) -> Result<Providers, CliError> {
    let mut needed: Vec<&str> = Vec::new();
    for s in &c.config.strategies {
        needed.push(&s.model_id);
        if s.feedback == FeedbackKind::LlmJudge {
            needed.extend(s.judge_model_id.as_deref());
        }
    }
    let mut out = HashMap::new();
    for m in needed {
        if out.contains_key(m) {
            continue;
        }
        let entry = &c.providers.models[m];
        let p = build_provider(m, entry, &c.providers_dir, c.config.seed).map_err(|e| CliError::Config(e.to_string()))?;
        out.insert(m.to_string(), p);
    }
    Ok(out)
}

fn execute(
    c: &LoadedConfig,
    engine: &Engine,
    verifier: &Verifier,
    providers: &Providers,
    job: &Job<'_>,
) -> Result<SampleTrace, CliError> {
    let provider = &providers[&job.strategy.model_id];
    let judge = job
        .strategy
        .judge_model_id
        .as_ref()
        .filter(|_| job.strategy.feedback == FeedbackKind::LlmJudge)
        .map(|j| providers[j].as_ref());
    let mut trace = engine.run_sample(job.sample, job.strategy, provider.as_ref(), judge);
    if let Some(t) = &trace.truncation {
        log::warn!("{} [{}] stopped at round {}: {}", trace.sample_id, trace.strategy_label, t.round, t.reason);
    }
    engine.evaluate(verifier, job.sample, &mut trace).map_err(runtime)?;
    if let Some(pricing) = &c.pricing {
        trace.cost_usd = Some(trace_cost(&trace, pricing, |m| c.price_id(m)).map_err(runtime)?.total);
    }
    Ok(trace)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<SampleTrace>, CliError> {
    let f = File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    read_traces(BufReader::new(f), false).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn write_summary(traces_path: &Path, out: &Path) -> Result<(), CliError> {
    let traces = read_trace_file(traces_path)?;
    let rows: Vec<SummaryRow> = summarize(&traces)
        .into_iter()
        .map(|s| SummaryRow {
            model_id: s.strategy.model_id.clone(),
            family: s.family,
            n: s.n,
            accuracy: s.accuracy,
            mean_latency_s: s.latency.mean.as_secs_f64(),
            p50_latency_s: s.latency.p50.as_secs_f64(),
            p95_latency_s: s.latency.p95.as_secs_f64(),
            mean_cost_usd: s.mean_cost.map(|d| d.round_dp(8).normalize().to_string()),
            truncated: s.truncated,
            estimated_usage: s.estimated_usage,
            label: s.label,
        })
        .collect();
    let json = serde_json::to_string_pretty(&serde_json::json!({ "configurations": rows })).map_err(runtime)?;
    fs::write(out, json + "\n").map_err(runtime)
}
