use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;

use reflectbench::analysis::{
    bootstrap_accuracies, friedman_test, gains_table, group_by_label, nemenyi_posthoc, pareto_frontier,
    pass_matrix, reflection_curves, stats::BOOTSTRAP_CAVEAT, summarize, trace_score, transitions,
    welch_t_test, ConfigSummary, LatencyStat,
};
use reflectbench::economics::{caching_cost_model, trace_cost, PricingTable};
use reflectbench::engine::SampleTrace;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportKind {
    Frontier,
    Gains,
    Transitions,
    Significance,
    Costs,
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub kind: ReportKind,
    pub family: Option<String>,
    pub out_dir: PathBuf,
    pub pricing: Option<PricingTable>,
    pub latency: LatencyStat,
    pub replicates: usize,
    pub seed: u64,
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), CliError> {
    // serialize emits the header itself; an empty table still gets one
    let mut w = csv::Writer::from_path(path).map_err(runtime)?;
    if rows.is_empty() && !header.is_empty() {
        w.write_record(header).map_err(runtime)?;
    }
    for r in rows {
        w.serialize(r).map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let s = serde_json::to_string_pretty(value).map_err(runtime)?;
    fs::write(path, s + "\n").map_err(runtime)
}

/// Writes the report files and returns their paths.
pub fn report(traces: &[SampleTrace], opts: &ReportOptions) -> Result<Vec<PathBuf>, CliError> {
    let traces: Vec<SampleTrace> = match &opts.family {
        Some(f) => traces.iter().filter(|t| &t.strategy.family() == f).cloned().collect(),
        None => traces.to_vec(),
    };
    if traces.is_empty() {
        return Err(CliError::Runtime("no traces to report on".into()));
    }
    fs::create_dir_all(&opts.out_dir).map_err(runtime)?;
    match opts.kind {
        ReportKind::Frontier => frontier(&traces, opts),
        ReportKind::Gains => gains(&traces, opts),
        ReportKind::Transitions => transition_report(&traces, opts),
        ReportKind::Significance => significance(&traces, opts),
        ReportKind::Costs => costs(&traces, opts),
    }
}

#[derive(Serialize)]
struct PointRow {
    family: String,
    label: String,
    model_id: String,
    accuracy: f64,
    latency_s: f64,
    mean_cost_usd: Option<String>,
    on_frontier: bool,
}

fn with_costs(traces: &[SampleTrace], opts: &ReportOptions) -> Result<Vec<SampleTrace>, CliError> {
    let Some(p) = &opts.pricing else {
        return Ok(traces.to_vec());
    };
    traces
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.cost_usd = Some(trace_cost(&t, p, str::to_string).map_err(runtime)?.total);
            Ok(t)
        })
        .collect()
}

fn frontier(traces: &[SampleTrace], opts: &ReportOptions) -> Result<Vec<PathBuf>, CliError> {
    let summaries = summarize(&with_costs(traces, opts)?);
    let points: Vec<_> = summaries.iter().map(|s| s.frontier_point(opts.latency)).collect();
    let front = pareto_frontier(&points);
    let on: BTreeSet<&str> = front.iter().map(|p| p.label.as_str()).collect();
    let row = |p: &reflectbench::analysis::FrontierPoint| PointRow {
        family: p.family.clone(),
        label: p.label.clone(),
        model_id: p.model_id.clone(),
        accuracy: p.accuracy,
        latency_s: p.latency.as_secs_f64(),
        mean_cost_usd: p.cost.map(|c| c.round_dp(8).normalize().to_string()),
        on_frontier: on.contains(p.label.as_str()),
    };
    let header = ["family", "label", "model_id", "accuracy", "latency_s", "mean_cost_usd", "on_frontier"];
    let mut sorted = points.clone();
    sorted.sort_by(|a, b| a.latency.cmp(&b.latency).then_with(|| a.label.cmp(&b.label)));
    let f = opts.out_dir.join("frontier.csv");
    let p = opts.out_dir.join("points.csv");
    write_csv(&f, &front.iter().map(row).collect::<Vec<_>>(), &header)?;
    write_csv(&p, &sorted.iter().map(row).collect::<Vec<_>>(), &header)?;
    let j = opts.out_dir.join("frontier.json");
    write_json(&j, &serde_json::json!({ "latency": opts.latency, "frontier": front, "points": sorted }))?;
    Ok(vec![f, p, j])
}

#[derive(Serialize)]
struct CurveRow {
    label: String,
    round: usize,
    accuracy: f64,
    n: usize,
}

fn gains(traces: &[SampleTrace], opts: &ReportOptions) -> Result<Vec<PathBuf>, CliError> {
    let summaries = summarize(traces);
    let rows = gains_table(&summaries);
    let g = opts.out_dir.join("gains.csv");
    write_csv(&g, &rows, &["label", "baseline_label", "accuracy", "baseline_accuracy", "gain_pct"])?;
    let curves = reflection_curves(traces);
    let flat: Vec<CurveRow> = curves
        .iter()
        .flat_map(|c| {
            c.points.iter().map(|&(round, accuracy, n)| CurveRow {
                label: c.label.clone(),
                round,
                accuracy,
                n,
            })
        })
        .collect();
    let r = opts.out_dir.join("reflection_impact.csv");
    write_csv(&r, &flat, &["label", "round", "accuracy", "n"])?;
    let j = opts.out_dir.join("gains.json");
    write_json(&j, &serde_json::json!({ "gains": rows, "reflection_impact": curves }))?;
    Ok(vec![g, r, j])
}

#[derive(Serialize)]
struct TransitionRow {
    label: String,
    from_round: usize,
    to_round: usize,
    correct_to_correct: usize,
    correct_to_incorrect: usize,
    incorrect_to_correct: usize,
    incorrect_to_incorrect: usize,
    accuracy_after: f64,
    fraction_corrected: Option<f64>,
}

fn transition_report(traces: &[SampleTrace], opts: &ReportOptions) -> Result<Vec<PathBuf>, CliError> {
    let mut rows = Vec::new();
    let mut bundle = BTreeMap::new();
    for (label, group) in group_by_label(traces) {
        let flags = pass_matrix(&group);
        if flags.is_empty() || flags[0].len() < 2 {
            continue;
        }
        let m = transitions(&flags).map_err(runtime)?;
        let traj = m.accuracy_trajectory();
        for (b, acc) in m.boundaries.iter().zip(&traj[1..]) {
            rows.push(TransitionRow {
                label: label.clone(),
                from_round: b.from_round,
                to_round: b.from_round + 1,
                correct_to_correct: b.correct_to_correct,
                correct_to_incorrect: b.correct_to_incorrect,
                incorrect_to_correct: b.incorrect_to_correct,
                incorrect_to_incorrect: b.incorrect_to_incorrect,
                accuracy_after: *acc,
                fraction_corrected: b.fraction_corrected(),
            });
        }
        bundle.insert(label, serde_json::json!({ "matrix": m, "accuracy": traj, "sankey": m.sankey() }));
    }
    if bundle.is_empty() {
        return Err(CliError::Runtime("no complete multi-round traces to analyse".into()));
    }
    let c = opts.out_dir.join("transitions.csv");
    write_csv(&c, &rows, &[])?;
    let s = opts.out_dir.join("sankey.json");
    write_json(&s, &bundle)?;
    Ok(vec![c, s])
}

#[derive(Serialize)]
struct WelchRow {
    a: String,
    b: String,
    t: f64,
    df: f64,
    p: f64,
}

fn significance(traces: &[SampleTrace], opts: &ReportOptions) -> Result<Vec<PathBuf>, CliError> {
    eprintln!("{BOOTSTRAP_CAVEAT}");
    let groups = group_by_label(traces);
    // pair replicates by resampling the same sample ids for every configuration
    let mut common: Option<BTreeSet<&str>> = None;
    for group in groups.values() {
        let ids: BTreeSet<&str> = group.iter().map(|t| t.sample_id.as_str()).collect();
        common = Some(match common {
            Some(c) => c.intersection(&ids).copied().collect(),
            None => ids,
        });
    }
    let common = common.unwrap_or_default();
    if common.len() < 2 {
        return Err(CliError::Runtime("fewer than two samples shared by all configurations".into()));
    }
    let labels: Vec<String> = groups.keys().cloned().collect();
    let mut replicates = Vec::new();
    for group in groups.values() {
        let by_id: BTreeMap<&str, f64> = group.iter().map(|t| (t.sample_id.as_str(), trace_score(t))).collect();
        let scores: Vec<f64> = common.iter().map(|id| by_id[id]).collect();
        replicates.push(bootstrap_accuracies(&scores, opts.replicates, opts.seed).map_err(runtime)?);
    }
    let mut welch = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            match welch_t_test(&replicates[i], &replicates[j]) {
                Ok(r) => welch.push(WelchRow {
                    a: labels[i].clone(),
                    b: labels[j].clone(),
                    t: r.t,
                    df: r.df,
                    p: r.p,
                }),
                Err(e) => log::warn!("welch {} vs {}: {e}", labels[i], labels[j]),
            }
        }
    }
    let mut files = Vec::new();
    let w = opts.out_dir.join("welch.csv");
    write_csv(&w, &welch, &["a", "b", "t", "df", "p"])?;
    files.push(w);
    // rows = replicates, columns = configurations
    let matrix: Vec<Vec<f64>> = (0..opts.replicates)
        .map(|r| replicates.iter().map(|c| c[r]).collect())
        .collect();
    let (friedman, nemenyi) = if labels.len() >= 3 {
        match (friedman_test(&matrix), nemenyi_posthoc(&matrix)) {
            (Ok(f), Ok(n)) => (Some(f), Some(n)),
            (Err(e), _) | (_, Err(e)) => {
                log::warn!("friedman/nemenyi skipped: {e}");
                (None, None)
            }
        }
    } else {
        log::warn!("friedman/nemenyi need at least three configurations");
        (None, None)
    };
    if let Some(n) = &nemenyi {
        let path = opts.out_dir.join("nemenyi.csv");
        let mut wtr = csv::Writer::from_path(&path).map_err(runtime)?;
        let mut header = vec![String::new()];
        header.extend(labels.iter().cloned());
        wtr.write_record(&header).map_err(runtime)?;
        for (label, row) in labels.iter().zip(n) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|p| p.to_string()));
            wtr.write_record(&rec).map_err(runtime)?;
        }
        wtr.flush().map_err(runtime)?;
        files.push(path);
    }
    let j = opts.out_dir.join("significance.json");
    write_json(
        &j,
        &serde_json::json!({
            "caveat": BOOTSTRAP_CAVEAT,
            "replicates": opts.replicates,
            "seed": opts.seed,
            "samples": common.len(),
            "configurations": labels,
            "welch": welch,
            "friedman": friedman,
            "nemenyi": nemenyi,
        }),
    )?;
    files.push(j);
    Ok(files)
}

#[derive(Serialize)]
struct CostRow {
    label: String,
    n: usize,
    input_tokens: u64,
    output_tokens: u64,
    cache_read_tokens: u64,
    cache_write_tokens: u64,
    total_cost_usd: Option<String>,
    mean_cost_usd: Option<String>,
    uncached_model_cost_usd: Option<String>,
    cached_model_cost_usd: Option<String>,
    caching_savings_fraction: Option<f64>,
    mean_latency_s: f64,
    p50_latency_s: f64,
    p95_latency_s: f64,
}

fn costs(traces: &[SampleTrace], opts: &ReportOptions) -> Result<Vec<PathBuf>, CliError> {
    let priced = with_costs(traces, opts)?;
    let summaries: BTreeMap<String, ConfigSummary> =
        summarize(&priced).into_iter().map(|s| (s.label.clone(), s)).collect();
    let mut rows = Vec::new();
    for (label, group) in group_by_label(&priced) {
        let s = &summaries[&label];
        let usage: reflectbench::TokenUsage = group.iter().map(|t| t.total_usage).sum();
        let total = s.mean_cost.map(|m| m * rust_decimal::Decimal::from(s.n));
        let caching = match &opts.pricing {
            Some(p) => {
                let mut uncached = rust_decimal::Decimal::ZERO;
                let mut cached = rust_decimal::Decimal::ZERO;
                for t in &group {
                    let price = p.get(&t.strategy.model_id).map_err(runtime)?;
                    let judge = t.strategy.judge_model_id.as_deref().and_then(|j| p.get(j).ok());
                    let cmp = caching_cost_model(t, price, judge).map_err(runtime)?;
                    uncached += cmp.uncached.total;
                    cached += cmp.cached.total;
                }
                let frac = if uncached.is_zero() {
                    0.0
                } else {
                    use rust_decimal::prelude::ToPrimitive;
                    1.0 - (cached / uncached).to_f64().unwrap_or(1.0)
                };
                Some((uncached, cached, frac))
            }
            None => None,
        };
        let money = |d: rust_decimal::Decimal| d.round_dp(8).normalize().to_string();
        rows.push(CostRow {
            label,
            n: s.n,
            input_tokens: usage.input_tokens,
            output_tokens: usage.output_tokens,
            cache_read_tokens: usage.cache_read_tokens,
            cache_write_tokens: usage.cache_write_tokens,
            total_cost_usd: total.map(money),
            mean_cost_usd: s.mean_cost.map(money),
            uncached_model_cost_usd: caching.map(|c| money(c.0)),
            cached_model_cost_usd: caching.map(|c| money(c.1)),
            caching_savings_fraction: caching.map(|c| c.2),
            mean_latency_s: s.latency.mean.as_secs_f64(),
            p50_latency_s: s.latency.p50.as_secs_f64(),
            p95_latency_s: s.latency.p95.as_secs_f64(),
        });
    }
    let c = opts.out_dir.join("costs.csv");
    write_csv(&c, &rows, &[])?;
    let j = opts.out_dir.join("costs.json");
    write_json(&j, &rows)?;
    Ok(vec![c, j])
}
