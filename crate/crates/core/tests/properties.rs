use std::time::Duration;

use proptest::prelude::*;
use rust_decimal::Decimal;

use reflectbench::analysis::{accuracy, bootstrap_accuracies, pareto_frontier, transitions, FrontierPoint};
use reflectbench::economics::{caching_model, summarize_latencies, ModelPrice, RoundTokens};
use reflectbench::engine::{parse_trace_line, trace_to_line, Engine};
use reflectbench::model::{Sample, StrategyConfig, TaskInput};
use reflectbench::provider::{MockProvider, MockRule, MockScript};
use reflectbench::verifier::symbolic::{parse, symbolic_equivalent};
use reflectbench::verifier::{extract_tagged, meteor, Verifier};

fn price() -> ModelPrice {
    ModelPrice::new(Decimal::new(3, 3), Decimal::new(15, 3))
}

proptest! {
    #[test]
    fn parser_never_panics(s in "[0-9x+*/^(){}\\\\a-z .-]{0,40}") {
        let _ = parse(&s);
        let _ = symbolic_equivalent(&s, &s);
    }

    #[test]
    fn parseable_expressions_equal_themselves(a in 1i64..50, b in 1i64..50, c in 1i64..9) {
        let e = format!("\\frac{{{a}x+{b}}}{{{c}}}");
        prop_assert!(symbolic_equivalent(&e, &e));
        let swapped = format!("\\frac{{{b}+{a}x}}{{{c}}}");
        prop_assert!(symbolic_equivalent(&e, &swapped));
    }

    #[test]
    fn meteor_is_bounded(a in "[a-e ]{0,30}", b in "[a-e ]{0,30}") {
        let s = meteor(&a, &b);
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn extraction_roundtrips(body in "[^<>]{0,30}") {
        let text = format!("pre <answer>{body}</answer> post");
        prop_assert_eq!(extract_tagged(&text, "answer").unwrap(), body.trim());
    }

    #[test]
    fn caching_savings_bounded_and_zero_under_flat_pricing(
        p0 in 100u64..5000,
        outs in proptest::collection::vec(1u64..400, 2..6),
        extra in 0u64..200,
    ) {
        let mut rounds = vec![RoundTokens { prompt: p0, output: outs[0] }];
        for (r, o) in outs.iter().enumerate().skip(1) {
            let prev = rounds[r - 1];
            rounds.push(RoundTokens { prompt: prev.prompt + prev.output + extra, output: *o });
        }
        let c = caching_model(&rounds, &price());
        prop_assert!(c.savings_fraction < 1.0);
        let mut flat = price();
        flat.cache_read_per_1k = Some(flat.input_per_1k);
        flat.cache_write_per_1k = Some(flat.input_per_1k);
        prop_assert!(caching_model(&rounds, &flat).savings_fraction.abs() < 1e-12);
    }

    #[test]
    fn latency_percentiles_are_ordered(ms in proptest::collection::vec(1u64..100_000, 1..50)) {
        let d: Vec<Duration> = ms.iter().map(|m| Duration::from_millis(*m)).collect();
        let s = summarize_latencies(&d).unwrap();
        prop_assert!(s.p50 <= s.p95);
        prop_assert!(d.iter().min().unwrap() <= &s.mean && &s.mean <= d.iter().max().unwrap());
    }

    #[test]
    fn frontier_points_are_mutually_non_dominated(
        pts in proptest::collection::vec((0u32..10, 1u32..10), 1..30),
    ) {
        let pts: Vec<FrontierPoint> = pts
            .iter()
            .enumerate()
            .map(|(i, (a, l))| FrontierPoint {
                model_id: format!("m{i}"),
                label: format!("m{i}"),
                accuracy: f64::from(*a) / 10.0,
                latency: Duration::from_secs(u64::from(*l)),
                cost: None,
                family: "f".into(),
            })
            .collect();
        let f = pareto_frontier(&pts);
        prop_assert!(!f.is_empty());
        for p in &f {
            prop_assert!(!pts.iter().any(|q| q.dominates(p)));
        }
        prop_assert!(f.windows(2).all(|w| w[0].latency <= w[1].latency));
    }

    #[test]
    fn transition_trajectory_matches_column_means(
        rows in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 3), 1..40),
    ) {
        let m = transitions(&rows).unwrap();
        let traj = m.accuracy_trajectory();
        for (r, acc) in traj.iter().enumerate() {
            let col: Vec<f64> = rows.iter().map(|s| f64::from(u8::from(s[r]))).collect();
            prop_assert!((acc - accuracy(&col).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn bootstrap_means_stay_in_range(scores in proptest::collection::vec(0u8..=1, 2..40), seed in any::<u64>()) {
        let s: Vec<f64> = scores.iter().map(|v| f64::from(*v)).collect();
        let reps = bootstrap_accuracies(&s, 50, seed).unwrap();
        prop_assert_eq!(reps.len(), 50);
        prop_assert!(reps.iter().all(|r| (0.0..=1.0).contains(r)));
        prop_assert_eq!(reps, bootstrap_accuracies(&s, 50, seed).unwrap());
    }
}

#[test]
fn mock_run_roundtrips_through_jsonl() {
    let sample = Sample {
        id: "m1".into(),
        input: TaskInput::MathReasoning { problem: "What is 6 times 7?".into() },
        gold: "42".into(),
    };
    let solver = MockProvider::new(
        MockScript::new(vec![MockRule::by_round(None, &["<answer>40</answer>", "<answer>42</answer>"])]),
        1,
    );
    let engine = Engine::default();
    let mut trace = engine.run_sample(&sample, &StrategyConfig::new("solver", 3), &solver, None);
    engine.evaluate(&Verifier::default(), &sample, &mut trace).unwrap();
    assert_eq!(trace.snapshots.len(), 4);
    assert_eq!(trace.pass_flags().unwrap(), vec![false, true, true, true]);
    assert!(trace.estimated_usage);
    let line = trace_to_line(&trace);
    assert!(!line.contains('\n'));
    assert_eq!(parse_trace_line(&line, 1).unwrap(), trace);
}
