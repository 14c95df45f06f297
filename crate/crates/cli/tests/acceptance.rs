//! Acceptance suite. Each test covers one numbered criterion and prints one
//! PASS/FAIL line (run with `--nocapture` to see them).

use acr_core::ast::{code_token_count, count_nodes, Ast, AstNode};
use acr_core::config::{ModelConfig, Variant};
use acr_core::data::{prepare_record, stratified_split_pairs, PreparedPair};
use acr_core::embed::{train_skipgram, EmbeddingTable, SkipgramConfig, Vocabulary};
use acr_core::graph::{build_graph, serialize, FragmentGraph};
use acr_core::metrics::{auc, f1, mcc, ConfusionCounts};
use acr_core::model::{
    attention_weights, encode, l2_penalty, pre_bias_logits, predict_pair, sample_loss,
    ModelParams,
};
use acr_core::parse::{parse_subset, SourceFragment};
use acr_core::report::{percentage_increase, simplified_rate, tree_stats};
use acr_core::simplify::{is_kept, simplify, KeepRule};
use acr_core::stats::{
    cliffs_delta, wilcoxon_signed_rank, wilcoxon_signed_rank_method, win_tie_loss, EffectLevel,
    Outcome, PMethod,
};
use acr_core::synthetic::{generate_records, records_to_jsonl};
use acr_core::tensor::Tensor;
use acr_core::train::{evaluate, train, TrainOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::time::Instant;

fn criterion(number: u32, name: &str, body: impl FnOnce()) {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(()) => println!("criterion {number} ({name}): PASS"),
        Err(payload) => {
            println!("criterion {number} ({name}): FAIL");
            resume_unwind(payload);
        }
    }
}

// ---------------------------------------------------------------------------
// Shared generators and oracles
// ---------------------------------------------------------------------------

const ATTR_LABELS: &[&str] = &[
    "MethodDeclaration",
    "IfStatement",
    "WhileStatement",
    "modifiers",
    "BasicType",
    "Literal",
    "MemberReference",
    "BinaryOperation",
    "block",
    "selector",
];

/// Random tree with up to `max_nodes` nodes, built from a random parent
/// vector; leaves may be code nodes.
fn random_tree(rng: &mut ChaCha8Rng, max_nodes: usize) -> Ast {
    let n = rng.gen_range(1..=max_nodes);
    let mut parents = vec![usize::MAX; n];
    for (i, parent) in parents.iter_mut().enumerate().skip(1) {
        *parent = rng.gen_range(0..i);
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &parent) in parents.iter().enumerate().skip(1) {
        children[parent].push(i);
    }
    fn build(
        index: usize,
        children: &Vec<Vec<usize>>,
        rng: &mut ChaCha8Rng,
    ) -> AstNode {
        let kids: Vec<AstNode> = children[index]
            .iter()
            .map(|&c| build(c, children, rng))
            .collect();
        if kids.is_empty() && index != 0 && rng.gen_bool(0.5) {
            AstNode::code(format!("tok{}", rng.gen_range(0..50))).unwrap()
        } else {
            let label = ATTR_LABELS[rng.gen_range(0..ATTR_LABELS.len())];
            AstNode::attribute(label, kids).unwrap()
        }
    }
    Ast::new(build(0, &children, rng)).unwrap()
}

fn code_multiset(ast: &Ast) -> Vec<String> {
    fn walk(node: &AstNode, out: &mut Vec<String>) {
        if node.is_code() {
            out.push(node.label().to_string());
        }
        for child in node.children() {
            walk(child, out);
        }
    }
    let mut out = Vec::new();
    walk(ast.root(), &mut out);
    out
}

fn finite_difference(param: &Tensor, index: usize, step: f64, mut f: impl FnMut() -> f64) -> f64 {
    param.nudge(index, step);
    let plus = f();
    param.nudge(index, -2.0 * step);
    let minus = f();
    param.nudge(index, step);
    (plus - minus) / (2.0 * step)
}

fn hello_world_ast() -> Ast {
    let source = SourceFragment::new(
        r#"public static void main(String[] args){ System.out.println("Hello World"); }"#,
    )
    .unwrap();
    parse_subset(&source).unwrap()
}

// ---------------------------------------------------------------------------
// 1. Simplifier correctness
// ---------------------------------------------------------------------------

#[test]
fn c1_simplifier_correctness() {
    criterion(1, "simplifier correctness", || {
        let rule = KeepRule::default();

        // Figure fixture: exactly the attribute nodes without the keep
        // substrings disappear; all code tokens survive; idempotent.
        let ast = hello_world_ast();
        let simplified = simplify(&ast, &rule);
        fn render(node: &AstNode) -> String {
            if node.children().is_empty() {
                node.label().to_string()
            } else {
                format!(
                    "{}[{}]",
                    node.label(),
                    node.children().iter().map(render).collect::<Vec<_>>().join(" ")
                )
            }
        }
        assert_eq!(
            render(simplified.root()),
            "MethodDeclaration[public static void main String args \
             StatementExpression[System out println \"Hello World\"]]"
        );
        assert_eq!(code_multiset(&simplified), code_multiset(&ast));
        assert_eq!(simplify(&simplified, &rule).root(), simplified.root());
        for label in ["modifiers", "BasicType", "FormalParameter", "MethodInvocation"] {
            let node = AstNode::attribute(label, vec![]).unwrap();
            assert!(!is_kept(&node, &rule), "{label} should be removed");
        }

        // Property sweep: 1000 random trees with up to 200 nodes in < 10 s.
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..1000 {
            let tree = random_tree(&mut rng, 200);
            let out = simplify(&tree, &rule);
            assert!(count_nodes(&out) <= count_nodes(&tree));
            assert_eq!(code_multiset(&out), code_multiset(&tree));
            fn non_root_kept(node: &AstNode, rule: &KeepRule) -> bool {
                node.children()
                    .iter()
                    .all(|c| is_kept(c, rule) && non_root_kept(c, rule))
            }
            assert!(non_root_kept(out.root(), &rule));
            assert_eq!(simplify(&out, &rule).root(), out.root());
        }
        let elapsed = start.elapsed();
        assert!(elapsed.as_secs_f64() < 10.0, "property sweep took {elapsed:?}");
    });
}

// ---------------------------------------------------------------------------
// 2. Graph construction
// ---------------------------------------------------------------------------

#[test]
fn c2_graph_construction() {
    criterion(2, "graph construction", || {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        for _ in 0..1000 {
            let tree = random_tree(&mut rng, 200);
            let (labels, parents) = serialize(&tree);
            let graph = build_graph(labels, parents).unwrap();
            let n = graph.len();
            let adjacency = graph.adjacency_dense();
            let mut off_diagonal = 0usize;
            for i in 0..n {
                for j in 0..n {
                    if i != j && adjacency[i * n + j] == 1.0 {
                        off_diagonal += 1;
                    }
                }
            }
            assert_eq!(off_diagonal, 2 * (n - 1));
            let propagation = graph.propagation_dense();
            for i in 0..n {
                let row_sum: f64 = (0..n).map(|j| propagation[i * n + j]).sum();
                let degree = graph.degrees()[i] as f64;
                assert!((row_sum - degree / (degree + 1.0)).abs() < 1e-12);
            }
        }

        // Hand-evaluated fixtures.
        let singleton = build_graph(vec!["x".into()], vec![None]).unwrap();
        assert_eq!(singleton.propagation_dense(), vec![0.5]);
        assert_eq!(singleton.degrees(), &[1]);

        let chain = build_graph(
            vec!["a".into(), "b".into()],
            vec![None, Some(0)],
        )
        .unwrap();
        assert_eq!(chain.degrees(), &[2, 2]);
        assert!(chain
            .propagation_dense()
            .iter()
            .all(|v| (*v - 1.0 / 3.0).abs() < 1e-15));

        let star = build_graph(
            vec!["r".into(), "a".into(), "b".into(), "c".into()],
            vec![None, Some(0), Some(0), Some(0)],
        )
        .unwrap();
        assert_eq!(star.degrees(), &[4, 2, 2, 2]);
        let propagation = star.propagation_dense();
        assert!((propagation[0] - 0.2).abs() < 1e-15);
        assert!((propagation[4] - 1.0 / 3.0).abs() < 1e-15);
    });
}

// ---------------------------------------------------------------------------
// 3. Gradient fidelity
// ---------------------------------------------------------------------------

fn gradient_check_variant(variant: Variant) {
    let config = ModelConfig {
        embedding_dim: 8,
        hidden: 8,
        gcn_layers: 3,
        variant,
        lambda: 1e-5,
        ..ModelConfig::default()
    };
    // Two small fragments, n <= 6.
    let original = build_graph(
        vec![
            "MethodDeclaration".into(),
            "ReturnStatement".into(),
            "Literal".into(),
            "x".into(),
            "y".into(),
        ],
        vec![None, Some(0), Some(1), Some(2), Some(1)],
    )
    .unwrap();
    let revised = build_graph(
        vec![
            "MethodDeclaration".into(),
            "IfStatement".into(),
            "ReturnStatement".into(),
            "x".into(),
            "z".into(),
            "Literal".into(),
        ],
        vec![None, Some(0), Some(1), Some(1), Some(0), Some(2)],
    )
    .unwrap();
    let corpus: Vec<Vec<String>> = vec![
        original.labels().to_vec(),
        revised.labels().to_vec(),
    ];
    let vocab = Vocabulary::build(&corpus).unwrap();
    let table = train_skipgram(
        &corpus,
        &vocab,
        &SkipgramConfig {
            dim: 8,
            epochs: 1,
            seed: 7,
            ..Default::default()
        },
    )
    .unwrap();
    let params = ModelParams::init(&config, 303);

    let loss_value = |params: &ModelParams| -> f64 {
        let r_original = encode(&original, &table, params, &config).unwrap();
        let r_revised = encode(&revised, &table, params, &config).unwrap();
        let probabilities = predict_pair(&r_original, &r_revised, params, &config).unwrap();
        let loss = sample_loss(&probabilities, 1, 1.4, 0.8).unwrap();
        let penalty = l2_penalty(params, config.lambda, config.variant).unwrap();
        loss.add(&penalty).unwrap().item()
    };

    let r_original = encode(&original, &table, &params, &config).unwrap();
    let r_revised = encode(&revised, &table, &params, &config).unwrap();
    let probabilities = predict_pair(&r_original, &r_revised, &params, &config).unwrap();
    let loss = sample_loss(&probabilities, 1, 1.4, 0.8).unwrap();
    let total = loss
        .add(&l2_penalty(&params, config.lambda, config.variant).unwrap())
        .unwrap();
    total.backward().unwrap();

    for (name, tensor) in params.named() {
        if variant == Variant::NoGcn && name.starts_with("gcn.") {
            continue; // unused by this variant
        }
        let grad = tensor
            .grad()
            .unwrap_or_else(|| panic!("no gradient on {name}"));
        for index in 0..tensor.len() {
            let numeric = finite_difference(&tensor, index, 1e-5, || loss_value(&params));
            let analytic = grad[index];
            let tolerance = 1e-6f64.max(1e-4 * numeric.abs().max(analytic.abs()));
            assert!(
                (numeric - analytic).abs() <= tolerance,
                "{variant:?} {name}[{index}]: analytic {analytic} vs numeric {numeric}"
            );
        }
    }
}

#[test]
fn c3_gradient_fidelity() {
    criterion(3, "gradient fidelity", || {
        let start = Instant::now();
        gradient_check_variant(Variant::Full);
        gradient_check_variant(Variant::NoGcn);
        gradient_check_variant(Variant::ConcatCompare);
        let elapsed = start.elapsed();
        assert!(elapsed.as_secs_f64() < 60.0, "gradient checks took {elapsed:?}");
    });
}

// ---------------------------------------------------------------------------
// 4. Attention and prediction algebra
// ---------------------------------------------------------------------------

#[test]
fn c4_attention_and_prediction_algebra() {
    criterion(4, "attention and prediction algebra", || {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        for _ in 0..1000 {
            let n = rng.gen_range(1..10);
            let d = rng.gen_range(1..8);
            let data = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..n * d).map(|_| rng.gen_range(-3.0..3.0)).collect()
            };
            let contextual = Tensor::new(vec![n, d], data(&mut rng)).unwrap();
            let graph_states = Tensor::new(vec![n, d], data(&mut rng)).unwrap();
            let weights = attention_weights(&contextual, &graph_states).unwrap();
            let total: f64 = weights.value().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }

        let config = ModelConfig {
            embedding_dim: 8,
            hidden: 8,
            ..ModelConfig::default()
        };
        let params = ModelParams::init(&config, 405);
        for salt in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(salt);
            let a = Tensor::new(vec![16], (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .unwrap();
            let b = Tensor::new(vec![16], (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .unwrap();
            let ab = pre_bias_logits(&a, &b, &params, &config).unwrap().value();
            let ba = pre_bias_logits(&b, &a, &params, &config).unwrap().value();
            for (x, y) in ab.iter().zip(&ba) {
                assert!((x + y).abs() < 1e-12);
            }
            // Equal representations: logits equal the bias exactly.
            let probs = predict_pair(&a, &a, &params, &config).unwrap();
            let bias_probs = params.classifier_bias.softmax().unwrap();
            assert_eq!(probs.value(), bias_probs.value());
        }
    });
}

// ---------------------------------------------------------------------------
// 5. Synthetic end-to-end
// ---------------------------------------------------------------------------

#[test]
fn c5_synthetic_end_to_end() {
    criterion(5, "synthetic end-to-end", || {
        let start = Instant::now();
        let records = generate_records(400, 99);
        let rule = KeepRule::default();
        let pairs: Vec<PreparedPair> = records
            .iter()
            .map(|r| prepare_record(r, Some(&rule)).unwrap())
            .collect();
        let corpus: Vec<Vec<String>> = pairs
            .iter()
            .flat_map(|p| [p.original.labels().to_vec(), p.revised.labels().to_vec()])
            .collect();
        let vocab = Vocabulary::build(&corpus).unwrap();
        let table = train_skipgram(
            &corpus,
            &vocab,
            &SkipgramConfig {
                dim: 32,
                seed: 99,
                ..Default::default()
            },
        )
        .unwrap();
        let config = ModelConfig {
            embedding_dim: 32,
            hidden: 32,
            ..ModelConfig::default()
        };
        let (train_pairs, test_pairs) = stratified_split_pairs(pairs, 0.8, 99).unwrap();
        let options = TrainOptions {
            epochs: 10,
            batch_size: 128,
            seed: 99,
        };
        let (params, history) = train(&config, &table, &train_pairs, &test_pairs, &options).unwrap();
        assert_eq!(history.len(), 10);
        assert!(history.iter().all(|e| e.loss.is_finite()));
        assert!(history.last().unwrap().loss < history.first().unwrap().loss);

        let (train_counts, _) = evaluate(&params, &config, &table, &train_pairs).unwrap();
        let train_accuracy = acr_core::metrics::accuracy(&train_counts).unwrap();
        let (test_counts, _) = evaluate(&params, &config, &table, &test_pairs).unwrap();
        let test_accuracy = acr_core::metrics::accuracy(&test_counts).unwrap();
        let elapsed = start.elapsed();
        assert!(
            train_accuracy >= 0.95,
            "train accuracy {train_accuracy} below 0.95"
        );
        assert!(
            test_accuracy >= 0.90,
            "held-out accuracy {test_accuracy} below 0.90"
        );
        assert!(elapsed.as_secs_f64() < 300.0, "end-to-end took {elapsed:?}");
    });
}

// ---------------------------------------------------------------------------
// 6. Metrics oracle
// ---------------------------------------------------------------------------

#[test]
fn c6_metrics_oracle() {
    criterion(6, "metrics oracle", || {
        // AUC: rank formula equals brute-force pair enumeration, exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(606);
        let mut checked = 0;
        while checked < 100 {
            let n = rng.gen_range(2..=50);
            let scored: Vec<(f64, u8)> = (0..n)
                .map(|_| {
                    (
                        rng.gen_range(0..10) as f64 / 10.0,
                        u8::from(rng.gen_bool(0.5)),
                    )
                })
                .collect();
            let positives = scored.iter().filter(|(_, l)| *l == 1).count();
            if positives == 0 || positives == scored.len() {
                continue;
            }
            let mut brute = 0.0;
            for &(sp, lp) in scored.iter().filter(|(_, l)| *l == 1) {
                let _ = lp;
                for &(sn, _) in scored.iter().filter(|(_, l)| *l == 0) {
                    if sp > sn {
                        brute += 1.0;
                    } else if sp == sn {
                        brute += 0.5;
                    }
                }
            }
            brute /= (positives * (scored.len() - positives)) as f64;
            assert_eq!(auc(&scored).unwrap(), brute);
            checked += 1;
        }

        // F1 and MCC on the hand-computed confusion matrix, via the
        // derivation oracle (the formulas evaluated independently here).
        let counts = ConfusionCounts {
            true_positive: 50,
            false_positive: 10,
            false_negative: 5,
            true_negative: 35,
        };
        let precision = 50.0 / 60.0;
        let recall = 50.0 / 55.0;
        let f1_oracle = 2.0 * precision * recall / (precision + recall);
        assert!((f1(&counts) - f1_oracle).abs() < 1e-12);
        assert!((f1_oracle - 0.8696).abs() < 1e-4);

        let mcc_oracle =
            (50.0 * 35.0 - 10.0 * 5.0) / (60.0f64 * 55.0 * 45.0 * 40.0).sqrt();
        assert!((mcc(&counts) - mcc_oracle).abs() < 1e-12);
        // The oracle evaluates to 0.69752 on these counts.
        assert!((mcc_oracle - 0.69752).abs() < 1e-4);
    });
}

// ---------------------------------------------------------------------------
// 7. Statistics oracle
// ---------------------------------------------------------------------------

/// Independent enumeration oracle: sorts magnitudes itself and walks all sign
/// assignments recursively.
fn oracle_exact_p(xs: &[f64], ys: &[f64]) -> f64 {
    let diffs: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| diffs[a].abs().partial_cmp(&diffs[b].abs()).unwrap());
    let mut ranks = vec![0.0; n];
    for (position, &index) in order.iter().enumerate() {
        ranks[index] = (position + 1) as f64;
    }
    let observed: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let mut at_most = 0u64;
    let mut at_least = 0u64;
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w <= observed + 1e-12 {
            at_most += 1;
        }
        if w >= observed - 1e-12 {
            at_least += 1;
        }
    }
    (2.0 * at_most.min(at_least) as f64 / (1u64 << n) as f64).min(1.0)
}

#[test]
fn c7_statistics_oracle() {
    criterion(7, "statistics oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(707);
        for n in 5..=12usize {
            for _ in 0..12 {
                // Tie-free: distinct magnitudes, no zero differences.
                let mut xs = Vec::with_capacity(n);
                let mut ys = Vec::with_capacity(n);
                for i in 0..n {
                    let base = rng.gen_range(0.0..100.0);
                    let offset =
                        (i as f64 + 1.0 + rng.gen_range(0.0..0.4)) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    xs.push(base + offset);
                    ys.push(base);
                }
                let exact = wilcoxon_signed_rank_method(&xs, &ys, PMethod::Exact).unwrap();
                assert!(
                    (exact - oracle_exact_p(&xs, &ys)).abs() < 1e-12,
                    "exact vs oracle at n={n}"
                );
                if n >= 8 {
                    let approx =
                        wilcoxon_signed_rank_method(&xs, &ys, PMethod::NormalApprox).unwrap();
                    assert!(
                        (exact - approx).abs() < 0.01,
                        "approximation off at n={n}: exact {exact}, approx {approx}"
                    );
                }
            }
        }

        // n = 6, all-positive distinct differences: p = 2/64.
        let ys = vec![0.0; 6];
        let xs = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(wilcoxon_signed_rank(&xs, &ys).unwrap(), 2.0 / 64.0);

        // Table boundary mapping, closed on the left.
        assert_eq!(EffectLevel::from_delta(0.147), EffectLevel::Small);
        assert_eq!(EffectLevel::from_delta(0.33), EffectLevel::Medium);
        assert_eq!(EffectLevel::from_delta(0.474), EffectLevel::Large);
        assert_eq!(EffectLevel::from_delta(0.1469), EffectLevel::Negligible);

        // Win / Tie / Loss on constructed samples.
        let baseline: Vec<f64> = (0..30).map(|i| 0.6 + (i % 7) as f64 * 0.01).collect();
        let better: Vec<f64> = baseline
            .iter()
            .enumerate()
            .map(|(i, v)| v + 0.05 + i as f64 * 1e-4)
            .collect();
        let verdict = win_tie_loss(&better, &baseline).unwrap();
        assert_eq!(verdict.outcome, Outcome::Win);
        assert!(verdict.p_value < 0.05);
        assert!(verdict.delta > 0.0 && verdict.level != EffectLevel::Negligible);
        assert_eq!(win_tie_loss(&baseline, &better).unwrap().outcome, Outcome::Loss);
        let tie = win_tie_loss(&baseline, &baseline).unwrap();
        assert_eq!(tie.outcome, Outcome::Tie);
        assert_eq!(tie.p_value, 1.0);
        assert_eq!(tie.delta, 0.0);
        // Significant but negligible effect: still a tie.
        let nudged: Vec<f64> = baseline.iter().map(|v| v + 1e-6).collect();
        let verdict = win_tie_loss(&nudged, &baseline).unwrap();
        assert!(verdict.p_value < 0.05);
        assert_eq!(verdict.level, EffectLevel::Negligible);
        assert_eq!(verdict.outcome, Outcome::Tie);

        // Antisymmetry of the effect size.
        let (delta_ab, _) = cliffs_delta(&better, &baseline).unwrap();
        let (delta_ba, _) = cliffs_delta(&baseline, &better).unwrap();
        assert_eq!(delta_ab, -delta_ba);
    });
}

// ---------------------------------------------------------------------------
// 8. Simplification statistics formulas
// ---------------------------------------------------------------------------

#[test]
fn c8_tree_statistics_formulas() {
    criterion(8, "tree statistics formulas", || {
        // Published average-row token counts through the formulas.
        let rate = simplified_rate(170.41, 94.61);
        assert!((rate * 100.0 - 44.5).abs() < 0.05, "rate {rate}");
        let increase = percentage_increase(47.28, 85.46);
        assert!((increase - 38.18).abs() < 0.05, "increase {increase}");

        // Measured rate on the synthetic corpus sits in the plausible band.
        let records = generate_records(400, 808);
        let rule = KeepRule::default();
        let mut corpus = Vec::new();
        for record in &records {
            for fragment in [&record.original, &record.revised] {
                let text = match fragment {
                    acr_core::data::Fragment::Source(text) => text.clone(),
                    acr_core::data::Fragment::Tree(_) => unreachable!(),
                };
                let ast = parse_subset(&SourceFragment::new(text).unwrap()).unwrap();
                let reduced = simplify(&ast, &rule);
                corpus.push((ast, reduced));
            }
        }
        let stats = tree_stats(&corpus).unwrap();
        let measured = stats.simplified_rate();
        assert!(
            (0.30..=0.55).contains(&measured),
            "synthetic simplified rate {measured} outside [0.30, 0.55]"
        );
        assert_eq!(code_token_sum(&corpus, true), code_token_sum(&corpus, false));
    });
}

fn code_token_sum(corpus: &[(Ast, Ast)], original: bool) -> usize {
    corpus
        .iter()
        .map(|(o, s)| code_token_count(if original { o } else { s }))
        .sum()
}

// ---------------------------------------------------------------------------
// 9. CLI determinism
// ---------------------------------------------------------------------------

#[test]
fn c9_cli_determinism() {
    criterion(9, "CLI determinism", || {
        let dir = tempfile::tempdir().unwrap();
        let path = |name: &str| dir.path().join(name);
        std::fs::write(
            path("records.jsonl"),
            records_to_jsonl(&generate_records(24, 909)),
        )
        .unwrap();
        std::fs::write(
            path("model.cfg"),
            "embedding_dim = 8\nhidden = 8\ngcn_layers = 2\n",
        )
        .unwrap();
        let binary = env!("CARGO_BIN_EXE_acr");
        let run = |args: &[&str]| {
            let output = std::process::Command::new(binary)
                .args(args)
                .output()
                .expect("binary runs");
            assert!(
                output.status.success(),
                "{:?} failed: {}",
                args,
                String::from_utf8_lossy(&output.stderr)
            );
        };
        let records = path("records.jsonl");
        let pairs = path("pairs.jsonl");
        let embeddings = path("emb.bin");
        run(&[
            "preprocess",
            "--input",
            records.to_str().unwrap(),
            "--output",
            pairs.to_str().unwrap(),
        ]);
        run(&[
            "train-embeddings",
            "--input",
            pairs.to_str().unwrap(),
            "--dim",
            "8",
            "--epochs",
            "2",
            "--seed",
            "5",
            "--output",
            embeddings.to_str().unwrap(),
        ]);
        for output in ["a.csv", "b.csv"] {
            run(&[
                "repeat",
                "--reps",
                "3",
                "--base-seed",
                "11",
                "--pairs",
                pairs.to_str().unwrap(),
                "--embeddings",
                embeddings.to_str().unwrap(),
                "--config",
                path("model.cfg").to_str().unwrap(),
                "--epochs",
                "2",
                "--batch",
                "8",
                "--output",
                path(output).to_str().unwrap(),
            ]);
        }
        let first = std::fs::read(path("a.csv")).unwrap();
        let second = std::fs::read(path("b.csv")).unwrap();
        assert!(!first.is_empty());
        assert_eq!(first, second, "repeat runs must be byte-identical");
    });
}
