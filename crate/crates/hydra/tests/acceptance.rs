//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Run with `cargo test -p hydra --test acceptance -- --nocapture` to see
//! the per-criterion lines. Oracles here are implemented independently of
//! the crate internals they check.

use std::collections::HashMap;
use std::time::Instant;

use rand::prelude::IndexedRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hydra::datamodel::HistoryItem;
use hydra::metrics;
use hydra::model::{ce_loss, FactorizedModel, TextEncoderConfig, TrainConfig};
use hydra::pipeline::{
    conflict_accuracy, prepare_dataset, read_jsonl, run_on_dataset, AblationFlags, AdapterScoring,
    BackendConfig, GenerationRow, Mode, PredictionRow, RunConfig, SimulatorKind,
};
use hydra::reranker::{expected_candidate_count, gen_reranker_candidates, RerankConfig};
use hydra::retriever::{build_index, retrieve_top, Tokenizer};

// ---------------------------------------------------------------------------
// 1. Gradient oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_gradient_oracle() {
    let start = Instant::now();
    let eps = 1e-5;
    let tol = 1e-4;
    let texts = [
        "alpha beta gamma",
        "one two",
        "the quick brown fox",
        "x",
        "repeated repeated words words",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0usize;
    let mut max_rel: f64 = 0.0;

    for instance in 0..100u64 {
        let hash_dim = 8 + (instance % 9) as usize; // 8..=16
        let hidden_dim = 2 + (instance % 3) as usize; // 2..=4
        let config = TextEncoderConfig {
            hash_dim,
            hidden_dim,
            ngram_max: 2,
        };
        let mut model = FactorizedModel::new(config, instance).unwrap();
        model.ensure_head("u");
        let text = *texts.choose(&mut rng).unwrap();
        let label = rng.random_range(0..2u8);

        let (_, grads) = model.gradients("u", text, label).unwrap();
        let dense_embed = grads.embed_dense(hash_dim, hidden_dim);

        let clone_model = |m: &FactorizedModel| {
            FactorizedModel::from_parts(
                *m.config(),
                m.base().clone(),
                [("u".to_string(), m.head("u").unwrap().clone())].into(),
                m.seed(),
            )
        };
        let loss_at = |m: &FactorizedModel| ce_loss(&m.predict("u", text).unwrap(), label);
        let mut check = |analytic: f64, nudge: &mut dyn FnMut(&mut FactorizedModel, f64)| {
            let mut plus = clone_model(&model);
            nudge(&mut plus, eps);
            let mut minus = clone_model(&model);
            nudge(&mut minus, -eps);
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-2);
            assert!(
                rel <= tol,
                "instance {instance}: analytic {analytic} vs numeric {numeric} (rel {rel:.2e})"
            );
            if rel > max_rel {
                max_rel = rel;
            }
            checked += 1;
        };

        for i in 0..hash_dim {
            for j in 0..hidden_dim {
                check(dense_embed[[i, j]], &mut |m, d| {
                    m.base_mut().embed[[i, j]] += d
                });
            }
        }
        for i in 0..hidden_dim {
            for j in 0..hidden_dim {
                check(grads.mix[[i, j]], &mut |m, d| m.base_mut().mix[[i, j]] += d);
                check(grads.head.w1[[i, j]], &mut |m, d| {
                    m.head_mut("u").unwrap().w1[[i, j]] += d
                });
            }
            check(grads.bias[i], &mut |m, d| m.base_mut().bias[i] += d);
            check(grads.head.b1[i], &mut |m, d| {
                m.head_mut("u").unwrap().b1[i] += d
            });
            for o in 0..2 {
                check(grads.head.w2[[o, i]], &mut |m, d| {
                    m.head_mut("u").unwrap().w2[[o, i]] += d
                });
            }
        }
        for o in 0..2 {
            check(grads.head.b2[o], &mut |m, d| {
                m.head_mut("u").unwrap().b2[o] += d
            });
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 30, "gradient oracle took {elapsed:?}");
    println!(
        "ACCEPT gradient-oracle: PASS (100 instances, {checked} components, max rel err \
         {max_rel:.2e}, {elapsed:?})"
    );
}

// ---------------------------------------------------------------------------
// 2. Head isolation and frozen base
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_head_isolation_and_frozen_base() {
    let start = Instant::now();
    let config = TextEncoderConfig {
        hash_dim: 64,
        hidden_dim: 8,
        ngram_max: 2,
    };
    let mut model = FactorizedModel::new(config, 99).unwrap();
    let users: Vec<String> = (0..12).map(|i| format!("user{i:02}")).collect();
    for u in &users {
        model.ensure_head(u);
    }
    let texts = [
        "first text sample",
        "second sample with more words",
        "third thing",
        "fourth bite of text",
    ];
    let train_cfg = TrainConfig {
        learning_rate: 0.05,
        epochs: 1,
        batch_size: 1,
        clip: None,
    };

    let mut snapshots: HashMap<String, Vec<u8>> = users
        .iter()
        .map(|u| (u.clone(), model.head_bytes(u).unwrap()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut steps = 0usize;

    for _ in 0..1000 {
        let user = users.choose(&mut rng).unwrap().clone();
        let text = *texts.choose(&mut rng).unwrap();
        let label = rng.random_range(0..2u8);
        model.train_step(&user, text, label, &train_cfg).unwrap();
        steps += 1;
        snapshots.insert(user.clone(), model.head_bytes(&user).unwrap());
        for u in &users {
            assert_eq!(
                &model.head_bytes(u).unwrap(),
                snapshots.get(u).unwrap(),
                "head {u} changed without being trained (step {steps})"
            );
        }
    }

    // Frozen-base fitting for a batch of new users.
    let base_before = model.base_bytes();
    let trained_heads: Vec<Vec<u8>> = users.iter().map(|u| model.head_bytes(u).unwrap()).collect();
    let fit_cfg = TrainConfig {
        learning_rate: 0.05,
        epochs: 2,
        batch_size: 1,
        clip: None,
    };
    let mut fit_steps = 0usize;
    for newcomer in 0..4 {
        let examples: Vec<(String, u8)> = (0..30)
            .map(|i| {
                (
                    format!("{} case {i}", texts[i % texts.len()]),
                    (i % 2) as u8,
                )
            })
            .collect();
        model
            .fit_new_head(&format!("newcomer{newcomer}"), &examples, &fit_cfg)
            .unwrap();
        fit_steps += examples.len() * fit_cfg.epochs;
    }
    assert_eq!(
        model.base_bytes(),
        base_before,
        "fit phase mutated the base"
    );
    for (u, before) in users.iter().zip(trained_heads) {
        assert_eq!(
            model.head_bytes(u).unwrap(),
            before,
            "fit phase touched head {u}"
        );
    }

    let elapsed = start.elapsed();
    println!(
        "ACCEPT head-isolation: PASS ({steps} train steps + {fit_steps} fit steps, base and \
         untouched heads bitwise stable, {elapsed:?})"
    );
}

// ---------------------------------------------------------------------------
// 3. BM25 oracle
// ---------------------------------------------------------------------------

/// Direct evaluation of the BM25 formula on token lists, independent of the
/// crate's index structures.
fn oracle_bm25_rank(
    docs: &[Vec<String>],
    query: &[String],
    n: usize,
    k1: f64,
    b: f64,
) -> Vec<(usize, f64)> {
    let n_docs = docs.len() as f64;
    let avg = if docs.is_empty() {
        0.0
    } else {
        docs.iter().map(|d| d.len()).sum::<usize>() as f64 / n_docs
    };
    let mut unique_terms: Vec<&String> = query.iter().collect();
    unique_terms.sort();
    unique_terms.dedup();

    let mut scored: Vec<(usize, f64)> = docs
        .iter()
        .enumerate()
        .map(|(ord, doc)| {
            let mut score = 0.0;
            for term in &unique_terms {
                let tf = doc.iter().filter(|t| t == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
                let idf = ((n_docs - df + 0.5) / (df + 0.5) + 1.0).ln();
                let norm = if avg > 0.0 {
                    1.0 - b + b * doc.len() as f64 / avg
                } else {
                    1.0 - b
                };
                score += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
            (ord, score)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(n);
    scored
}

#[test]
fn criterion_3_bm25_oracle() {
    let start = Instant::now();
    let vocab = ["ant", "bee", "cat", "dog", "elk", "fox"];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let tok = Tokenizer::default();

    for corpus_id in 0..500 {
        let n_docs = rng.random_range(0..=8);
        let docs: Vec<String> = (0..n_docs)
            .map(|_| {
                let len = rng.random_range(0..=6);
                (0..len)
                    .map(|_| *vocab.choose(&mut rng).unwrap())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let query_len = rng.random_range(0..=4);
        let query: Vec<&str> = (0..query_len)
            .map(|_| *vocab.choose(&mut rng).unwrap())
            .collect();
        let query = query.join(" ");
        let n = rng.random_range(0..=8);

        let history: Vec<HistoryItem> = docs
            .iter()
            .enumerate()
            .map(|(i, text)| HistoryItem {
                item_id: format!("h{i}"),
                query_text: text.clone(),
                answer_text: String::new(),
            })
            .collect();
        let index = build_index(&history, tok);
        let got = retrieve_top(&index, &query, n, &[]);

        let doc_tokens: Vec<Vec<String>> = docs.iter().map(|d| tok.tokenize(d)).collect();
        let want = oracle_bm25_rank(&doc_tokens, &tok.tokenize(&query), n, 1.2, 0.75);

        assert_eq!(
            got.iter().map(|(o, _)| *o).collect::<Vec<_>>(),
            want.iter().map(|(o, _)| *o).collect::<Vec<_>>(),
            "corpus {corpus_id}: ordering mismatch (docs {docs:?}, query {query:?})"
        );
        for (g, w) in got.iter().zip(&want) {
            assert!(
                (g.1 - w.1).abs() < 1e-9,
                "corpus {corpus_id}: score mismatch {} vs {}",
                g.1,
                w.1
            );
        }
    }
    println!(
        "ACCEPT bm25-oracle: PASS (500 micro-corpora, exact tie-rule agreement, {:?})",
        start.elapsed()
    );
}

// ---------------------------------------------------------------------------
// 4. Candidate count laws
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_candidate_count_laws() {
    let start = Instant::now();
    let mut cells = 0usize;
    for h_len in 0..=20usize {
        let user = hydra::datamodel::UserRecord {
            user_id: "u".into(),
            query: "query text".into(),
            gold: "gold".into(),
            history: (0..h_len)
                .map(|i| HistoryItem {
                    item_id: format!("h{i}"),
                    query_text: format!("history text {i}"),
                    answer_text: format!("answer {i}"),
                })
                .collect(),
        };
        // Generation-side count law: the user query plus every history pair.
        assert_eq!(
            hydra::adapter::gen_adapter_candidates(&user).len(),
            1 + h_len
        );
        for m in 1..=8usize {
            let cfg = RerankConfig { m, n: 20, k: 4 };
            let got = gen_reranker_candidates(&user, &cfg, 11).len();
            let want = expected_candidate_count(h_len, m);
            assert_eq!(got, want, "count law failed at |H|={h_len}, M={m}");
            cells += 1;
        }
    }
    println!(
        "ACCEPT count-laws: PASS ({cells} grid cells over |H|<=20, M<=8, {:?})",
        start.elapsed()
    );
}

// ---------------------------------------------------------------------------
// 5. Metric oracles
// ---------------------------------------------------------------------------

fn ref_tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

fn ref_rouge1(cand: &str, reference: &str) -> f64 {
    let c = ref_tokenize(cand);
    let r = ref_tokenize(reference);
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in &r {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    let mut overlap = 0i64;
    for t in &c {
        let entry = counts.entry(t.as_str()).or_insert(0);
        if *entry > 0 {
            overlap += 1;
            *entry -= 1;
        }
    }
    let p = overlap as f64 / c.len() as f64;
    let rr = overlap as f64 / r.len() as f64;
    if p + rr == 0.0 {
        0.0
    } else {
        2.0 * p * rr / (p + rr)
    }
}

fn ref_lcs(
    a: &[String],
    b: &[String],
    i: usize,
    j: usize,
    memo: &mut HashMap<(usize, usize), usize>,
) -> usize {
    if i == a.len() || j == b.len() {
        return 0;
    }
    if let Some(v) = memo.get(&(i, j)) {
        return *v;
    }
    let v = if a[i] == b[j] {
        1 + ref_lcs(a, b, i + 1, j + 1, memo)
    } else {
        ref_lcs(a, b, i + 1, j, memo).max(ref_lcs(a, b, i, j + 1, memo))
    };
    memo.insert((i, j), v);
    v
}

fn ref_rouge_l(cand: &str, reference: &str) -> f64 {
    let c = ref_tokenize(cand);
    let r = ref_tokenize(reference);
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let lcs = ref_lcs(&c, &r, 0, 0, &mut HashMap::new()) as f64;
    let p = lcs / c.len() as f64;
    let rr = lcs / r.len() as f64;
    if p + rr == 0.0 {
        0.0
    } else {
        2.0 * p * rr / (p + rr)
    }
}

fn ref_bleu(cand: &str, reference: &str) -> f64 {
    let c = ref_tokenize(cand);
    let r = ref_tokenize(reference);
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 1..=4usize {
        if c.len() < n {
            continue;
        }
        let candidate_ngrams: Vec<&[String]> = c.windows(n).collect();
        let reference_ngrams: Vec<&[String]> = r.windows(n).collect();
        let mut used = vec![false; reference_ngrams.len()];
        let mut matches = 0usize;
        for gram in &candidate_ngrams {
            for (ri, rgram) in reference_ngrams.iter().enumerate() {
                if !used[ri] && rgram == gram {
                    used[ri] = true;
                    matches += 1;
                    break;
                }
            }
        }
        let total = candidate_ngrams.len();
        let precision = if matches > 0 {
            matches as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            (matches as f64 + 1.0) / (total as f64 + 1.0)
        };
        log_sum += precision.ln();
        orders += 1;
    }
    if orders == 0 {
        return 0.0;
    }
    let geo = (log_sum / orders as f64).exp();
    let bp = if (c.len() as f64) < r.len() as f64 {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    } else {
        1.0
    };
    bp * geo
}

fn metric_fixture() -> Vec<(String, String)> {
    let mut pairs: Vec<(String, String)> = vec![
        ("the cat sat", "the cat"),
        ("a b c d", "a c d"),
        ("the the the", "the cat"),
        ("identical sentence here", "identical sentence here"),
        ("completely different words", "nothing shared at all"),
        ("one", "one"),
        ("one", "two"),
        ("a a a a", "a"),
        ("a", "a a a a"),
        (
            "long sentence with many repeated words words words",
            "words repeated many times",
        ),
        (
            "punctuation, should. not! matter?",
            "punctuation should not matter",
        ),
        ("Case Folding Works", "case folding works"),
        (
            "partial overlap in the middle",
            "some overlap in the center",
        ),
        ("x y z w v", "v w z y x"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect();

    let vocab = [
        "sun", "moon", "star", "wave", "tree", "rock", "bird", "fish",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    while pairs.len() < 50 {
        let len_a = rng.random_range(1..=9);
        let len_b = rng.random_range(1..=9);
        let a: Vec<&str> = (0..len_a)
            .map(|_| *vocab.choose(&mut rng).unwrap())
            .collect();
        let b: Vec<&str> = (0..len_b)
            .map(|_| *vocab.choose(&mut rng).unwrap())
            .collect();
        pairs.push((a.join(" "), b.join(" ")));
    }
    pairs
}

#[test]
fn criterion_5_metric_oracles() {
    let start = Instant::now();

    // Hand-derived anchors, exact.
    assert_eq!(metrics::rouge1("the cat sat", "the cat"), 0.8);
    assert_eq!(metrics::rouge_l("a b c d", "a c d"), 6.0 / 7.0);

    let fixture = metric_fixture();
    assert_eq!(fixture.len(), 50);
    let mut max_diff: f64 = 0.0;
    for (cand, reference) in &fixture {
        for (name, got, want) in [
            (
                "rouge1",
                metrics::rouge1(cand, reference),
                ref_rouge1(cand, reference),
            ),
            (
                "rougeL",
                metrics::rouge_l(cand, reference),
                ref_rouge_l(cand, reference),
            ),
            (
                "bleu",
                metrics::bleu(cand, reference),
                ref_bleu(cand, reference),
            ),
        ] {
            let diff = (got - want).abs();
            assert!(
                diff <= 1e-6,
                "{name}({cand:?}, {reference:?}) = {got} but oracle says {want}"
            );
            if diff > max_diff {
                max_diff = diff;
            }
        }
    }
    println!(
        "ACCEPT metric-oracles: PASS (50 pairs x 3 metrics, max |diff| {max_diff:.2e}, {:?})",
        start.elapsed()
    );
}

// ---------------------------------------------------------------------------
// 6. Ablation direction on the synthetic conflict task
// ---------------------------------------------------------------------------

fn ablation_config(out: &std::path::Path, seed: u64, shared: bool) -> RunConfig {
    RunConfig {
        task: hydra::datamodel::TaskId::Synthetic,
        synth_users: 12,
        synth_history: 20,
        mode: Mode::HydraFull,
        backend: BackendConfig::Simulator {
            kind: SimulatorKind::Auto,
            icl_weight: 0.0,
        },
        adapter_train: TrainConfig {
            learning_rate: 0.05,
            epochs: 4,
            batch_size: 32,
            clip: None,
        },
        ablation: AblationFlags {
            no_personal_reranker: shared,
            no_personal_adapter: shared,
        },
        seed,
        out_dir: out.to_path_buf(),
        ..RunConfig::default()
    }
}

#[test]
fn criterion_6_ablation_direction() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let seeds = [11u64, 22, 33, 44, 55];
    let mut full_sum = 0.0;
    let mut shared_sum = 0.0;
    let mut conflict_sum = 0.0;

    for (i, seed) in seeds.iter().enumerate() {
        let full_cfg = ablation_config(&dir.path().join(format!("full{i}")), *seed, false);
        let ds = prepare_dataset(&full_cfg).unwrap();
        let full = run_on_dataset(&full_cfg, &ds).unwrap();
        full_sum += full.get("accuracy").unwrap();

        let shared_cfg = ablation_config(&dir.path().join(format!("shared{i}")), *seed, true);
        let shared = run_on_dataset(&shared_cfg, &ds).unwrap();
        shared_sum += shared.get("accuracy").unwrap();

        let preds: Vec<PredictionRow> = read_jsonl(
            &dir.path()
                .join(format!("shared{i}"))
                .join("predictions.jsonl"),
        )
        .unwrap();
        conflict_sum += conflict_accuracy(&ds, &preds).expect("synthetic task has conflicts");
    }

    let n = seeds.len() as f64;
    let full_mean = full_sum / n;
    let shared_mean = shared_sum / n;
    let conflict_mean = conflict_sum / n;
    let elapsed = start.elapsed();

    assert!(
        full_mean - shared_mean >= 0.15,
        "personalization margin too small: full {full_mean:.3} vs shared {shared_mean:.3}"
    );
    assert!(
        conflict_mean <= 0.55,
        "shared model beats chance on conflict queries: {conflict_mean:.3}"
    );
    assert!(elapsed.as_secs() < 300, "ablation runs took {elapsed:?}");
    println!(
        "ACCEPT ablation-direction: PASS (full {full_mean:.3}, shared {shared_mean:.3}, margin \
         {:.3} >= 0.15, shared conflict {conflict_mean:.3} <= 0.55, {elapsed:?})",
        full_mean - shared_mean
    );
}

// ---------------------------------------------------------------------------
// 7. Best-of-b oracle bound
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_best_of_b_oracle_bound() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ablation_config(dir.path(), 9, false);
    cfg.mode = Mode::HydraAdapterOnly;
    cfg.adapter_scoring = AdapterScoring::OracleUpperBound;
    let ds = prepare_dataset(&cfg).unwrap();
    let report = run_on_dataset(&cfg, &ds).unwrap();

    let rows: Vec<GenerationRow> = read_jsonl(&dir.path().join("generations.jsonl")).unwrap();
    assert_eq!(rows.len(), ds.test_users.len());
    let any_hit = rows
        .iter()
        .filter(|r| {
            r.generations
                .iter()
                .any(|g| metrics::normalize(g) == metrics::normalize(&r.gold))
        })
        .count() as f64
        / rows.len() as f64;

    let accuracy = report.get("accuracy").unwrap();
    assert_eq!(
        accuracy, any_hit,
        "oracle-head accuracy must equal the any-sample-hits fraction exactly"
    );
    println!(
        "ACCEPT best-of-b-oracle: PASS (accuracy {accuracy:.3} == any-hit fraction, {} queries \
         checked exhaustively, {:?})",
        rows.len(),
        start.elapsed()
    );
}

// ---------------------------------------------------------------------------
// 8. End-to-end determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_end_to_end_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg_a = ablation_config(&dir.path().join("a"), 61, false);
    let cfg_b = ablation_config(&dir.path().join("b"), 61, false);
    let ds = prepare_dataset(&cfg_a).unwrap();
    run_on_dataset(&cfg_a, &ds).unwrap();
    run_on_dataset(&cfg_b, &ds).unwrap();

    let artifacts = [
        "report.txt",
        "report.json",
        "predictions.jsonl",
        "generations.jsonl",
        "reranked.jsonl",
        "reranker_train_examples.jsonl",
        "reranker_fit_examples.jsonl",
        "adapter_train_examples.jsonl",
        "adapter_fit_examples.jsonl",
    ];
    for name in artifacts {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "artifact {name} differs between identical runs");
    }
    println!(
        "ACCEPT determinism: PASS ({} artifacts byte-identical across two runs, {:?})",
        artifacts.len(),
        start.elapsed()
    );
}
