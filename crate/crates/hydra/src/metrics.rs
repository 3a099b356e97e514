//! Evaluation metrics: accuracy, macro-F1, MAE/RMSE, ROUGE-1, ROUGE-L, BLEU.
//!
//! All text metrics share the retrieval tokenizer (lowercase, punctuation
//! splits). Ratio metrics live in [0, 1]; BLEU is reported in [0, 1] here
//! and scaled by 100 only for display.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{HydraError, Result};
use crate::retriever::Tokenizer;

pub const KNOWN_METRICS: [&str; 7] = [
    "accuracy", "macro_f1", "mae", "rmse", "rouge1", "rougeL", "bleu",
];

pub fn is_known_metric(id: &str) -> bool {
    KNOWN_METRICS.contains(&id)
}

/// Normalization used for exact-match comparisons: trim, casefold, collapse
/// internal whitespace.
pub fn normalize(s: &str) -> String {
    s.trim()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn check_lengths(preds: &[String], golds: &[String]) -> Result<()> {
    if preds.len() != golds.len() {
        return Err(HydraError::InvalidArgument(format!(
            "prediction/gold length mismatch: {} vs {}",
            preds.len(),
            golds.len()
        )));
    }
    if preds.is_empty() {
        return Err(HydraError::InvalidArgument("empty prediction list".into()));
    }
    Ok(())
}

/// Mean of normalized exact matches.
pub fn accuracy(preds: &[String], golds: &[String]) -> Result<f64> {
    check_lengths(preds, golds)?;
    let hits = preds
        .iter()
        .zip(golds)
        .filter(|(p, g)| normalize(p) == normalize(g))
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Unweighted mean of per-class F1 over the whole label set. Classes absent
/// from both predictions and golds contribute an F1 of zero.
pub fn macro_f1(preds: &[String], golds: &[String], label_set: &[String]) -> Result<f64> {
    check_lengths(preds, golds)?;
    if label_set.is_empty() {
        return Err(HydraError::InvalidArgument("empty label set".into()));
    }
    let labels: Vec<String> = label_set.iter().map(|l| normalize(l)).collect();
    let norm_preds: Vec<String> = preds.iter().map(|p| normalize(p)).collect();
    let norm_golds: Vec<String> = golds.iter().map(|g| normalize(g)).collect();
    for value in norm_preds.iter().chain(norm_golds.iter()) {
        if !labels.contains(value) {
            return Err(HydraError::InvalidArgument(format!(
                "label {value:?} is not in the label set"
            )));
        }
    }

    let mut f1_sum = 0.0;
    for label in &labels {
        let tp = norm_preds
            .iter()
            .zip(&norm_golds)
            .filter(|(p, g)| *p == label && *g == label)
            .count() as f64;
        let fp = norm_preds
            .iter()
            .zip(&norm_golds)
            .filter(|(p, g)| *p == label && *g != label)
            .count() as f64;
        let fn_ = norm_preds
            .iter()
            .zip(&norm_golds)
            .filter(|(p, g)| *p != label && *g == label)
            .count() as f64;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        if precision + recall > 0.0 {
            f1_sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    Ok(f1_sum / labels.len() as f64)
}

/// Parse a rating string into 1..=5. Falls back to the first digit found in
/// that range, then to the midpoint 3 for unparseable predictions.
pub fn parse_rating(s: &str) -> i64 {
    let trimmed = s.trim();
    if let Ok(v) = trimmed.parse::<i64>() {
        return v.clamp(1, 5);
    }
    for c in trimmed.chars() {
        if ('1'..='5').contains(&c) {
            return c as i64 - '0' as i64;
        }
    }
    3
}

/// Mean absolute error and root mean squared error over parsed ratings.
pub fn mae_rmse(preds: &[String], golds: &[String]) -> Result<(f64, f64)> {
    check_lengths(preds, golds)?;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for (p, g) in preds.iter().zip(golds) {
        let diff = (parse_rating(p) - parse_rating(g)) as f64;
        abs_sum += diff.abs();
        sq_sum += diff * diff;
    }
    let n = preds.len() as f64;
    Ok((abs_sum / n, (sq_sum / n).sqrt()))
}

fn token_counts(tokens: &[String]) -> BTreeMap<&str, usize> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    counts
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// ROUGE-1 F1: clipped unigram multiset overlap.
pub fn rouge1(cand: &str, reference: &str) -> f64 {
    let tok = Tokenizer::default();
    let cand_tokens = tok.tokenize(cand);
    let ref_tokens = tok.tokenize(reference);
    if cand_tokens.is_empty() || ref_tokens.is_empty() {
        return 0.0;
    }
    let cand_counts = token_counts(&cand_tokens);
    let ref_counts = token_counts(&ref_tokens);
    let overlap: usize = cand_counts
        .iter()
        .map(|(t, c)| (*c).min(ref_counts.get(t).copied().unwrap_or(0)))
        .sum();
    f1(
        overlap as f64 / cand_tokens.len() as f64,
        overlap as f64 / ref_tokens.len() as f64,
    )
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            cur[j + 1] = if ai == bj {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1: longest common subsequence over tokens.
pub fn rouge_l(cand: &str, reference: &str) -> f64 {
    let tok = Tokenizer::default();
    let cand_tokens = tok.tokenize(cand);
    let ref_tokens = tok.tokenize(reference);
    if cand_tokens.is_empty() || ref_tokens.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&cand_tokens, &ref_tokens) as f64;
    f1(
        lcs / cand_tokens.len() as f64,
        lcs / ref_tokens.len() as f64,
    )
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<Vec<&str>, usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            let key: Vec<&str> = window.iter().map(|t| t.as_str()).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU with up to 4-gram precisions, uniform weights, and a
/// brevity penalty of exp(1 − r/c) when the candidate is shorter than the
/// reference. Unigram precision is never smoothed (no shared unigrams means
/// a score of zero); higher orders with zero matches get add-one smoothing,
/// and orders the candidate is too short for are skipped.
pub fn bleu(cand: &str, reference: &str) -> f64 {
    let tok = Tokenizer::default();
    let cand_tokens = tok.tokenize(cand);
    let ref_tokens = tok.tokenize(reference);
    if cand_tokens.is_empty() || ref_tokens.is_empty() {
        return 0.0;
    }

    let mut log_sum = 0.0;
    let mut orders = 0usize;
    for n in 1..=4 {
        let total = cand_tokens.len().saturating_sub(n - 1);
        if total == 0 {
            continue;
        }
        let cand_ngrams = ngram_counts(&cand_tokens, n);
        let ref_ngrams = ngram_counts(&ref_tokens, n);
        let matches: usize = cand_ngrams
            .iter()
            .map(|(g, c)| (*c).min(ref_ngrams.get(g).copied().unwrap_or(0)))
            .sum();
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
    let geo_mean = (log_sum / orders as f64).exp();

    let c = cand_tokens.len() as f64;
    let r = ref_tokens.len() as f64;
    let brevity = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    brevity * geo_mean
}

/// Metric name → value, plus the number of scored examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: BTreeMap<String, f64>,
    pub n_examples: usize,
}

impl MetricReport {
    /// One `name: value` line per metric, sorted by name.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, value) in &self.metrics {
            out.push_str(&format!("{name}: {value:.6}\n"));
        }
        out.push_str(&format!("n_examples: {}\n", self.n_examples));
        out
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

/// Compute every metric in `metric_set` over aligned predictions and golds.
pub fn compute_report(
    metric_set: &[String],
    label_set: &[String],
    preds: &[String],
    golds: &[String],
) -> Result<MetricReport> {
    check_lengths(preds, golds)?;
    let mut metrics = BTreeMap::new();
    for id in metric_set {
        let value = match id.as_str() {
            "accuracy" => accuracy(preds, golds)?,
            "macro_f1" => macro_f1(preds, golds, label_set)?,
            "mae" => mae_rmse(preds, golds)?.0,
            "rmse" => mae_rmse(preds, golds)?.1,
            "rouge1" => mean_over(preds, golds, rouge1),
            "rougeL" => mean_over(preds, golds, rouge_l),
            "bleu" => mean_over(preds, golds, bleu),
            other => {
                return Err(HydraError::InvalidArgument(format!(
                    "unknown metric id: {other}"
                )))
            }
        };
        metrics.insert(id.clone(), value);
    }
    Ok(MetricReport {
        metrics,
        n_examples: preds.len(),
    })
}

fn mean_over(preds: &[String], golds: &[String], f: fn(&str, &str) -> f64) -> f64 {
    let sum: f64 = preds.iter().zip(golds).map(|(p, g)| f(p, g)).sum();
    sum / preds.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn accuracy_basics() {
        let a = strs(&["x", "y", "z", "w"]);
        assert_eq!(accuracy(&a, &a).unwrap(), 1.0);
        let b = strs(&["1", "2", "3", "4"]);
        assert_eq!(accuracy(&a, &b).unwrap(), 0.0);
        let c = strs(&["x", "y", "z", "q"]);
        assert_eq!(accuracy(&a, &c).unwrap(), 0.75);
        assert_eq!(
            accuracy(&strs(&[" Sports "]), &strs(&["sports"])).unwrap(),
            1.0
        );
        assert!(accuracy(&a, &strs(&["x"])).is_err());
    }

    #[test]
    fn macro_f1_perfect_and_hand_case() {
        let labels = strs(&["A", "B"]);
        let perfect = strs(&["A", "B", "A", "B"]);
        assert!((macro_f1(&perfect, &perfect, &labels).unwrap() - 1.0).abs() < 1e-12);

        // All-"A" predictions with half-"A" golds: F1(A) = 2/3, F1(B) = 0.
        let preds = strs(&["A", "A", "A", "A"]);
        let golds = strs(&["A", "A", "B", "B"]);
        let got = macro_f1(&preds, &golds, &labels).unwrap();
        assert!((got - (2.0 / 3.0) / 2.0).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn macro_f1_rejects_unknown_and_empty() {
        let labels = strs(&["A", "B"]);
        assert!(macro_f1(&strs(&["C"]), &strs(&["A"]), &labels).is_err());
        assert!(macro_f1(&[], &[], &labels).is_err());
    }

    #[test]
    fn mae_rmse_cases() {
        let (mae, rmse) = mae_rmse(&strs(&["3", "2"]), &strs(&["3", "2"])).unwrap();
        assert_eq!((mae, rmse), (0.0, 0.0));

        let (mae, rmse) = mae_rmse(&strs(&["1", "5"]), &strs(&["2", "3"])).unwrap();
        assert!((mae - 1.5).abs() < 1e-12);
        assert!((rmse - 2.5_f64.sqrt()).abs() < 1e-12);

        // Unparseable prediction maps to the midpoint 3.
        let (mae, _) = mae_rmse(&strs(&["great!"]), &strs(&["3"])).unwrap();
        assert_eq!(mae, 0.0);
    }

    #[test]
    fn parse_rating_fallbacks() {
        assert_eq!(parse_rating(" 4 "), 4);
        assert_eq!(parse_rating("9"), 5);
        assert_eq!(parse_rating("rated 2 stars"), 2);
        assert_eq!(parse_rating("awful"), 3);
    }

    #[test]
    fn rouge1_hand_case() {
        assert_eq!(rouge1("same words", "same words"), 1.0);
        assert_eq!(rouge1("aa bb", "cc dd"), 0.0);
        // P = 2/3, R = 1 -> F1 = 0.8 exactly.
        assert!((rouge1("the cat sat", "the cat") - 0.8).abs() < 1e-12);
        assert_eq!(rouge1("", "the cat"), 0.0);
    }

    #[test]
    fn rouge_l_hand_case() {
        assert_eq!(rouge_l("a b c d", "a b c d"), 1.0);
        // LCS("a b c d", "a c d") = 3: P = 3/4, R = 1 -> F1 = 6/7.
        assert!((rouge_l("a b c d", "a c d") - 6.0 / 7.0).abs() < 1e-12);
        assert_eq!(rouge_l("", "a"), 0.0);
    }

    #[test]
    fn bleu_identity_and_disjoint() {
        assert!((bleu("four tokens in here", "four tokens in here") - 1.0).abs() < 1e-12);
        assert!((bleu("two words", "two words") - 1.0).abs() < 1e-12);
        assert!(bleu("aa bb cc dd ee", "xx yy zz ww vv") < 0.05);
        assert_eq!(bleu("aa bb cc dd ee", "xx yy zz ww vv"), 0.0);
    }

    #[test]
    fn bleu_clipped_repeat_case() {
        // "the the the" vs "the cat": clipped unigram precision 1/3,
        // smoothed bigram 1/3 and trigram 1/2, no 4-grams, BP = 1.
        let got = bleu("the the the", "the cat");
        let want = (1.0f64 / 3.0 * 1.0 / 3.0 * 0.5).powf(1.0 / 3.0);
        assert!((got - want).abs() < 1e-12, "got {got} want {want}");
    }

    #[test]
    fn bleu_brevity_penalty_applies() {
        // Shorter candidate than reference is penalized by exp(1 - r/c).
        let longer = bleu("a b c d", "a b c d e f g h");
        let full = bleu("a b c d e f g h", "a b c d e f g h");
        assert!(longer < full);
    }

    #[test]
    fn report_text_is_stable() {
        let report = compute_report(
            &strs(&["accuracy", "macro_f1"]),
            &strs(&["A", "B"]),
            &strs(&["A", "B"]),
            &strs(&["A", "A"]),
        )
        .unwrap();
        let text = report.to_text();
        assert!(text.contains("accuracy: 0.500000"));
        assert!(text.contains("n_examples: 2"));
    }

    proptest! {
        #[test]
        fn ratio_metrics_bounded(
            cand in "[a-d ]{0,24}",
            reference in "[a-d ]{0,24}",
        ) {
            for value in [rouge1(&cand, &reference), rouge_l(&cand, &reference), bleu(&cand, &reference)] {
                prop_assert!((0.0..=1.0).contains(&value), "value {value}");
            }
        }

        #[test]
        fn identity_scores_one(text in "[a-d]{1,6}( [a-d]{1,6}){0,5}") {
            prop_assert!((rouge1(&text, &text) - 1.0).abs() < 1e-12);
            prop_assert!((rouge_l(&text, &text) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn mae_never_exceeds_rmse(
            preds in prop::collection::vec("[1-5]", 1..8),
        ) {
            let golds: Vec<String> = preds.iter().rev().cloned().collect();
            let (mae, rmse) = mae_rmse(&preds, &golds).unwrap();
            prop_assert!(mae <= rmse + 1e-12);
        }
    }
}
