//! BM25 retrieval over a single user's history.
//!
//! Documents are a history item's input and output concatenated, so queries
//! match against whole behaviors rather than inputs alone. Scores use the
//! Robertson/Zaragoza form with the "+1 inside the log" IDF, which keeps
//! every score non-negative and makes "no shared term" score exactly zero.

use std::collections::BTreeMap;

use crate::datamodel::HistoryItem;
use crate::error::{HydraError, Result};

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// Whitespace/punctuation tokenizer shared by retrieval and the text
/// metrics. Splits at every non-alphanumeric character.
#[derive(Debug, Clone, Copy)]
pub struct Tokenizer {
    pub lowercase: bool,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer { lowercase: true }
    }
}

impl Tokenizer {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| {
                if self.lowercase {
                    t.to_lowercase()
                } else {
                    t.to_string()
                }
            })
            .collect()
    }
}

/// Inverted index over one user's history.
#[derive(Debug, Clone)]
pub struct HistoryIndex {
    /// term -> postings sorted by item ordinal, with term frequency.
    postings: BTreeMap<String, Vec<(usize, u32)>>,
    doc_lengths: Vec<usize>,
    avg_doc_len: f64,
    tokenizer: Tokenizer,
}

impl HistoryIndex {
    pub fn n_docs(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_len(&self, ordinal: usize) -> Option<usize> {
        self.doc_lengths.get(ordinal).copied()
    }

    pub fn postings(&self, term: &str) -> Option<&[(usize, u32)]> {
        self.postings.get(term).map(|p| p.as_slice())
    }
}

/// Build an immutable index over `query_text ⊕ " " ⊕ answer_text` of each
/// history item, in history order.
pub fn build_index(history: &[HistoryItem], tokenizer: Tokenizer) -> HistoryIndex {
    let mut postings: BTreeMap<String, Vec<(usize, u32)>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(history.len());

    for (ordinal, item) in history.iter().enumerate() {
        let tokens = tokenizer.tokenize(&item.full_text());
        doc_lengths.push(tokens.len());
        let mut freqs: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokens {
            *freqs.entry(t).or_insert(0) += 1;
        }
        for (term, tf) in freqs {
            postings.entry(term).or_default().push((ordinal, tf));
        }
    }

    let avg_doc_len = if doc_lengths.is_empty() {
        0.0
    } else {
        doc_lengths.iter().sum::<usize>() as f64 / doc_lengths.len() as f64
    };

    HistoryIndex {
        postings,
        doc_lengths,
        avg_doc_len,
        tokenizer,
    }
}

fn idf(n_docs: usize, df: usize) -> f64 {
    ((n_docs as f64 - df as f64 + 0.5) / (df as f64 + 0.5) + 1.0).ln()
}

/// BM25 score of one document against a query:
/// `Σ_t IDF(t) · tf(k1+1) / (tf + k1(1 − b + b·len/avg_len))` over unique
/// query terms, with `IDF(t) = ln((N − df + 0.5)/(df + 0.5) + 1)`.
pub fn bm25_score(
    index: &HistoryIndex,
    query: &str,
    item_ordinal: usize,
    k1: f64,
    b: f64,
) -> Result<f64> {
    let n_docs = index.n_docs();
    if item_ordinal >= n_docs {
        return Err(HydraError::InvalidArgument(format!(
            "item ordinal {item_ordinal} out of range for index of {n_docs} docs"
        )));
    }
    let mut terms = index.tokenizer.tokenize(query);
    terms.sort();
    terms.dedup();

    let len = index.doc_lengths[item_ordinal] as f64;
    let norm = if index.avg_doc_len > 0.0 {
        1.0 - b + b * len / index.avg_doc_len
    } else {
        1.0 - b
    };

    let mut score = 0.0;
    for term in terms {
        let Some(postings) = index.postings.get(&term) else {
            continue;
        };
        let df = postings.len();
        let Ok(pos) = postings.binary_search_by_key(&item_ordinal, |&(ord, _)| ord) else {
            continue;
        };
        let tf = postings[pos].1 as f64;
        score += idf(n_docs, df) * tf * (k1 + 1.0) / (tf + k1 * norm);
    }
    Ok(score)
}

/// Score every non-excluded item and return the `n` best as
/// `(ordinal, score)`, sorted by score descending with ties broken by lower
/// ordinal.
pub fn retrieve_top(
    index: &HistoryIndex,
    query: &str,
    n: usize,
    exclude: &[usize],
) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = (0..index.n_docs())
        .filter(|ord| !exclude.contains(ord))
        .map(|ord| {
            let score = bm25_score(index, query, ord, DEFAULT_K1, DEFAULT_B)
                .expect("ordinal in range by construction");
            (ord, score)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(n);
    scored
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn items(texts: &[&str]) -> Vec<HistoryItem> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| HistoryItem {
                item_id: format!("h{i}"),
                query_text: t.to_string(),
                answer_text: String::new(),
            })
            .collect()
    }

    #[test]
    fn tokenize_rules() {
        let tok = Tokenizer::default();
        assert!(tok.tokenize("").is_empty());
        assert_eq!(tok.tokenize("A a"), vec!["a", "a"]);
        assert_eq!(tok.tokenize("x-y, z!"), vec!["x", "y", "z"]);
        let keep = Tokenizer { lowercase: false };
        assert_eq!(keep.tokenize("A a"), vec!["A", "a"]);
    }

    #[test]
    fn empty_index() {
        let index = build_index(&[], Tokenizer::default());
        assert_eq!(index.n_docs(), 0);
        assert_eq!(index.avg_doc_len(), 0.0);
        assert!(retrieve_top(&index, "anything", 3, &[]).is_empty());
    }

    #[test]
    fn postings_layout() {
        let index = build_index(&items(&["a b", "b c"]), Tokenizer::default());
        assert_eq!(index.postings("a"), Some(&[(0, 1)][..]));
        assert_eq!(index.postings("b"), Some(&[(0, 1), (1, 1)][..]));
        assert_eq!(index.postings("c"), Some(&[(1, 1)][..]));
    }

    #[test]
    fn lowercase_merges_term_frequency() {
        let index = build_index(&items(&["A a"]), Tokenizer::default());
        assert_eq!(index.postings("a"), Some(&[(0, 2)][..]));
    }

    #[test]
    fn score_no_overlap_is_zero() {
        let index = build_index(&items(&["a b", "b c"]), Tokenizer::default());
        assert_eq!(bm25_score(&index, "z q", 0, 1.2, 0.75).unwrap(), 0.0);
        assert_eq!(bm25_score(&index, "", 0, 1.2, 0.75).unwrap(), 0.0);
        assert_eq!(bm25_score(&index, "", 1, 1.2, 0.75).unwrap(), 0.0);
    }

    #[test]
    fn score_hand_computed() {
        // Corpus {d0="a b", d1="b c"}, query "a": df(a)=1, N=2, so
        // IDF = ln((2-1+0.5)/(1+0.5)+1) = ln 2; len = avg = 2 makes the
        // length norm 1 and tf=1 gives tf(k1+1)/(tf+k1) = 1.
        let index = build_index(&items(&["a b", "b c"]), Tokenizer::default());
        let score = bm25_score(&index, "a", 0, 1.2, 0.75).unwrap();
        assert!((score - 2.0_f64.ln()).abs() < 1e-12, "score={score}");
    }

    #[test]
    fn score_ordinal_out_of_range() {
        let index = build_index(&items(&["a"]), Tokenizer::default());
        assert!(bm25_score(&index, "a", 1, 1.2, 0.75).is_err());
    }

    #[test]
    fn duplicate_query_terms_count_once() {
        let index = build_index(&items(&["a b", "b c"]), Tokenizer::default());
        let once = bm25_score(&index, "a", 0, 1.2, 0.75).unwrap();
        let twice = bm25_score(&index, "a a", 0, 1.2, 0.75).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn retrieve_saturates_and_orders() {
        let index = build_index(&items(&["a a a", "b", "a"]), Tokenizer::default());
        let all = retrieve_top(&index, "a", 10, &[]);
        assert_eq!(all.len(), 3);
        assert_eq!(all[0].0, 0);
        assert_eq!(all[1].0, 2);
        assert_eq!(all[2].0, 1);
        assert_eq!(all[2].1, 0.0);
    }

    #[test]
    fn retrieve_tie_breaks_by_ordinal() {
        // Two identical documents score identically; the earlier one wins.
        let index = build_index(&items(&["same text", "same text"]), Tokenizer::default());
        let top = retrieve_top(&index, "same", 1, &[]);
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].0, 0);
    }

    #[test]
    fn retrieve_respects_exclusions() {
        let index = build_index(&items(&["a", "a", "a"]), Tokenizer::default());
        let top = retrieve_top(&index, "a", 3, &[0, 2]);
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].0, 1);
    }

    /// Brute-force scorer evaluating the BM25 formula directly on raw token
    /// lists, kept independent of the index structures above.
    fn brute_force_rank(
        docs: &[Vec<String>],
        query_terms: &[String],
        n: usize,
        exclude: &[usize],
    ) -> Vec<(usize, f64)> {
        let n_docs = docs.len();
        let avg = if n_docs == 0 {
            0.0
        } else {
            docs.iter().map(|d| d.len()).sum::<usize>() as f64 / n_docs as f64
        };
        let mut uniq: Vec<&String> = query_terms.iter().collect();
        uniq.sort();
        uniq.dedup();
        let mut scored = Vec::new();
        for (ord, doc) in docs.iter().enumerate() {
            if exclude.contains(&ord) {
                continue;
            }
            let mut s = 0.0;
            for term in &uniq {
                let tf = doc.iter().filter(|t| t == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
                let idf = ((n_docs as f64 - df + 0.5) / (df + 0.5) + 1.0).ln();
                let norm = if avg > 0.0 {
                    1.0 - DEFAULT_B + DEFAULT_B * doc.len() as f64 / avg
                } else {
                    1.0 - DEFAULT_B
                };
                s += idf * tf * (DEFAULT_K1 + 1.0) / (tf + DEFAULT_K1 * norm);
            }
            scored.push((ord, s));
        }
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        scored.truncate(n);
        scored
    }

    fn micro_corpus() -> impl Strategy<Value = (Vec<String>, String)> {
        let term = prop::sample::select(vec!["t0", "t1", "t2", "t3", "t4", "t5"]);
        let doc = prop::collection::vec(term.clone(), 0..6).prop_map(|ts| ts.join(" "));
        let docs = prop::collection::vec(doc, 0..8);
        let query = prop::collection::vec(term, 0..4).prop_map(|ts| ts.join(" "));
        (docs, query)
    }

    proptest! {
        #[test]
        fn matches_brute_force_oracle((docs, query) in micro_corpus(), n in 0usize..6) {
            let history = items(&docs.iter().map(|s| s.as_str()).collect::<Vec<_>>());
            let tok = Tokenizer::default();
            let index = build_index(&history, tok);
            let got = retrieve_top(&index, &query, n, &[]);
            let docs_tokens: Vec<Vec<String>> =
                history.iter().map(|h| tok.tokenize(&h.full_text())).collect();
            let want = brute_force_rank(&docs_tokens, &tok.tokenize(&query), n, &[]);
            prop_assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(want.iter()) {
                prop_assert_eq!(g.0, w.0);
                prop_assert!((g.1 - w.1).abs() < 1e-9);
            }
        }

        #[test]
        fn adding_query_term_never_decreases_score(
            (docs, query) in micro_corpus(),
        ) {
            prop_assume!(!docs.is_empty());
            prop_assume!(!query.trim().is_empty());
            let tok = Tokenizer::default();
            let term = tok.tokenize(&query)[0].clone();
            let before = build_index(&items(&docs.iter().map(|s| s.as_str()).collect::<Vec<_>>()), tok);
            let mut boosted_docs = docs.clone();
            boosted_docs[0] = format!("{} {}", boosted_docs[0], term).trim().to_string();
            let after = build_index(
                &items(&boosted_docs.iter().map(|s| s.as_str()).collect::<Vec<_>>()),
                tok,
            );
            // Same document, same corpus statistics apart from doc 0 growing
            // by one occurrence of a query term.
            let s_before = bm25_score(&before, &term, 0, DEFAULT_K1, DEFAULT_B).unwrap();
            let s_after = bm25_score(&after, &term, 0, DEFAULT_K1, DEFAULT_B).unwrap();
            prop_assert!(s_after >= s_before - 1e-12);
        }

        #[test]
        fn deterministic_ranking((docs, query) in micro_corpus()) {
            let history = items(&docs.iter().map(|s| s.as_str()).collect::<Vec<_>>());
            let index = build_index(&history, Tokenizer::default());
            prop_assert_eq!(
                retrieve_top(&index, &query, 5, &[]),
                retrieve_top(&index, &query, 5, &[])
            );
        }
    }
}
