//! BM25 retrieval over one user's behavior history.
//!
//! Builds an inverted index over (input, output) pairs and ranks items for
//! a query, showing how scores react to term frequency, rarity, and
//! document length.
//!
//! Run: `cargo run -p hydra --example bm25_retrieval`

use hydra::datamodel::HistoryItem;
use hydra::retriever::{bm25_score, build_index, retrieve_top, Tokenizer, DEFAULT_B, DEFAULT_K1};

fn main() {
    let history = vec![
        item("h0", "pasta recipe with garlic and olive oil", "dinner"),
        item("h1", "garlic bread recipe", "side dish"),
        item("h2", "training schedule for the marathon", "sports"),
        item("h3", "olive oil taste test notes", "pantry"),
        item("h4", "quick pasta pasta pasta variations", "dinner"),
    ];

    let index = build_index(&history, Tokenizer::default());
    println!(
        "indexed {} documents, avg length {:.2}\n",
        index.n_docs(),
        index.avg_doc_len()
    );

    for query in [
        "pasta recipe",
        "garlic",
        "marathon training",
        "unrelated query",
    ] {
        println!("query: {query:?}");
        let top = retrieve_top(&index, query, 3, &[]);
        if top.is_empty() {
            println!("  (no candidates)");
        }
        for (ord, score) in top {
            println!(
                "  {score:.4}  {}  {}",
                history[ord].item_id, history[ord].query_text
            );
        }
        println!();
    }

    // Repetition raises a document's score sublinearly: h4 repeats "pasta"
    // three times but does not get triple the score of h0.
    let s_once = bm25_score(&index, "pasta", 0, DEFAULT_K1, DEFAULT_B).unwrap();
    let s_thrice = bm25_score(&index, "pasta", 4, DEFAULT_K1, DEFAULT_B).unwrap();
    println!("tf saturation: one \"pasta\" scores {s_once:.4}, three score {s_thrice:.4}");

    // Documents sharing no query term score exactly zero.
    let zero = bm25_score(&index, "pasta", 2, DEFAULT_K1, DEFAULT_B).unwrap();
    println!("no shared terms: {zero:.4}");

    // Excluding ordinals supports leave-one-out retrieval during training
    // data construction.
    let without_best = retrieve_top(&index, "pasta recipe", 2, &[0]);
    println!(
        "leave-one-out (excluding h0): {:?}",
        without_best
            .iter()
            .map(|(ord, _)| &history[*ord].item_id)
            .collect::<Vec<_>>()
    );
}

fn item(id: &str, input: &str, output: &str) -> HistoryItem {
    HistoryItem {
        item_id: id.to_string(),
        query_text: input.to_string(),
        answer_text: output.to_string(),
    }
}
