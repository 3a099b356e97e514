//! The evaluation metrics, with hand-checkable values.
//!
//! Run: `cargo run -p hydra --example metrics_suite`

use hydra::metrics::{
    accuracy, bleu, compute_report, macro_f1, mae_rmse, parse_rating, rouge1, rouge_l,
};

fn strs(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn main() {
    // Classification: accuracy uses normalized exact match.
    let preds = strs(&[" Sports ", "politics", "crime", "travel"]);
    let golds = strs(&["sports", "politics", "politics", "travel"]);
    println!("accuracy: {:.4}", accuracy(&preds, &golds).unwrap());

    // Macro-F1 averages per-class F1 over the whole label set; classes the
    // predictor never emits drag the mean down.
    let labels = strs(&["A", "B"]);
    let all_a = strs(&["A", "A", "A", "A"]);
    let half = strs(&["A", "A", "B", "B"]);
    println!(
        "macro-F1 (always predict A, golds half A half B): {:.4}",
        macro_f1(&all_a, &half, &labels).unwrap()
    );

    // Ordinal ratings: unparseable predictions fall back to the midpoint.
    let (mae, rmse) = mae_rmse(&strs(&["1", "5"]), &strs(&["2", "3"])).unwrap();
    println!("MAE {mae:.4}, RMSE {rmse:.4} for preds [1,5] vs golds [2,3]");
    println!(
        "parse_rating(\"loved it, 5 stars\") = {}",
        parse_rating("loved it, 5 stars")
    );
    println!(
        "parse_rating(\"meh\") = {} (midpoint fallback)",
        parse_rating("meh")
    );

    // Text overlap metrics.
    println!(
        "\nrouge1(\"the cat sat\", \"the cat\")   = {:.4}",
        rouge1("the cat sat", "the cat")
    );
    println!(
        "rougeL(\"a b c d\", \"a c d\")        = {:.4}",
        rouge_l("a b c d", "a c d")
    );
    println!(
        "bleu(\"the the the\", \"the cat\")    = {:.4}",
        bleu("the the the", "the cat")
    );
    println!(
        "bleu(identical long sentence)      = {:.4}",
        bleu(
            "a full sentence of many words",
            "a full sentence of many words"
        )
    );
    println!(
        "bleu(no shared unigrams)           = {:.4}",
        bleu("aa bb cc dd", "xx yy zz ww")
    );

    // Reports bundle whatever metric set a task declares.
    let report = compute_report(
        &strs(&["rouge1", "rougeL", "bleu"]),
        &[],
        &strs(&[
            "generated headline about markets",
            "another generated title",
        ]),
        &strs(&["a headline about markets", "another reference title"]),
    )
    .unwrap();
    println!("\ngeneration report:\n{}", report.to_text());
}
