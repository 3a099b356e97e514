//! The deterministic offline LLM.
//!
//! Everything in this project can run without network access: the
//! simulator maps (prompt, seed, sample index) to responses through a
//! stable hash. This example walks through the four behaviors and the
//! labeling functions.
//!
//! Run: `cargo run -p hydra --example simulator_backend`

use std::collections::BTreeMap;

use hydra::llm::{label_exact, label_rouge, GenerationRequest, Simulator, SimulatorBehavior};

fn request(prompt: &str, n: usize, temperature: f64) -> GenerationRequest {
    GenerationRequest {
        prompt: prompt.to_string(),
        n_samples: n,
        temperature,
        max_tokens: 32,
        seed: 7,
    }
}

fn main() {
    // Label sampling: the stand-in for classification tasks. With
    // icl_weight > 0 the sampler leans toward labels restated in the
    // prompt; with 0 it ignores the prompt entirely.
    let sampler = Simulator::new(SimulatorBehavior::LabelSampler {
        labels: vec!["A".into(), "B".into()],
        icl_weight: 1.0,
    });
    let prompt = "the label for \"x\" is \"B\", and the label for \"y\" is \"B\". classify z";
    let samples = sampler.generate(&request(prompt, 10, 1.0));
    println!("biased samples (prompt says B twice): {samples:?}");
    let mode = sampler.generate(&request(prompt, 1, 0.0));
    println!("temperature 0 mode response:          {mode:?}");

    // Purity: identical requests give identical responses.
    let again = sampler.generate(&request(prompt, 10, 1.0));
    println!("replay is identical: {}", samples == again);

    // Echo: a perfect oracle for tests; it answers with whatever the
    // prompt's trailing query maps to.
    let mut answers = BTreeMap::new();
    answers.insert("classify z".to_string(), "B".to_string());
    let oracle = Simulator::echo(answers);
    println!(
        "echo oracle says:  {:?}",
        oracle.generate(&request(prompt, 1, 0.0))
    );

    // Fixed: always the same string, handy for forcing all-wrong labels.
    let stubborn = Simulator::fixed("A");
    println!(
        "fixed backend says: {:?}",
        stubborn.generate(&request(prompt, 3, 1.0))
    );

    // Templated: free-text stand-in that recombines prompt fragments.
    let writer = Simulator::new(SimulatorBehavior::Templated);
    let gen_prompt = "\"Old Headline\" is the title for \"old article text\". Write a headline";
    println!("\ntemplated samples:");
    for sample in writer.generate(&request(gen_prompt, 4, 1.0)) {
        println!("  {sample}");
    }

    // Labeling functions turn generations into binary training targets.
    println!(
        "\nlabel_exact(\" Sports \", \"sports\") = {}",
        label_exact(" Sports ", "sports")
    );
    println!(
        "label_exact(\"politics\", \"crime\")  = {}",
        label_exact("politics", "crime")
    );
    println!(
        "label_rouge(\"the cat sat\", \"the cat\", 0.8) = {} (ROUGE-1 F1 is exactly 0.8)",
        label_rouge("the cat sat", "the cat", 0.8)
    );
}
