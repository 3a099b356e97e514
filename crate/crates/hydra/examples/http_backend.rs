//! Running against a real OpenAI-compatible endpoint.
//!
//! Needs the `HYDRA_API_KEY` environment variable and a reachable
//! endpoint; without a key this example explains the setup and exits.
//! Point `base_url` at any chat-completions server (a local llama.cpp or
//! vLLM instance works).
//!
//! Run: `HYDRA_API_KEY=... cargo run -p hydra --example http_backend`

use hydra::llm::{GenerationRequest, HttpBackend, HttpConfig, API_KEY_ENV};

fn main() {
    let base_url =
        std::env::var("HYDRA_BASE_URL").unwrap_or_else(|_| "https://api.openai.com".to_string());
    let model = std::env::var("HYDRA_MODEL").unwrap_or_else(|_| "gpt-3.5-turbo".to_string());

    let config = HttpConfig {
        base_url: base_url.clone(),
        model: model.clone(),
        max_attempts: 5,
        initial_backoff_ms: 500,
        timeout_secs: 60,
    };

    let backend = match HttpBackend::new(config) {
        Ok(b) => b,
        Err(err) => {
            eprintln!("{err}");
            eprintln!();
            eprintln!("To run this example:");
            eprintln!("  export {API_KEY_ENV}=<your key>");
            eprintln!("  export HYDRA_BASE_URL=<endpoint root>   # optional");
            eprintln!("  export HYDRA_MODEL=<model name>         # optional");
            return;
        }
    };

    println!("endpoint: {base_url}, model: {model}");
    let req = GenerationRequest {
        prompt: "\"Rust Ownership Explained\" is the title for \"a post about memory safety\". \
                 Write a title for \"a post about async executors\""
            .to_string(),
        n_samples: 3,
        temperature: 1.0,
        max_tokens: 32,
        seed: 0,
    };
    match backend.generate(&req) {
        Ok(samples) => {
            println!("{} samples:", samples.len());
            for (i, s) in samples.iter().enumerate() {
                println!("  [{i}] {s}");
            }
            println!("requests issued: {}", backend.call_count());
        }
        Err(err) => eprintln!("generation failed: {err}"),
    }
}
