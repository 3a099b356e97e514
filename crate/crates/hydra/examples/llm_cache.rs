//! Response caching across runs.
//!
//! A cold run pays for every backend call; a warm rerun with the same
//! config answers from the content-addressed cache and produces the same
//! report with far fewer calls.
//!
//! Run: `cargo run -p hydra --example llm_cache`

use hydra::datamodel::{TaskId, TaskSpec};
use hydra::llm::{GenerationRequest, LlmBackend, Simulator, SimulatorBehavior};
use hydra::pipeline::{build_client, prepare_dataset, LlmClient, Mode, RunConfig};

fn main() {
    let root = std::env::temp_dir().join("hydra_cache_example");
    let _ = std::fs::remove_dir_all(&root);

    // Low-level view: a cached client only touches the backend on misses.
    let cache = hydra::pipeline::LlmCache::open(root.join("store")).unwrap();
    let backend = LlmBackend::Simulator(Simulator::new(SimulatorBehavior::LabelSampler {
        labels: TaskSpec::for_task(TaskId::Synthetic).label_set.clone(),
        icl_weight: 0.0,
    }));
    let client = LlmClient::new(backend, Some(cache), true);
    let req = GenerationRequest {
        prompt: "classify this digest".into(),
        n_samples: 4,
        temperature: 1.0,
        max_tokens: 8,
        seed: 3,
    };
    let first = client.generate(&req).unwrap();
    let second = client.generate(&req).unwrap();
    let stats = client.cache_stats().unwrap();
    println!("responses identical: {}", first == second);
    println!(
        "backend calls: {} (hits {}, misses {})\n",
        client.backend_calls(),
        stats.hits,
        stats.misses
    );

    // Pipeline view: cold run, then warm rerun with the same cache dir.
    let cfg = RunConfig {
        synth_users: 8,
        synth_history: 10,
        mode: Mode::HydraAdapterOnly,
        cache_dir: Some(root.join("pipeline_cache")),
        out_dir: root.join("cold"),
        seed: 13,
        ..RunConfig::default()
    };
    let ds = prepare_dataset(&cfg).unwrap();

    let client = build_client(&cfg, &ds.task).unwrap();
    let cold_report = run_on_dataset_with(&cfg, &ds, &client);
    println!("cold run:  {} backend calls", client.backend_calls());

    let warm_cfg = RunConfig {
        out_dir: root.join("warm"),
        ..cfg.clone()
    };
    let warm_client = build_client(&warm_cfg, &ds.task).unwrap();
    let warm_report = run_on_dataset_with(&warm_cfg, &ds, &warm_client);
    println!("warm run:  {} backend calls", warm_client.backend_calls());
    println!("reports identical: {}", cold_report == warm_report);
}

/// Drive the learned pipeline with an explicit client so its call counter
/// stays visible afterwards.
fn run_on_dataset_with(
    cfg: &RunConfig,
    ds: &hydra::datamodel::Dataset,
    client: &LlmClient,
) -> String {
    let output = hydra::pipeline::run_hydra(cfg, ds, client).unwrap();
    output.report.to_text()
}
