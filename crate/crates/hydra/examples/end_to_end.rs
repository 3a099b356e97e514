//! The whole pipeline on one page, phase by phase.
//!
//! Same flow as `hydra run --set mode=hydra-full`, but spelled out with
//! the library API: reranker datagen, joint training, frozen-base head
//! fitting, reranking, adapter datagen, training, fitting, and best-of-b
//! inference.
//!
//! Run: `cargo run -p hydra --example end_to_end`

use hydra::pipeline::{
    adapter_fit_data, adapter_inference, adapter_training_data, build_client, evaluate_predictions,
    fit_test_heads, group_examples, phase_seed, prepare_dataset, reranker_fit_data,
    reranker_training_data, train_component_model, ContextSelector, RunConfig,
};

fn main() {
    let cfg = RunConfig {
        synth_users: 10,
        synth_history: 16,
        out_dir: std::env::temp_dir().join("hydra_end_to_end_example"),
        seed: 31,
        adapter_train: hydra::model::TrainConfig {
            learning_rate: 0.05,
            epochs: 4,
            batch_size: 32,
            clip: None,
        },
        ..RunConfig::default()
    };
    let ds = prepare_dataset(&cfg).unwrap();
    let client = build_client(&cfg, &ds.task).unwrap();
    println!(
        "dataset: {} train / {} test users on task {}\n",
        ds.train_users.len(),
        ds.test_users.len(),
        ds.task.task_id
    );

    // Reranker: label candidates, train jointly, fit test heads.
    let rr_train = reranker_training_data(&ds, &client, &cfg).unwrap();
    println!("reranker training examples: {}", rr_train.len());
    let mut reranker = train_component_model(
        rr_train.into_iter().map(|e| (e.user_id, e.x, e.y)),
        false,
        cfg.encoder,
        &cfg.reranker_train,
        phase_seed(cfg.seed, "reranker.init"),
        phase_seed(cfg.seed, "reranker.train"),
    )
    .unwrap();
    let rr_fit = reranker_fit_data(&ds, &client, &cfg).unwrap();
    println!("reranker fit examples:      {}", rr_fit.len());
    fit_test_heads(
        &mut reranker,
        &group_examples(rr_fit.into_iter().map(|e| (e.user_id, e.x, e.y))),
        false,
        &cfg.reranker_train,
    )
    .unwrap();
    println!("reranker heads:             {}\n", reranker.n_heads());

    // Adapter: generations through the reranked context, train, fit.
    let selector = ContextSelector::reranked(&reranker, false, cfg.rerank);
    let ad_train = adapter_training_data(&ds, &client, &selector, &cfg).unwrap();
    println!("adapter training examples:  {}", ad_train.len());
    let mut adapter = train_component_model(
        ad_train.into_iter().map(|e| (e.user_id, e.x, e.y)),
        false,
        cfg.encoder,
        &cfg.adapter_train,
        phase_seed(cfg.seed, "adapter.init"),
        phase_seed(cfg.seed, "adapter.train"),
    )
    .unwrap();
    let ad_fit = adapter_fit_data(&ds, &client, &selector, &cfg).unwrap();
    println!("adapter fit examples:       {}", ad_fit.len());
    fit_test_heads(
        &mut adapter,
        &group_examples(ad_fit.into_iter().map(|e| (e.user_id, e.x, e.y))),
        false,
        &cfg.adapter_train,
    )
    .unwrap();

    // Inference: b samples per test query, the head picks one.
    let (gen_rows, predictions) =
        adapter_inference(&ds, &client, &selector, &adapter, &cfg).unwrap();
    println!("\nper-query selections:");
    for row in &gen_rows {
        println!(
            "  {}: candidates {:?} -> chose {:?} (gold {:?})",
            row.user_id, row.generations, row.generations[row.chosen], row.gold
        );
    }

    let report = evaluate_predictions(&ds.task, &predictions).unwrap();
    println!("\n{}", report.to_text());
    println!("backend calls: {}", client.backend_calls());
}
