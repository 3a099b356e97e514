//! The headline experiment: per-user heads against a single shared model.
//!
//! The synthetic task pairs users who ask the same question but want
//! opposite answers. A shared model cannot beat chance on those conflict
//! queries; per-user heads resolve them. This runs the full learned
//! pipeline both ways and prints the gap.
//!
//! Run: `cargo run -p hydra --example synthetic_ablation`

use hydra::pipeline::{
    conflict_accuracy, prepare_dataset, read_jsonl, run_on_dataset, AblationFlags, BackendConfig,
    Mode, PredictionRow, RunConfig, SimulatorKind,
};

fn main() {
    let out_root = std::env::temp_dir().join("hydra_ablation_example");
    let base = RunConfig {
        synth_users: 12,
        synth_history: 20,
        mode: Mode::HydraFull,
        backend: BackendConfig::Simulator {
            kind: SimulatorKind::Auto,
            icl_weight: 0.0,
        },
        adapter_train: hydra::model::TrainConfig {
            learning_rate: 0.05,
            epochs: 4,
            batch_size: 32,
            clip: None,
        },
        seed: 5,
        ..RunConfig::default()
    };
    let ds = prepare_dataset(&base).unwrap();
    println!(
        "{} train users, {} test users; every test query text is shared by two users with \
         opposite golds\n",
        ds.train_users.len(),
        ds.test_users.len()
    );

    let configs = [
        ("personalized heads", false, false),
        ("shared reranker only", true, false),
        ("shared adapter only", false, true),
        ("fully shared", true, true),
    ];

    println!(
        "{:<22} {:>9} {:>18}",
        "configuration", "accuracy", "conflict accuracy"
    );
    for (name, no_rr, no_ad) in configs {
        let cfg = RunConfig {
            ablation: AblationFlags {
                no_personal_reranker: no_rr,
                no_personal_adapter: no_ad,
            },
            out_dir: out_root.join(name.replace(' ', "_")),
            ..base.clone()
        };
        let report = run_on_dataset(&cfg, &ds).unwrap();
        let preds: Vec<PredictionRow> = read_jsonl(&cfg.out_dir.join("predictions.jsonl")).unwrap();
        let conflict = conflict_accuracy(&ds, &preds).unwrap();
        println!(
            "{name:<22} {:>9.3} {conflict:>18.3}",
            report.get("accuracy").unwrap()
        );
    }

    println!(
        "\nThe shared adapter is pinned near 0.5 on conflict queries: both users of a pair \
         get identical scores, so exactly one of them can be right."
    );
    println!("artifacts under {}", out_root.display());
}
