//! Prompt-only baselines on the synthetic task: zero-shot, random
//! in-context items, BM25 retrieval (RAG), and profile-augmented
//! prompting (PAG).
//!
//! The simulator here follows its prompt (icl-weight 1.0), so baselines
//! that inject the user's own history do markedly better than zero-shot.
//!
//! Run: `cargo run -p hydra --example baselines`

use hydra::pipeline::{
    prepare_dataset, run_on_dataset, BackendConfig, Mode, RunConfig, SimulatorKind,
};

fn main() {
    let out_root = std::env::temp_dir().join("hydra_baselines_example");
    let base = RunConfig {
        synth_users: 12,
        synth_history: 16,
        backend: BackendConfig::Simulator {
            kind: SimulatorKind::Auto,
            icl_weight: 1.0,
        },
        seed: 21,
        ..RunConfig::default()
    };
    let ds = prepare_dataset(&base).unwrap();
    println!(
        "synthetic task: {} train users, {} test users, {} conflict queries\n",
        ds.train_users.len(),
        ds.test_users.len(),
        ds.conflict_queries().len()
    );

    println!("{:<12} {:>9} {:>9}", "mode", "accuracy", "macro-F1");
    for (name, mode) in [
        ("zero-shot", Mode::ZeroShot),
        ("icl-random", Mode::IclRandom),
        ("rag", Mode::Rag),
        ("pag", Mode::Pag),
    ] {
        let cfg = RunConfig {
            mode,
            out_dir: out_root.join(name),
            ..base.clone()
        };
        let report = run_on_dataset(&cfg, &ds).unwrap();
        println!(
            "{name:<12} {:>9.3} {:>9.3}",
            report.get("accuracy").unwrap(),
            report.get("macro_f1").unwrap()
        );
    }

    println!("\nartifacts under {}", out_root.display());
}
