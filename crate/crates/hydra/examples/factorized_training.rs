//! The shared-base / per-user-head model up close.
//!
//! Two users disagree about the same inputs. Joint training gives each a
//! head that learns their own preference while the base stays shared;
//! fitting a third user later leaves the base bitwise untouched. Gradients
//! are validated against central finite differences on the spot.
//!
//! Run: `cargo run -p hydra --example factorized_training`

use hydra::model::{ce_loss, FactorizedModel, TextEncoderConfig, TrainConfig, TrainExample};

fn main() {
    let config = TextEncoderConfig {
        hash_dim: 256,
        hidden_dim: 16,
        ngram_max: 2,
    };
    let mut model = FactorizedModel::new(config, 42).unwrap();

    // Conflicting preferences: the same candidate answer is good for one
    // user and bad for the other.
    let mut examples = Vec::new();
    for i in 0..40 {
        let candidate = if i % 2 == 0 { "alpha" } else { "beta" };
        let x = format!("[CLS] pick a word [SEP] {candidate} [SEP]");
        examples.push(TrainExample {
            head_key: "alice".into(),
            text: x.clone(),
            label: (candidate == "alpha") as u8,
        });
        examples.push(TrainExample {
            head_key: "bob".into(),
            text: x,
            label: (candidate == "beta") as u8,
        });
    }

    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 8,
        batch_size: 16,
        clip: None,
    };
    let losses = model.train_multi_user(&examples, &cfg, 3).unwrap();
    println!(
        "epoch losses: {:?}",
        losses.iter().map(|l| format!("{l:.3}")).collect::<Vec<_>>()
    );

    let x_alpha = "[CLS] pick a word [SEP] alpha [SEP]";
    let x_beta = "[CLS] pick a word [SEP] beta [SEP]";
    for user in ["alice", "bob"] {
        let p_alpha = model.score(user, x_alpha).unwrap();
        let p_beta = model.score(user, x_beta).unwrap();
        println!("{user}: score(alpha) = {p_alpha:.3}, score(beta) = {p_beta:.3}");
    }

    // Heads are isolated: training carol never moves alice or bob.
    let alice_before = model.head_bytes("alice").unwrap();
    let base_before = model.base_bytes();
    let carol_examples: Vec<(String, u8)> = (0..20)
        .map(|i| {
            let candidate = if i % 2 == 0 { "alpha" } else { "beta" };
            (
                format!("[CLS] pick a word [SEP] {candidate} [SEP]"),
                (candidate == "beta") as u8,
            )
        })
        .collect();
    model
        .fit_new_head(
            "carol",
            &carol_examples,
            &TrainConfig {
                learning_rate: 0.1,
                epochs: 6,
                batch_size: 1,
                clip: None,
            },
        )
        .unwrap();
    println!(
        "\nafter fitting carol: base unchanged = {}, alice unchanged = {}",
        model.base_bytes() == base_before,
        model.head_bytes("alice").unwrap() == alice_before
    );
    println!(
        "carol (fitted with frozen base): score(alpha) = {:.3}, score(beta) = {:.3}",
        model.score("carol", x_alpha).unwrap(),
        model.score("carol", x_beta).unwrap()
    );

    // Spot gradient check against central finite differences.
    let (_, grads) = model.gradients("alice", x_alpha, 1).unwrap();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, j) in [(0usize, 0usize), (3, 5), (7, 2)] {
        let analytic = grads.head.w1[[i, j]];
        let mut plus = clone(&model, "alice");
        plus.head_mut("alice").unwrap().w1[[i, j]] += eps;
        let mut minus = clone(&model, "alice");
        minus.head_mut("alice").unwrap().w1[[i, j]] -= eps;
        let numeric = (loss(&plus, x_alpha) - loss(&minus, x_alpha)) / (2.0 * eps);
        worst = worst.max((analytic - numeric).abs());
        println!("dL/dW1[{i},{j}]: analytic {analytic:+.6}, finite-diff {numeric:+.6}");
    }
    println!("max |analytic - numeric| = {worst:.2e}");
}

fn clone(model: &FactorizedModel, user: &str) -> FactorizedModel {
    FactorizedModel::from_parts(
        *model.config(),
        model.base().clone(),
        [(user.to_string(), model.head(user).unwrap().clone())].into(),
        model.seed(),
    )
}

fn loss(model: &FactorizedModel, x: &str) -> f64 {
    ce_loss(&model.predict("alice", x).unwrap(), 1)
}
