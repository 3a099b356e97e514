//! Saving and loading factorized models.
//!
//! The binary format stores the base tensors and the whole head table;
//! round trips are byte-stable, and corrupt files are rejected instead of
//! silently misloading.
//!
//! Run: `cargo run -p hydra --example model_persistence`

use hydra::model::{FactorizedModel, TextEncoderConfig, TrainConfig};

fn main() {
    let dir = std::env::temp_dir().join("hydra_persistence_example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.bin");

    let mut model = FactorizedModel::new(
        TextEncoderConfig {
            hash_dim: 512,
            hidden_dim: 16,
            ngram_max: 2,
        },
        123,
    )
    .unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.05,
        epochs: 1,
        batch_size: 1,
        clip: None,
    };
    for (user, text, label) in [
        ("ana", "[CLS] q [SEP] first [SEP]", 1u8),
        ("ana", "[CLS] q [SEP] second [SEP]", 0),
        ("ben", "[CLS] q [SEP] first [SEP]", 0),
    ] {
        model.ensure_head(user);
        model.train_step(user, text, label, &cfg).unwrap();
    }

    model.save(&path).unwrap();
    let size = std::fs::metadata(&path).unwrap().len();
    println!(
        "saved {} heads in {size} bytes -> {}",
        model.n_heads(),
        path.display()
    );

    let loaded = FactorizedModel::load(&path).unwrap();
    println!(
        "reload preserves base bytes: {}",
        loaded.base_bytes() == model.base_bytes()
    );
    let probe = "[CLS] q [SEP] probe text [SEP]";
    println!(
        "predictions identical after reload: {}",
        loaded.predict("ana", probe).unwrap() == model.predict("ana", probe).unwrap()
    );

    // Truncation is detected.
    let bytes = std::fs::read(&path).unwrap();
    let cut = dir.join("truncated.bin");
    std::fs::write(&cut, &bytes[..bytes.len() / 3]).unwrap();
    match FactorizedModel::load(&cut) {
        Err(err) => println!("truncated file rejected: {err}"),
        Ok(_) => println!("unexpectedly loaded a truncated file"),
    }

    // So is garbage.
    let junk = dir.join("junk.bin");
    std::fs::write(&junk, b"this is not a model").unwrap();
    match FactorizedModel::load(&junk) {
        Err(err) => println!("junk file rejected: {err}"),
        Ok(_) => println!("unexpectedly loaded junk"),
    }
}
