//! Dataset ingestion: the JSONL schema, validation errors, user splitting,
//! and persistence.
//!
//! One user per line: `{"user_id", "input", "output", "profile":
//! [{"id", "input", "output"}, ...]}`. An optional `schema-version: 1`
//! first line is skipped.
//!
//! Run: `cargo run -p hydra --example lamp_ingest`

use std::io::Write;

use hydra::datamodel::{load_dataset, split_users, Dataset, TaskId, TaskSpec};

fn main() {
    let dir = std::env::temp_dir().join("hydra_ingest_example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("users.jsonl");

    let mut file = std::fs::File::create(&path).unwrap();
    writeln!(file, "schema-version: 1").unwrap();
    for i in 0..6 {
        writeln!(
            file,
            r#"{{"user_id":"journalist{i}","input":"article {i} about local sports results","output":"sports","profile":[{{"id":"p0","input":"older article {i}a","output":"sports"}},{{"id":"p1","input":"older article {i}b","output":"politics"}}]}}"#
        )
        .unwrap();
    }
    drop(file);

    let task = TaskSpec::for_task(TaskId::Lamp2N);
    let ds = load_dataset(&path, task).unwrap();
    println!(
        "loaded {} users from {}",
        ds.train_users.len(),
        path.display()
    );
    let first = &ds.train_users[0];
    println!(
        "first user: {} with {} history items, gold {:?}",
        first.user_id,
        first.history.len(),
        first.gold
    );

    // Deterministic user split; train and test never share a user.
    let split = split_users(&ds, 4, 2, 7).unwrap();
    println!(
        "split into {} train / {} test users",
        split.train_users.len(),
        split.test_users.len()
    );
    let again = split_users(&ds, 4, 2, 7).unwrap();
    println!("same seed reproduces the split: {}", split == again);

    // Persist and reload the split dataset.
    let json_path = dir.join("dataset.json");
    split.save_json(&json_path).unwrap();
    let reloaded = Dataset::load_json(&json_path).unwrap();
    println!(
        "round trip through {} intact: {}",
        json_path.display(),
        reloaded == split
    );

    // Malformed inputs are rejected with the offending line number.
    let bad_path = dir.join("bad.jsonl");
    std::fs::write(
        &bad_path,
        r#"{"user_id":"u1","input":"q","output":"g","profile":[{"id":"p","input":"x","output":"y"}]}
{"user_id":"u1","input":"q2","output":"g2","profile":[{"id":"p","input":"x","output":"y"}]}
"#,
    )
    .unwrap();
    match load_dataset(&bad_path, TaskSpec::for_task(TaskId::Lamp2N)) {
        Err(err) => println!("\nduplicate user rejected: {err}"),
        Ok(_) => println!("\nunexpectedly accepted duplicate user"),
    }
}
