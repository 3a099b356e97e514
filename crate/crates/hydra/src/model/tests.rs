use super::*;
use ndarray::array;

fn small_model(seed: u64) -> FactorizedModel {
    FactorizedModel::new(
        TextEncoderConfig {
            hash_dim: 16,
            hidden_dim: 4,
            ngram_max: 2,
        },
        seed,
    )
    .unwrap()
}

fn cfg(lr: f64) -> TrainConfig {
    TrainConfig {
        learning_rate: lr,
        epochs: 1,
        batch_size: 4,
        clip: None,
    }
}

#[test]
fn encode_is_deterministic_and_bounded() {
    let model = small_model(1);
    let a = model.encode("some text to encode");
    let b = model.encode("some text to encode");
    assert_eq!(a, b);
    assert!(a.iter().all(|v| v.abs() <= 1.0));
}

#[test]
fn encode_empty_string_follows_zero_feature_path() {
    let model = small_model(1);
    let s = model.encode("");
    // x = 0 so s = tanh(M·0 + c) = tanh(c); bias starts at zero.
    let want = model.base().bias.mapv(f64::tanh);
    assert_eq!(s, want);
}

#[test]
fn encode_distinguishes_texts() {
    let model = small_model(1);
    assert_ne!(model.encode("alpha beta"), model.encode("alpha gamma"));
}

#[test]
fn head_forward_zero_head_is_uniform() {
    let head = HeadParams {
        w1: Array2::zeros((4, 4)),
        b1: Array1::zeros(4),
        w2: Array2::zeros((OUT_DIM, 4)),
        b2: Array1::zeros(OUT_DIM),
    };
    let p = head_forward(&head, &Array1::zeros(4)).unwrap();
    assert!((p[0] - 0.5).abs() < 1e-12);
    assert!((p[1] - 0.5).abs() < 1e-12);
}

#[test]
fn head_forward_hand_case() {
    // d=1: s=[1], W1=[1], b1=0 gives tanh(1); W2 rows [1] and [-1] give
    // logits ±tanh(1) and softmax ≈ [0.8210, 0.1790].
    let head = HeadParams {
        w1: array![[1.0]],
        b1: array![0.0],
        w2: array![[1.0], [-1.0]],
        b2: array![0.0, 0.0],
    };
    let p = head_forward(&head, &array![1.0]).unwrap();
    assert!((p[0] - 0.8210).abs() < 1e-4, "p={p}");
    assert!((p[1] - 0.1790).abs() < 1e-4, "p={p}");
    assert!((p.sum() - 1.0).abs() < 1e-12);
}

#[test]
fn head_forward_rejects_bad_dims() {
    let head = HeadParams {
        w1: Array2::zeros((4, 4)),
        b1: Array1::zeros(4),
        w2: Array2::zeros((OUT_DIM, 4)),
        b2: Array1::zeros(OUT_DIM),
    };
    assert!(head_forward(&head, &Array1::zeros(3)).is_err());
}

#[test]
fn ce_loss_hand_cases() {
    assert!((ce_loss(&array![0.5, 0.5], 1) - std::f64::consts::LN_2).abs() < 1e-12);
    assert!((ce_loss(&array![0.5, 0.5], 0) - std::f64::consts::LN_2).abs() < 1e-12);
    // Perfect prediction: clamped at 1e-12, loss effectively zero.
    assert!(ce_loss(&array![0.0, 1.0], 1) < 1e-9);
    assert!(ce_loss(&array![1.0, 0.0], 0) < 1e-9);
    assert!(ce_loss(&array![1.0, 0.0], 1) > 20.0);
}

#[test]
fn predict_requires_head() {
    let model = small_model(3);
    match model.predict("nobody", "text") {
        Err(HydraError::MissingHead(u)) => assert_eq!(u, "nobody"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn predict_is_pure_and_normalized() {
    let mut model = small_model(3);
    model.ensure_head("u1");
    let a = model.predict("u1", "hello world").unwrap();
    let b = model.predict("u1", "hello world").unwrap();
    assert_eq!(a, b);
    assert!((a.sum() - 1.0).abs() < 1e-9);
    assert!(a.iter().all(|v| *v > 0.0 && *v < 1.0));
}

#[test]
fn identical_seeds_give_identical_heads() {
    let mut m1 = small_model(9);
    let mut m2 = small_model(9);
    m1.ensure_head("u1");
    m2.ensure_head("u1");
    assert_eq!(m1.head_bytes("u1"), m2.head_bytes("u1"));
    assert_eq!(
        m1.predict("u1", "same text").unwrap(),
        m2.predict("u1", "same text").unwrap()
    );
}

#[test]
fn shifting_both_logit_biases_preserves_argmax() {
    let mut model = small_model(5);
    model.ensure_head("u");
    let before = model.predict("u", "query text").unwrap();
    let arg_before = if before[1] > before[0] { 1 } else { 0 };
    {
        let head = model.head_mut("u").unwrap();
        head.b2 += 3.71;
    }
    let after = model.predict("u", "query text").unwrap();
    let arg_after = if after[1] > after[0] { 1 } else { 0 };
    assert_eq!(arg_before, arg_after);
    assert!((after.sum() - 1.0).abs() < 1e-9);
}

#[test]
fn gradients_match_finite_differences() {
    let eps = 1e-5;
    let tol = 1e-4;
    for seed in 0..8u64 {
        let mut model = small_model(seed);
        model.ensure_head("u");
        let text = "alpha beta gamma";
        let label = (seed % 2) as u8;
        let (_, grads) = model.gradients("u", text, label).unwrap();
        let dense_embed = grads.embed_dense(16, 4);

        let loss_at = |m: &FactorizedModel| {
            let p = m.predict("u", text).unwrap();
            ce_loss(&p, label)
        };
        let check = |analytic: f64, nudge: &mut dyn FnMut(&mut FactorizedModel, f64)| {
            let mut plus = FactorizedModel::from_parts(
                *model.config(),
                model.base().clone(),
                [("u".to_string(), model.head("u").unwrap().clone())].into(),
                model.seed(),
            );
            nudge(&mut plus, eps);
            let mut minus = FactorizedModel::from_parts(
                *model.config(),
                model.base().clone(),
                [("u".to_string(), model.head("u").unwrap().clone())].into(),
                model.seed(),
            );
            nudge(&mut minus, -eps);
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-2);
            assert!(rel <= tol, "analytic {analytic} vs numeric {numeric}");
        };

        for i in 0..16 {
            for j in 0..4 {
                check(dense_embed[[i, j]], &mut |m, d| {
                    m.base_mut().embed[[i, j]] += d
                });
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                check(grads.mix[[i, j]], &mut |m, d| m.base_mut().mix[[i, j]] += d);
                check(grads.head.w1[[i, j]], &mut |m, d| {
                    m.head_mut("u").unwrap().w1[[i, j]] += d
                });
            }
            check(grads.bias[i], &mut |m, d| m.base_mut().bias[i] += d);
            check(grads.head.b1[i], &mut |m, d| {
                m.head_mut("u").unwrap().b1[i] += d
            });
            check(grads.head.w2[[0, i]], &mut |m, d| {
                m.head_mut("u").unwrap().w2[[0, i]] += d
            });
            check(grads.head.w2[[1, i]], &mut |m, d| {
                m.head_mut("u").unwrap().w2[[1, i]] += d
            });
        }
        check(grads.head.b2[0], &mut |m, d| {
            m.head_mut("u").unwrap().b2[0] += d
        });
        check(grads.head.b2[1], &mut |m, d| {
            m.head_mut("u").unwrap().b2[1] += d
        });
    }
}

#[test]
fn gradient_vanishes_at_the_optimum() {
    let mut model = small_model(6);
    model.ensure_head("u");
    // Saturate the positive logit so p[1] is 1 after clamping.
    {
        let head = model.head_mut("u").unwrap();
        head.b2[0] = -40.0;
        head.b2[1] = 40.0;
    }
    let (loss, grads) = model.gradients("u", "any text", 1).unwrap();
    assert!(loss < 1e-9);
    let norm = {
        let mut sq = 0.0;
        for (_, g) in &grads.embed_rows {
            sq += g.iter().map(|v| v * v).sum::<f64>();
        }
        sq += grads.mix.iter().map(|v| v * v).sum::<f64>();
        sq += grads.head.w1.iter().map(|v| v * v).sum::<f64>();
        sq += grads.head.w2.iter().map(|v| v * v).sum::<f64>();
        sq.sqrt()
    };
    assert!(norm < 1e-6, "gradient norm {norm}");
}

#[test]
fn conflicting_users_diverge_after_training() {
    let mut model = small_model(8);
    let x_yes = "[CLS] q [SEP] yes [SEP]";
    let x_no = "[CLS] q [SEP] no [SEP]";
    let examples: Vec<TrainExample> = (0..40)
        .flat_map(|_| {
            [
                TrainExample {
                    head_key: "u1".into(),
                    text: x_yes.into(),
                    label: 1,
                },
                TrainExample {
                    head_key: "u1".into(),
                    text: x_no.into(),
                    label: 0,
                },
                TrainExample {
                    head_key: "u2".into(),
                    text: x_yes.into(),
                    label: 0,
                },
                TrainExample {
                    head_key: "u2".into(),
                    text: x_no.into(),
                    label: 1,
                },
            ]
        })
        .collect();
    let config = TrainConfig {
        learning_rate: 0.2,
        epochs: 6,
        batch_size: 8,
        clip: None,
    };
    model.train_multi_user(&examples, &config, 5).unwrap();
    // Same input, opposite preferences: the argmax differs per user.
    assert!(model.predict("u1", x_yes).unwrap()[1] > 0.5);
    assert!(model.predict("u2", x_yes).unwrap()[1] < 0.5);
    assert!(model.predict("u1", x_no).unwrap()[1] < 0.5);
    assert!(model.predict("u2", x_no).unwrap()[1] > 0.5);
}

#[test]
fn train_step_touches_only_target_head() {
    let mut model = small_model(11);
    model.ensure_head("u1");
    model.ensure_head("u2");
    let u2_before = model.head_bytes("u2").unwrap();
    let base_before = model.base_bytes();
    model.train_step("u1", "text for u1", 1, &cfg(0.1)).unwrap();
    assert_eq!(model.head_bytes("u2").unwrap(), u2_before);
    assert_ne!(model.base_bytes(), base_before);
    assert_ne!(
        model.head_bytes("u1").unwrap(),
        model.head_bytes("u2").unwrap()
    );
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let mut model = small_model(11);
    model.ensure_head("u1");
    let head_before = model.head_bytes("u1").unwrap();
    let base_before = model.base_bytes();
    let loss_a = model.train_step("u1", "text", 1, &cfg(0.0)).unwrap();
    let loss_b = model.train_step("u1", "text", 1, &cfg(0.0)).unwrap();
    assert_eq!(model.head_bytes("u1").unwrap(), head_before);
    assert_eq!(model.base_bytes(), base_before);
    assert_eq!(loss_a, loss_b);
}

#[test]
fn repeated_steps_decrease_loss() {
    let mut model = small_model(2);
    model.ensure_head("u");
    let first = model
        .train_step("u", "separable example text", 1, &cfg(0.2))
        .unwrap();
    let second = model
        .train_step("u", "separable example text", 1, &cfg(0.2))
        .unwrap();
    let third = model
        .train_step("u", "separable example text", 1, &cfg(0.2))
        .unwrap();
    assert!(second < first, "{second} !< {first}");
    assert!(third < second, "{third} !< {second}");
}

#[test]
fn missing_head_is_routing_error() {
    let mut model = small_model(2);
    assert!(matches!(
        model.train_step("ghost", "t", 1, &cfg(0.1)),
        Err(HydraError::MissingHead(_))
    ));
}

#[test]
fn fit_new_head_freezes_base() {
    let mut model = small_model(4);
    model.ensure_head("trained");
    let base_before = model.base_bytes();
    let examples: Vec<(String, u8)> = (0..10)
        .map(|i| (format!("sample {i} keyword"), (i % 2) as u8))
        .collect();
    let losses = model
        .fit_new_head(
            "newcomer",
            &examples,
            &TrainConfig {
                learning_rate: 0.05,
                epochs: 3,
                batch_size: 4,
                clip: None,
            },
        )
        .unwrap();
    assert_eq!(model.base_bytes(), base_before);
    assert_eq!(losses.len(), 3);
    assert!(model.has_head("newcomer"));
}

#[test]
fn fit_new_head_rejects_existing_user() {
    let mut model = small_model(4);
    model.ensure_head("u");
    assert!(matches!(
        model.fit_new_head("u", &[], &cfg(0.1)),
        Err(HydraError::HeadExists(_))
    ));
}

#[test]
fn fit_with_no_examples_keeps_initialization() {
    let mut model = small_model(4);
    model.fit_new_head("u", &[], &cfg(0.1)).unwrap();
    let other = small_model(4);
    let mut fresh = other;
    fresh.ensure_head("u");
    assert_eq!(model.head_bytes("u"), fresh.head_bytes("u"));
}

#[test]
fn fit_separable_examples_reduces_loss() {
    let mut model = small_model(4);
    let examples: Vec<(String, u8)> = (0..12)
        .map(|i| {
            if i % 2 == 0 {
                ("the answer is yes indeed".to_string(), 1)
            } else {
                ("the answer is no never".to_string(), 0)
            }
        })
        .collect();
    let losses = model
        .fit_new_head(
            "u",
            &examples,
            &TrainConfig {
                learning_rate: 0.1,
                epochs: 6,
                batch_size: 4,
                clip: None,
            },
        )
        .unwrap();
    assert!(
        losses.last().unwrap() < losses.first().unwrap(),
        "losses {losses:?}"
    );
}

#[test]
fn multi_user_training_is_deterministic() {
    let examples: Vec<TrainExample> = (0..20)
        .map(|i| TrainExample {
            head_key: format!("u{}", i % 3),
            text: format!("example number {i}"),
            label: (i % 2) as u8,
        })
        .collect();
    let mut m1 = small_model(7);
    let mut m2 = small_model(7);
    let l1 = m1.train_multi_user(&examples, &cfg(0.05), 99).unwrap();
    let l2 = m2.train_multi_user(&examples, &cfg(0.05), 99).unwrap();
    assert_eq!(l1, l2);
    for key in ["u0", "u1", "u2"] {
        assert_eq!(m1.head_bytes(key), m2.head_bytes(key));
    }
    assert_eq!(m1.base_bytes(), m2.base_bytes());
}

#[test]
fn empty_example_list_leaves_model_unchanged() {
    let mut model = small_model(7);
    let base = model.base_bytes();
    let losses = model.train_multi_user(&[], &cfg(0.05), 1).unwrap();
    assert_eq!(losses, vec![0.0]);
    assert_eq!(model.base_bytes(), base);
    assert_eq!(model.n_heads(), 0);
}

#[test]
fn gradient_clipping_bounds_update_size() {
    let mut model = small_model(13);
    model.ensure_head("u");
    let before = model.head("u").unwrap().clone();
    let config = TrainConfig {
        learning_rate: 1.0,
        epochs: 1,
        batch_size: 1,
        clip: Some(1e-6),
    };
    model.train_step("u", "clip me please", 1, &config).unwrap();
    let after = model.head("u").unwrap();
    // With lr = 1 and clip = 1e-6 the whole update has norm <= 1e-6.
    let mut sq = 0.0;
    for (a, b) in after.w1.iter().zip(before.w1.iter()) {
        sq += (a - b) * (a - b);
    }
    for (a, b) in after.w2.iter().zip(before.w2.iter()) {
        sq += (a - b) * (a - b);
    }
    assert!(sq.sqrt() <= 1e-6 + 1e-12, "update norm {}", sq.sqrt());
}

#[test]
fn batch_training_honors_clipping() {
    let examples: Vec<TrainExample> = (0..8)
        .map(|i| TrainExample {
            head_key: "u".into(),
            text: format!("sample {i}"),
            label: (i % 2) as u8,
        })
        .collect();
    let config = TrainConfig {
        learning_rate: 1.0,
        epochs: 1,
        batch_size: 8,
        clip: Some(1e-9),
    };
    let mut model = small_model(15);
    let base_before = model.base_bytes();
    model.train_multi_user(&examples, &config, 1).unwrap();
    // An extreme clip bound makes the whole batch update negligible.
    let drift: f64 = model
        .base_bytes()
        .chunks_exact(8)
        .zip(base_before.chunks_exact(8))
        .map(|(a, b)| {
            let a = f64::from_le_bytes(a.try_into().unwrap());
            let b = f64::from_le_bytes(b.try_into().unwrap());
            (a - b).abs()
        })
        .fold(0.0, f64::max);
    assert!(drift < 1e-8, "max parameter drift {drift}");
}

#[test]
fn save_load_round_trip_preserves_predictions() {
    let mut model = small_model(21);
    model.ensure_head("u1");
    model.ensure_head("u2");
    model
        .train_step("u1", "some training text", 1, &cfg(0.1))
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    model.save(&path).unwrap();
    let loaded = FactorizedModel::load(&path).unwrap();
    assert_eq!(loaded.base_bytes(), model.base_bytes());
    for i in 0..100 {
        let text = format!("probe text number {i}");
        assert_eq!(
            model.predict("u1", &text).unwrap(),
            loaded.predict("u1", &text).unwrap()
        );
    }
}

#[test]
fn truncated_model_file_is_rejected() {
    let mut model = small_model(21);
    model.ensure_head("u1");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    model.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(
        FactorizedModel::load(&path),
        Err(HydraError::ModelFile(_))
    ));
}

#[test]
fn bad_magic_and_bad_dims_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    std::fs::write(&path, b"NOTAMODELFILE").unwrap();
    assert!(matches!(
        FactorizedModel::load(&path),
        Err(HydraError::ModelFile(_))
    ));

    // Corrupt the stored hash_dim so it falls below hidden_dim.
    let mut model = small_model(21);
    model.ensure_head("u1");
    model.save(&path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[12..16].copy_from_slice(&1u32.to_le_bytes());
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(
        FactorizedModel::load(&path),
        Err(HydraError::ModelFile(_))
    ));
}
