//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them on success).
//!
//! Criteria:
//! 1. inference invariants fuzzed over 1,000 random models
//! 2. analytic gradients match central finite differences on 20 models
//! 3. single-rule models reduce to the closed-form linear recurrence
//! 4. FCM objective monotonicity, cluster-count selection, center recovery
//! 5. windowing protocol counts (9 windows, 38 scenarios -> 342 samples,
//!    exact three-way scenario split)
//! 6. end-to-end init -> train -> evaluate on a separable fault catalog
//! 7. teacher-student identification halves the initial error
//! 8. archive persistence is bit-exact and version-gated

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use tnfs_core::cluster::{fcm, rules_from_clusters, select_cluster_count, ClusterConfig};
use tnfs_core::dataset::{build_dataset, Normalization, Split, SplitFractions, WindowGeometry};
use tnfs_core::diagnosis::evaluate;
use tnfs_core::linalg::Matrix;
use tnfs_core::model::{normalize_strengths, ModelDims, TnfsModel};
use tnfs_core::plant::{
    default_catalog, default_plant, simulate_scenario, window_count, window_samples, ClassTable,
    FaultId, FaultMode, FaultSpec, OnsetRule, Scenario, AR_COEFF,
};
use tnfs_core::seed::stage_seed;
use tnfs_core::train::{
    analytic_gradients, finite_difference_gradients, max_relative_error, mse_loss, train,
    TrainConfig, TrainingSequence,
};
use tnfs_core::{archive::ModelArchive, TnfsError};

fn pass(line: &str) {
    println!("PASS: {line}");
}

/// Criterion 1: over 1,000 random models (N,M,P <= 4, R <= 6) the weight
/// normalization sums to one within 1e-12, memberships stay in (0, 1],
/// aggregated matrix entries stay inside the per-entry rule min/max, and
/// the two algebraic forms of the state update agree within 1e-12.
#[test]
fn criterion_1_inference_invariant_fuzz() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    for trial in 0..1000u64 {
        let dims = ModelDims::new(
            rng.random_range(1..=4),
            rng.random_range(1..=4),
            rng.random_range(1..=4),
        );
        let rule_count = rng.random_range(1..=6);
        let model = TnfsModel::<f64>::sample(dims, rule_count, 10_000 + trial);
        let x: Vec<f64> = (0..dims.state).map(|_| rng.random_range(-2.0..2.0)).collect();
        let u: Vec<f64> = (0..dims.input).map(|_| rng.random_range(-2.0..2.0)).collect();

        for rule in &model.rules {
            for (term, &v) in rule.antecedent.state_terms.iter().zip(&x) {
                let m = term.membership(v).unwrap();
                assert!(m > 0.0 && m <= 1.0, "trial {trial}: membership {m} out of (0,1]");
            }
            for (term, &v) in rule.antecedent.input_terms.iter().zip(&u) {
                let m = term.membership(v).unwrap();
                assert!(m > 0.0 && m <= 1.0, "trial {trial}: membership {m} out of (0,1]");
            }
        }

        let f = model.firing_strengths(&x, &u).unwrap();
        let h = normalize_strengths(&f).unwrap();
        let sum: f64 = h.iter().sum();
        assert!(
            (sum - 1.0).abs() <= 1e-12,
            "trial {trial}: weights sum to {sum}"
        );

        let (a, b) = model.aggregate_parameters(&h).unwrap();
        for r in 0..dims.state {
            for c in 0..dims.state {
                let entries: Vec<f64> =
                    model.rules.iter().map(|rl| rl.consequent.a[(r, c)]).collect();
                let lo = entries.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = entries.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let v = a[(r, c)];
                assert!(
                    v >= lo - 1e-12 && v <= hi + 1e-12,
                    "trial {trial}: aggregated A[{r},{c}]={v} outside [{lo},{hi}]"
                );
            }
            for c in 0..dims.input {
                let entries: Vec<f64> =
                    model.rules.iter().map(|rl| rl.consequent.b[(r, c)]).collect();
                let lo = entries.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = entries.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let v = b[(r, c)];
                assert!(
                    v >= lo - 1e-12 && v <= hi + 1e-12,
                    "trial {trial}: aggregated B[{r},{c}]={v} outside [{lo},{hi}]"
                );
            }
        }

        // Blend-of-local-steps form vs aggregate-then-step form.
        let stepped = model.state_transition(&x, &u).unwrap();
        let mut direct = a.matvec(&x);
        for (d, bv) in direct.iter_mut().zip(b.matvec(&u)) {
            *d += bv;
        }
        for (s, d) in stepped.iter().zip(&direct) {
            assert!(
                (s - d).abs() <= 1e-12,
                "trial {trial}: update forms disagree: {s} vs {d}"
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "fuzz took {elapsed:?}");
    pass(&format!(
        "inference invariants held over 1000 random models ({elapsed:?})"
    ));
}

/// Criterion 2: on 20 random desk-scale models (N=2, M=1, P=1, R=3, T=5),
/// reverse-accumulated gradients match central finite differences
/// (step 1e-5) within 1e-4 relative error on every parameter.
#[test]
fn criterion_2_gradient_fidelity() {
    let start = Instant::now();
    let dims = ModelDims::new(2, 1, 1);
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let model = TnfsModel::<f64>::sample(dims, 3, 500 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(9_000 + seed);
        let data: Vec<TrainingSequence<f64>> = (0..2)
            .map(|_| {
                let inputs = (0..5).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
                let targets = (0..5).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
                TrainingSequence::new(inputs, targets)
            })
            .collect();
        let analytic = analytic_gradients(&model, &data).unwrap();
        let fd = finite_difference_gradients(&model, &data, 1e-5).unwrap();
        let err = max_relative_error(&analytic, &fd);
        assert!(err <= 1e-4, "model seed {seed}: relative error {err}");
        worst = worst.max(err);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "gradient check took {elapsed:?}");
    pass(&format!(
        "gradients match finite differences on 20 models, worst relative error {worst:.2e} ({elapsed:?})"
    ));
}

/// Criterion 3: a single-rule model with state gain 0.5 I reproduces the
/// closed-form geometric trajectory within 1e-12 over 100 steps.
#[test]
fn criterion_3_single_rule_lti_reduction() {
    let dims = ModelDims::new(2, 1, 2);
    let mut model = TnfsModel::<f64>::sample(dims, 1, 3);
    let mut half = Matrix::identity(2);
    half.scale(0.5);
    model.rules[0].consequent.a = half;
    model.rules[0].consequent.b = Matrix::zeros(2, 1);
    model.output_matrix = Matrix::identity(2);
    model.initial_state = vec![1.0, -3.0];

    let inputs = vec![vec![0.0]; 100];
    let roll = model.rollout(&inputs, None).unwrap();

    // independent closed-form recurrence
    let mut x = vec![1.0, -3.0];
    for t in 0..100 {
        x = x.iter().map(|v| 0.5 * v).collect();
        for (got, want) in roll.states[t].iter().zip(&x) {
            assert!(
                (got - want).abs() <= 1e-12,
                "step {t}: {got} vs {want}"
            );
        }
    }
    pass("single-rule rollout equals the closed-form linear recurrence over 100 steps");
}

fn four_blobs(per_blob: usize, std: f64, seed: u64) -> (Matrix<f64>, Vec<Vec<f64>>) {
    let blob_centers = [[0.0, 0.0], [5.0, 0.0], [0.0, 5.0], [5.0, 5.0]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).unwrap();
    let mut rows = Vec::new();
    let mut sample_means = Vec::new();
    for c in &blob_centers {
        let mut mean = vec![0.0, 0.0];
        for _ in 0..per_blob {
            let p = vec![c[0] + normal.sample(&mut rng), c[1] + normal.sample(&mut rng)];
            mean[0] += p[0] / per_blob as f64;
            mean[1] += p[1] / per_blob as f64;
            rows.push(p);
        }
        sample_means.push(mean);
    }
    (Matrix::from_rows(&rows).unwrap(), sample_means)
}

/// Criterion 4: the FCM objective never increases; on a 4-blob dataset
/// (std 0.05, separation 5) the validity scan over [2, 8] picks 4 clusters
/// and the recovered centers land within 0.05 of the blob sample means.
#[test]
fn criterion_4_fcm_selection_and_recovery() {
    let start = Instant::now();
    let (data, sample_means) = four_blobs(100, 0.05, 77);
    let config = ClusterConfig {
        seed: 21,
        ..ClusterConfig::default()
    };

    for c in 2..=8 {
        let result = fcm(
            &data,
            &ClusterConfig {
                cluster_count: c,
                ..config.clone()
            },
        )
        .unwrap();
        for w in result.objective_history.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12,
                "objective rose at c={c}: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    let chosen = select_cluster_count(&data, 2, 8, &config).unwrap();
    assert_eq!(chosen, 4, "validity scan picked {chosen} clusters");

    let result = fcm(
        &data,
        &ClusterConfig {
            cluster_count: 4,
            ..config
        },
    )
    .unwrap();
    let mut matched = vec![false; 4];
    for i in 0..4 {
        let center = result.centers.row(i);
        let (j, dist) = sample_means
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let d = ((center[0] - m[0]).powi(2) + (center[1] - m[1]).powi(2)).sqrt();
                (j, d)
            })
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert!(dist < 0.05, "center {i} is {dist} from its blob mean");
        assert!(!matched[j], "two centers claimed blob {j}");
        matched[j] = true;
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "fcm criterion took {elapsed:?}");
    pass(&format!(
        "fcm objective monotone, count scan picked 4, centers within 0.05 ({elapsed:?})"
    ));
}

/// Criterion 5: 120-minute scenarios with 40-minute windows at 10-minute
/// stride yield exactly 9 windows; 38 scenarios yield exactly 342 samples;
/// the three-way scenario split is exact on divisible counts.
#[test]
fn criterion_5_windowing_protocol_counts() {
    assert_eq!(window_count(120.0, 40.0, 10.0), 9);

    let plant = default_plant();
    let classes = ClassTable::from_catalog(&default_catalog());
    let traj = simulate_scenario(
        &plant,
        &Scenario {
            duration_minutes: 120.0,
            step_minutes: 10.0,
            fault: FaultSpec::normal(),
            seed: 8,
        },
    )
    .unwrap();
    let windows = window_samples(&traj, 40.0, 10.0, OnsetRule::Overlap, &classes).unwrap();
    assert_eq!(windows.len(), 9);

    let scenarios: Vec<Scenario> = (0..38)
        .map(|i| Scenario {
            duration_minutes: 120.0,
            step_minutes: 10.0,
            fault: FaultSpec::normal(),
            seed: 300 + i,
        })
        .collect();
    let dataset = build_dataset::<f64>(
        &scenarios,
        &plant,
        WindowGeometry::default(),
        SplitFractions::thirds(),
        OnsetRule::Overlap,
        &classes,
    )
    .unwrap();
    assert_eq!(dataset.total_samples(), 342);

    assert_eq!(SplitFractions::thirds().counts(6), [2, 2, 2]);
    assert_eq!(SplitFractions::thirds().counts(36), [12, 12, 12]);
    let six = build_dataset::<f64>(
        &scenarios[..6],
        &plant,
        WindowGeometry::default(),
        SplitFractions::thirds(),
        OnsetRule::Overlap,
        &classes,
    )
    .unwrap();
    assert_eq!(
        (six.train.len(), six.validation.len(), six.test.len()),
        (18, 18, 18)
    );
    pass("9 windows per scenario, 38 scenarios -> 342 samples, exact thirds split");
}

/// Criterion 6: full pipeline on a separable 15-class catalog (distinct
/// channel signatures, SNR >= 5): FCM-seeded init, gradient training for
/// 500 epochs, held-out accuracy >= 0.90 and mean detection delay <= 20
/// simulated minutes.
#[test]
fn criterion_6_end_to_end_fault_pipeline() {
    let start = Instant::now();
    let master = 2024u64;
    let plant = default_plant();
    let mut catalog = default_catalog();
    for entry in &mut catalog.entries {
        entry.abrupt = true;
    }
    let classes = ClassTable::from_catalog(&catalog);
    let magnitude = 7.0;

    // The configured signal-to-noise: deviation over stationary AR noise.
    for entry in &catalog.entries {
        for effect in &entry.effects {
            let sensor = plant.iter().find(|s| s.name == effect.channel).unwrap();
            let stationary_noise = sensor.noise_std / (1.0 - AR_COEFF * AR_COEFF).sqrt();
            let snr = magnitude * sensor.nominal_std / stationary_noise;
            assert!(snr >= 5.0, "{}: snr {snr} below 5", entry.id);
        }
    }

    // Nine scenarios per class, listed round-robin so the in-order thirds
    // split covers every class in every subset.
    let mut scenarios = Vec::new();
    for round in 0..9 {
        for (ci, &id) in classes.ids.iter().enumerate() {
            let fault = if id == FaultId::Normal {
                FaultSpec::normal()
            } else {
                catalog
                    .fault(id, FaultMode::Abrupt, 30.0, Some(magnitude))
                    .unwrap()
            };
            scenarios.push(Scenario {
                duration_minutes: 120.0,
                step_minutes: 10.0,
                fault,
                seed: stage_seed(master, "scenario", (round * classes.len() + ci) as u64),
            });
        }
    }

    let dataset = build_dataset::<f64>(
        &scenarios,
        &plant,
        WindowGeometry::default(),
        SplitFractions::thirds(),
        OnsetRule::Overlap,
        &classes,
    )
    .unwrap();
    assert_eq!(dataset.train.len(), 405);
    assert_eq!(dataset.test.len(), 405);

    let dims = ModelDims::new(classes.len(), dataset.channel_count, classes.len());
    let cluster_data = dataset.cluster_matrix(Split::Train).unwrap();
    let cluster_config = ClusterConfig {
        cluster_count: 4,
        seed: stage_seed(master, "cluster", 0),
        ..ClusterConfig::default()
    };
    let clustering = fcm(&cluster_data, &cluster_config).unwrap();
    let model = rules_from_clusters(
        &clustering,
        &cluster_data,
        dims,
        cluster_config.fuzzifier_m,
        stage_seed(master, "init", 0),
    )
    .unwrap();
    assert_eq!(model.rule_count(), 4);

    let sequences = dataset.training_sequences(Split::Train);
    let config = TrainConfig {
        learning_rate: 2.0,
        epochs: 500,
        grad_clip_norm: Some(10.0),
        shuffle_seed: stage_seed(master, "train", 0),
        validation_fraction: 0.0,
        freeze_output_matrix: false,
    };
    let initial = mse_loss(&model, &sequences).unwrap();
    let (trained, history) = train(model, &sequences, &config).unwrap();
    let final_loss = mse_loss(&trained, &sequences).unwrap();
    assert!(history.len() == 500);
    assert!(final_loss < initial, "training did not reduce the loss");

    let report = evaluate(&trained, &dataset, Split::Test).unwrap();
    let delay = report.mean_detection_delay_minutes.unwrap();
    assert!(
        report.accuracy >= 0.90,
        "held-out accuracy {:.4} below 0.90",
        report.accuracy
    );
    assert!(delay <= 20.0, "mean detection delay {delay} above 20 minutes");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "pipeline took {elapsed:?}");
    pass(&format!(
        "end-to-end pipeline: held-out accuracy {:.3}, mean detection delay {delay:.1} min ({elapsed:?})",
        report.accuracy
    ));
}

/// Criterion 7: sequences generated by a random 2-rule teacher; a student
/// of identical structure trained 500 epochs cuts the error to at most half
/// its initial value.
#[test]
fn criterion_7_teacher_student_identification() {
    let dims = ModelDims::new(2, 1, 1);
    let teacher = TnfsModel::<f64>::sample(dims, 2, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(511);
    let data: Vec<TrainingSequence<f64>> = (0..20)
        .map(|_| {
            let inputs: Vec<Vec<f64>> =
                (0..10).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
            let roll = teacher.rollout(&inputs, None).unwrap();
            TrainingSequence::new(inputs, roll.outputs)
        })
        .collect();

    let student = TnfsModel::<f64>::sample(dims, 2, 1011);
    let initial = mse_loss(&student, &data).unwrap();
    let config = TrainConfig {
        learning_rate: 0.2,
        epochs: 500,
        grad_clip_norm: Some(10.0),
        shuffle_seed: 7,
        validation_fraction: 0.0,
        freeze_output_matrix: false,
    };
    let (trained, _) = train(student, &data, &config).unwrap();
    let final_loss = mse_loss(&trained, &data).unwrap();
    assert!(
        final_loss <= 0.5 * initial,
        "identification only reached {final_loss:.6} from {initial:.6}"
    );
    pass(&format!(
        "teacher-student identification: error {initial:.5} -> {final_loss:.5} ({:.1}% of initial)",
        100.0 * final_loss / initial
    ));
}

/// Criterion 8: archive save/load round trip reproduces rollouts
/// bit-identically on a 100-vector battery; version mismatches load as
/// errors, never as coerced models.
#[test]
fn criterion_8_archive_persistence() {
    let dims = ModelDims::new(3, 2, 2);
    let model = TnfsModel::<f64>::sample(dims, 4, 4242);
    let archive = ModelArchive::new(
        model,
        Normalization::identity(2),
        vec!["y0".into(), "y1".into()],
        4242,
        "e2e".into(),
    );

    let dir = std::env::temp_dir().join(format!("tnfs-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.tnfs");
    archive.save(&path).unwrap();
    let loaded = ModelArchive::<f64>::load(&path).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let battery: Vec<Vec<f64>> = (0..100)
        .map(|_| (0..2).map(|_| rng.random_range(-1.5..1.5)).collect())
        .collect();
    let before = archive.model.rollout(&battery, None).unwrap();
    let after = loaded.model.rollout(&battery, None).unwrap();
    assert_eq!(before, after, "round-trip rollouts differ");

    let tampered = archive
        .to_text()
        .replace("format_version 1", "format_version 99");
    let bad_path = dir.join("tampered.tnfs");
    std::fs::write(&bad_path, tampered).unwrap();
    match ModelArchive::<f64>::load(&bad_path) {
        Err(TnfsError::VersionMismatch { found: 99, supported: 1 }) => {}
        other => panic!("expected version mismatch, got {other:?}"),
    }
    std::fs::remove_dir_all(&dir).unwrap();
    pass("archive round trip bit-identical on a 100-vector battery; version gate enforced");
}
