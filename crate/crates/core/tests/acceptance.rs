//! The project's acceptance gate, one test per criterion (run with
//! `-- --nocapture` to see the per-criterion PASS/SKIP lines).
//!
//! Criteria 1-3 and 8 are self-contained and always run. Criteria 4-7
//! evaluate a trained MNIST model and need the four IDX files
//! (train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-images-idx3-ubyte,
//! t10k-labels-idx1-ubyte) in the directory named by S4NN_MNIST_DIR, or in
//! data/mnist at the workspace root. The full 100-epoch headline run takes
//! hours and is additionally gated behind S4NN_FULL_ACCEPTANCE=1; the fast
//! variant only needs the dataset. Run those with --release.
//!
//! The MNIST training bars encode the operating point this recipe is known
//! to reach (high-90s accuracy with decisions near step 90 of 256). The
//! current trainer falls short of them: accuracy saturates in the mid-80s
//! while decisions drift late and output times bunch inside the margin, so
//! margin suppression never switches off and the earliest hidden neurons
//! erode. The shortfall is stated by the failing assertions rather than
//! papered over; README.md and the normalization docs carry the analysis.

use std::env;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s4nn_core::backprop::{apply_update, backward, BackwardConfig};
use s4nn_core::data::{load_idx, Image, LabeledDataset};
use s4nn_core::encoding::{encode_image, SimGrid, SpikeVector};
use s4nn_core::forward::{classify, forward_network};
use s4nn_core::network::{InitSpec, LayerParams, Matrix, NetworkParams};
use s4nn_core::objective::{compute_error, loss, relative_targets};
use s4nn_core::reference::{dense_forward_network, naive_backward};
use s4nn_core::trainer::{
    evaluate, fit, sweep_threshold, train_epoch, EvalOptions, FireCounter, TrainConfig,
};

/// Random instance in the agreed stress envelope: up to 3 weight layers,
/// widths up to 8, t_max up to 32, signed weights in [-2, 2), integer
/// thresholds 1..=10, and ~10% silent inputs.
fn random_instance(rng: &mut ChaCha8Rng, min_t_max: u32) -> (SpikeVector, NetworkParams, SimGrid) {
    let t_max = rng.random_range(min_t_max..=32);
    let grid = SimGrid::new(t_max, 255).unwrap();
    let depth = rng.random_range(1..=3usize);
    let mut sizes = Vec::with_capacity(depth + 1);
    for _ in 0..=depth {
        sizes.push(rng.random_range(1..=8usize));
    }
    let theta = rng.random_range(1..=10) as f32;
    let layers = sizes
        .windows(2)
        .map(|w| LayerParams {
            weights: Matrix::from_fn(w[1], w[0], |_, _| rng.random_range(-2.0f32..2.0)),
            threshold: theta,
        })
        .collect();
    let params = NetworkParams { layers };
    let mut times = Vec::with_capacity(sizes[0]);
    let mut fake = Vec::with_capacity(sizes[0]);
    for _ in 0..sizes[0] {
        if rng.random_bool(0.1) {
            times.push(t_max);
            fake.push(true);
        } else {
            times.push(rng.random_range(0..=t_max));
            fake.push(false);
        }
    }
    (SpikeVector { times, fake }, params, grid)
}

#[test]
fn criterion_1_forward_engines_agree_exactly() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC1);
    for case in 0..1000 {
        let (input, params, grid) = random_instance(&mut rng, 1);
        let event = forward_network(&input, &params, grid).unwrap();
        let dense = dense_forward_network(&input, &params, grid).unwrap();
        assert_eq!(event, dense, "engines diverged on case {case}");
        assert_eq!(classify(&event), classify(&dense), "case {case}");
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(10),
        "1000 instances took {elapsed:?}, expected under 10s"
    );
    println!(
        "criterion 1: PASS - event and clock engines bitwise equal on 1000 random instances in {elapsed:?}"
    );
}

#[test]
fn criterion_2_backward_matches_the_naive_rule() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC2);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let (input, params, grid) = random_instance(&mut rng, 2);
        let trace = forward_network(&input, &params, grid).unwrap();
        let correct = rng.random_range(0..params.n_classes());
        let gamma = 1 + rng.random_range(0..(grid.t_max - 1).min(5));
        let targets =
            relative_targets(&trace.output().spikes, correct, gamma, grid.t_max).unwrap();
        let base = BackwardConfig::new(grid);
        for cfg in [
            base,
            BackwardConfig {
                normalize_output: false,
                ..base
            },
        ] {
            let fast = backward(&trace, &params, &targets, cfg).unwrap();
            let slow = naive_backward(&trace, &params, &targets, cfg).unwrap();
            for (a, b) in fast.layers.iter().zip(&slow.layers) {
                for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                    let diff = (x - y).abs();
                    worst = worst.max(diff);
                    assert!(diff <= 1e-12, "case {case}: gradient diff {diff}");
                }
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(10),
        "200 instances took {elapsed:?}, expected under 10s"
    );
    println!(
        "criterion 2: PASS - gradients agree with the naive rule within 1e-12 (worst {worst:.2e}) in {elapsed:?}"
    );
}

#[test]
fn criterion_3_hand_worked_fixtures_hold() {
    // Intensity encoding: bright fires first, zero intensity lands exactly
    // on the horizon but is still a real spike.
    let encoded = encode_image(&[255, 0, 128], SimGrid::default());
    assert_eq!(encoded.times, vec![0, 256, 127]);
    assert!(encoded.fake.iter().all(|f| !f));

    // Integration: two spikes of 60 cross theta=100 at the second arrival.
    let single = NetworkParams {
        layers: vec![LayerParams {
            weights: Matrix::from_fn(1, 2, |_, c| [60.0f32, 60.0][c]),
            threshold: 100.0,
        }],
    };
    let trace = forward_network(
        &SpikeVector::real(vec![0, 5]),
        &single,
        SimGrid::default(),
    )
    .unwrap();
    assert_eq!(trace.output().spikes.times, vec![5]);
    assert_eq!(trace.layers[0].potentials, vec![120.0]);

    // Relative targets: winner pulled to the earliest spike, near-miss
    // pushed out by the margin, distant neuron left alone.
    let out = SpikeVector::real(vec![50, 40, 200]);
    let targets = relative_targets(&out, 0, 3, 256).unwrap();
    assert_eq!(targets, vec![40, 43, 200]);
    let errors = compute_error(&targets, &out.times, 256).unwrap();
    assert_eq!(errors, vec![-0.0390625, 0.01171875, 0.0]);
    assert_eq!(loss(&errors, &single, 0.0), 0.00083160400390625);

    // All-silent outputs: the winner is asked to fire before the horizon.
    let silent = SpikeVector {
        times: vec![256, 256],
        fake: vec![true, true],
    };
    assert_eq!(relative_targets(&silent, 0, 3, 256).unwrap(), vec![253, 256]);

    // Backward on a one-layer net: late firing vs an earlier target makes
    // both causal weights grow (negative gradient). Normalization is off so
    // the raw delta value stays visible.
    let late = NetworkParams {
        layers: vec![LayerParams {
            weights: Matrix::from_fn(1, 2, |_, c| [50.0f32, 60.0][c]),
            threshold: 100.0,
        }],
    };
    let trace = forward_network(
        &SpikeVector::real(vec![2, 10]),
        &late,
        SimGrid::default(),
    )
    .unwrap();
    assert_eq!(trace.output().spikes.times, vec![10]);
    let grads = backward(
        &trace,
        &late,
        &vec![5],
        BackwardConfig {
            normalize_output: false,
            ..BackwardConfig::new(SimGrid::default())
        },
    )
    .unwrap();
    assert_eq!(grads.layers[0].as_slice(), &[-0.01953125, -0.01953125]);

    println!("criterion 3: PASS - frozen worked examples for encoding, integration, targets, error, and gradients all reproduce");
}

fn mnist_root() -> PathBuf {
    env::var_os("S4NN_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Loads MNIST if the files are present. Missing files mean SKIP; present
/// but unreadable files are a hard failure.
fn mnist() -> Option<(LabeledDataset, LabeledDataset)> {
    let root = mnist_root();
    if !MNIST_FILES.iter().all(|f| root.join(f).exists()) {
        return None;
    }
    let train = load_idx(&root.join(MNIST_FILES[0]), &root.join(MNIST_FILES[1]))
        .expect("present MNIST training files must parse");
    let test = load_idx(&root.join(MNIST_FILES[2]), &root.join(MNIST_FILES[3]))
        .expect("present MNIST test files must parse");
    Some((train, test))
}

fn headline_config(epochs: u32) -> TrainConfig {
    TrainConfig {
        epochs,
        ..TrainConfig::mnist()
    }
}

const HEADLINE_ARCH: &[usize] = &[784, 400, 10];

#[test]
fn criterion_4_fast_ci_variant_reaches_90_percent() {
    let Some((mut train, test)) = mnist() else {
        println!(
            "criterion 4 (fast variant): SKIP - MNIST IDX files not found under {} (set S4NN_MNIST_DIR)",
            mnist_root().display()
        );
        return;
    };
    if cfg!(debug_assertions) {
        println!(
            "criterion 4 (fast variant): SKIP - a debug build cannot finish inside the ten-minute budget; run with --release"
        );
        return;
    }
    let started = Instant::now();
    train.images.truncate(10_000);
    train.labels.truncate(10_000);
    let result = fit(
        HEADLINE_ARCH,
        &headline_config(10),
        &train,
        None,
        None,
        |_| {},
    )
    .unwrap();
    let eval = evaluate(
        &result.params,
        &test,
        SimGrid::default(),
        &EvalOptions::default(),
    )
    .unwrap();
    let elapsed = started.elapsed();
    let pass = eval.accuracy >= 0.90 && elapsed < Duration::from_secs(600);
    println!(
        "criterion 4 (fast variant): {} - 10k images, 10 epochs, test accuracy {:.4} (bar 0.90) in {elapsed:?} (bar 600s)",
        if pass { "PASS" } else { "FAIL" },
        eval.accuracy
    );
    assert!(
        pass,
        "fast variant reached {:.4} in {elapsed:?}, bars are 0.90 under 600s (build with --release)",
        eval.accuracy
    );
}

#[test]
fn criteria_4_to_7_full_mnist_headline() {
    let Some((train, test)) = mnist() else {
        for c in 4..=7 {
            println!(
                "criterion {c}: SKIP - MNIST IDX files not found under {} (set S4NN_MNIST_DIR)",
                mnist_root().display()
            );
        }
        return;
    };
    if env::var("S4NN_FULL_ACCEPTANCE").as_deref() != Ok("1") {
        for c in 4..=7 {
            println!(
                "criterion {c}: SKIP - the 100-epoch headline run takes hours; set S4NN_FULL_ACCEPTANCE=1 and use --release"
            );
        }
        return;
    }

    let started = Instant::now();
    let result = fit(
        HEADLINE_ARCH,
        &headline_config(100),
        &train,
        None,
        Some(&test),
        |stats| {
            // Progress lines so the multi-hour run is observable.
            println!(
                "headline epoch {}: test_acc {:?}",
                stats.epoch.unwrap_or(0),
                stats.test_acc
            );
        },
    )
    .unwrap();
    println!("headline training finished in {:?}", started.elapsed());

    let grid = SimGrid::default();
    let eval = evaluate(&result.params, &test, grid, &EvalOptions::default()).unwrap();
    let mut failures: Vec<String> = Vec::new();
    let mut report = |criterion: u32, pass: bool, detail: String| {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {criterion}: {verdict} - {detail}");
        if !pass {
            failures.push(format!("criterion {criterion}: {detail}"));
        }
    };

    report(
        4,
        eval.accuracy >= 0.968,
        format!("test accuracy {:.4} (threshold 0.968)", eval.accuracy),
    );
    report(
        5,
        (70.0..=110.0).contains(&eval.mean_decision_time)
            && (185.0..=250.0).contains(&eval.mean_spikes),
        format!(
            "mean decision time {:.1} (want [70, 110]), mean spikes {:.1} (want [185, 250])",
            eval.mean_decision_time, eval.mean_spikes
        ),
    );

    let per_class: Vec<f64> = eval
        .per_class_mean_correct_time
        .iter()
        .map(|t| t.expect("all ten digits appear in the test set"))
        .collect();
    let arg_min = (0..per_class.len())
        .min_by(|&a, &b| per_class[a].total_cmp(&per_class[b]))
        .unwrap();
    report(
        6,
        arg_min == 1,
        format!("earliest mean correct-neuron time belongs to class {arg_min} ({per_class:.1?})"),
    );

    let sweep = sweep_threshold(
        &result.params,
        &test,
        grid,
        &[40.0, 70.0, 100.0],
        &EvalOptions::default(),
    )
    .unwrap();
    let at = |theta: f32| &sweep.iter().find(|(t, _)| *t == theta).unwrap().1;
    report(
        7,
        at(70.0).mean_decision_time < 0.5 * at(100.0).mean_decision_time
            && at(100.0).accuracy >= at(40.0).accuracy,
        format!(
            "decision time {:.1} @70 vs {:.1} @100; accuracy {:.4} @100 vs {:.4} @40",
            at(70.0).mean_decision_time,
            at(100.0).mean_decision_time,
            at(100.0).accuracy,
            at(40.0).accuracy
        ),
    );

    assert!(failures.is_empty(), "headline failures: {failures:#?}");
}

#[test]
fn criterion_8_property_suite() {
    let grid = SimGrid::default();

    // Single spike per neuron: every trace assigns each neuron exactly one
    // firing time on the grid, fake exactly when it is the horizon pin.
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC8);
    for _ in 0..100 {
        let (input, params, grid) = random_instance(&mut rng, 1);
        let trace = forward_network(&input, &params, grid).unwrap();
        for (layer, layer_trace) in trace.layers.iter().enumerate() {
            let spikes = &layer_trace.spikes;
            assert_eq!(spikes.times.len(), params.layers[layer].n_post());
            assert_eq!(spikes.fake.len(), spikes.times.len());
            for (&t, &f) in spikes.times.iter().zip(&spikes.fake) {
                assert!(t <= grid.t_max);
                if f {
                    assert_eq!(t, grid.t_max, "fake spikes sit at the horizon");
                }
            }
        }
    }

    // Target fixed point: when the correct neuron is uniquely first by at
    // least the margin, targets equal the firing times and a zero-decay
    // update leaves the weights untouched.
    let diag = NetworkParams {
        layers: vec![LayerParams {
            weights: Matrix::from_fn(3, 3, |r, c| if r == c { 100.0 } else { 0.0 }),
            threshold: 100.0,
        }],
    };
    let trace = forward_network(&SpikeVector::real(vec![10, 20, 30]), &diag, grid).unwrap();
    assert_eq!(trace.output().spikes.times, vec![10, 20, 30]);
    let targets = relative_targets(&trace.output().spikes, 0, 3, grid.t_max).unwrap();
    assert_eq!(targets, trace.output().spikes.times);
    let grads = backward(&trace, &diag, &targets, BackwardConfig::new(grid)).unwrap();
    assert!(grads.layers.iter().all(|m| m.as_slice().iter().all(|&g| g == 0.0)));
    let mut updated = diag.clone();
    apply_update(&mut updated, &grads, 0.2, 0.0).unwrap();
    assert_eq!(updated, diag);

    // Gradient gating: a nonzero entry requires a pre-horizon postsynaptic
    // spike and a causal presynaptic one.
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC9);
    for _ in 0..100 {
        let (input, params, grid) = random_instance(&mut rng, 2);
        let trace = forward_network(&input, &params, grid).unwrap();
        let correct = rng.random_range(0..params.n_classes());
        let gamma = 1 + rng.random_range(0..(grid.t_max - 1).min(5));
        let targets =
            relative_targets(&trace.output().spikes, correct, gamma, grid.t_max).unwrap();
        let grads = backward(&trace, &params, &targets, BackwardConfig::new(grid)).unwrap();
        for (k, grad) in grads.layers.iter().enumerate() {
            let pre = if k == 0 {
                &trace.input
            } else {
                &trace.layers[k - 1].spikes
            };
            let post = &trace.layers[k].spikes;
            for j in 0..grad.rows() {
                for i in 0..grad.cols() {
                    if grad[(j, i)] != 0.0 {
                        assert!(post.times[j] < grid.t_max, "silent neurons get no gradient");
                        assert!(pre.times[i] <= post.times[j], "acausal inputs get no gradient");
                    }
                }
            }
        }
    }

    // Revival: a neuron silent for a whole epoch is redrawn inside the
    // initialization range.
    let init = InitSpec {
        ranges: vec![(5.0, 9.0), (1.0, 2.0)],
        seed: 3,
    };
    let mut params = NetworkParams {
        layers: vec![
            LayerParams {
                weights: Matrix::from_fn(3, 2, |r, _| if r == 1 { 0.0 } else { 60.0 }),
                threshold: 100.0,
            },
            LayerParams {
                weights: Matrix::filled(2, 3, 60.0),
                threshold: 100.0,
            },
        ],
    };
    let ds = LabeledDataset {
        images: vec![
            Image {
                width: 2,
                height: 1,
                pixels: vec![255, 250],
            },
            Image {
                width: 2,
                height: 1,
                pixels: vec![250, 255],
            },
        ],
        labels: vec![0, 1],
        class_count: 2,
    };
    let cfg = TrainConfig {
        epochs: 1,
        eta: 1e-9,
        gamma: 3,
        lambda: 0.0,
        theta: 100.0,
        grid,
        init: init.clone(),
        seed: 5,
        revive_dead: true,
        normalize_hidden: true,
        normalize_output: true,
    };
    let mut counters = FireCounter::new(&params);
    let stats = train_epoch(&mut params, &ds, &cfg, &mut counters, 0).unwrap();
    assert_eq!(stats.revived, Some(1));
    for &w in params.layers[0].weights.row(1) {
        assert!((5.0..9.0).contains(&w), "revived weight {w} outside the init range");
    }

    // Determinism: identical seeds give bitwise-identical runs.
    let mini: Vec<Image> = (0..20)
        .map(|i| Image {
            width: 2,
            height: 2,
            pixels: vec![
                if i % 2 == 0 { 240 } else { 20 },
                30,
                (i * 11 % 200) as u8 + 20,
                if i % 2 == 0 { 20 } else { 240 },
            ],
        })
        .collect();
    let mini = LabeledDataset {
        labels: (0..20).map(|i| i % 2).collect(),
        class_count: 2,
        images: mini,
    };
    let cfg = TrainConfig {
        epochs: 5,
        eta: 0.5,
        gamma: 3,
        lambda: 1e-6,
        theta: 60.0,
        grid,
        init: InitSpec {
            ranges: vec![(0.0, 30.0), (0.0, 60.0)],
            seed: 7,
        },
        seed: 7,
        revive_dead: true,
        normalize_hidden: true,
        normalize_output: true,
    };
    let run = || fit(&[4, 3, 2], &cfg, &mini, None, None, |_| {}).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.params, b.params);
    assert_eq!(a.history, b.history);

    println!(
        "criterion 8: PASS - single-spike, target fixed point, gradient gating, revival range, and seeded determinism all hold"
    );
}
