use agnn_core::data::{
    generate_dag_regression, generate_directed_sbm, DagSpec, DatasetBundle, SbmSpec,
};
use agnn_core::model::AgnnModel;
use agnn_core::train::*;

fn sbm(seed: u64) -> DatasetBundle {
    generate_directed_sbm(&SbmSpec {
        block_sizes: vec![40, 40],
        probs: vec![vec![0.05, 0.1], vec![0.02, 0.05]],
        seed,
    })
    .unwrap()
}

fn quick() -> TrainConfig {
    TrainConfig {
        max_epochs: 40,
        patience: 10,
        split: SplitPolicy {
            per_class: 10,
            val_size: 20,
        },
        ..TrainConfig::default()
    }
}

#[test]
fn runs_are_bit_reproducible() {
    let b = sbm(1);
    let a = run_repeated(&b, &quick(), 2).unwrap();
    let c = run_repeated(&b, &quick(), 2).unwrap();
    assert_eq!(a, c);
    let other = run_repeated(&b, &TrainConfig { seed: 7, ..quick() }, 2).unwrap();
    assert_ne!(a.runs[0].history, other.runs[0].history);
}

#[test]
fn early_stopping_returns_the_best_epoch() {
    let b = sbm(2);
    let task = NodeTask::new(&b, false);
    let cfg = quick();
    let split = make_split(&b.labels, cfg.split, 3).unwrap();
    let model = AgnnModel::init(cfg.model_config(80, 2), 3).unwrap();
    let out = fit(model, &task, &split, &cfg).unwrap();
    let best_seen = out
        .history
        .iter()
        .map(|h| h.val_acc)
        .fold(f64::MIN, f64::max);
    assert_eq!(out.best_val_acc, best_seen);
    assert_eq!(out.history[out.best_epoch].val_acc, best_seen);
    let restored = evaluate_classification(&out.model, &task, &split.val).unwrap();
    assert_eq!(restored, best_seen);
    assert!(out.epochs_run <= cfg.max_epochs);
}

#[test]
fn patience_zero_runs_every_epoch() {
    let b = sbm(3);
    let cfg = TrainConfig {
        patience: 0,
        max_epochs: 25,
        ..quick()
    };
    let out = run_repeated(&b, &cfg, 1).unwrap();
    assert_eq!(out.runs[0].epochs_run, 25);
    assert_eq!(out.std, 0.0);
}

#[test]
fn aggregate_is_recomputable_from_runs() {
    let out = run_repeated(&sbm(4), &quick(), 3).unwrap();
    let accs: Vec<f64> = out.runs.iter().map(|r| r.test_accuracy).collect();
    assert_eq!(mean_std(&accs), (out.mean, out.std));
    assert!(out.std >= 0.0);
    assert_eq!(
        out.runs.iter().map(|r| r.repeat).collect::<Vec<_>>(),
        vec![0, 1, 2]
    );
}

#[test]
fn convex_probe_loss_does_not_increase() {
    // A single propagation layer is linear in its weights, so the
    // cross-entropy is convex.
    let b = sbm(5);
    let cfg = TrainConfig {
        layers: 1,
        dropout: 0.0,
        weight_decay: 0.0,
        lr: 1e-3,
        regularizer: Regularizer::Disabled,
        max_epochs: 60,
        patience: 0,
        ..quick()
    };
    let run = run_repeated(&b, &cfg, 1).unwrap();
    let errors: Vec<f64> = run.runs[0].history.iter().map(|h| h.error).collect();
    for w in errors.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn sampled_regularizer_trains() {
    let cfg = TrainConfig {
        regularizer: Regularizer::Sampled {
            negatives_per_edge: 3,
        },
        ..quick()
    };
    let out = run_repeated(&sbm(6), &cfg, 1).unwrap();
    assert!(out.runs[0].history.iter().all(|h| h.reg > 0.0));
}

#[test]
fn regression_memorizes_a_few_graphs() {
    let mut set = generate_dag_regression(&DagSpec {
        count: 10,
        ..DagSpec::default()
    })
    .unwrap();
    set.train = (0..10).collect();
    set.test = (0..10).collect();
    let cfg = RegressionConfig {
        lr: 1e-3,
        layers: 2,
        epochs: 10_000,
        batch_size: 10,
        lambda: 0.0,
        ..RegressionConfig::default()
    };
    let out = fit_regression(&set, &cfg).unwrap();
    assert!(out.test.rmse <= 1e-3, "rmse {}", out.test.rmse);
}

#[test]
fn regression_rejects_empty_parts() {
    let mut set = generate_dag_regression(&DagSpec {
        count: 5,
        ..DagSpec::default()
    })
    .unwrap();
    set.test.clear();
    assert!(fit_regression(&set, &RegressionConfig::default()).is_err());
}
