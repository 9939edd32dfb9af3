mod common;

use common::*;
use mihgnn::hgnn::{init_model, GraphSample, HgnnConfig, HgnnModel, InputDims, Labels};
use mihgnn::numcore::{Matrix, Tape};
use mihgnn::params::ParamSet;
use mihgnn::training::*;
use mihgnn::Task;
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ce(logits: &Matrix, labels: &[usize]) -> f64 {
    let mut tape = Tape::new();
    let y = tape.constant(logits.clone());
    let l = foot_ce_loss(&mut tape, y, labels).unwrap();
    tape.scalar(l)
}

fn mse(pred: &[f64], targets: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let y = tape.constant(Array2::from_shape_vec((pred.len(), 1), pred.to_vec()).unwrap());
    let l = foot_mse_loss(&mut tape, y, targets).unwrap();
    tape.scalar(l)
}

/// Straight-line log-sum-exp cross-entropy.
fn ce_oracle(logits: &Matrix, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(r, &c)| {
            let row: Vec<f64> = logits.row(r).to_vec();
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln() - row[c]
        })
        .sum()
}

fn small_model(task: Task, seed: u64) -> HgnnModel {
    let mut cfg = HgnnConfig::new(task, 6, 2, seed);
    cfg.input_dims = InputDims { base: 5, joint: 4, foot: 3 };
    init_model(&quad_graph(), &cfg).unwrap()
}

fn toy_set(task: Task, n: usize, seed: u64) -> Vec<GraphSample> {
    let g = quad_graph();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = InputDims { base: 5, joint: 4, foot: 3 };
    (0..n).map(|_| random_sample(&g, dims, task, &mut rng)).collect()
}

#[test]
fn foot_losses_by_hand() {
    assert!((ce(&Matrix::zeros((4, 2)), &[0, 1, 1, 0]) - 4.0 * 2f64.ln()).abs() < 1e-14);
    let confident = array![[-30.0, 30.0], [30.0, -30.0], [-30.0, 30.0], [30.0, -30.0]];
    assert!(ce(&confident, &[1, 0, 1, 0]) < 1e-8);
    assert_eq!(mse(&[3.0, -1.0, 2.5, 0.0], &[3.0, -1.0, 2.5, 0.0]), 0.0);
    assert_eq!(mse(&[1.0; 4], &[0.0; 4]), 4.0);
}

proptest! {
    #[test]
    fn losses_match_oracles_and_ignore_foot_order(seed in any::<u64>(), perm_idx in 0usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = random_matrix(4, 2, &mut rng) * 5.0;
        let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..2)).collect();
        let pred: Vec<f64> = (0..4).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let targets: Vec<f64> = (0..4).map(|_| rng.gen_range(-100.0..100.0)).collect();

        prop_assert!((ce(&logits, &labels) - ce_oracle(&logits, &labels)).abs() < 1e-12);
        let sq: f64 = pred.iter().zip(&targets).map(|(p, t)| (p - t) * (p - t)).sum();
        prop_assert!((mse(&pred, &targets) - sq).abs() <= 1e-12 * sq.max(1.0));

        let perms = permutations(4);
        let p = &perms[perm_idx];
        let logits_p = Matrix::from_shape_fn((4, 2), |(r, c)| logits[(p[r], c)]);
        let labels_p: Vec<usize> = p.iter().map(|&i| labels[i]).collect();
        let pred_p: Vec<f64> = p.iter().map(|&i| pred[i]).collect();
        let targets_p: Vec<f64> = p.iter().map(|&i| targets[i]).collect();
        prop_assert_eq!(ce(&logits_p, &labels_p), ce(&logits, &labels));
        prop_assert_eq!(mse(&pred_p, &targets_p), mse(&pred, &targets));
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn scalar_params(x: f64) -> ParamSet {
    let mut p = ParamSet::new();
    p.push("x".into(), Matrix::from_elem((1, 1), x));
    p
}

#[test]
fn adam_zero_gradient_leaves_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut p = ParamSet::new();
    p.push("a".into(), random_matrix(3, 2, &mut rng));
    p.push("b".into(), random_matrix(1, 2, &mut rng));
    let before = p.clone();
    let mut state = AdamState::new(&p);
    let zeros: Vec<Matrix> = p.iter().map(|q| Matrix::zeros(q.value.dim())).collect();
    for _ in 0..5 {
        adam_step(&mut p, &zeros, &mut state, 0.1, &AdamConfig::default());
    }
    assert_eq!(p, before);
}

#[test]
fn adam_first_step_is_learning_rate() {
    let mut p = scalar_params(0.0);
    let mut state = AdamState::new(&p);
    adam_step(&mut p, &[Matrix::from_elem((1, 1), 1.0)], &mut state, 0.1, &AdamConfig::default());
    // m_hat / (sqrt(v_hat) + eps) = 1 / (1 + 1e-8).
    let x = p.get(0).value[(0, 0)];
    assert!((x + 0.1 / (1.0 + 1e-8)).abs() < 1e-15, "{x}");
}

#[test]
fn adam_minimizes_a_parabola_like_a_scalar_simulation() {
    let cfg = AdamConfig::default();
    let mut p = scalar_params(1.0);
    let mut state = AdamState::new(&p);
    let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    for t in 1..=100 {
        let g = 2.0 * p.get(0).value[(0, 0)];
        adam_step(&mut p, &[Matrix::from_elem((1, 1), g)], &mut state, 0.05, &cfg);

        let g = 2.0 * x;
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        let mh = m / (1.0 - cfg.beta1.powi(t));
        let vh = v / (1.0 - cfg.beta2.powi(t));
        x -= 0.05 * mh / (vh.sqrt() + cfg.eps);
        assert!((p.get(0).value[(0, 0)] - x).abs() < 1e-12);
    }
    assert!(x.abs() < 0.1, "{x}");
}

#[test]
fn constant_labels_are_learned() {
    let mut data = toy_set(Task::Contact, 20, 5);
    for s in &mut data {
        s.labels = Labels::Contact(vec![1; 4]);
    }
    let mut model = small_model(Task::Contact, 5);
    let mut cfg = TrainConfig::new(Task::Contact);
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 5;
    cfg.max_epochs = 50;
    cfg.patience = 50;
    let report = train(&mut model, &data, &data, &cfg).unwrap();
    assert_eq!(report.epochs_run(), 50);
    assert!(report.val_loss.windows(2).all(|w| w[1] < w[0]), "{:?}", report.val_loss);
    assert!(*report.val_loss.last().unwrap() < 0.01 * report.val_loss[0]);
}

#[test]
fn zero_rate_with_patience_one_stops_after_two_epochs() {
    let data = toy_set(Task::Grf, 12, 6);
    let mut model = small_model(Task::Grf, 6);
    let before = model.params.clone();
    let mut cfg = TrainConfig::new(Task::Grf);
    cfg.learning_rate = 0.0;
    cfg.patience = 1;
    let report = train(&mut model, &data, &data, &cfg).unwrap();
    assert_eq!(report.epochs_run(), 2);
    assert_eq!(report.best_epoch, 1);
    assert_eq!(report.val_loss[0], report.val_loss[1]);
    assert_eq!(model.params, before);
}

#[test]
fn training_is_deterministic() {
    let data = toy_set(Task::Contact, 40, 7);
    let run = || {
        let mut model = small_model(Task::Contact, 7);
        let mut cfg = TrainConfig::new(Task::Contact);
        cfg.learning_rate = 3e-3;
        cfg.batch_size = 7;
        cfg.max_epochs = 6;
        cfg.seed = 99;
        let report = train(&mut model, &data[..30].to_vec(), &data[30..].to_vec(), &cfg).unwrap();
        (report.train_loss, report.val_loss, model.params)
    };
    assert_eq!(run(), run());
}

#[test]
fn early_stopping_restores_best_parameters() {
    let data = toy_set(Task::Grf, 30, 8);
    let mut model = small_model(Task::Grf, 8);
    let mut cfg = TrainConfig::new(Task::Grf);
    cfg.learning_rate = 0.5;
    cfg.max_epochs = 15;
    cfg.patience = 3;
    let (train_set, val_set) = (data[..20].to_vec(), data[20..].to_vec());
    let report = train(&mut model, &train_set, &val_set, &cfg).unwrap();
    let val = mean_loss(&model, &val_set, 64).unwrap();
    assert_eq!(val, report.best_val_loss);
    assert_eq!(report.best_val_loss, report.val_loss.iter().cloned().fold(f64::INFINITY, f64::min));
}

#[test]
fn tiny_step_reduces_single_sample_loss() {
    for trial in 0..10 {
        for task in [Task::Contact, Task::Grf] {
            let mut model = small_model(task, 100 + trial);
            let sample = toy_set(task, 1, trial);
            let (before, grads) = loss_and_grads(&model, &sample).unwrap();
            let mut state = AdamState::new(&model.params);
            adam_step(&mut model.params, &grads, &mut state, 1e-6, &AdamConfig::default());
            let (after, _) = loss_and_grads(&model, &sample).unwrap();
            assert!(after < before, "trial {trial} {task}: {before} -> {after}");
        }
    }
}

#[test]
fn training_errors() {
    let data = toy_set(Task::Grf, 4, 9);
    let mut model = small_model(Task::Grf, 9);
    let cfg = TrainConfig::new(Task::Grf);
    let empty: Vec<GraphSample> = Vec::new();
    assert!(matches!(train(&mut model, &empty, &data, &cfg), Err(TrainError::EmptyDataset("training"))));
    assert!(matches!(train(&mut model, &data, &empty, &cfg), Err(TrainError::EmptyDataset("validation"))));

    let mut bad = data.clone();
    bad[2].labels = Labels::Grf(vec![f64::NAN; 4]);
    assert!(matches!(train(&mut model, &bad, &data, &cfg), Err(TrainError::NonFiniteLoss { epoch: 1, .. })));

    let contact = toy_set(Task::Contact, 4, 9);
    assert!(matches!(train(&mut model, &contact, &contact, &cfg), Err(TrainError::LabelMismatch)));
}

#[test]
fn checkpoints_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let g = quad_graph();
    let mut hgnn = init_model(&g, &HgnnConfig::new(Task::Grf, 7, 2, 3)).unwrap();
    for v in hgnn.params.values_mut() {
        v.mapv_inplace(|x| x * std::f64::consts::PI);
    }
    let mlp = build_mlp(&MlpConfig { input_dim: 9, hidden_size: 4, num_layers: 3, output_dim: 4, seed: 2 }).unwrap();
    for model in [TrainedModel::Hgnn(hgnn), TrainedModel::Mlp(mlp)] {
        let path = dir.path().join("ck.json");
        let hash = model.save(&path).unwrap();
        let (loaded, hash2) = TrainedModel::load(&path).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(hash, hash2);
    }

    let model = TrainedModel::Hgnn(init_model(&g, &HgnnConfig::new(Task::Contact, 3, 1, 0)).unwrap());
    let mut ck = model.to_checkpoint();
    if let Checkpoint::Hgnn { graph_fingerprint, .. } = &mut ck {
        graph_fingerprint.replace_range(0..1, if graph_fingerprint.starts_with('0') { "1" } else { "0" });
    }
    assert!(matches!(TrainedModel::from_checkpoint(&ck), Err(TrainError::Checkpoint(_))));
}

#[test]
fn config_model_kinds() {
    let g = quad_graph();
    let cfg = TrainConfig::from_json(r#"{"task": "grf", "model": "mlp"}"#).unwrap();
    match cfg.build_model(&g).unwrap() {
        TrainedModel::Mlp(m) => assert_eq!(m.config.num_params(), 1_582_604),
        TrainedModel::Hgnn(_) => panic!("expected an MLP"),
    }
    let cfg = TrainConfig::from_json(r#"{"task": "contact", "model": "mlp"}"#).unwrap();
    assert!(matches!(cfg.build_model(&g), Err(TrainError::InvalidConfig(_))));
    let cfg = TrainConfig::from_json(r#"{"task": "contact", "hidden_size": 5, "num_layers": 4}"#).unwrap();
    match cfg.build_model(&g).unwrap() {
        TrainedModel::Hgnn(m) => assert_eq!(m.params.num_floats(), 11_627),
        TrainedModel::Mlp(_) => panic!("expected a graph network"),
    }
}
