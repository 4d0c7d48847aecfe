use ndarray::{array, Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use super::*;

fn random_params(p_in: usize, n: usize, p_out: usize, seed: u64) -> LstmParams {
    LstmParams::init(p_in, n, p_out, seed).unwrap()
}

fn random_sequence(rng: &mut ChaCha12Rng, t: usize, p_in: usize, p_out: usize) -> Sequence {
    Sequence::new(
        Array2::from_shape_fn((t, p_in), |_| rng.random_range(-1.0..1.0)),
        Array2::from_shape_fn((t, p_out), |_| rng.random_range(-1.0..1.0)),
    )
    .unwrap()
}

// ---------------------------------------------------------------------
// initialization
// ---------------------------------------------------------------------

#[test]
fn init_is_deterministic_under_seed() {
    let a = random_params(3, 5, 2, 42);
    let b = random_params(3, 5, 2, 42);
    assert_eq!(a, b);
    let c = random_params(3, 5, 2, 43);
    assert_ne!(a, c);
}

#[test]
fn init_biases_follow_the_stated_rule() {
    let p = random_params(4, 6, 3, 0);
    assert!(p.b_f.iter().all(|&v| v == 1.0));
    assert!(p.b_i.iter().all(|&v| v == 0.0));
    assert!(p.b_c.iter().all(|&v| v == 0.0));
    assert!(p.b_o.iter().all(|&v| v == 0.0));
    assert!(p.b_y.iter().all(|&v| v == 0.0));
}

#[test]
fn init_weights_bounded_by_fan_in_scale() {
    let p = random_params(4, 8, 2, 1);
    assert!(p.w_f.iter().all(|v| v.abs() <= 0.5)); // 1/sqrt(4)
    let s = 1.0 / 8.0f64.sqrt();
    assert!(p.u_c.iter().all(|v| v.abs() <= s));
    assert!(p.w_y.iter().all(|v| v.abs() <= s));
}

// ---------------------------------------------------------------------
// cell forward
// ---------------------------------------------------------------------

#[test]
fn cell_with_zero_params_halves_gates() {
    let params = LstmParams::zeros(2, 3, 2);
    let state = LstmState::zeros(3);
    let (next, cache) = cell_forward(&params, array![0.7, -0.3].view(), &state).unwrap();
    assert!(cache.f.iter().all(|&v| v == 0.5));
    assert!(cache.i.iter().all(|&v| v == 0.5));
    assert!(cache.o.iter().all(|&v| v == 0.5));
    assert!(cache.c_tilde.iter().all(|&v| v == 0.0));
    assert!(next.c.iter().all(|&v| v == 0.0));
    assert!(next.h.iter().all(|&v| v == 0.0));
}

#[test]
fn saturated_forget_gate_preserves_memory() {
    let mut params = LstmParams::zeros(1, 1, 1);
    params.b_f[0] = 100.0;
    let state = LstmState {
        h: array![0.0],
        c: array![1.0],
    };
    let (next, _) = cell_forward(&params, array![0.0].view(), &state).unwrap();
    assert!((next.c[0] - 1.0).abs() < 1e-10);
    let expected_h = 0.5 * 1.0f64.tanh(); // o = 0.5, tanh(c) = tanh(1)
    assert!((next.h[0] - expected_h).abs() < 1e-10);
    assert!((next.h[0] - 0.3807971).abs() < 1e-7);
}

/// Scalar re-evaluation of the cell equations, written with plain loops.
fn scalar_cell_oracle(
    params: &LstmParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = params.hidden_dim;
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let pre = |w: &Array2<f64>, u: &Array2<f64>, b: &Array1<f64>, r: usize| {
        let mut a = b[r];
        for (j, &xv) in x.iter().enumerate() {
            a += w[[r, j]] * xv;
        }
        for (j, &hv) in h_prev.iter().enumerate() {
            a += u[[r, j]] * hv;
        }
        a
    };
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    for r in 0..n {
        let f = sig(pre(&params.w_f, &params.u_f, &params.b_f, r));
        let i = sig(pre(&params.w_i, &params.u_i, &params.b_i, r));
        let g = pre(&params.w_c, &params.u_c, &params.b_c, r).tanh();
        let o = sig(pre(&params.w_o, &params.u_o, &params.b_o, r));
        c[r] = i * g + f * c_prev[r];
        h[r] = o * c[r].tanh();
    }
    (h, c)
}

#[test]
fn cell_matches_scalar_oracle() {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let params = random_params(3, 2, 2, 7);
    let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h_prev: Vec<f64> = (0..2).map(|_| rng.random_range(-0.9..0.9)).collect();
    let c_prev: Vec<f64> = (0..2).map(|_| rng.random_range(-1.5..1.5)).collect();
    let state = LstmState {
        h: Array1::from_vec(h_prev.clone()),
        c: Array1::from_vec(c_prev.clone()),
    };
    let (next, _) = cell_forward(&params, Array1::from_vec(x.clone()).view(), &state).unwrap();
    let (h_oracle, c_oracle) = scalar_cell_oracle(&params, &x, &h_prev, &c_prev);
    for r in 0..2 {
        assert!((next.h[r] - h_oracle[r]).abs() < 1e-14);
        assert!((next.c[r] - c_oracle[r]).abs() < 1e-14);
    }
}

#[test]
fn cell_rejects_shape_mismatch() {
    let params = LstmParams::zeros(2, 3, 1);
    let state = LstmState::zeros(3);
    assert!(cell_forward(&params, array![1.0].view(), &state).is_err());
    let bad_state = LstmState::zeros(2);
    assert!(cell_forward(&params, array![1.0, 2.0].view(), &bad_state).is_err());
}

// ---------------------------------------------------------------------
// projection
// ---------------------------------------------------------------------

#[test]
fn project_degenerate_cases() {
    let mut params = LstmParams::zeros(1, 3, 2);
    params.b_y = array![1.5, -2.0];
    assert_eq!(project(&params, &array![0.3, 0.1, -0.2]).unwrap(), array![1.5, -2.0]);

    let mut identity = LstmParams::zeros(1, 3, 3);
    identity.w_y = Array2::eye(3);
    let h = array![0.3, 0.1, -0.2];
    assert_eq!(project(&identity, &h).unwrap(), h);
}

#[test]
fn project_hand_case() {
    let mut params = LstmParams::zeros(1, 3, 2);
    params.w_y = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
    params.b_y = array![0.5, -0.5];
    let h = array![1.0, -1.0, 2.0];
    // rows dotted by hand: 1 - 2 + 6 + 0.5, 4 - 5 + 12 - 0.5
    let y = project(&params, &h).unwrap();
    assert!((y[0] - 5.5).abs() < 1e-15);
    assert!((y[1] - 10.5).abs() < 1e-15);
}

// ---------------------------------------------------------------------
// sequence forward
// ---------------------------------------------------------------------

#[test]
fn sequence_of_one_equals_cell_plus_project() {
    let params = random_params(2, 4, 3, 9);
    let x = array![[0.4, -0.6]];
    let (outputs, caches) = sequence_forward(&params, &x).unwrap();
    let (state, _) = cell_forward(&params, x.row(0), &LstmState::zeros(4)).unwrap();
    let y = project(&params, &state.h).unwrap();
    assert_eq!(outputs.row(0).to_owned(), y);
    assert_eq!(caches.len(), 1);
}

#[test]
fn no_recurrence_means_repeated_input_repeats_output() {
    let mut params = random_params(2, 4, 2, 10);
    params.u_f.fill(0.0);
    params.u_i.fill(0.0);
    params.u_c.fill(0.0);
    params.u_o.fill(0.0);
    // recurrence also flows through c, so freeze the forget gate shut
    params.b_f.fill(-100.0);
    let inputs = Array2::from_shape_fn((4, 2), |(_, j)| if j == 0 { 0.3 } else { -0.8 });
    let (outputs, _) = sequence_forward(&params, &inputs).unwrap();
    let first = outputs.row(0).to_owned();
    for t in 1..4 {
        for (a, b) in outputs.row(t).iter().zip(first.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn sequence_forward_matches_stepwise_oracle() {
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let params = random_params(3, 4, 2, 11);
    let inputs = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
    let (outputs, caches) = sequence_forward(&params, &inputs).unwrap();

    let mut state = LstmState::zeros(4);
    for t in 0..5 {
        let (next, _) = cell_forward(&params, inputs.row(t), &state).unwrap();
        let y = project(&params, &next.h).unwrap();
        for (a, b) in outputs.row(t).iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
        state = next;
    }
    assert_eq!(caches.len(), 5);
}

#[test]
fn gate_bounds_hold_on_random_forwards() {
    let mut rng = ChaCha12Rng::seed_from_u64(12);
    for seed in 0..20 {
        let params = random_params(3, 5, 2, seed);
        let inputs = Array2::from_shape_fn((7, 3), |_| rng.random_range(-3.0..3.0));
        let (_, caches) = sequence_forward(&params, &inputs).unwrap();
        for cache in &caches {
            assert!(cache.f.iter().all(|&v| v > 0.0 && v < 1.0));
            assert!(cache.i.iter().all(|&v| v > 0.0 && v < 1.0));
            assert!(cache.o.iter().all(|&v| v > 0.0 && v < 1.0));
            assert!(cache.c_tilde.iter().all(|&v| v > -1.0 && v < 1.0));
            assert!(cache.h.iter().all(|&v| v > -1.0 && v < 1.0));
        }
    }
}

// ---------------------------------------------------------------------
// bptt
// ---------------------------------------------------------------------

#[test]
fn bptt_at_the_minimum_gives_zero_loss_and_gradients() {
    let params = random_params(2, 3, 2, 13);
    let mut rng = ChaCha12Rng::seed_from_u64(13);
    let inputs = Array2::from_shape_fn((4, 2), |_| rng.random_range(-1.0..1.0));
    let (outputs, caches) = sequence_forward(&params, &inputs).unwrap();
    let (grads, loss) = bptt(&params, &caches, &outputs, 0.0).unwrap();
    assert_eq!(loss, 0.0);
    for tensor in grads.tensors() {
        assert!(tensor.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn bptt_matches_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(14);
    let params = random_params(3, 4, 2, 14);
    let seq = random_sequence(&mut rng, 6, 3, 2);
    let worst = grad_check(&params, &seq, 0.0, DEFAULT_GRAD_CHECK_EPS).unwrap();
    assert!(worst < 1e-5, "max relative error {worst}");
}

#[test]
fn bptt_matches_finite_differences_with_penalty() {
    let mut rng = ChaCha12Rng::seed_from_u64(15);
    let params = random_params(2, 3, 2, 15);
    let seq = random_sequence(&mut rng, 5, 2, 2);
    let worst = grad_check(&params, &seq, 0.1, DEFAULT_GRAD_CHECK_EPS).unwrap();
    assert!(worst < 1e-5, "max relative error {worst}");
}

#[test]
fn recurrent_penalty_gradient_is_exact_at_t1() {
    // with one step and a zero initial state, h_prev = 0 and the recurrent
    // matrices receive no data gradient, so dU = 2 * l2 * U exactly
    let params = random_params(2, 3, 1, 16);
    let inputs = array![[0.4, -0.2]];
    let targets = array![[0.9]];
    let (_, caches) = sequence_forward(&params, &inputs).unwrap();
    let (grads, _) = bptt(&params, &caches, &targets, 0.1).unwrap();
    for (g, u) in [
        (&grads.u_f, &params.u_f),
        (&grads.u_i, &params.u_i),
        (&grads.u_c, &params.u_c),
        (&grads.u_o, &params.u_o),
    ] {
        for (a, b) in g.iter().zip(u.iter()) {
            assert_eq!(*a, 0.2 * b);
        }
    }
}

#[test]
fn bptt_rejects_length_mismatch() {
    let params = random_params(2, 3, 1, 17);
    let inputs = array![[0.1, 0.2], [0.3, 0.4]];
    let (_, caches) = sequence_forward(&params, &inputs).unwrap();
    let bad_targets = array![[1.0]];
    assert!(bptt(&params, &caches, &bad_targets, 0.0).is_err());
}

// ---------------------------------------------------------------------
// adam
// ---------------------------------------------------------------------

#[test]
fn adam_zero_gradients_leave_parameters_unchanged() {
    let mut params = random_params(2, 3, 2, 18);
    let before = params.clone();
    let grads = params.zeros_like();
    let mut state = AdamState::new(&params);
    adam_step(&mut params, &grads, &mut state, 0.1, &AdamConfig::default());
    assert_eq!(params, before);
}

#[test]
fn adam_first_step_magnitude_is_lr_signed() {
    let mut params = LstmParams::zeros(1, 2, 1);
    let mut grads = params.zeros_like();
    grads.w_f[[0, 0]] = 3.7;
    grads.w_f[[1, 0]] = -0.002;
    let mut state = AdamState::new(&params);
    adam_step(&mut params, &grads, &mut state, 0.05, &AdamConfig::default());
    // bias-corrected ratio is 1 when |g| >> epsilon
    assert!((params.w_f[[0, 0]] + 0.05).abs() < 1e-6);
    assert!((params.w_f[[1, 0]] - 0.05).abs() < 1e-4);
    assert_eq!(params.w_i[[0, 0]], 0.0);
}

#[test]
fn adam_matches_scalar_oracle_on_quadratic() {
    // three steps minimizing f(w) = w^2 from w = 1 with lr 0.1
    let cfg = AdamConfig::default();
    let mut w = [1.0f64];
    let mut m = [0.0f64];
    let mut v = [0.0f64];
    for step in 1..=3u64 {
        let g = [2.0 * w[0]];
        super::adam::adam_update_slice(&mut w, &g, &mut m, &mut v, step, 0.1, &cfg);
    }

    // independently coded oracle
    let (mut w2, mut m2, mut v2) = (1.0f64, 0.0f64, 0.0f64);
    for step in 1..=3 {
        let g = 2.0 * w2;
        m2 = 0.9 * m2 + 0.1 * g;
        v2 = 0.999 * v2 + 0.001 * g * g;
        let m_hat = m2 / (1.0 - 0.9f64.powi(step));
        let v_hat = v2 / (1.0 - 0.999f64.powi(step));
        w2 -= 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
    }
    assert!((w[0] - w2).abs() < 1e-12, "{} vs {}", w[0], w2);
}

// ---------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------

fn learnable_dataset(seed: u64) -> (Vec<Sequence>, Vec<Sequence>) {
    // targets are a fixed linear map of the inputs
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let map = array![[0.5, -0.3], [0.2, 0.7]];
    let mut make = |t: usize| {
        let inputs = Array2::from_shape_fn((t, 2), |_| rng.random_range(-1.0..1.0));
        let targets = inputs.dot(&map.t());
        Sequence::new(inputs, targets).unwrap()
    };
    (vec![make(30), make(30)], vec![make(20)])
}

#[test]
fn train_zero_epochs_returns_initial_params() {
    let params = random_params(2, 3, 2, 19);
    let (train_seqs, val_seqs) = learnable_dataset(19);
    let cfg = TrainConfig {
        max_epochs: 0,
        ..TrainConfig::default()
    };
    let (out, log) = train(params.clone(), &train_seqs, &val_seqs, &[], &cfg).unwrap();
    assert_eq!(out, params);
    assert!(log.entries.is_empty());
}

#[test]
fn train_zero_inputs_and_targets_converges_immediately() {
    let params = random_params(2, 4, 2, 20);
    let zero_seq = Sequence::new(Array2::zeros((10, 2)), Array2::zeros((10, 2))).unwrap();
    let cfg = TrainConfig {
        max_epochs: 50,
        ..TrainConfig::default()
    };
    let seqs = [zero_seq];
    let (_, log) = train(params, &seqs, &seqs, &seqs, &cfg).unwrap();
    // zero inputs with a zero initial state keep the cell state at zero, so
    // the projection of the zero-state dynamics is b_y = 0 from epoch 1
    assert!(log.entries[0].val_loss < 1e-12);
    assert!(log.entries.len() <= 50);
    assert!(log.entries.last().unwrap().val_loss < 1e-6);
}

#[test]
fn train_is_deterministic_under_seed() {
    let (train_seqs, val_seqs) = learnable_dataset(21);
    let cfg = TrainConfig {
        max_epochs: 8,
        ..TrainConfig::default()
    };
    let run = || {
        train(
            random_params(2, 3, 2, 21),
            &train_seqs,
            &val_seqs,
            &[],
            &cfg,
        )
        .unwrap()
    };
    let (params_a, log_a) = run();
    let (params_b, log_b) = run();
    assert_eq!(params_a, params_b);
    assert_eq!(log_a.entries.len(), log_b.entries.len());
    for (a, b) in log_a.entries.iter().zip(&log_b.entries) {
        assert_eq!(a.train_loss, b.train_loss);
        assert_eq!(a.val_loss, b.val_loss);
        assert_eq!(a.lr, b.lr);
        assert_eq!(a.iteration, b.iteration);
    }
}

#[test]
fn train_makes_progress_and_lr_schedule_is_monotone() {
    let (train_seqs, val_seqs) = learnable_dataset(22);
    let cfg = TrainConfig {
        max_epochs: 60,
        ..TrainConfig::default()
    };
    let (_, log) = train(
        random_params(2, 4, 2, 22),
        &train_seqs,
        &val_seqs,
        &[],
        &cfg,
    )
    .unwrap();
    let best = log
        .entries
        .iter()
        .find(|e| e.epoch == log.best_epoch())
        .unwrap();
    assert!(best.train_loss <= log.entries[0].train_loss);

    for pair in log.entries.windows(2) {
        let (prev, next) = (pair[0].lr, pair[1].lr);
        assert!(next <= prev);
        if next < prev {
            assert!((prev / next - 10.0).abs() < 1e-9);
        }
    }
    // epochs strictly increasing
    for pair in log.entries.windows(2) {
        assert!(pair[1].epoch > pair[0].epoch);
    }
}

#[test]
fn train_with_tbptt_windows_runs_and_improves() {
    let (train_seqs, val_seqs) = learnable_dataset(23);
    let cfg = TrainConfig {
        max_epochs: 30,
        tbptt_len: 7,
        ..TrainConfig::default()
    };
    let (_, log) = train(
        random_params(2, 4, 2, 23),
        &train_seqs,
        &val_seqs,
        &[],
        &cfg,
    )
    .unwrap();
    // 30 rows in windows of 7 -> 5 updates per sequence per epoch
    assert_eq!(log.entries[0].iteration, 10);
    assert!(log.entries.last().unwrap().val_loss < log.entries[0].val_loss);
}

#[test]
fn train_rejects_empty_sets_and_bad_config() {
    let params = random_params(2, 3, 2, 24);
    let (train_seqs, val_seqs) = learnable_dataset(24);
    assert!(train(params.clone(), &[], &val_seqs, &[], &TrainConfig::default()).is_err());
    let bad = TrainConfig {
        initial_lr: 1e-7,
        ..TrainConfig::default()
    };
    assert!(train(params, &train_seqs, &val_seqs, &[], &bad).is_err());
}

// ---------------------------------------------------------------------
// gradient checker
// ---------------------------------------------------------------------

#[test]
fn grad_check_on_random_small_instances() {
    let mut rng = ChaCha12Rng::seed_from_u64(25);
    for seed in 0..20u64 {
        let p_in = rng.random_range(1..=4);
        let n = rng.random_range(1..=6);
        let p_out = rng.random_range(1..=3);
        let t = rng.random_range(1..=8);
        let params = random_params(p_in, n, p_out, 1000 + seed);
        let seq = random_sequence(&mut rng, t, p_in, p_out);
        let l2 = if seed % 3 == 0 { 0.05 } else { 0.0 };
        let worst = grad_check(&params, &seq, l2, DEFAULT_GRAD_CHECK_EPS).unwrap();
        assert!(worst < 1e-5, "seed {seed}: {worst}");
    }
}

#[test]
fn grad_check_zero_loss_instance_returns_zero() {
    // all-zero parameters with zero data: every perturbed loss is symmetric
    // in the sign of the perturbation, so both sides are exactly equal
    let params = LstmParams::zeros(2, 3, 2);
    let seq = Sequence::new(Array2::zeros((3, 2)), Array2::zeros((3, 2))).unwrap();
    let worst = grad_check(&params, &seq, 0.0, DEFAULT_GRAD_CHECK_EPS).unwrap();
    assert_eq!(worst, 0.0);
}

#[test]
fn grad_check_default_eps_constant() {
    assert_eq!(DEFAULT_GRAD_CHECK_EPS, 1e-5);
}

// ---------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------

#[test]
fn lstm_params_json_round_trip() {
    let params = random_params(3, 4, 2, 26);
    let json = serde_json::to_string(&params).unwrap();
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(value["input_dim"], 3);
    assert_eq!(value["w_f"].as_array().unwrap().len(), 4);
    assert_eq!(value["b_y"].as_array().unwrap().len(), 2);
    let back: LstmParams = serde_json::from_str(&json).unwrap();
    assert_eq!(back, params);
}

#[test]
fn train_log_csv_has_contract_columns() {
    let log = TrainLog {
        entries: vec![TrainLogEntry {
            epoch: 1,
            iteration: 4,
            wall_seconds: 0.25,
            train_loss: 0.5,
            val_loss: 0.6,
            test_loss: 0.7,
            lr: 0.01,
        }],
    };
    let csv = log.to_csv();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,iteration,wall_seconds,train_loss,val_loss,test_loss,lr"
    );
    assert_eq!(lines.next().unwrap(), "1,4,0.25,0.5,0.6,0.7,0.01");
}
