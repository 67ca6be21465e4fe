use ssdfa_core::feedback::nonzeros_per_row;
use ssdfa_core::network::{instrument, train, Precision};
use ssdfa_core::numerics::softmax_xent;
use ssdfa_core::*;

fn mnist_like(seed: u64) -> Network<f64> {
    Network::new(&[784, 400, 10], Activation::Tanh, false, &mut Rng::new(seed)).unwrap()
}

fn random_input(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = Rng::new(seed);
    (0..n).map(|_| rng.uniform(0.0, 1.0)).collect()
}

fn rel_close(a: &Matrix<f64>, b: &Matrix<f64>, tol: f64) -> bool {
    a.shape() == b.shape()
        && a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1e-300))
}

fn error_for(trace: &ForwardTrace<f64>, label: usize) -> Vec<f64> {
    softmax_xent(trace.output().as_slice(), label).unwrap().1
}

#[test]
fn forward_matches_straight_line_oracle() {
    let mut rng = Rng::new(42);
    let net = Network::<f64>::new(&[5, 4, 3], Activation::Tanh, false, &mut rng).unwrap();
    let x = random_input(5, 7);
    let w1 = net.layer(0).weights();
    let w2 = net.layer(1).weights();
    let mut h = [0.0; 4];
    for i in 0..4 {
        let mut s = 0.0;
        for j in 0..5 {
            s += w1[(i, j)] * x[j];
        }
        h[i] = s.tanh();
    }
    let mut out = [0.0; 3];
    for i in 0..3 {
        for j in 0..4 {
            out[i] += w2[(i, j)] * h[j];
        }
    }
    let t = net.forward(&x).unwrap();
    for (a, b) in t.output().as_slice().iter().zip(out) {
        assert!((a - b).abs() < 1e-12);
    }
    for (a, b) in t.activation(0).as_slice().iter().zip(h) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn trace_activations_are_f_of_preactivations() {
    let net = Network::<f64>::new(&[6, 5, 4, 3], Activation::Tanh, true, &mut Rng::new(3)).unwrap();
    let t = net.forward(&random_input(6, 1)).unwrap();
    assert_eq!(t.depth(), 3);
    for l in 0..3 {
        let act = net.layer(l).activation();
        for (a, y) in t.activation(l).as_slice().iter().zip(t.pre_activation(l).as_slice()) {
            assert_eq!(*a, act.apply(*y));
        }
    }
}

#[test]
fn dense_dfa_matches_per_neuron_loop() {
    let mut net = mnist_like(11);
    let cfg = TrainConfig { algorithm: Algorithm::Dfa, seed: 11, ..TrainConfig::default() };
    net.attach_feedback(&cfg).unwrap();
    let x = random_input(784, 2);
    let t = net.forward(&x).unwrap();
    let e = error_for(&t, 4);
    let g = net.backward_dfa(&t, &e).unwrap();
    let b = net.layer(0).feedback().unwrap().mat();
    let a = t.activation(0);
    for i in 0..400 {
        let mut s = 0.0;
        for j in 0..10 {
            s += b[(i, j)] * e[j];
        }
        let want = s * (1.0 - a[(i, 0)] * a[(i, 0)]);
        assert!((g.deltas[0][(i, 0)] - want).abs() <= 1e-12 * want.abs().max(1e-300));
    }
}

#[test]
fn sparse_view_of_dense_feedback_is_bitwise_dfa() {
    let mut net = mnist_like(5);
    let cfg = TrainConfig { algorithm: Algorithm::Dfa, seed: 5, ..TrainConfig::default() };
    net.attach_feedback(&cfg).unwrap();
    let t = net.forward(&random_input(784, 9)).unwrap();
    let e = error_for(&t, 0);
    let dfa = net.backward_dfa(&t, &e).unwrap();
    let sdfa = net.backward_sdfa(&t, &e).unwrap();
    assert_eq!(dfa, sdfa);
}

#[test]
fn ssdfa_matches_densified_dfa() {
    let mut net = mnist_like(8);
    let cfg = TrainConfig { algorithm: Algorithm::Ssdfa, seed: 8, ..TrainConfig::default() };
    net.attach_feedback(&cfg).unwrap();
    let t = net.forward(&random_input(784, 3)).unwrap();
    let e = error_for(&t, 7);
    let sparse = net.backward_sdfa(&t, &e).unwrap();
    let dense = net.backward_dfa(&t, &e).unwrap();
    for l in 0..2 {
        assert!(rel_close(&sparse.deltas[l], &dense.deltas[l], 1e-12));
        assert!(rel_close(&sparse.weights[l], &dense.weights[l], 1e-12));
    }
}

#[test]
fn output_layer_gradient_is_shared() {
    let mut net = Network::<f64>::new(&[6, 5, 4, 3], Activation::Tanh, false, &mut Rng::new(1)).unwrap();
    let cfg = TrainConfig { algorithm: Algorithm::Sdfa, sparsity: 0.5, rank: Some(2), seed: 1, ..TrainConfig::default() };
    net.attach_feedback(&cfg).unwrap();
    let t = net.forward(&random_input(6, 4)).unwrap();
    let e = error_for(&t, 2);
    let bp = net.backward_bp(&t, &e).unwrap();
    let dfa = net.backward_dfa(&t, &e).unwrap();
    let sdfa = net.backward_sdfa(&t, &e).unwrap();
    assert_eq!(bp.weights[2], dfa.weights[2]);
    assert_eq!(bp.weights[2], sdfa.weights[2]);
    assert_eq!(bp.deltas[2].as_slice(), e.as_slice());
}

#[test]
fn linear_network_dfa_with_transported_weights_equals_bp() {
    let mut net = Network::<f64>::new(&[6, 5, 4, 3], Activation::Linear, false, &mut Rng::new(2)).unwrap();
    let w2 = net.layer(1).weights().clone();
    let w3 = net.layer(2).weights().clone();
    // B_1 = (W_3 W_2)ᵀ, B_2 = W_3ᵀ
    net.set_feedback(0, FeedbackMatrix::from_dense(w3.matmul(&w2).unwrap().transpose(), 3, 0.0, 0)).unwrap();
    net.set_feedback(1, FeedbackMatrix::from_dense(w3.transpose(), 3, 0.0, 0)).unwrap();
    let t = net.forward(&random_input(6, 5)).unwrap();
    let e = error_for(&t, 1);
    let bp = net.backward_bp(&t, &e).unwrap();
    let dfa = net.backward_dfa(&t, &e).unwrap();
    for l in 0..3 {
        assert!(rel_close(&bp.deltas[l], &dfa.deltas[l], 1e-12), "layer {l}");
    }
    let direct = w2.transpose().matmul(&w3.transpose()).unwrap().matmul(&Matrix::column(&e)).unwrap();
    assert!(rel_close(&bp.deltas[0], &direct, 1e-12));
}

#[test]
fn dfa_hidden_errors_ignore_deeper_weights() {
    for algo in [Algorithm::Dfa, Algorithm::Ssdfa] {
        let mut net = Network::<f64>::new(&[6, 5, 4, 3], Activation::Tanh, false, &mut Rng::new(3)).unwrap();
        let cfg = TrainConfig { algorithm: algo, seed: 3, ..TrainConfig::default() };
        net.attach_feedback(&cfg).unwrap();
        let t = net.forward(&random_input(6, 6)).unwrap();
        let e = error_for(&t, 0);
        let before = net.backward(algo, &t, &Matrix::column(&e)).unwrap();
        let mut perturbed = net.clone();
        for l in 1..3 {
            perturbed.weights_mut(l).iter_mut().for_each(|w| *w = *w * 3.0 - 0.25);
        }
        let after = perturbed.backward(algo, &t, &Matrix::column(&e)).unwrap();
        assert_eq!(before.deltas[0], after.deltas[0]);
        assert_eq!(before.deltas[1], after.deltas[1]);
        let bp_before = net.backward_bp(&t, &e).unwrap();
        let bp_after = perturbed.backward_bp(&t, &e).unwrap();
        assert_ne!(bp_before.deltas[0], bp_after.deltas[0]);
    }
}

#[test]
fn batch_gradient_is_mean_of_samples() {
    let net = Network::<f64>::new(&[4, 3, 2], Activation::Tanh, true, &mut Rng::new(4)).unwrap();
    let xs = [random_input(4, 1), random_input(4, 2), random_input(4, 3)];
    let labels = [0, 1, 1];
    let mut mean = vec![Matrix::<f64>::zeros(3, 4), Matrix::zeros(2, 3)];
    for (x, &l) in xs.iter().zip(&labels) {
        let t = net.forward(x).unwrap();
        let g = net.backward_bp(&t, &error_for(&t, l)).unwrap();
        for k in 0..2 {
            for (m, v) in mean[k].as_mut_slice().iter_mut().zip(g.weights[k].as_slice()) {
                *m += v / 3.0;
            }
        }
    }
    let batch = Dataset::new(
        Matrix::new(3, 4, xs.iter().flatten().map(|&v| v as f32).collect()).unwrap(),
        labels.to_vec(),
        2,
        Split::Train,
    )
    .unwrap();
    let xs32: Matrix<f64> = batch.gather(&[0, 1, 2]);
    let t = net.forward_batch(xs32).unwrap();
    let mut e = Matrix::zeros(2, 3);
    for b in 0..3 {
        let logits: Vec<f64> = (0..2).map(|o| t.output()[(o, b)]).collect();
        let (_, eb) = softmax_xent(&logits, labels[b]).unwrap();
        for o in 0..2 {
            e[(o, b)] = eb[o];
        }
    }
    let g = net.backward(Algorithm::Bp, &t, &e).unwrap();
    for k in 0..2 {
        // inputs went through f32, so compare loosely
        assert!(rel_close(&g.weights[k], &mean[k], 1e-6), "layer {k}");
    }
}

#[test]
fn small_step_reduces_loss() {
    let mut net = Network::<f64>::new(&[5, 3], Activation::Linear, false, &mut Rng::new(6)).unwrap();
    let x = random_input(5, 8);
    let before = net.loss(&x, 2).unwrap();
    let t = net.forward(&x).unwrap();
    let g = net.backward_bp(&t, &error_for(&t, 2)).unwrap();
    net.sgd_step(&g, 1e-3).unwrap();
    assert!(net.loss(&x, 2).unwrap() < before);
}

#[test]
fn feedback_is_fixed_during_training() {
    let data = synthetic_teacher(64, 8, 3, &[], 1).unwrap();
    let cfg = TrainConfig { algorithm: Algorithm::Ssdfa, epochs: 125, batch_size: 8, lr: 0.05, seed: 4, ..TrainConfig::default() };
    let mut net = Network::<f32>::for_training(&[8, 16, 12, 3], &cfg).unwrap();
    let before: Vec<_> = (0..2).map(|l| net.layer(l).feedback().unwrap().clone()).collect();
    // 125 epochs of 8 batches: 1000 steps
    train(&mut net, &data, None, &cfg).unwrap();
    for l in 0..2 {
        assert_eq!(net.layer(l).feedback().unwrap(), &before[l]);
    }
}

#[test]
fn instrumented_counts_equal_closed_form() {
    for dims in [vec![784usize, 400, 10], vec![64, 32, 16, 5]] {
        for algo in Algorithm::ALL {
            let cfg = TrainConfig { algorithm: algo, rank: Some(3), sparsity: 0.6, seed: 1, ..TrainConfig::default() };
            let net = Network::<f32>::for_training(&dims, &cfg).unwrap();
            let m = *dims.last().unwrap();
            let x = vec![0.5f32; dims[0]];
            let got = instrument(&net, algo, &x, 1).unwrap();
            let shape = NetShape::new(dims.clone()).unwrap();
            let shape = match algo {
                Algorithm::Sdfa => {
                    assert!(net.layer(0).feedback().unwrap().nnz() == dims[1] * nonzeros_per_row(m, 0.6));
                    let nnz = (0..dims.len() - 2).map(|l| net.layer(l).feedback().unwrap().nnz()).collect();
                    shape.with_feedback_nonzeros(nnz).unwrap()
                }
                _ => shape,
            };
            assert_eq!(got, analytic_cost(&shape, algo).unwrap(), "{algo} {dims:?}");
        }
    }
}

#[test]
fn training_costs_are_per_sample() {
    let data = synthetic_teacher(50, 6, 3, &[], 2).unwrap();
    let cfg = TrainConfig { algorithm: Algorithm::Ssdfa, epochs: 2, batch_size: 7, count_costs: true, ..TrainConfig::default() };
    let mut net = Network::<f32>::for_training(&[6, 9, 3], &cfg).unwrap();
    let report = train(&mut net, &data, None, &cfg).unwrap();
    let shape = NetShape::new(vec![6, 9, 3]).unwrap();
    assert_eq!(report.costs.unwrap(), analytic_cost(&shape, Algorithm::Ssdfa).unwrap());
}

#[test]
fn bp_overfits_teacher_data() {
    let data = synthetic_teacher(200, 20, 4, &[10], 3).unwrap();
    let cfg = TrainConfig { algorithm: Algorithm::Bp, epochs: 50, batch_size: 4, lr: 0.3, lr_decay: 1.0, bias: true, precision: Precision::Double, seed: 3, ..TrainConfig::default() };
    let mut net = Network::<f64>::for_training(&[20, 64, 4], &cfg).unwrap();
    let report = train(&mut net, &data, None, &cfg).unwrap();
    assert_eq!(net.evaluate(&data).unwrap(), 1.0, "{:?}", report.epochs.last());
}

#[test]
fn training_is_deterministic() {
    let data = synthetic_teacher(120, 10, 3, &[6], 5).unwrap();
    let test = synthetic_teacher(60, 10, 3, &[6], 5).unwrap();
    for algo in Algorithm::ALL {
        let cfg = TrainConfig { algorithm: algo, epochs: 3, sparsity: 0.5, seed: 9, ..TrainConfig::default() };
        let run = || {
            let mut net = Network::<f32>::for_training(&[10, 12, 3], &cfg).unwrap();
            let r = train(&mut net, &data, Some(&test), &cfg).unwrap();
            (net, r)
        };
        assert_eq!(run(), run());
    }
}

#[test]
fn divergence_names_the_epoch() {
    let data = synthetic_teacher(40, 5, 2, &[], 6).unwrap();
    let cfg = TrainConfig { epochs: 3, seed: 1, ..TrainConfig::default() };
    let mut net = Network::<f32>::for_training(&[5, 4, 2], &cfg).unwrap();
    net.weights_mut(1)[0] = f32::NAN;
    assert_eq!(train(&mut net, &data, None, &cfg).unwrap_err(), Error::Diverged { epoch: 1 });
}

#[test]
fn empty_dataset_is_rejected() {
    let data = synthetic_teacher(40, 5, 2, &[], 6).unwrap().take(0);
    let cfg = TrainConfig::default();
    let mut net = Network::<f32>::for_training(&[5, 4, 2], &cfg).unwrap();
    assert_eq!(train(&mut net, &data, None, &cfg).unwrap_err(), Error::EmptyDataset);
}

#[test]
fn evaluate_extremes() {
    // weights route feature c to logit c, and each sample is a one-hot of its label
    let eye = Layer::new(Matrix::<f32>::identity(4), None, Activation::Linear).unwrap();
    let net = Network::from_layers(vec![eye]).unwrap();
    let mut f = Matrix::zeros(8, 4);
    let labels: Vec<usize> = (0..8).map(|i| i % 4).collect();
    for (i, &l) in labels.iter().enumerate() {
        f[(i, l)] = 1.0;
    }
    let data = Dataset::new(f, labels, 4, Split::Test).unwrap();
    assert_eq!(net.evaluate(&data).unwrap(), 1.0);

    let zero = Layer::new(Matrix::<f32>::zeros(10, 3), None, Activation::Linear).unwrap();
    let net = Network::from_layers(vec![zero]).unwrap();
    let mut rng = Rng::new(12);
    let n = 20_000;
    let labels: Vec<usize> = (0..n).map(|_| rng.below(10)).collect();
    let data = Dataset::new(Matrix::zeros(n, 3), labels, 10, Split::Test).unwrap();
    let acc = net.evaluate(&data).unwrap();
    assert!((acc - 0.1).abs() < 0.01, "{acc}");
}

#[test]
fn angles_reported_for_feedback_layers() {
    let cfg = TrainConfig { algorithm: Algorithm::Dfa, seed: 2, ..TrainConfig::default() };
    let net = Network::<f32>::for_training(&[8, 6, 5, 3], &cfg).unwrap();
    assert_eq!(net.angles(false).unwrap().len(), 1);
    let all = net.angles(true).unwrap();
    assert_eq!(all.len(), 2);
    assert!(all.iter().all(|a| (0.0..=180.0).contains(&a.angle_degrees)));
    let bp = Network::<f32>::for_training(&[8, 6, 3], &TrainConfig::default()).unwrap();
    assert!(bp.angles(true).unwrap().is_empty());
}
