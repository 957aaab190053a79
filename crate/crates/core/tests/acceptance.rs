//! Acceptance gate: one test per criterion, each printing a PASS line.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

mod common;

use std::collections::HashMap;
use std::time::Instant;

use common::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use restcn::dataio::{
    compute_mean, make_dataset, nearest_centroid_pair_accuracy, parse_ntu_filename,
    parse_ntu_skeleton, synth_generate, Dataset, SyntheticSpec,
};
use restcn::fmd;
use restcn::gradcheck::{check_gradients, numeric_gradient};
use restcn::msnet::{build_ms, mask_input, MSResTCNConfig, MaskSpec, Pipe, PipeSigma};
use restcn::ops::{
    batchnorm_train, conv1d_backward, conv1d_forward, dense_softmax_xent,
    dense_softmax_xent_backward, dropout_forward, global_average_pool,
    global_average_pool_backward, relu_backward, relu_forward, BatchNormState, Mode, Padding,
};
use restcn::optim::SGDConfig;
use restcn::restcn::{build_restcn, ResTCNConfig};
use restcn::runner::{self, DataKind, RunConfig};
use restcn::tensor::Tensor;

fn tiny_acceptance_config() -> ResTCNConfig {
    // The mandated tiny shape: T = 8, D = 4, channels [2, 3, 4].
    ResTCNConfig {
        input_dim: 4,
        num_classes: 3,
        block_channels: [2, 3, 4],
        first_filter_len: 4,
        unit_filter_len: 3,
        dropout_p: 0.0,
        downsample: true,
    }
}

// ---------------------------------------------------------------------------
// 1. Gradient suite
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_gradient_suite() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);

    // conv1d, strided and both paddings.
    for (stride, padding) in [(1, Padding::Same), (2, Padding::Same), (1, Padding::Valid)] {
        let input = random_tensor(&mut rng, &[2, 7, 3]);
        let filters = random_tensor(&mut rng, &[4, 3, 3]);
        let out = conv1d_forward(&input, &filters, stride, padding).unwrap();
        let upstream = random_tensor(&mut rng, out.shape());
        let (d_in, d_w) = conv1d_backward(&input, &filters, stride, padding, &upstream).unwrap();
        let weighted = |o: &Tensor| o.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum();
        check_gradients(&input, &d_in, |x| weighted(&conv1d_forward(x, &filters, stride, padding).unwrap()), 1e-3, 1e-4);
        check_gradients(&filters, &d_w, |w| weighted(&conv1d_forward(&input, w, stride, padding).unwrap()), 1e-3, 1e-4);
    }

    // batchnorm in train mode, including scale and shift.
    {
        let input = random_tensor(&mut rng, &[2, 6, 4]);
        let mut state = BatchNormState::new("bn", 4);
        state.scale.value = random_tensor(&mut rng, &[4]).map(|v| v + 1.5);
        state.shift.value = random_tensor(&mut rng, &[4]);
        let upstream = random_tensor(&mut rng, &[2, 6, 4]);
        let (_, cache) = batchnorm_train(&input, &mut state.clone()).unwrap();
        let mut grads = state.clone();
        let d_in = restcn::ops::batchnorm_backward(&upstream, &cache, &mut grads).unwrap();
        let weighted = |o: &Tensor| o.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum::<f64>();
        check_gradients(&input, &d_in, |x| weighted(&batchnorm_train(x, &mut state.clone()).unwrap().0), 1e-3, 1e-4);
        check_gradients(&state.scale.value, &grads.scale.grad, |s| {
            let mut st = state.clone();
            st.scale.value = s.clone();
            weighted(&batchnorm_train(&input, &mut st).unwrap().0)
        }, 1e-3, 1e-4);
        check_gradients(&state.shift.value, &grads.shift.grad, |s| {
            let mut st = state.clone();
            st.shift.value = s.clone();
            weighted(&batchnorm_train(&input, &mut st).unwrap().0)
        }, 1e-3, 1e-4);
    }

    // relu away from its kink.
    {
        let input = random_tensor(&mut rng, &[30]).map(|v| if v.abs() < 0.05 { v.signum() * 0.05 + v } else { v });
        let upstream = random_tensor(&mut rng, &[30]);
        let d = relu_backward(&input, &upstream);
        check_gradients(&input, &d, |x| relu_forward(x).data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum(), 1e-3, 1e-4);
    }

    // dropout with a fixed mask is linear; its gradient is the mask itself.
    {
        let input = random_tensor(&mut rng, &[40]);
        let (_, mask) = dropout_forward(&input, 0.5, Mode::Train, 99).unwrap();
        let d = restcn::ops::dropout_backward(&Tensor::filled(&[40], 1.0), mask.as_ref());
        check_gradients(&input, &d, |x| {
            let (o, _) = dropout_forward(x, 0.5, Mode::Train, 99).unwrap();
            o.data().iter().sum()
        }, 1e-3, 1e-4);
    }

    // global average pooling.
    {
        let input = random_tensor(&mut rng, &[2, 7, 3]);
        let upstream = random_tensor(&mut rng, &[2, 3]);
        let d = global_average_pool_backward(&[2, 7, 3], &upstream);
        check_gradients(&input, &d, |x| {
            let o = global_average_pool(x).unwrap();
            o.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum()
        }, 1e-3, 1e-4);
    }

    // dense + softmax + cross-entropy.
    {
        let input = random_tensor(&mut rng, &[3, 5]);
        let weights = random_tensor(&mut rng, &[5, 4]);
        let bias = random_tensor(&mut rng, &[4]);
        let labels = [2usize, 0, 3];
        let out = dense_softmax_xent(&input, &weights, &bias, &labels).unwrap();
        let (d_in, d_w, d_b) = dense_softmax_xent_backward(&input, &weights, &out.probs, &labels);
        check_gradients(&input, &d_in, |x| dense_softmax_xent(x, &weights, &bias, &labels).unwrap().loss, 1e-3, 1e-4);
        check_gradients(&weights, &d_w, |w| dense_softmax_xent(&input, w, &bias, &labels).unwrap().loss, 1e-3, 1e-4);
        check_gradients(&bias, &d_b, |b| dense_softmax_xent(&input, &weights, b, &labels).unwrap().loss, 1e-3, 1e-4);
    }

    // Full tiny Res-TCN: input and every parameter. Seeds screened for
    // probe points bounded away from relu kinks.
    {
        let config = tiny_acceptance_config();
        let model = build_restcn(&config, 2001).unwrap();
        let batch = random_tensor(&mut ChaCha8Rng::seed_from_u64(3001), &[2, 8, 4]);
        let labels = [0usize, 2];
        let mut work = model.clone();
        work.zero_grads();
        let (_, _, cache) = work.forward_train(&batch, &labels, 7, false).unwrap();
        let d_input = work.backward(&cache, &labels).unwrap();
        check_gradients(&batch, &d_input, |x| {
            let mut m = model.clone();
            m.forward_train(x, &labels, 7, false).unwrap().0
        }, 1e-3, 1e-4);

        let n_params = model.params().len();
        for pi in 0..n_params {
            let name = model.params()[pi].name.clone();
            let point = model.params()[pi].value.clone();
            let analytic = work.params()[pi].grad.clone();
            let numeric = numeric_gradient(&point, |v| {
                let mut m = model.clone();
                m.params_mut()[pi].value = v.clone();
                m.forward_train(&batch, &labels, 7, false).unwrap().0
            }, 1e-3);
            for i in 0..point.len() {
                let (a, n) = (analytic.data()[i], numeric.data()[i]);
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
                assert!(rel < 1e-4, "restcn {name}[{i}]: analytic {a:.8e}, numeric {n:.8e}");
            }
        }
    }

    // Full tiny MS-Res-TCN likewise.
    {
        let config = MSResTCNConfig {
            base: tiny_acceptance_config(),
            pipe_filter_len: 1,
            pipe_sigma: PipeSigma::ReluOnly,
            mask: MaskSpec::new(vec![1, 3], "fine columns"),
        };
        let model = build_ms(&config, 16).unwrap();
        let batch = random_tensor(&mut ChaCha8Rng::seed_from_u64(17), &[2, 8, 4]);
        let labels = [0usize, 2];
        let mut work = model.clone();
        work.zero_grads();
        let (_, _, cache) = work.forward_train(&batch, &labels, 77).unwrap();
        let d_input = work.backward(&cache, &labels).unwrap();
        check_gradients(&batch, &d_input, |x| {
            let mut m = model.clone();
            m.forward_train(x, &labels, 77).unwrap().0
        }, 1e-3, 1e-4);

        let n_params = model.params().len();
        for pi in 0..n_params {
            let name = model.params()[pi].name.clone();
            let point = model.params()[pi].value.clone();
            let analytic = work.params()[pi].grad.clone();
            let numeric = numeric_gradient(&point, |v| {
                let mut m = model.clone();
                m.params_mut()[pi].value = v.clone();
                m.forward_train(&batch, &labels, 77).unwrap().0
            }, 1e-3);
            for i in 0..point.len() {
                let (a, n) = (analytic.data()[i], numeric.data()[i]);
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
                assert!(rel < 1e-4, "ms {name}[{i}]: analytic {a:.8e}, numeric {n:.8e}");
            }
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "gradient suite took {elapsed:?}, budget is 60 s");
    println!("ACCEPTANCE 1 gradient suite: PASS ({elapsed:?})");
}

// ---------------------------------------------------------------------------
// 2. Convolution oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_convolution_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut covered_strided = false;
    let mut covered_valid = false;
    for case in 0..100 {
        let b = rng.random_range(1..=3usize);
        let f = rng.random_range(1..=5usize);
        let t = rng.random_range(f.max(2)..=12usize);
        let c = rng.random_range(1..=5usize);
        let n = rng.random_range(1..=6usize);
        let stride = rng.random_range(1..=3usize);
        let same = rng.random::<f64>() < 0.5;
        covered_strided |= stride > 1;
        covered_valid |= !same;

        let input = random_tensor(&mut rng, &[b, t, c]);
        let filters = random_tensor(&mut rng, &[n, f, c]);
        let padding = if same { Padding::Same } else { Padding::Valid };
        let ours = conv1d_forward(&input, &filters, stride, padding).unwrap();
        let oracle = conv_oracle(&input, &filters, stride, same);
        assert_eq!(ours.shape(), oracle.shape(), "case {case}");
        for (a, o) in ours.data().iter().zip(oracle.data()) {
            assert!((a - o).abs() <= 1e-12, "case {case}: {a} vs {o}");
        }
    }
    assert!(covered_strided && covered_valid, "random draw must cover strides and valid padding");
    println!("ACCEPTANCE 2 convolution oracle (100 cases): PASS");
}

// ---------------------------------------------------------------------------
// 3. Residual identity
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_residual_identity() {
    let config = ResTCNConfig {
        input_dim: 4,
        num_classes: 3,
        block_channels: [3, 3, 3],
        first_filter_len: 4,
        unit_filter_len: 3,
        dropout_p: 0.0,
        downsample: false,
    };
    let mut model = build_restcn(&config, 77).unwrap();
    for unit in &mut model.stack.units {
        unit.conv.value.fill(0.0);
        assert!(unit.shortcut.is_none(), "equal widths must not create shortcut convs");
    }
    let batch = random_tensor(&mut ChaCha8Rng::seed_from_u64(78), &[2, 12, 4]);
    let out = model.forward_eval(&batch, true).unwrap();
    for bundle in out.bundles.unwrap() {
        let x1: Vec<u64> = bundle.layers[0].data().iter().map(|v| v.to_bits()).collect();
        let x10: Vec<u64> = bundle.layers[9].data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(x1, x10, "X10 must equal X1 bitwise");
    }
    println!("ACCEPTANCE 3 residual identity: PASS");
}

// ---------------------------------------------------------------------------
// 4. Decoder oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_decoder_oracle() {
    // Layer 1 on 20 random tiny models.
    for i in 0..20u64 {
        let config = tiny_decode_config(i);
        let model = build_restcn(&config, 3000 + i).unwrap();
        let bundle = record_bundle(&model, 9 + (i % 4) as usize, 4000 + i);
        let ours = fmd::decode_raw(&bundle, &model, 1).unwrap();
        let oracle = oracle_decode_raw(&bundle, &model, 1);
        assert!(max_abs_diff_rows(&ours, &oracle) < 1e-9, "model {i}, layer 1");
    }

    // Block B and Block C on a spread of layers and models.
    for i in 0..10u64 {
        let config = tiny_decode_config(i);
        let model = build_restcn(&config, 5000 + i).unwrap();
        let bundle = record_bundle(&model, 10 + (i % 3) as usize, 6000 + i);
        for layer in 5..=10 {
            let ours = fmd::decode_raw(&bundle, &model, layer).unwrap();
            let oracle = oracle_decode_raw(&bundle, &model, layer);
            assert!(
                max_abs_diff_rows(&ours, &oracle) < 1e-9,
                "model {i}, layer {layer}"
            );
        }
    }
    println!("ACCEPTANCE 4 decoder vs independent oracle: PASS");
}

// ---------------------------------------------------------------------------
// 5. Decoder trivia
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_decoder_trivia() {
    let config = tiny_decode_config(1);
    let model = build_restcn(&config, 7001).unwrap();
    let d = config.input_dim;

    // Zero activations decode to the mean skeleton exactly, at every layer.
    let mut bundle = record_bundle(&model, 12, 7002);
    for x in &mut bundle.layers {
        x.fill(0.0);
    }
    let mean = restcn::dataio::MeanSkeleton {
        values: random_tensor(&mut ChaCha8Rng::seed_from_u64(7003), &[d]),
    };
    for layer in 1..=10 {
        let dec = fmd::decode(&bundle, &model, layer, &mean).unwrap();
        for t in 0..12 {
            for c in 0..d {
                assert_eq!(dec.frames.at2(t, c), mean.values.data()[c], "layer {layer}");
            }
        }
    }

    // Linearity under bundle scaling.
    let bundle = record_bundle(&model, 12, 7004);
    for layer in 1..=10 {
        let base = fmd::decode_raw(&bundle, &model, layer).unwrap();
        for alpha in [-1.0, 0.5, 3.0] {
            let scaled = fmd::decode_raw(&bundle.scaled(alpha), &model, layer).unwrap();
            for (s, b) in scaled.data().iter().zip(base.data()) {
                let expect = alpha * b;
                let err = (s - expect).abs() / expect.abs().max(s.abs()).max(1e-9);
                assert!(err < 1e-9, "layer {layer}, alpha {alpha}");
            }
        }
    }
    println!("ACCEPTANCE 5 decoder trivia: PASS");
}

// ---------------------------------------------------------------------------
// 6. MS structure
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_ms_structure() {
    let config = MSResTCNConfig {
        base: tiny_acceptance_config(),
        pipe_filter_len: 1,
        pipe_sigma: PipeSigma::ReluOnly,
        mask: MaskSpec::new(vec![0, 2], "half"),
    };
    let base_model = build_ms(&config, 8001).unwrap();
    let batch = random_tensor(&mut ChaCha8Rng::seed_from_u64(8002), &[2, 8, 4]);

    // Zero pipes equal two disjoint streams with a concatenated head.
    let mut zero_pipe = base_model.clone();
    for pipe in &mut zero_pipe.pipes {
        pipe.conv.value.fill(0.0);
    }
    let ours = zero_pipe.forward_eval(&batch, false).unwrap().logits;
    let reference = {
        let masked = mask_input(&batch, &config.mask).unwrap();
        let (xm, _) = zero_pipe.main.forward_eval(&batch, false).unwrap();
        let (xt, _) = zero_pipe.ta.forward_eval(&masked, false).unwrap();
        let mut concat = Tensor::zeros(&[2, xm.shape()[1], 8]);
        for bi in 0..2 {
            for ti in 0..xm.shape()[1] {
                for ci in 0..4 {
                    let i = concat.idx3(bi, ti, ci);
                    concat.data_mut()[i] = xm.at3(bi, ti, ci);
                    let i = concat.idx3(bi, ti, 4 + ci);
                    concat.data_mut()[i] = xt.at3(bi, ti, ci);
                }
            }
        }
        let pooled = global_average_pool(&concat).unwrap();
        zero_pipe.head.logits(&pooled).unwrap()
    };
    assert_eq!(ours.data(), reference.data(), "zero-pipe logits must match the disjoint reference exactly");

    // Structural dependency-order oracle: simulate the stated schedule and
    // confirm every read happens before the value exists.
    #[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
    enum Node {
        Main(usize),
        Ta(usize),
    }
    let mut stamp: HashMap<Node, usize> = HashMap::new();
    let mut clock = 0usize;
    let mut tick = |node: Node, stamp: &mut HashMap<Node, usize>| {
        stamp.insert(node, clock);
        clock += 1;
    };
    tick(Node::Main(1), &mut stamp);
    tick(Node::Ta(1), &mut stamp);
    for l in 2..=10 {
        if Pipe::feeds_main(l) {
            tick(Node::Ta(l), &mut stamp);
            tick(Node::Main(l), &mut stamp);
        } else {
            tick(Node::Main(l), &mut stamp);
            tick(Node::Ta(l), &mut stamp);
        }
    }
    for l in 2..=10 {
        let mut deps_main = vec![Node::Main(l - 1)];
        let mut deps_ta = vec![Node::Ta(l - 1)];
        if Pipe::feeds_main(l) {
            deps_main.push(Node::Ta(l)); // even pipes read the TA activation
        } else {
            deps_ta.push(Node::Main(l)); // odd pipes read the main activation
        }
        for dep in deps_main {
            assert!(stamp[&dep] < stamp[&Node::Main(l)], "main layer {l} reads {dep:?} early");
        }
        for dep in deps_ta {
            assert!(stamp[&dep] < stamp[&Node::Ta(l)], "ta layer {l} reads {dep:?} early");
        }
    }

    // Empirical parity check on the real forward: with only pipe L active,
    // nothing strictly before layer L may change, and at layer L exactly the
    // receiving stream changes.
    let reference = zero_pipe.forward_eval(&batch, true).unwrap().bundles.unwrap();
    for active in 2..=10usize {
        let mut probe = zero_pipe.clone();
        probe.pipes[active - 2].conv.value = base_model.pipes[active - 2].conv.value.map(f64::abs);
        let got = probe.forward_eval(&batch, true).unwrap().bundles.unwrap();
        for l in 1..=10usize {
            for b in 0..2usize {
                let main_same = got.main[b].layers[l - 1].data() == reference.main[b].layers[l - 1].data();
                let ta_same = got.ta[b].layers[l - 1].data() == reference.ta[b].layers[l - 1].data();
                if l < active {
                    assert!(main_same && ta_same, "pipe {active} leaked into layer {l}");
                } else if l == active {
                    if Pipe::feeds_main(active) {
                        assert!(ta_same, "even pipe {active} must not reach TA at its own layer");
                        assert!(!main_same, "even pipe {active} must perturb main X{l}");
                    } else {
                        assert!(main_same, "odd pipe {active} must not reach main at its own layer");
                        assert!(!ta_same, "odd pipe {active} must perturb TA X'{l}");
                    }
                }
            }
        }
    }
    println!("ACCEPTANCE 6 MS structure and pipe parity: PASS");
}

// ---------------------------------------------------------------------------
// 7. Synthetic refinement experiment
// ---------------------------------------------------------------------------

fn pair_accuracy(confusion: &[Vec<usize>]) -> f64 {
    let correct = confusion[0][0] + confusion[1][1];
    let total: usize = confusion[0].iter().sum::<usize>() + confusion[1].iter().sum::<usize>();
    correct as f64 / total as f64
}

fn experiment_datasets(seed: u64) -> (Dataset, Dataset, Vec<usize>) {
    let train_spec = SyntheticSpec::default_desk(200, seed);
    let test_spec = SyntheticSpec { samples_per_class: 50, seed: seed + 1, ..train_spec.clone() };
    let train_seqs = synth_generate(&train_spec).unwrap();
    let test_seqs = synth_generate(&test_spec).unwrap();
    let mean = compute_mean(&train_seqs).unwrap();
    let train = make_dataset(&train_seqs, 64, &mean, false, 4).unwrap();
    let test = make_dataset(&test_seqs, 64, &mean, false, 4).unwrap();
    (train, test, train_spec.fine_motion_dims)
}

#[test]
fn criterion_7_synthetic_refinement_experiment() {
    let model_cfg = ResTCNConfig {
        input_dim: 48,
        num_classes: 4,
        block_channels: [8, 16, 32],
        first_filter_len: 8,
        unit_filter_len: 8,
        dropout_p: 0.5,
        downsample: true,
    };
    let sgd = SGDConfig::default();
    let epochs = 20;
    let batch_size = 32;

    let mut baseline_pair = Vec::new();
    let mut ms_pair = Vec::new();
    for seed in [101u64, 202, 303] {
        let run_started = Instant::now();
        let (train, test, fine_dims) = experiment_datasets(seed);

        // Amplitude calibration oracle: the fine dims alone separate the pair.
        let centroid = nearest_centroid_pair_accuracy(&train, &test, &fine_dims);
        assert!(centroid >= 0.95, "seed {seed}: centroid oracle accuracy {centroid}");

        let mut baseline = build_restcn(&model_cfg, seed).unwrap();
        baseline.fit(&train, &test, &sgd, epochs, batch_size, seed).unwrap();
        let b_eval = baseline.evaluate(&test).unwrap();
        let b_pair = pair_accuracy(&b_eval.confusion);

        let ms_cfg = MSResTCNConfig {
            base: model_cfg.clone(),
            pipe_filter_len: 1,
            pipe_sigma: PipeSigma::ReluOnly,
            mask: MaskSpec::new(fine_dims.clone(), "ground-truth fine-motion dims"),
        };
        let mut ms = build_ms(&ms_cfg, seed).unwrap();
        ms.fit(&train, &test, &sgd, epochs, batch_size, seed).unwrap();
        let m_eval = ms.evaluate(&test).unwrap();
        let m_pair = pair_accuracy(&m_eval.confusion);

        let elapsed = run_started.elapsed();
        assert!(elapsed.as_secs() < 15 * 60, "seed {seed} took {elapsed:?}, budget 15 min");
        println!(
            "  seed {seed}: baseline pair {b_pair:.3} (overall {:.3}), ms pair {m_pair:.3} (overall {:.3}), {elapsed:?}",
            b_eval.accuracy, m_eval.accuracy
        );
        baseline_pair.push(b_pair);
        ms_pair.push(m_pair);
    }

    let mean_b: f64 = baseline_pair.iter().sum::<f64>() / 3.0;
    let mean_m: f64 = ms_pair.iter().sum::<f64>() / 3.0;
    assert!(
        (0.60..=0.85).contains(&mean_b),
        "baseline mean pair accuracy {mean_b:.3} outside the calibrated 60-85% band"
    );
    assert!(
        mean_m - mean_b >= 0.05,
        "mean pair-accuracy gain {:.3} below 5 points (baseline {mean_b:.3}, ms {mean_m:.3})",
        mean_m - mean_b
    );
    println!(
        "ACCEPTANCE 7 synthetic refinement: PASS (baseline {mean_b:.3} -> ms {mean_m:.3}, +{:.3})",
        mean_m - mean_b
    );
}

// ---------------------------------------------------------------------------
// 8. NTU parser
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_ntu_parser() {
    // One frame, one body: every joint at (1, 2, 3); slot 1 zero-filled.
    let mut one_body = String::from("1\n1\n72057594037931101 0 1 1 1 1 0.1 0.2 2 2\n25\n");
    for _ in 0..25 {
        one_body.push_str("1.0 2.0 3.0 0.1 0.2 100.5 200.5 0.7 0.1 0.1 0.1 2\n");
    }
    let (seq, warnings) = parse_ntu_skeleton(std::io::Cursor::new(one_body), "one").unwrap();
    assert!(warnings.is_empty());
    let flat = seq.flatten();
    assert_eq!(flat.shape(), &[1, 150]);
    for joint in 0..25 {
        assert_eq!(seq.joint(0, 0, joint), [1.0, 2.0, 3.0]);
        assert_eq!(seq.joint(0, 1, joint), [0.0, 0.0, 0.0]);
    }

    // Zero-body frame: accepted, fully zero-filled.
    let mut with_empty = String::from("2\n0\n1\n1 0 0 0 0 0 0 0 0 0\n25\n");
    for _ in 0..25 {
        with_empty.push_str("4.0 5.0 6.0 0 0 0 0 0 0 0 0 2\n");
    }
    let (seq, warnings) = parse_ntu_skeleton(std::io::Cursor::new(with_empty), "empty").unwrap();
    assert!(warnings.is_empty());
    assert!(seq.frame(0).iter().all(|&v| v == 0.0));
    assert_eq!(seq.joint(1, 0, 7), [4.0, 5.0, 6.0]);

    // Three bodies: first two kept in encounter order, warning emitted.
    let mut three = String::from("1\n3\n");
    for body in 0..3 {
        three.push_str("8 0 0 0 0 0 0 0 0 0\n25\n");
        for joint in 0..25 {
            three.push_str(&format!("{}.0 {}.5 0.25 0 0 0 0 0 0 0 0 2\n", body + 1, joint));
        }
    }
    let (seq, warnings) = parse_ntu_skeleton(std::io::Cursor::new(three), "three").unwrap();
    assert_eq!(warnings.len(), 1);
    for joint in 0..25 {
        assert_eq!(seq.joint(0, 0, joint), [1.0, joint as f64 + 0.5, 0.25]);
        assert_eq!(seq.joint(0, 1, joint), [2.0, joint as f64 + 0.5, 0.25]);
    }

    // Filename metadata: the three dataio examples.
    let m = parse_ntu_filename("S001C002P003R002A013").unwrap();
    assert_eq!((m.camera, m.performer, m.action), (2, 3, 13));
    let m = parse_ntu_filename("S017C003P040R002A060").unwrap();
    assert_eq!(m.action, 60);
    assert!(parse_ntu_filename("s001C002P003R002A013").is_err());
    assert!(parse_ntu_filename("S001C002P003R002").is_err());
    println!("ACCEPTANCE 8 NTU parser fixtures: PASS");
}

// ---------------------------------------------------------------------------
// 9. Reproducibility
// ---------------------------------------------------------------------------

fn tiny_run_config(root: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = 11;
    cfg.run_root = root.to_path_buf();
    cfg.data.kind = DataKind::Synthetic;
    cfg.synth.num_classes = 3;
    cfg.synth.joints = 4;
    cfg.synth.frames = 16;
    cfg.synth.train_per_class = 12;
    cfg.synth.test_per_class = 4;
    cfg.synth.fine_motion_dims = vec![9, 10, 11];
    cfg.model = ResTCNConfig {
        input_dim: 12,
        num_classes: 3,
        block_channels: [2, 3, 4],
        first_filter_len: 4,
        unit_filter_len: 3,
        dropout_p: 0.5,
        downsample: true,
    };
    cfg.train.epochs = 3;
    cfg.train.batch_size = 8;
    cfg.train.target_len = 16;
    cfg
}

#[test]
fn criterion_9_reproducibility_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_run_config(dir.path());

    let first = runner::cmd_train(&cfg, Some("first")).unwrap();
    let second = runner::rerun_from_manifest(&first.run_dir, Some("second")).unwrap();
    assert_eq!(first.report.epochs.len(), second.report.epochs.len());
    for (a, b) in first.report.epochs.iter().zip(second.report.epochs.iter()) {
        assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits(), "train loss drifted");
        assert_eq!(a.test_loss.to_bits(), b.test_loss.to_bits(), "test loss drifted");
        assert_eq!(a.lr.to_bits(), b.lr.to_bits());
    }

    // Refine runs likewise, rebuilt from the snapshotted manifest and mask.
    let mask = MaskSpec::new(vec![9, 10, 11], "fine dims");
    let r1 = runner::cmd_refine(&cfg, mask.clone(), Some("refine-a")).unwrap();
    let manifest = RunConfig::load(&r1.run_dir.join("manifest.toml")).unwrap();
    let r2 = runner::cmd_refine(&manifest, mask, Some("refine-b")).unwrap();
    for (a, b) in r1.report.epochs.iter().zip(r2.report.epochs.iter()) {
        assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits(), "refine train loss drifted");
        assert_eq!(a.test_loss.to_bits(), b.test_loss.to_bits(), "refine test loss drifted");
    }
    println!("ACCEPTANCE 9 reproducibility from manifest: PASS");
}
