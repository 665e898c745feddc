//! The batched network against a plain scalar-loop reimplementation.

use cdm_lstm::net::{
    backward, forward, init_params, lstm_cell_forward, param_count, predict, sample_dropout_masks,
    DropoutMasks, LstmLayerParams, Matrix, NetConfig, StackedLstmParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Textbook LSTM cell, one scalar at a time; gate blocks i, f, g, o.
fn oracle_cell(x: &[f64], h: &[f64], c: &[f64], p: &LstmLayerParams) -> (Vec<f64>, Vec<f64>) {
    let hidden = h.len();
    let pre = |row: usize| {
        let mut s = p.b_ih[row] + p.b_hh[row];
        for (k, xk) in x.iter().enumerate() {
            s += p.w_ih.get(row, k) * xk;
        }
        for (k, hk) in h.iter().enumerate() {
            s += p.w_hh.get(row, k) * hk;
        }
        s
    };
    let mut h_new = vec![0.0; hidden];
    let mut c_new = vec![0.0; hidden];
    for j in 0..hidden {
        let i = sigmoid(pre(j));
        let f = sigmoid(pre(hidden + j));
        let g = pre(2 * hidden + j).tanh();
        let o = sigmoid(pre(3 * hidden + j));
        c_new[j] = f * c[j] + i * g;
        h_new[j] = o * c_new[j].tanh();
    }
    (h_new, c_new)
}

/// Whole network for one sequence with fixed per-sequence masks (row `b`).
fn oracle_sequence(seq: &[Vec<f64>], params: &StackedLstmParams, masks: Option<&DropoutMasks>, b: usize) -> Vec<Vec<f64>> {
    let cfg = &params.config;
    let w = &params.weights;
    let mut h = vec![vec![0.0; cfg.hidden]; cfg.num_layers];
    let mut c = h.clone();
    let mut out = Vec::new();
    for x in seq {
        for l in 0..cfg.num_layers {
            let mut input = if l == 0 { x.clone() } else { h[l - 1].clone() };
            if let Some(m) = masks.and_then(|m| m.layer_inputs[l].as_ref()) {
                for (v, k) in input.iter_mut().zip(m.row(b)) {
                    *v *= k;
                }
            }
            let (hn, cn) = oracle_cell(&input, &h[l], &c[l], &w.layers[l]);
            h[l] = hn;
            c[l] = cn;
        }
        let mut top: Vec<f64> = h[cfg.num_layers - 1].iter().map(|v| v.max(0.0)).collect();
        if let Some(m) = masks.and_then(|m| m.head.as_ref()) {
            for (v, k) in top.iter_mut().zip(m.row(b)) {
                *v *= k;
            }
        }
        let y = (0..cfg.output_dim)
            .map(|o| w.head_b[o] + (0..cfg.hidden).map(|k| w.head_w.get(o, k) * top[k]).sum::<f64>())
            .collect();
        out.push(y);
    }
    out
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()
}

#[test]
fn cell_matches_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let params = init_params(NetConfig::new(2, 3, 1, 0.0), 9).unwrap();
    let mut layer = params.weights.layers[0].clone();
    // Wider weights than the default init, so the gates are not near-linear.
    for v in layer.w_ih.as_mut_slice().iter_mut().chain(layer.w_hh.as_mut_slice()) {
        *v *= 3.0;
    }
    for _ in 0..20 {
        let (x, h, c) = (random_vec(&mut rng, 2), random_vec(&mut rng, 3), random_vec(&mut rng, 3));
        let (h1, c1, _) = lstm_cell_forward(&x, &h, &c, &layer).unwrap();
        let (h2, c2) = oracle_cell(&x, &h, &c, &layer);
        for (a, b) in h1.iter().zip(&h2).chain(c1.iter().zip(&c2)) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn forward_matches_oracle_with_masks_and_padding() {
    let cfg = NetConfig::new(4, 5, 3, 0.3);
    let params = init_params(cfg, 3).unwrap();
    let masks = sample_dropout_masks(&params.config, 3, 17).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lengths = [4, 2, 3];
    let seqs: Vec<Vec<Vec<f64>>> = lengths
        .iter()
        .map(|&n| (0..n).map(|_| random_vec(&mut rng, 4)).collect())
        .collect();
    let mut inputs = vec![Matrix::zeros(3, 4); 4];
    for (b, s) in seqs.iter().enumerate() {
        for (t, x) in s.iter().enumerate() {
            inputs[t].row_mut(b).copy_from_slice(x);
        }
    }
    let (out, _) = forward(&inputs, &params, Some(&masks)).unwrap();
    let fast = predict(&inputs, &params, Some(&masks)).unwrap();
    assert_eq!(out, fast);
    for (b, s) in seqs.iter().enumerate() {
        let expected = oracle_sequence(s, &params, Some(&masks), b);
        for (t, y) in expected.iter().enumerate() {
            for (a, e) in out[t].row(b).iter().zip(y) {
                assert!((a - e).abs() < 1e-12, "b {b} t {t}: {a} vs {e}");
            }
        }
    }
}

#[test]
fn batch_rows_are_independent() {
    // A row's output is the same whether it is run alone or inside a batch.
    let cfg = NetConfig::new(3, 6, 2, 0.0);
    let params = init_params(cfg, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs: Vec<Matrix> = (0..5)
        .map(|_| Matrix::from_vec(4, 3, random_vec(&mut rng, 12)).unwrap())
        .collect();
    let all = predict(&inputs, &params, None).unwrap();
    for b in 0..4 {
        let single: Vec<Matrix> = inputs
            .iter()
            .map(|m| Matrix::from_vec(1, 3, m.row(b).to_vec()).unwrap())
            .collect();
        let out = predict(&single, &params, None).unwrap();
        for t in 0..5 {
            assert_eq!(out[t].row(0), all[t].row(b));
        }
    }
}

#[test]
fn param_count_matches_tensor_sizes() {
    for (d, h, l, o) in [(52, 256, 2, 52), (5, 8, 2, 5), (3, 4, 1, 2), (7, 3, 4, 1)] {
        let params = StackedLstmParams::zeros(NetConfig {
            output_dim: o,
            ..NetConfig::new(d, h, l, 0.0)
        })
        .unwrap();
        let from_tensors: usize = params.weights.tensors().iter().map(|(_, t)| t.len()).sum();
        assert_eq!(param_count(d, h, l, o).unwrap(), from_tensors);
    }
    // 4·256·(52 + 256 + 2) + 4·256·(256 + 256 + 2) + 52·257
    assert_eq!(param_count(52, 256, 2, 52).unwrap(), 317_440 + 526_336 + 13_364);
}

#[test]
fn masked_steps_get_no_gradient_signal() {
    // Zero upstream gradient everywhere gives exactly zero parameter gradients.
    let cfg = NetConfig::new(3, 4, 2, 0.2);
    let params = init_params(cfg, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inputs: Vec<Matrix> = (0..3)
        .map(|_| Matrix::from_vec(2, 3, random_vec(&mut rng, 6)).unwrap())
        .collect();
    let masks = sample_dropout_masks(&params.config, 2, 1).unwrap();
    let (_, cache) = forward(&inputs, &params, Some(&masks)).unwrap();
    let zeros = vec![Matrix::zeros(2, 3); 3];
    let g = backward(&cache, &zeros, &params).unwrap();
    assert_eq!(g.sum_of_squares(), 0.0);
}

#[test]
fn gradients_match_finite_differences_over_seeds() {
    use cdm_lstm::gradcheck::{gradcheck, GradcheckConfig};
    for seed in 0..10 {
        let r = gradcheck(&GradcheckConfig {
            seed,
            ..Default::default()
        })
        .unwrap();
        assert!(r.passed, "seed {seed}: {} in {}", r.max_rel_error, r.worst_tensor);
        assert!(r.max_abs_error < 1e-9);
    }
    let bad = gradcheck(&GradcheckConfig {
        corrupt: true,
        ..Default::default()
    })
    .unwrap();
    assert!(!bad.passed);
}

#[test]
fn gradcheck_without_dropout_and_single_layer() {
    use cdm_lstm::gradcheck::{gradcheck, GradcheckConfig};
    for (layers, dropout) in [(1, 0.0), (3, 0.5)] {
        let r = gradcheck(&GradcheckConfig {
            layers,
            dropout_rate: dropout,
            seed: 11,
            ..Default::default()
        })
        .unwrap();
        assert!(r.passed, "layers {layers}: {}", r.max_rel_error);
    }
}
