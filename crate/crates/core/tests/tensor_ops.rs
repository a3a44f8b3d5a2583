use lcl::tensor::{conv_output_extent, grad_check, GradCheckConfig, Graph, NodeId, Tensor};
use lcl::LclError;
use proptest::prelude::*;

fn t64(dims: &[usize], v: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(dims.to_vec(), v).unwrap()
}

fn ones(dims: &[usize]) -> Tensor<f64> {
    Tensor::full(dims.to_vec(), 1.0).unwrap()
}

#[test]
fn conv_window_coverage() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(ones(&[1, 1, 3, 3]));
    let w = g.constant(ones(&[1, 1, 3, 3]));
    let y = g.conv2d(x, w, 1, 1).unwrap();
    assert_eq!(g.value(y).data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);

    let x = g.constant(ones(&[1, 1, 4, 4]));
    let y = g.conv2d(x, w, 2, 1).unwrap();
    assert_eq!(g.value(y).dims(), &[1, 1, 2, 2]);
    assert_eq!(g.value(y).data(), &[4.0, 6.0, 6.0, 9.0]);

    let r = g.constant(t64(&[2, 3, 5, 5], &(0..150).map(|i| i as f64 * 0.1).collect::<Vec<_>>()));
    let z = g.constant(Tensor::zeros(vec![4, 3, 3, 3]).unwrap());
    let y = g.conv2d(r, z, 1, 0).unwrap();
    assert_eq!(g.value(y).dims(), &[2, 4, 3, 3]);
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn conv_rejects_channel_mismatch_and_bad_geometry() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::zeros(vec![1, 2, 4, 4]).unwrap());
    let w = g.constant(Tensor::zeros(vec![1, 3, 3, 3]).unwrap());
    assert!(matches!(g.conv2d(x, w, 1, 1), Err(LclError::Shape(_))));
    let w = g.constant(Tensor::zeros(vec![1, 2, 3, 3]).unwrap());
    assert!(g.conv2d(x, w, 3, 1).is_err());
    assert!(g.conv2d(x, w, 1, 2).is_err());
}

#[test]
fn conv_extent_grid_matches_floor_formula() {
    for h in 1..12usize {
        for stride in [1usize, 2] {
            for pad in [0usize, 1] {
                let expect = if h + 2 * pad >= 3 { Some((h + 2 * pad - 3) / stride + 1) } else { None };
                assert_eq!(conv_output_extent(h, 3, stride, pad), expect, "h={h} s={stride} p={pad}");
                if let Some(e) = expect {
                    let mut g = Graph::<f32>::new();
                    let x = g.constant(Tensor::zeros(vec![1, 1, h, h + 1]).unwrap());
                    let w = g.constant(Tensor::zeros(vec![1, 1, 3, 3]).unwrap());
                    let y = g.conv2d(x, w, stride, pad).unwrap();
                    let ew = (h + 1 + 2 * pad - 3) / stride + 1;
                    assert_eq!(g.value(y).dims(), &[1, 1, e, ew]);
                }
            }
        }
    }
}

#[test]
fn batch_norm_examples() {
    let mut g = Graph::<f64>::new();
    let gamma = g.constant(ones(&[2]));
    let beta = g.constant(Tensor::zeros(vec![2]).unwrap());

    let c = g.constant(Tensor::full(vec![3, 2, 2, 2], 0.7).unwrap());
    let (y, _) = g.batch_norm_train(c, gamma, beta, 1e-5).unwrap();
    assert!(g.value(y).data().iter().all(|v| v.abs() < 1e-3));

    let pm: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
    let x = g.constant(t64(&[2, 2, 2, 2], &pm));
    let (y, stats) = g.batch_norm_train(x, gamma, beta, 1e-5).unwrap();
    let scale = 1.0 / (1.0f64 + 1e-5).sqrt();
    for (o, i) in g.value(y).data().iter().zip(&pm) {
        assert!((o - i * scale).abs() < 1e-12);
    }
    assert!(stats.mean.iter().all(|m| m.abs() < 1e-12));
    assert!(stats.var.iter().all(|v| (v - 1.0).abs() < 1e-12));

    let g2 = g.constant(t64(&[2], &[2.0, 2.0]));
    let b3 = g.constant(t64(&[2], &[3.0, 3.0]));
    let (y2, _) = g.batch_norm_train(x, g2, b3, 1e-5).unwrap();
    for (a, b) in g.value(y2).data().iter().zip(g.value(y).data()) {
        assert!((a - (2.0 * b + 3.0)).abs() < 1e-12);
    }

    let ev = g.batch_norm_eval(x, gamma, beta, &[0.0, 0.0], &[1.0, 1.0], 1e-5).unwrap();
    assert_eq!(g.value(ev).data(), g.value(y).data());
}

#[test]
fn elementwise_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.param(t64(&[3], &[-1.0, 0.0, 2.0]));
    let r = g.relu(x).unwrap();
    assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
    let neg = g.constant(t64(&[2], &[-3.0, -0.5]));
    let rn = g.relu(neg).unwrap();
    assert_eq!(g.value(rn).data(), &[0.0, 0.0]);

    let mut g = Graph::<f64>::new();
    let x = g.param(t64(&[2], &[-1.0, 2.0]));
    let r = g.relu(x).unwrap();
    let s = g.sum(r).unwrap();
    assert_eq!(g.backward(s).unwrap().get(x).unwrap().data(), &[0.0, 1.0]);

    let mut g = Graph::<f64>::new();
    let x = g.param(t64(&[1], &[0.0]));
    let s = g.sigmoid(x).unwrap();
    assert_eq!(g.value(s).data(), &[0.5]);
    assert_eq!(g.backward(s).unwrap().get(x).unwrap().data(), &[0.25]);

    let mut g = Graph::<f64>::new();
    let xs = [-700.0, -30.0, -1.5, 0.3, 12.0, 700.0];
    let a = g.constant(t64(&[6], &xs));
    let b = g.constant(t64(&[6], &xs.map(|v| -v)));
    let sa = g.sigmoid(a).unwrap();
    let sb = g.sigmoid(b).unwrap();
    for (p, q) in g.value(sa).data().iter().zip(g.value(sb).data()) {
        assert!(p.is_finite() && q.is_finite());
        assert!((p + q - 1.0).abs() < 1e-12);
    }
}

#[test]
fn dense_and_pool_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(t64(&[1, 2], &[1.0, 2.0]));
    let w = g.constant(t64(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let b = g.constant(t64(&[2], &[1.0, 1.0]));
    let y = g.dense(x, w, b).unwrap();
    assert_eq!(g.value(y).data(), &[2.0, 3.0]);

    let zw = g.constant(Tensor::zeros(vec![2, 3]).unwrap());
    let bias = g.constant(t64(&[3], &[0.5, -1.0, 2.0]));
    let x2 = g.constant(t64(&[2, 2], &[9.0, 8.0, 7.0, 6.0]));
    let y = g.dense(x2, zw, bias).unwrap();
    assert_eq!(g.value(y).data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    let bad = g.constant(Tensor::zeros(vec![3, 3]).unwrap());
    assert!(matches!(g.dense(x2, bad, bias), Err(LclError::Shape(_))));

    let mut g = Graph::<f64>::new();
    let x = g.param(t64(&[1, 2, 2, 2], &[1.0, 1.0, 1.0, 1.0, 0.0, 2.0, 4.0, 6.0]));
    let p = g.global_avg_pool(x).unwrap();
    assert_eq!(g.value(p).data(), &[1.0, 3.0]);
    let s = g.sum(p).unwrap();
    assert!(g.backward(s).unwrap().get(x).unwrap().data().iter().all(|&v| v == 0.25));
}

#[test]
fn backward_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.param(t64(&[1], &[3.0]));
    let y = g.mul(x, x).unwrap();
    assert_eq!(g.backward(y).unwrap().get(x).unwrap().data(), &[6.0]);

    let mut g = Graph::<f64>::new();
    let x = g.param(t64(&[2], &[3.0, 1.0]));
    let y = g.mul(x, x).unwrap();
    assert!(matches!(g.backward(y), Err(LclError::Contract(_))));
}

#[test]
fn forward_is_bitwise_deterministic() {
    let run = || {
        let mut g = Graph::<f32>::new();
        let xs: Vec<f32> = (0..2 * 3 * 6 * 6).map(|i| ((i * 37 % 101) as f32 / 50.0) - 1.0).collect();
        let ws: Vec<f32> = (0..4 * 3 * 9).map(|i| ((i * 13 % 29) as f32 / 14.0) - 1.0).collect();
        let x = g.constant(Tensor::new(vec![2, 3, 6, 6], xs).unwrap());
        let w = g.param(Tensor::new(vec![4, 3, 3, 3], ws).unwrap());
        let gm = g.param(Tensor::full(vec![4], 1.0).unwrap());
        let bt = g.param(Tensor::zeros(vec![4]).unwrap());
        let y = g.conv2d(x, w, 2, 1).unwrap();
        let (y, _) = g.batch_norm_train(y, gm, bt, 1e-5).unwrap();
        let y = g.relu(y).unwrap();
        let p = g.global_avg_pool(y).unwrap();
        let s = g.sum(p).unwrap();
        let grads = g.backward(s).unwrap();
        (g.value(p).data().to_vec(), grads.get(w).unwrap().data().to_vec())
    };
    let a = run();
    let b = run();
    assert_eq!(a.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.1.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn grad_check_examples() {
    let cfg = GradCheckConfig::default();
    let bowl = grad_check(
        &[t64(&[4], &[0.3, -1.2, 2.0, 0.5])],
        |g: &mut Graph<f64>, p: &[NodeId]| {
            let sq = g.mul(p[0], p[0])?;
            g.sum(sq)
        },
        &cfg,
    )
    .unwrap();
    assert!(bowl.max_rel_error < 1e-10, "{bowl:?}");

    let x = t64(&[3, 4], &(0..12).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>());
    let w = t64(&[4, 2], &(0..8).map(|i| (i as f64 * 0.91).cos()).collect::<Vec<_>>());
    let b = t64(&[2], &[0.1, -0.2]);
    let stack = grad_check(
        &[x, w, b],
        |g: &mut Graph<f64>, p: &[NodeId]| {
            let y = g.dense(p[0], p[1], p[2])?;
            let s = g.sigmoid(y)?;
            let s2 = g.mul(s, s)?;
            g.sum(s2)
        },
        &cfg,
    )
    .unwrap();
    assert!(stack.max_rel_error < 1e-6, "{stack:?}");
}

// Weights are irrational-ish so no parameter ends up with an exactly zero
// gradient, where the relative error would measure only rounding noise.
fn weighted_sum(g: &mut Graph<f64>, y: NodeId, seed: u64) -> lcl::Result<NodeId> {
    let n = g.value(y).numel();
    let dims = g.value(y).dims().to_vec();
    let w: Vec<f64> = (0..n).map(|i| ((i as u64 * 7919 + seed) % 17) as f64 / 8.0 - 1.0 + 0.1 * std::f64::consts::FRAC_1_SQRT_2).collect();
    let c = g.constant(Tensor::new(dims, w)?);
    let m = g.mul(y, c)?;
    g.sum(m)
}

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![-2.0f64..-0.01, 0.01f64..2.0],
        len,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conv_gradients_match_finite_differences(
        x in values(2 * 2 * 5 * 5),
        w in values(3 * 2 * 9),
        stride in 1usize..=2,
        pad in 0usize..=1,
    ) {
        let params = [t64(&[2, 2, 5, 5], &x), t64(&[3, 2, 3, 3], &w)];
        let r = grad_check(&params, |g: &mut Graph<f64>, p: &[NodeId]| {
            let y = g.conv2d(p[0], p[1], stride, pad)?;
            weighted_sum(g, y, 3)
        }, &GradCheckConfig::default()).unwrap();
        prop_assert!(r.max_rel_error < 1e-4, "{:?}", r);
    }

    #[test]
    fn batch_norm_gradients_match_finite_differences(
        x in values(3 * 2 * 3 * 3),
        gamma in prop::collection::vec(0.5f64..2.0, 2),
        beta in values(2),
    ) {
        // tiny gammas shrink every gradient to rounding-noise size
        let params = [t64(&[3, 2, 3, 3], &x), t64(&[2], &gamma), t64(&[2], &beta)];
        let r = grad_check(&params, |g: &mut Graph<f64>, p: &[NodeId]| {
            let (y, _) = g.batch_norm_train(p[0], p[1], p[2], 1e-5)?;
            weighted_sum(g, y, 5)
        }, &GradCheckConfig::default()).unwrap();
        prop_assert!(r.max_rel_error < 1e-4, "{:?}", r);

        let r = grad_check(&params, |g: &mut Graph<f64>, p: &[NodeId]| {
            let y = g.batch_norm_eval(p[0], p[1], p[2], &[0.2, -0.1], &[1.5, 0.7], 1e-5)?;
            weighted_sum(g, y, 6)
        }, &GradCheckConfig::default()).unwrap();
        prop_assert!(r.max_rel_error < 1e-4, "{:?}", r);
    }

    #[test]
    fn pointwise_gradients_match_finite_differences(x in values(12), y in values(12)) {
        let params = [t64(&[3, 4], &x), t64(&[3, 4], &y)];
        let r = grad_check(&params, |g: &mut Graph<f64>, p: &[NodeId]| {
            let a = g.relu(p[0])?;
            let s = g.sigmoid(p[1])?;
            let m = g.mul(a, s)?;
            let sum = g.add(m, p[1])?;
            weighted_sum(g, sum, 7)
        }, &GradCheckConfig::default()).unwrap();
        prop_assert!(r.max_rel_error < 1e-4, "{:?}", r);
    }

    #[test]
    fn dense_pool_reshape_gradients_match_finite_differences(x in values(2 * 3 * 2 * 2), w in values(6 * 2), b in values(2)) {
        let params = [t64(&[2, 3, 2, 2], &x), t64(&[6, 2], &w), t64(&[2], &b)];
        let r = grad_check(&params, |g: &mut Graph<f64>, p: &[NodeId]| {
            let pooled = g.global_avg_pool(p[0])?;
            let flat = g.reshape(pooled, vec![1, 6])?;
            let y = g.dense(flat, p[1], p[2])?;
            weighted_sum(g, y, 9)
        }, &GradCheckConfig::default()).unwrap();
        prop_assert!(r.max_rel_error < 1e-4, "{:?}", r);
    }

    #[test]
    fn batch_norm_train_output_is_standardized(x in prop::collection::vec(-5.0f64..5.0, 4 * 3 * 2 * 2)) {
        let mut g = Graph::<f64>::new();
        let xi = g.constant(t64(&[4, 3, 2, 2], &x));
        let gm = g.constant(ones(&[3]));
        let bt = g.constant(Tensor::zeros(vec![3]).unwrap());
        let (y, stats) = g.batch_norm_train(xi, gm, bt, 1e-5).unwrap();
        let out = g.value(y).data();
        for c in 0..3 {
            let vals: Vec<f64> = (0..4).flat_map(|n| (0..4).map(move |i| (n * 3 + c) * 4 + i)).map(|i| out[i]).collect();
            let mean = vals.iter().sum::<f64>() / 16.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            prop_assert!(mean.abs() < 1e-3);
            // a channel with almost no spread is dominated by eps
            if stats.var[c] > 0.1 {
                prop_assert!((var - 1.0).abs() < 1e-3, "channel {} var {}", c, var);
            }
        }
    }
}
