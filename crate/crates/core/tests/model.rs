use lcl::dataset::synth_glyphs;
use lcl::model::{
    bind_params, build_deg, contrastive_loss, deg_forward, dp_forward, fewshot_forward, lcnn_forward, pair_tensor,
    predict, Episode, ModelParams, ModelSpec, Mode, ParamKind,
};
use lcl::sampler::{rng_stream, sample_trials};
use lcl::tensor::{Graph, Tensor};
use lcl::trainer::init_params;
use lcl::LclError;
use proptest::prelude::*;

fn random_params(spec: &ModelSpec, seed: u64) -> ModelParams {
    let mut p = init_params(spec, &mut rng_stream(seed, 0)).unwrap();
    // move running stats and affine params off their defaults
    let mut k = 0u32;
    for (name, t) in p.tensors_mut() {
        if name.ends_with(".gamma") || name.ends_with(".beta") || name.ends_with(".bias") {
            for v in t.data_mut() {
                k += 1;
                *v += (k.wrapping_mul(2654435761) % 1000) as f32 / 5000.0 - 0.1;
            }
        }
    }
    p
}

fn images(n: usize, size: usize, seed: u64) -> Vec<Vec<f32>> {
    let d = synth_glyphs(n, 1, size, seed).unwrap();
    d.categories().iter().map(|c| c.samples[0].pixels.clone()).collect()
}

#[test]
fn layer_counts() {
    assert_eq!(ModelSpec::new(20, 28, 20).layer_count(), 122);
    assert_eq!(ModelSpec::new(1, 28, 20).layer_count(), 8);
    assert_eq!(ModelSpec::new(2, 28, 20).layer_count(), 14);
    assert!(matches!(build_deg(&ModelSpec::new(0, 28, 20)), Err(LclError::Config { .. })));
    let convs = build_deg(&ModelSpec::new(20, 28, 20))
        .unwrap()
        .iter()
        .filter(|p| p.kind == ParamKind::ConvWeight && p.dims[2] == 3)
        .count();
    // 3x3 convs plus the dense layer give the layer count
    assert_eq!(convs + 1, 122);
}

#[test]
fn deg_weight_sharing_and_shapes() {
    let spec = ModelSpec::new(1, 12, 3);
    let params = random_params(&spec, 1);
    let imgs = images(6, 12, 3);
    let mut g = Graph::<f32>::new();
    let bound = bind_params(&mut g, &params, false);
    let ep = |r: usize, c: [usize; 3]| Episode {
        recognizing: &imgs[r],
        candidates: c.iter().map(|&i| imgs[i].as_slice()).collect(),
    };
    // rows 0 and 5 hold the same pair
    let eps = [ep(0, [1, 2, 3]), ep(4, [5, 3, 1])];
    let pairs = pair_tensor::<f32>(&eps, 3, 12).unwrap();
    let mut data = pairs.into_data();
    let plane = 144;
    let row0: Vec<f32> = data[..2 * plane].to_vec();
    data[5 * 2 * plane..6 * 2 * plane].copy_from_slice(&row0);
    let input = g.constant(Tensor::new(vec![6, 2, 12, 12], data).unwrap());
    let (emb, stats) = deg_forward(&mut g, &bound, &params, input, Mode::Eval).unwrap();
    assert!(stats.is_empty());
    let e = g.value(emb);
    assert_eq!(e.dims(), &[6, 64]);
    assert!(e.all_finite());
    assert_eq!(&e.data()[..64], &e.data()[5 * 64..6 * 64]);

    let bad = g.constant(Tensor::zeros(vec![2, 3, 12, 12]).unwrap());
    assert!(matches!(deg_forward(&mut g, &bound, &params, bad, Mode::Eval), Err(LclError::Shape(_))));
}

#[test]
fn swapping_pair_channels_changes_the_embedding() {
    let spec = ModelSpec::new(1, 12, 2);
    let params = random_params(&spec, 2);
    let imgs = images(2, 12, 4);
    let mut g = Graph::<f32>::new();
    let bound = bind_params(&mut g, &params, false);
    let mut ab = imgs[0].clone();
    ab.extend(&imgs[1]);
    let mut ba = imgs[1].clone();
    ba.extend(&imgs[0]);
    let x = g.constant(Tensor::new(vec![1, 2, 12, 12], ab).unwrap());
    let y = g.constant(Tensor::new(vec![1, 2, 12, 12], ba).unwrap());
    let (ex, _) = deg_forward(&mut g, &bound, &params, x, Mode::Eval).unwrap();
    let (ey, _) = deg_forward(&mut g, &bound, &params, y, Mode::Eval).unwrap();
    assert_ne!(g.value(ex).data(), g.value(ey).data());
}

fn dp_only(params: &ModelParams, emb: Tensor<f32>, l: usize) -> lcl::Result<Vec<f32>> {
    let mut g = Graph::<f32>::new();
    let bound = bind_params(&mut g, params, false);
    let e = g.constant(emb);
    let a = dp_forward(&mut g, &bound, e, l)?;
    Ok(g.value(a).data().to_vec())
}

#[test]
fn dp_examples() {
    let spec = ModelSpec::new(1, 8, 4);
    let zero = ModelParams::from_fn(spec.clone(), |p| vec![0.0; p.numel()]).unwrap();
    let emb = Tensor::full(vec![4, 64], 0.3f32).unwrap();
    assert_eq!(dp_only(&zero, emb.clone(), 4).unwrap(), vec![0.5; 4]);

    let mut biased = zero.clone();
    biased.get_mut("dp.bias").unwrap().data_mut().copy_from_slice(&[20.0, -20.0, 20.0, -20.0]);
    let a = dp_only(&biased, emb.clone(), 4).unwrap();
    assert!(a[0] > 0.999_999 && a[1] < 1e-6 && a[2] > 0.999_999 && a[3] < 1e-6);

    assert!(matches!(dp_only(&zero, Tensor::full(vec![6, 64], 0.0).unwrap(), 3), Err(LclError::Shape(_))));

    // every activation depends on every embedding
    let random = random_params(&spec, 5);
    let base: Vec<f32> = (0..4 * 64).map(|i| ((i * 31 % 17) as f32) / 17.0).collect();
    let a0 = dp_only(&random, Tensor::new(vec![4, 64], base.clone()).unwrap(), 4).unwrap();
    for j in 0..4 {
        let mut moved = base.clone();
        for v in &mut moved[j * 64..(j + 1) * 64] {
            *v += 0.5;
        }
        let a1 = dp_only(&random, Tensor::new(vec![4, 64], moved).unwrap(), 4).unwrap();
        for i in (0..4).filter(|&i| i != j) {
            assert_ne!(a0[i], a1[i], "a_{i} ignores DE_{j}");
        }
    }
}

#[test]
fn batching_is_exact_in_eval_and_coupled_in_train() {
    let spec = ModelSpec::new(1, 12, 3);
    let params = random_params(&spec, 7);
    let d = synth_glyphs(8, 3, 12, 9).unwrap();
    let lccs = sample_trials(&d, 3, 1, 2, 11).unwrap();
    let eps: Vec<Episode> = lccs
        .iter()
        .map(|l| Episode {
            recognizing: d.pixels(l.recognizing[0]),
            candidates: l.contrastive.iter().map(|c| d.pixels(c.sample)).collect(),
        })
        .collect();
    let both = lcnn_forward(&params, &eps, Mode::Eval).unwrap().cpla;
    let first = lcnn_forward(&params, &eps[..1], Mode::Eval).unwrap().cpla;
    let second = lcnn_forward(&params, &eps[1..], Mode::Eval).unwrap().cpla;
    assert_eq!(both, vec![first[0].clone(), second[0].clone()]);

    let both = lcnn_forward(&params, &eps, Mode::Train).unwrap();
    let first = lcnn_forward(&params, &eps[..1], Mode::Train).unwrap();
    assert_ne!(both.cpla[0], first.cpla[0]);
    assert_eq!(both.batch_stats.len(), params.bn_stats().len());

    // manual composition of the single-context path
    let mut g = Graph::<f32>::new();
    let bound = bind_params(&mut g, &params, false);
    let x = g.constant(pair_tensor::<f32>(&eps[..1], 3, 12).unwrap());
    let (emb, _) = deg_forward(&mut g, &bound, &params, x, Mode::Eval).unwrap();
    let a = dp_forward(&mut g, &bound, emb, 3).unwrap();
    assert_eq!(g.value(a).data(), &lcnn_forward(&params, &eps[..1], Mode::Eval).unwrap().cpla[0].0[..]);

    let short = Episode {
        recognizing: eps[0].recognizing,
        candidates: eps[0].candidates[..2].to_vec(),
    };
    assert!(matches!(lcnn_forward(&params, &[short], Mode::Eval), Err(LclError::Contract(_))));
}

#[test]
fn eval_before_any_statistics_is_an_error() {
    let spec = ModelSpec::new(1, 8, 2);
    let p = random_params(&spec, 1);
    let stats = p
        .bn_stats()
        .iter()
        .map(|(k, v)| (k.clone(), lcl::model::RunningStats::unrecorded(v.mean.len())))
        .collect();
    let fresh = ModelParams::new(spec, p.tensors().clone(), stats).unwrap();
    let img = vec![0.0f32; 64];
    let ep = Episode {
        recognizing: &img,
        candidates: vec![&img, &img],
    };
    assert!(matches!(
        lcnn_forward(&fresh, &[ep.clone()], Mode::Eval),
        Err(LclError::UninitializedStats(_))
    ));
    assert!(lcnn_forward(&fresh, &[ep], Mode::Train).is_ok());
}

#[test]
fn fewshot_examples() {
    let spec = ModelSpec::new(1, 12, 4);
    let params = random_params(&spec, 8);
    let imgs = images(9, 12, 6);
    let cands: Vec<&[f32]> = imgs[..4].iter().map(Vec::as_slice).collect();
    let one = fewshot_forward(&params, &[&imgs[5]], &cands, Mode::Eval).unwrap();
    let direct = lcnn_forward(
        &params,
        &[Episode {
            recognizing: &imgs[5],
            candidates: cands.clone(),
        }],
        Mode::Eval,
    )
    .unwrap();
    assert_eq!(
        one.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        direct.cpla[0].0.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );

    let recs: Vec<&[f32]> = imgs[4..9].iter().map(Vec::as_slice).collect();
    let five = fewshot_forward(&params, &recs, &cands, Mode::Eval).unwrap();
    assert!(five.0.iter().all(|&v| v > 0.0 && v < 5.0));

    let same = vec![imgs[5].as_slice(); 5];
    let rep = fewshot_forward(&params, &same, &cands, Mode::Eval).unwrap();
    for (r, o) in rep.0.iter().zip(&one.0) {
        assert!((r - 5.0 * o).abs() < 1e-5);
    }
    assert!(matches!(fewshot_forward(&params, &[], &cands, Mode::Eval), Err(LclError::Contract(_))));
}

#[test]
fn summed_cpla_example() {
    let a = [0.2f32, 0.8];
    let b = [0.4f32, 0.6];
    let s: Vec<f32> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    assert!((s[0] - 0.6).abs() < 1e-6 && (s[1] - 1.4).abs() < 1e-6);
    assert_eq!(predict(&s).unwrap(), 0);
}

fn loss_case() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<usize>)> {
    (1usize..4, 2usize..6).prop_flat_map(|(n, l)| {
        (
            Just(n),
            Just(l),
            prop::collection::vec(0.0f64..=1.0, n * l),
            prop::collection::vec(0..l, n),
        )
    })
}

fn targets(n: usize, l: usize, pos: &[usize]) -> Tensor<f64> {
    let mut z = vec![1.0; n * l];
    for (r, &p) in pos.iter().enumerate() {
        z[r * l + p] = 0.0;
    }
    Tensor::new(vec![n, l], z).unwrap()
}

proptest! {
    #[test]
    fn loss_is_bounded((n, l, a, pos) in loss_case()) {
        let loss = contrastive_loss(&Tensor::new(vec![n, l], a).unwrap(), &targets(n, l, &pos)).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assert!(loss <= -(1e-7f64).ln() + 1e-9);
    }

    #[test]
    fn loss_gradient_signs((n, l, a, pos) in loss_case()) {
        let a: Vec<f64> = a.iter().map(|v| v.clamp(0.01, 0.99)).collect();
        let z = targets(n, l, &pos);
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::new(vec![n, l], a).unwrap());
        let loss = g.contrastive_loss(x, &z).unwrap();
        let grads = g.backward(loss).unwrap();
        for (d, &zi) in grads.get(x).unwrap().data().iter().zip(z.data()) {
            if zi == 1.0 {
                prop_assert!(*d < 0.0);
            } else {
                prop_assert!(*d > 0.0);
            }
        }
    }

    #[test]
    fn predict_invariant_under_increasing_maps(a in prop::collection::vec(0.0f64..1.0, 2..12)) {
        let p = predict(&a).unwrap();
        let mapped: Vec<f64> = a.iter().map(|v| (3.0 * v).exp() + v.powi(3)).collect();
        prop_assert_eq!(predict(&mapped).unwrap(), p);
        prop_assert!(a.iter().all(|&v| v >= a[p]));
    }
}
