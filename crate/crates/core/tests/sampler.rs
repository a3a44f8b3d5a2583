use std::collections::{BTreeMap, HashSet};

use lcl::dataset::{Category, Dataset, ImageSample};
use lcl::sampler::{
    count_distinct_lccs, count_trials, generate_fewshot_lcc, generate_lcc, generate_test_trials, make_batch,
    rng_stream, sample_trials, Lcc, SampleRef,
};
use num_bigint::BigUint;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn toy(ks: &[usize]) -> Dataset {
    let categories = ks
        .iter()
        .enumerate()
        .map(|(c, &k)| Category {
            id: format!("c{c}"),
            group: "g".into(),
            samples: (0..k)
                .map(|s| ImageSample {
                    id: format!("c{c}/s{s}"),
                    pixels: vec![0.0; 4],
                })
                .collect(),
        })
        .collect();
    Dataset::new(categories, 2).unwrap()
}

fn chi_square_p(observed: &[usize]) -> f64 {
    let total: usize = observed.iter().sum();
    let expected = total as f64 / observed.len() as f64;
    let stat: f64 = observed.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((observed.len() - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn ten_thousand_draws_keep_the_invariants_and_shuffle_uniformly() {
    let d = toy(&[5; 20]);
    let mut rng = rng_stream(42, 0);
    let mut slots = [0usize; 5];
    for _ in 0..10_000 {
        let lcc = generate_lcc(&d, 5, &mut rng).unwrap();
        lcc.validate().unwrap();
        assert_eq!(lcc.num_contrastive(), 5);
        slots[lcc.positive_index()] += 1;
    }
    let p = chi_square_p(&slots);
    assert!(p > 0.001, "slot histogram {slots:?}, p = {p}");
}

#[test]
fn mixed_sample_counts_never_pick_a_singleton_positive() {
    let d = toy(&[1, 1, 2, 1, 3, 1, 1]);
    let mut rng = rng_stream(3, 0);
    for _ in 0..10_000 {
        let lcc = generate_lcc(&d, 3, &mut rng).unwrap();
        lcc.validate().unwrap();
        let pos = lcc.contrastive[lcc.positive_index()].sample.category;
        assert!(pos == 2 || pos == 4);
    }
}

#[test]
fn each_category_is_omitted_about_equally_often() {
    let l = 4;
    let d = toy(&[3; 5]);
    let mut rng = rng_stream(9, 0);
    let draws = 10_000;
    let mut omitted = vec![0usize; 5];
    for _ in 0..draws {
        let lcc = generate_lcc(&d, l, &mut rng).unwrap();
        let used: HashSet<usize> = lcc.contrastive.iter().map(|c| c.sample.category).collect();
        let missing: Vec<usize> = (0..5).filter(|c| !used.contains(c)).collect();
        assert_eq!(missing.len(), 1);
        omitted[missing[0]] += 1;
    }
    for &o in &omitted {
        let f = o as f64 / draws as f64;
        assert!((f - 0.2).abs() < 0.02, "omission frequencies {omitted:?}");
    }
    assert!(chi_square_p(&omitted) > 0.001);
}

#[test]
fn fewshot_recognizing_images_are_distinct() {
    let d = toy(&[6, 6, 2, 7, 6, 3, 6]);
    let mut rng = rng_stream(5, 0);
    for _ in 0..10_000 {
        let lcc = generate_fewshot_lcc(&d, 4, 5, &mut rng).unwrap();
        lcc.validate().unwrap();
        assert_eq!(lcc.n_shot(), 5);
        let pos = lcc.contrastive[lcc.positive_index()].sample;
        let mut all: HashSet<SampleRef> = lcc.recognizing.iter().copied().collect();
        assert_eq!(all.len(), 5);
        assert!(all.insert(pos));
        if d.categories()[pos.category].samples.len() == 6 {
            assert_eq!(all.len(), 6);
        }
    }
}

#[test]
fn single_shot_fewshot_matches_the_one_shot_generator() {
    let d = toy(&[4; 9]);
    for seed in 0..50 {
        let a = generate_lcc(&d, 6, &mut rng_stream(seed, 0)).unwrap();
        let b = generate_fewshot_lcc(&d, 6, 1, &mut rng_stream(seed, 0)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn seeds_are_deterministic_and_distinct() {
    let d = toy(&[3; 12]);
    let a = make_batch(&d, 40, 5, &mut rng_stream(7, 1)).unwrap();
    let b = make_batch(&d, 40, 5, &mut rng_stream(7, 1)).unwrap();
    let c = make_batch(&d, 40, 5, &mut rng_stream(8, 1)).unwrap();
    assert_eq!(a.len(), 40);
    assert_eq!(
        serde_json::to_vec(&a).unwrap(),
        serde_json::to_vec(&b).unwrap()
    );
    assert_ne!(a, c);

    let mut r1 = rng_stream(11, 1);
    let mut r2 = rng_stream(11, 1);
    let _ = generate_lcc(&d, 5, &mut r1).unwrap();
    let _ = generate_lcc(&d, 5, &mut r2).unwrap();
    let one = make_batch(&d, 1, 5, &mut r1).unwrap();
    assert_eq!(one, vec![generate_lcc(&d, 5, &mut r2).unwrap()]);
}

#[test]
fn test_trials_follow_the_budget() {
    let d = toy(&[2; 25]);
    let trials = generate_test_trials(&d, 20, 1, 0).unwrap();
    assert_eq!(trials.len(), 2);
    assert!(trials.iter().all(|t| t.num_contrastive() == 20 && t.validate().is_ok()));
    let other = generate_test_trials(&d, 20, 1, 1).unwrap();
    assert_ne!(trials, other);

    // trial i only depends on (seed, i)
    let many = sample_trials(&d, 20, 1, 10, 4).unwrap();
    let few = sample_trials(&d, 20, 1, 3, 4).unwrap();
    assert_eq!(&many[..3], &few[..]);

    assert_eq!(count_trials(21, 1, 20, 1), 1);
    assert_eq!(count_trials(659, 20, 20, 1), 627);
    assert_eq!(count_trials(659, 20, 20, 5), 527);
}

// Independent oracle: walk every (recognizing image, ordered candidate list)
// and keep the ones satisfying the context invariants.
fn enumerate(sc: usize, k: usize, l: usize) -> u64 {
    let images: Vec<(usize, usize)> = (0..sc).flat_map(|c| (0..k).map(move |s| (c, s))).collect();
    let n = images.len();
    let mut count = 0u64;
    let mut idx = vec![0usize; l];
    for &rec in &images {
        if l == 0 {
            break;
        }
        idx.iter_mut().for_each(|i| *i = 0);
        loop {
            let cands: Vec<(usize, usize)> = idx.iter().map(|&i| images[i]).collect();
            let cats: HashSet<usize> = cands.iter().map(|c| c.0).collect();
            let same: Vec<&(usize, usize)> = cands.iter().filter(|c| c.0 == rec.0).collect();
            if cats.len() == l && same.len() == 1 && *same[0] != rec {
                count += 1;
            }
            let mut pos = 0;
            loop {
                if pos == l {
                    break;
                }
                idx[pos] += 1;
                if idx[pos] < n {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == l {
                break;
            }
        }
    }
    count
}

#[test]
fn formula_matches_enumeration() {
    for sc in 1..=4 {
        for k in 1..=3 {
            for l in 1..=3 {
                let oracle = enumerate(sc, k, l);
                assert_eq!(
                    count_distinct_lccs(sc as u64, k as u64, l as u64),
                    BigUint::from(oracle),
                    "SC={sc} K={k} L={l}"
                );
            }
        }
    }
    assert_eq!(count_distinct_lccs(2, 2, 2), BigUint::from(16u32));
}

#[test]
fn generator_reaches_every_context_uniformly() {
    let d = toy(&[2, 2, 2]);
    let expected = count_distinct_lccs(3, 2, 2);
    assert_eq!(expected, BigUint::from(enumerate(3, 2, 2)));
    let cells: usize = expected.try_into().unwrap();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut rng = rng_stream(1, 0);
    let draws = 200 * cells;
    for _ in 0..draws {
        let lcc: Lcc = generate_lcc(&d, 2, &mut rng).unwrap();
        *seen.entry(serde_json::to_string(&lcc).unwrap()).or_default() += 1;
    }
    assert_eq!(seen.len(), cells);
    let counts: Vec<usize> = seen.into_values().collect();
    assert!(chi_square_p(&counts) > 0.001, "{counts:?}");
}
