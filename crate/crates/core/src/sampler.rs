//! Context construction: sampling categories, instances and slot order for
//! one local cognitive context (LCC), mini-batches of them, and test trials.
//!
//! All randomness comes from ChaCha8 streams. A stream is identified by a
//! 64-bit seed and a 64-bit stream number, so independent consumers
//! (parameter init, training batches, trial `i` of an evaluation run) can
//! share one seed without sharing draws.

use std::collections::HashSet;

use num_bigint::BigUint;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, TrialEntry};
use crate::error::{LclError, Result};

/// Position of one image inside a [`Dataset`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleRef {
    pub category: usize,
    pub sample: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastiveObject {
    pub sample: SampleRef,
    /// `z`: 0 for the positive object, 1 for negatives.
    pub z: u8,
}

/// Recognizing image(s) plus `L` contrastive objects in slot order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lcc {
    pub recognizing: Vec<SampleRef>,
    pub contrastive: Vec<ContrastiveObject>,
}

impl Lcc {
    pub fn num_contrastive(&self) -> usize {
        self.contrastive.len()
    }

    pub fn n_shot(&self) -> usize {
        self.recognizing.len()
    }

    /// Slot of the positive object. Panics on an invalid context; call
    /// [`Lcc::validate`] first for untrusted input.
    pub fn positive_index(&self) -> usize {
        self.contrastive
            .iter()
            .position(|c| c.z == 0)
            .expect("context has a positive object")
    }

    pub fn labels(&self) -> Vec<u8> {
        self.contrastive.iter().map(|c| c.z).collect()
    }

    /// Checks that exactly one object is positive and shares the recognizing
    /// category, that no positive object repeats a recognizing image, and
    /// that the contrastive categories are pairwise distinct.
    pub fn validate(&self) -> Result<()> {
        let first = self
            .recognizing
            .first()
            .ok_or_else(|| LclError::contract("context has no recognizing object"))?;
        if self.recognizing.iter().any(|r| r.category != first.category) {
            return Err(LclError::contract("recognizing objects span several categories"));
        }
        let distinct: HashSet<_> = self.recognizing.iter().collect();
        if distinct.len() != self.recognizing.len() {
            return Err(LclError::contract("recognizing objects repeat an image"));
        }
        let positives: Vec<_> = self.contrastive.iter().filter(|c| c.z == 0).collect();
        if positives.len() != 1 {
            return Err(LclError::contract(format!(
                "context has {} positive objects, expected exactly one",
                positives.len()
            )));
        }
        if self.contrastive.iter().any(|c| c.z > 1) {
            return Err(LclError::contract("labels must be 0 or 1"));
        }
        let pos = positives[0].sample;
        if pos.category != first.category {
            return Err(LclError::contract("positive object is not in the recognizing category"));
        }
        if self.recognizing.contains(&pos) {
            return Err(LclError::contract("positive object repeats a recognizing image"));
        }
        let cats: HashSet<usize> = self.contrastive.iter().map(|c| c.sample.category).collect();
        if cats.len() != self.contrastive.len() {
            return Err(LclError::contract("contrastive objects share a category"));
        }
        Ok(())
    }

    /// Manifest form, using the dataset's sample ids.
    pub fn to_entry(&self, dataset: &Dataset) -> TrialEntry {
        TrialEntry {
            recognizing: self.recognizing.iter().map(|&r| dataset.sample(r).id.clone()).collect(),
            candidates: self
                .contrastive
                .iter()
                .map(|c| dataset.sample(c.sample).id.clone())
                .collect(),
            answer_index: self.positive_index(),
        }
    }
}

/// Stream `stream` of the ChaCha8 generator seeded with `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One-shot context: `L` distinct categories, one positive
/// among them, one image per negative, two distinct positive images, shuffled.
pub fn generate_lcc<R: Rng + ?Sized>(dataset: &Dataset, num_contrastive: usize, rng: &mut R) -> Result<Lcc> {
    generate_fewshot_lcc(dataset, num_contrastive, 1, rng)
}

/// As [`generate_lcc`] with `n_shot` distinct recognizing images, all
/// different from the positive contrastive image.
///
/// Only categories with at least `n_shot + 1` samples can be positive. When
/// the drawn categories contain none, the category draw is repeated.
pub fn generate_fewshot_lcc<R: Rng + ?Sized>(
    dataset: &Dataset,
    num_contrastive: usize,
    n_shot: usize,
    rng: &mut R,
) -> Result<Lcc> {
    check_feasible(dataset, num_contrastive, n_shot)?;
    let cats = dataset.categories();
    let need = n_shot + 1;
    let (chosen, positive_cat) = loop {
        let chosen = index::sample(rng, cats.len(), num_contrastive).into_vec();
        let eligible: Vec<usize> = chosen.iter().copied().filter(|&c| cats[c].samples.len() >= need).collect();
        if !eligible.is_empty() {
            let p = eligible[rng.random_range(0..eligible.len())];
            break (chosen, p);
        }
    };

    let picks = index::sample(rng, cats[positive_cat].samples.len(), need).into_vec();
    let recognizing: Vec<SampleRef> = picks[..n_shot]
        .iter()
        .map(|&s| SampleRef {
            category: positive_cat,
            sample: s,
        })
        .collect();
    let mut contrastive = Vec::with_capacity(num_contrastive);
    contrastive.push(ContrastiveObject {
        sample: SampleRef {
            category: positive_cat,
            sample: picks[n_shot],
        },
        z: 0,
    });
    for &c in chosen.iter().filter(|&&c| c != positive_cat) {
        contrastive.push(ContrastiveObject {
            sample: SampleRef {
                category: c,
                sample: rng.random_range(0..cats[c].samples.len()),
            },
            z: 1,
        });
    }
    contrastive.shuffle(rng);
    Ok(Lcc {
        recognizing,
        contrastive,
    })
}

fn check_feasible(dataset: &Dataset, num_contrastive: usize, n_shot: usize) -> Result<()> {
    if num_contrastive < 1 {
        return Err(LclError::contract("L must be at least 1"));
    }
    if n_shot < 1 {
        return Err(LclError::contract("n_shot must be at least 1"));
    }
    if dataset.num_categories() < num_contrastive {
        return Err(LclError::InsufficientCategories {
            available: dataset.num_categories(),
            required: num_contrastive,
        });
    }
    if !dataset.categories().iter().any(|c| c.samples.len() > n_shot) {
        let best = dataset
            .categories()
            .iter()
            .max_by_key(|c| c.samples.len())
            .expect("dataset has categories");
        return Err(LclError::InsufficientSamples {
            category: best.id.clone(),
            available: best.samples.len(),
            required: n_shot + 1,
        });
    }
    Ok(())
}

/// `batch_size` independent one-shot contexts from one stream.
pub fn make_batch<R: Rng + ?Sized>(
    dataset: &Dataset,
    batch_size: usize,
    num_contrastive: usize,
    rng: &mut R,
) -> Result<Vec<Lcc>> {
    (0..batch_size)
        .map(|_| generate_lcc(dataset, num_contrastive, rng))
        .collect()
}

/// `floor(ec * ke / (l + n_shot))`.
pub fn count_trials(ec: usize, ke: usize, num_contrastive: usize, n_shot: usize) -> usize {
    (ec * ke) / (num_contrastive + n_shot)
}

/// `count` contexts, trial `i` drawn from stream `(seed, i)` so any subset
/// can be regenerated independently.
pub fn sample_trials(
    dataset: &Dataset,
    num_contrastive: usize,
    n_shot: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Lcc>> {
    check_feasible(dataset, num_contrastive, n_shot)?;
    (0..count)
        .map(|i| generate_fewshot_lcc(dataset, num_contrastive, n_shot, &mut rng_stream(seed, i as u64)))
        .collect()
}

/// Variant-protocol trials: [`count_trials`] contexts over the whole test set.
///
/// `EC * KE` is taken as the total number of test images. Trials are not
/// sample-disjoint.
pub fn generate_test_trials(testset: &Dataset, num_contrastive: usize, n_shot: usize, seed: u64) -> Result<Vec<Lcc>> {
    let n = count_trials(testset.num_samples(), 1, num_contrastive, n_shot);
    sample_trials(testset, num_contrastive, n_shot, n, seed)
}

/// As [`generate_test_trials`], but no image appears in two trials.
///
/// Trials are drawn in order from stream `(seed, i)` over the images not yet
/// used. The positive category is drawn first among those with `n_shot + 1`
/// unused images, then `L - 1` negatives among the rest with any unused image.
/// Stops early, with fewer than the budgeted trials, once that is impossible.
pub fn generate_disjoint_test_trials(
    testset: &Dataset,
    num_contrastive: usize,
    n_shot: usize,
    seed: u64,
) -> Result<Vec<Lcc>> {
    check_feasible(testset, num_contrastive, n_shot)?;
    let budget = count_trials(testset.num_samples(), 1, num_contrastive, n_shot);
    let mut unused: Vec<Vec<usize>> = testset
        .categories()
        .iter()
        .map(|c| (0..c.samples.len()).collect())
        .collect();
    let mut out = Vec::with_capacity(budget);
    for i in 0..budget {
        let rng = &mut rng_stream(seed, i as u64);
        let eligible: Vec<usize> = (0..unused.len()).filter(|&c| unused[c].len() > n_shot).collect();
        if eligible.is_empty() {
            break;
        }
        let positive_cat = eligible[rng.random_range(0..eligible.len())];
        let others: Vec<usize> = (0..unused.len())
            .filter(|&c| c != positive_cat && !unused[c].is_empty())
            .collect();
        if others.len() + 1 < num_contrastive {
            break;
        }
        let mut take = |c: usize, rng: &mut ChaCha8Rng| {
            let j = rng.random_range(0..unused[c].len());
            SampleRef {
                category: c,
                sample: unused[c].swap_remove(j),
            }
        };
        let recognizing: Vec<SampleRef> = (0..n_shot).map(|_| take(positive_cat, rng)).collect();
        let mut contrastive = vec![ContrastiveObject {
            sample: take(positive_cat, rng),
            z: 0,
        }];
        for k in index::sample(rng, others.len(), num_contrastive - 1) {
            contrastive.push(ContrastiveObject {
                sample: take(others[k], rng),
                z: 1,
            });
        }
        contrastive.shuffle(rng);
        out.push(Lcc {
            recognizing,
            contrastive,
        });
    }
    if out.len() < budget {
        log::warn!("disjoint trial sampling stopped at {} of {budget} trials", out.len());
    }
    Ok(out)
}

/// Number of distinct one-shot contexts over `sc` categories with `k`
/// samples each: `sc * l * k * (k-1) * P(sc-1, l-1) * k^(l-1)`.
pub fn count_distinct_lccs(sc: u64, k: u64, num_contrastive: u64) -> BigUint {
    let l = num_contrastive;
    if k < 2 || l == 0 || sc < l {
        return BigUint::from(0u32);
    }
    let mut total = BigUint::from(sc) * l * k * (k - 1);
    for i in 0..(l - 1) {
        total *= sc - 1 - i;
    }
    total * BigUint::from(k).pow((l - 1) as u32)
}
