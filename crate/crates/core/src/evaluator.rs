//! One-shot and few-shot accuracy over fixed manifests (the 400-trial
//! benchmark) or over trials regenerated per run from a held-out set.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::image::load_grayscale;
use crate::dataset::manifest::validate_entry;
use crate::dataset::{Dataset, TrialEntry};
use crate::error::{LclError, Result};
use crate::model::{fewshot_forward, CplaVector, ModelParams, Mode};
use crate::sampler::{generate_disjoint_test_trials, generate_test_trials, Lcc};

/// Pixels of one trial. `answer_index` is the answer key; models must not look at it.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalTrial {
    pub recognizing: Vec<Vec<f32>>,
    pub candidates: Vec<Vec<f32>>,
    pub answer_index: usize,
}

impl EvalTrial {
    pub fn from_lcc(dataset: &Dataset, lcc: &Lcc) -> Self {
        EvalTrial {
            recognizing: lcc.recognizing.iter().map(|&r| dataset.pixels(r).to_vec()).collect(),
            candidates: lcc.contrastive.iter().map(|c| dataset.pixels(c.sample).to_vec()).collect(),
            answer_index: lcc.positive_index(),
        }
    }
}

/// Resolves manifest ids to pixels: first as sample ids of `dataset`, then
/// as PNG paths relative to `base_dir`.
pub fn resolve_manifest(
    entries: &[TrialEntry],
    dataset: Option<&Dataset>,
    base_dir: &Path,
    image_size: usize,
) -> Result<Vec<EvalTrial>> {
    let lookup = |id: &str| -> Result<Vec<f32>> {
        if let Some(r) = dataset.and_then(|d| d.find(id)) {
            return Ok(dataset.expect("found in it").pixels(r).to_vec());
        }
        let path: PathBuf = base_dir.join(id);
        if path.is_file() {
            return load_grayscale(&path, image_size);
        }
        Err(LclError::Ingest {
            path,
            message: format!("manifest id `{id}` is neither a dataset sample nor an image file"),
        })
    };
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            validate_entry(i, e)?;
            Ok(EvalTrial {
                recognizing: e.recognizing.iter().map(|id| lookup(id)).collect::<Result<_>>()?,
                candidates: e.candidates.iter().map(|id| lookup(id)).collect::<Result<_>>()?,
                answer_index: e.answer_index,
            })
        })
        .collect()
}

/// Anything that turns a trial into `L` activations (lowest = predicted answer).
pub trait Scorer {
    /// `L` the scorer was built for, if it has one.
    fn num_contrastive(&self) -> Option<usize> {
        None
    }

    fn score(&self, trial: &EvalTrial) -> Result<CplaVector>;
}

/// The trained network in eval mode; few-shot activations are summed.
pub struct LcnnScorer<'a> {
    pub params: &'a ModelParams,
}

impl Scorer for LcnnScorer<'_> {
    fn num_contrastive(&self) -> Option<usize> {
        Some(self.params.spec().num_contrastive)
    }

    fn score(&self, trial: &EvalTrial) -> Result<CplaVector> {
        let rec: Vec<&[f32]> = trial.recognizing.iter().map(Vec::as_slice).collect();
        let cand: Vec<&[f32]> = trial.candidates.iter().map(Vec::as_slice).collect();
        fewshot_forward(self.params, &rec, &cand, Mode::Eval)
    }
}

/// Test stub: 0 at the answer slot, 1 elsewhere.
pub struct OracleScorer;

impl Scorer for OracleScorer {
    fn score(&self, trial: &EvalTrial) -> Result<CplaVector> {
        Ok(CplaVector(
            (0..trial.candidates.len())
                .map(|i| if i == trial.answer_index { 0.0 } else { 1.0 })
                .collect(),
        ))
    }
}

/// Test stub: 1 at the answer slot, 0 elsewhere.
pub struct InvertedOracleScorer;

impl Scorer for InvertedOracleScorer {
    fn score(&self, trial: &EvalTrial) -> Result<CplaVector> {
        Ok(CplaVector(
            (0..trial.candidates.len())
                .map(|i| if i == trial.answer_index { 1.0 } else { 0.0 })
                .collect(),
        ))
    }
}

/// Test stub: the same activation everywhere, so slot 0 is always predicted.
pub struct ConstantScorer;

impl Scorer for ConstantScorer {
    fn score(&self, trial: &EvalTrial) -> Result<CplaVector> {
        Ok(CplaVector(vec![0.5; trial.candidates.len()]))
    }
}

/// Fraction of trials whose prediction equals the answer.
pub fn evaluate_trials<S: Scorer + ?Sized>(scorer: &S, trials: &[EvalTrial], n_shot: usize) -> Result<f64> {
    if trials.is_empty() {
        return Err(LclError::contract("no trials to evaluate"));
    }
    let mut correct = 0usize;
    for (i, t) in trials.iter().enumerate() {
        if t.recognizing.len() != n_shot {
            return Err(LclError::contract(format!(
                "trial {i} has {} recognizing images, evaluating {n_shot}-shot",
                t.recognizing.len()
            )));
        }
        if let Some(l) = scorer.num_contrastive() {
            if t.candidates.len() != l {
                return Err(LclError::shape(format!(
                    "trial {i} is {}-way but the model was built for L = {l}",
                    t.candidates.len()
                )));
            }
        }
        if scorer.score(t)?.predict()? == t.answer_index {
            correct += 1;
        }
    }
    Ok(correct as f64 / trials.len() as f64)
}

/// `(mean, 1.96 * s / sqrt(R))` with the sample standard deviation `s`.
pub fn confidence_interval(accs: &[f64]) -> Result<(f64, f64)> {
    if accs.is_empty() {
        return Err(LclError::contract("confidence interval of an empty run list"));
    }
    if accs.iter().all(|&a| a == accs[0]) {
        return Ok((accs[0], 0.0));
    }
    let r = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / r;
    if accs.len() < 2 {
        return Ok((mean, 0.0));
    }
    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (r - 1.0);
    Ok((mean, 1.96 * var.sqrt() / r.sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Fixed 400-trial, 20-way one-shot manifest.
    Bpl,
    /// Trials regenerated from a held-out set for every run.
    Variant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub runs: usize,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub ci_halfwidth: f64,
    pub num_contrastive: usize,
    pub n_shot: usize,
    pub trials_per_run: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl EvalReport {
    fn from_runs(
        protocol: Protocol,
        accuracies: Vec<f64>,
        num_contrastive: usize,
        n_shot: usize,
        trials_per_run: usize,
        note: Option<String>,
    ) -> Result<Self> {
        let (mean, ci_halfwidth) = confidence_interval(&accuracies)?;
        Ok(EvalReport {
            protocol,
            runs: accuracies.len(),
            accuracies,
            mean,
            ci_halfwidth,
            num_contrastive,
            n_shot,
            trials_per_run,
            note,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned two-column table with accuracies as percentages.
    pub fn to_table(&self) -> String {
        let protocol = match self.protocol {
            Protocol::Bpl => "bpl",
            Protocol::Variant => "variant",
        };
        let rows = [
            ("protocol", protocol.to_string()),
            ("way (L)", self.num_contrastive.to_string()),
            ("shot", self.n_shot.to_string()),
            ("runs", self.runs.to_string()),
            ("trials/run", self.trials_per_run.to_string()),
            (
                "accuracy (%)",
                format!("{:.2} ± {:.2}", 100.0 * self.mean, 100.0 * self.ci_halfwidth),
            ),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        if let Some(n) = &self.note {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

/// Variant protocol: run `r` scores the trials generated with seed `base_seed + r`.
pub fn evaluate_variant<S: Scorer + ?Sized>(
    scorer: &S,
    testset: &Dataset,
    num_contrastive: usize,
    n_shot: usize,
    runs: usize,
    base_seed: u64,
) -> Result<EvalReport> {
    evaluate_variant_with(scorer, testset, num_contrastive, n_shot, runs, base_seed, false)
}

/// [`evaluate_variant`], optionally with sample-disjoint trials in each run.
pub fn evaluate_variant_with<S: Scorer + ?Sized>(
    scorer: &S,
    testset: &Dataset,
    num_contrastive: usize,
    n_shot: usize,
    runs: usize,
    base_seed: u64,
    disjoint: bool,
) -> Result<EvalReport> {
    if runs == 0 {
        return Err(LclError::config("eval.runs", "must be at least 1"));
    }
    let mut accs = Vec::with_capacity(runs);
    let mut per_run = 0;
    let mut fewest = usize::MAX;
    for run in 0..runs {
        let seed = base_seed.wrapping_add(run as u64);
        let lccs = if disjoint {
            generate_disjoint_test_trials(testset, num_contrastive, n_shot, seed)?
        } else {
            generate_test_trials(testset, num_contrastive, n_shot, seed)?
        };
        if lccs.is_empty() {
            return Err(LclError::Protocol(format!(
                "test set of {} images yields no {num_contrastive}-way {n_shot}-shot trials",
                testset.num_samples()
            )));
        }
        per_run = per_run.max(lccs.len());
        fewest = fewest.min(lccs.len());
        let trials: Vec<EvalTrial> = lccs.iter().map(|l| EvalTrial::from_lcc(testset, l)).collect();
        let acc = evaluate_trials(scorer, &trials, n_shot)?;
        log::debug!("run {run}: accuracy {acc:.4}");
        accs.push(acc);
    }
    let note = (fewest < per_run).then(|| format!("disjoint sampling gave {fewest} to {per_run} trials per run"));
    EvalReport::from_runs(Protocol::Variant, accs, num_contrastive, n_shot, per_run, note)
}

/// Fixed trial list. Evaluation is deterministic, so repeated runs would
/// all agree; the report holds one run and says so when more were asked for.
pub fn evaluate_fixed<S: Scorer + ?Sized>(
    scorer: &S,
    protocol: Protocol,
    trials: &[EvalTrial],
    requested_runs: usize,
) -> Result<EvalReport> {
    let first = trials
        .first()
        .ok_or_else(|| LclError::Protocol("manifest holds no trials".into()))?;
    let (l, n_shot) = (first.candidates.len(), first.recognizing.len());
    let acc = evaluate_trials(scorer, trials, n_shot)?;
    let note = (requested_runs > 1).then(|| {
        format!("fixed trials and a deterministic model: {requested_runs} requested runs collapsed to 1")
    });
    EvalReport::from_runs(protocol, vec![acc], l, n_shot, trials.len(), note)
}
