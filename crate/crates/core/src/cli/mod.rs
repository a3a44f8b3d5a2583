//! Config files and the `lcl` subcommands.
//!
//! A run is described by one JSON file with the sections `model`, `train`,
//! `data`, `eval` and `io`. Every field has a default, unknown keys are
//! rejected, and relative paths are taken relative to the config file.
//! Each command writes the fully resolved config next to its outputs.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    augment_rotations, load_bpl_trials, load_image_dataset, split_background, synth_glyphs, write_manifest, Dataset,
    SplitSpec,
};
use crate::error::{LclError, Result};
use crate::evaluator::{
    evaluate_fixed, evaluate_variant_with, resolve_manifest, EvalReport, LcnnScorer, OracleScorer, Protocol, Scorer,
};
use crate::model::ModelSpec;
use crate::sampler::sample_trials;
use crate::tensor::{GradCheckConfig, GradCheckReport};
use crate::trainer::{
    lcnn_grad_check, load_checkpoint, save_checkpoint, train, write_loss_trace, TrainConfig,
};

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub depth: usize,
    pub image_size: usize,
    pub num_contrastive: usize,
    pub embed_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            depth: 20,
            image_size: 28,
            num_contrastive: 20,
            embed_dim: 64,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            embed_dim: self.embed_dim,
            ..ModelSpec::new(self.depth, self.image_size, self.num_contrastive)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synth {
        num_classes: usize,
        samples_per_class: usize,
        seed: u64,
    },
    /// `root/<group>/<category>/*.png`
    Directory { root: PathBuf },
}

impl DataSource {
    pub fn load(&self, image_size: usize) -> Result<Dataset> {
        match self {
            DataSource::Synth {
                num_classes,
                samples_per_class,
                seed,
            } => synth_glyphs(*num_classes, *samples_per_class, image_size, *seed),
            DataSource::Directory { root } => load_image_dataset(root, image_size),
        }
    }

    fn resolve(&mut self, base: &Path) {
        if let DataSource::Directory { root } = self {
            *root = resolve_path(base, root);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train: DataSource,
    /// Held-out set for the variant protocol (and for resolving manifest ids).
    pub test: Option<DataSource>,
    pub split: SplitSpec,
    /// Adds 90/180/270 degree rotations of every training category as new categories.
    pub augment_rotations: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train: DataSource::Synth {
                num_classes: 30,
                samples_per_class: 20,
                seed: 1,
            },
            test: None,
            split: SplitSpec::Full,
            augment_rotations: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub protocol: Protocol,
    pub runs: usize,
    pub n_shot: usize,
    /// Seed of run 0; run `r` uses `seed + r`. Also seeds `sample`.
    pub seed: u64,
    /// Trial manifest (file or Lake run folder); required by the bpl protocol.
    pub manifest: Option<PathBuf>,
    /// Variant protocol only: no test image is reused across the trials of a run.
    pub disjoint_trials: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            protocol: Protocol::Variant,
            runs: 100,
            n_shot: 1,
            seed: 0,
            manifest: None,
            disjoint_trials: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub checkpoint: PathBuf,
    pub loss_trace: PathBuf,
    /// JSON report; the text table goes next to it with a `.txt` extension.
    pub report: PathBuf,
    pub effective_config: PathBuf,
}

impl Default for IoConfig {
    fn default() -> Self {
        IoConfig {
            checkpoint: "checkpoint.lcl".into(),
            loss_trace: "loss_trace.csv".into(),
            report: "report.json".into(),
            effective_config: "effective_config.json".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
    pub io: IoConfig,
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LclError::config("config", e.to_string()))
    }

    /// Parses, resolves relative paths against the file's directory and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| LclError::config("--config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.data.train.resolve(base);
        if let Some(t) = &mut self.data.test {
            t.resolve(base);
        }
        if let Some(m) = &mut self.eval.manifest {
            *m = resolve_path(base, m);
        }
        let io = &mut self.io;
        for p in [&mut io.checkpoint, &mut io.loss_trace, &mut io.report, &mut io.effective_config] {
            *p = resolve_path(base, p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.model.spec();
        spec.validate()?;
        self.train.validate()?;
        if self.eval.runs < 1 {
            return Err(LclError::config("eval.runs", "must be at least 1"));
        }
        if self.eval.n_shot < 1 {
            return Err(LclError::config("eval.n_shot", "must be at least 1"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn write_effective(&self) -> Result<()> {
        write_file(&self.io.effective_config, self.to_json().as_bytes())
    }

    /// Training set: source, then split, then optional rotation augmentation.
    pub fn train_dataset(&self) -> Result<Dataset> {
        let raw = self.data.train.load(self.model.image_size)?;
        let split = split_background(&raw, &self.data.split)?;
        if self.data.augment_rotations {
            augment_rotations(&split)
        } else {
            Ok(split)
        }
    }

    pub fn test_dataset(&self) -> Result<Option<Dataset>> {
        self.data
            .test
            .as_ref()
            .map(|s| s.load(self.model.image_size))
            .transpose()
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| LclError::io(format!("creating {}", dir.display()), e))?;
    }
    fs::write(path, bytes).map_err(|e| LclError::io(format!("writing {}", path.display()), e))
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub steps: u64,
    pub final_loss: Option<f32>,
}

pub fn cmd_train(config: &Path) -> Result<TrainSummary> {
    let cfg = RunConfig::load(config)?;
    cfg.write_effective()?;
    let dataset = cfg.train_dataset()?;
    let spec = cfg.model.spec();
    log::info!(
        "training depth {} ({} layers), L = {}, {} categories, {} steps",
        spec.depth,
        spec.layer_count(),
        spec.num_contrastive,
        dataset.num_categories(),
        cfg.train.max_steps
    );
    let log_every = (cfg.train.max_steps / 50).max(1);
    let every = cfg.train.checkpoint_every;
    let ckpt_path = cfg.io.checkpoint.clone();
    let outcome = train(&spec, &cfg.train, &dataset, |trainer, rec| {
        let done = rec.step + 1;
        if done % log_every == 0 {
            log::info!("step {done} lr {} loss {:.5}", rec.lr, rec.loss);
        }
        if every > 0 && done % every == 0 && done < cfg.train.max_steps {
            let mut p = ckpt_path.as_os_str().to_owned();
            p.push(format!(".step{done}"));
            save_checkpoint(Path::new(&p), trainer.params(), &trainer.meta())?;
        }
        Ok(())
    })?;
    save_checkpoint(&cfg.io.checkpoint, &outcome.params, &outcome.meta)?;
    if let Some(dir) = cfg.io.loss_trace.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| LclError::io(format!("creating {}", dir.display()), e))?;
    }
    write_loss_trace(&cfg.io.loss_trace, &outcome.trace)?;
    Ok(TrainSummary {
        checkpoint: cfg.io.checkpoint.clone(),
        steps: outcome.meta.step,
        final_loss: outcome.trace.last().map(|r| r.loss),
    })
}

/// Evaluates a checkpoint (or the answer-key stub) under the configured protocol
/// and writes the report as JSON plus a text table.
pub fn cmd_eval(checkpoint: Option<&Path>, config: &Path, oracle_stub: bool) -> Result<EvalReport> {
    let cfg = RunConfig::load(config)?;
    cfg.write_effective()?;
    let l = cfg.model.num_contrastive;

    let ckpt = match (oracle_stub, checkpoint) {
        (true, _) => None,
        (false, Some(p)) => Some(load_checkpoint(p)?),
        (false, None) => return Err(LclError::config("--checkpoint", "required unless the stub scorer is used")),
    };
    if let Some(c) = &ckpt {
        let stored = c.params.spec();
        if stored.num_contrastive != l {
            return Err(LclError::shape(format!(
                "checkpoint was trained with L = {}, config asks for L = {l}",
                stored.num_contrastive
            )));
        }
        if stored.image_size != cfg.model.image_size {
            return Err(LclError::shape(format!(
                "checkpoint expects {} px images, config uses {} px",
                stored.image_size, cfg.model.image_size
            )));
        }
    }
    let lcnn;
    let scorer: &dyn Scorer = match &ckpt {
        Some(c) => {
            lcnn = LcnnScorer { params: &c.params };
            &lcnn
        }
        None => &OracleScorer,
    };

    let testset = cfg.test_dataset()?;
    let report = match cfg.eval.protocol {
        Protocol::Bpl => {
            let manifest = cfg
                .eval
                .manifest
                .as_ref()
                .ok_or_else(|| LclError::config("eval.manifest", "the bpl protocol needs a trial manifest"))?;
            let entries = load_bpl_trials(manifest)?;
            let base = if manifest.is_dir() {
                manifest.clone()
            } else {
                manifest.parent().map(Path::to_path_buf).unwrap_or_default()
            };
            let trials = resolve_manifest(&entries, testset.as_ref(), &base, cfg.model.image_size)?;
            evaluate_fixed(scorer, Protocol::Bpl, &trials, cfg.eval.runs)?
        }
        Protocol::Variant => {
            let testset = testset
                .ok_or_else(|| LclError::config("data.test", "the variant protocol needs a held-out test set"))?;
            evaluate_variant_with(scorer, &testset, l, cfg.eval.n_shot, cfg.eval.runs, cfg.eval.seed, cfg.eval.disjoint_trials)?
        }
    };
    write_file(&cfg.io.report, report.to_json().as_bytes())?;
    write_file(&cfg.io.report.with_extension("txt"), report.to_table().as_bytes())?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SampleFrom {
    Train,
    Test,
}

/// Writes `count` contexts as a trial manifest; context `i` uses stream `(eval.seed, i)`.
pub fn cmd_sample(config: &Path, count: usize, out: &Path, from: SampleFrom) -> Result<usize> {
    let cfg = RunConfig::load(config)?;
    cfg.write_effective()?;
    let dataset = match from {
        SampleFrom::Train => cfg.train_dataset()?,
        SampleFrom::Test => cfg
            .test_dataset()?
            .ok_or_else(|| LclError::config("data.test", "no test set configured"))?,
    };
    let lccs = if count == 0 {
        Vec::new()
    } else {
        sample_trials(&dataset, cfg.model.num_contrastive, cfg.eval.n_shot, count, cfg.eval.seed)?
    };
    let entries: Vec<_> = lccs.iter().map(|l| l.to_entry(&dataset)).collect();
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| LclError::io(format!("creating {}", dir.display()), e))?;
    }
    write_manifest(out, &entries)?;
    Ok(entries.len())
}

/// Full-network gradient check, always depth 1, L = 3, 8x8, 64-bit.
/// A config only contributes `train.seed`.
pub fn cmd_gradcheck(config: Option<&Path>, corrupt_backward: bool) -> Result<GradCheckReport> {
    let seed = match config {
        Some(p) => {
            let cfg = RunConfig::load(p)?;
            cfg.write_effective()?;
            cfg.train.seed
        }
        None => 0,
    };
    let gc = GradCheckConfig {
        seed,
        corrupt_backward,
        ..GradCheckConfig::default()
    };
    lcnn_grad_check(&gc, 2)
}

#[derive(Debug, Parser)]
#[command(name = "lcl", version, about = "Local contrast learning: train, evaluate, sample contexts, check gradients")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network and write checkpoint, loss trace and effective config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint under the configured protocol.
    Eval {
        #[arg(long, required_unless_present = "oracle_stub")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        /// Score with the answer key instead of a network (harness check).
        #[arg(long, hide = true)]
        oracle_stub: bool,
    },
    /// Write sampled contexts as a trial manifest.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "train")]
        from: SampleFrom,
    },
    /// Compare analytic and finite-difference gradients of a small network.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, hide = true)]
        corrupt_backward: bool,
    },
}

/// Runs one command, printing results to stdout and errors to stderr; returns the exit code.
pub fn run(cli: Cli) -> i32 {
    let result: Result<i32> = (|| {
        let mut out = std::io::stdout().lock();
        match cli.command {
            Command::Train { config } => {
                let s = cmd_train(&config)?;
                let loss = s.final_loss.map_or("n/a".to_string(), |l| format!("{l:.5}"));
                let _ = writeln!(out, "trained {} steps, final loss {loss}, checkpoint {}", s.steps, s.checkpoint.display());
                Ok(0)
            }
            Command::Eval {
                checkpoint,
                config,
                oracle_stub,
            } => {
                let r = cmd_eval(checkpoint.as_deref(), &config, oracle_stub)?;
                let _ = write!(out, "{}", r.to_table());
                Ok(0)
            }
            Command::Sample {
                config,
                count,
                out: path,
                from,
            } => {
                let n = cmd_sample(&config, count, &path, from)?;
                let _ = writeln!(out, "wrote {n} contexts to {}", path.display());
                Ok(0)
            }
            Command::Gradcheck {
                config,
                corrupt_backward,
            } => {
                let r = cmd_gradcheck(config.as_deref(), corrupt_backward)?;
                let _ = writeln!(
                    out,
                    "max relative error {:.3e} over {} coordinates (tolerance {GRADCHECK_TOLERANCE:.0e})",
                    r.max_rel_error, r.coords_checked
                );
                if r.passed(GRADCHECK_TOLERANCE) {
                    Ok(0)
                } else {
                    let _ = writeln!(
                        out,
                        "worst coordinate: tensor {} element {} analytic {:.6e} numeric {:.6e}",
                        r.worst.0, r.worst.1, r.worst_analytic, r.worst_numeric
                    );
                    Ok(4)
                }
            }
        }
    })();
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"model": {"depth": 1, "colour": 3}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"modle": {}}"#).is_err());
        let c = RunConfig::from_json(r#"{"model": {"depth": 1}}"#).unwrap();
        assert_eq!(c.model.depth, 1);
        assert_eq!(c.train, TrainConfig::default());
    }

    #[test]
    fn effective_config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(
            &p,
            r#"{"data": {"train": {"kind": "directory", "root": "imgs"}, "split": {"kind": "tiny2"}}, "eval": {"manifest": "m.json"}}"#,
        )
        .unwrap();
        let c = RunConfig::load(&p).unwrap();
        assert_eq!(c.eval.manifest.as_deref(), Some(dir.path().join("m.json").as_path()));
        let again = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(again, c);
    }
}
