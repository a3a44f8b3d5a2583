//! Scores a checkpoint on held-out synthetic glyphs under the variant protocol,
//! one-shot and few-shot, and prints the report tables.
//!
//! cargo run --release --example evaluate_fewshot -- [checkpoint] [runs]
//!
//! Without a checkpoint a small model is trained for 300 steps first.

use lcl::dataset::synth_glyphs;
use lcl::evaluator::{evaluate_variant, LcnnScorer};
use lcl::model::ModelSpec;
use lcl::trainer::{load_checkpoint, train, TrainConfig};

fn main() -> lcl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let runs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let params = match args.first() {
        Some(p) => load_checkpoint(p.as_ref())?.params,
        None => {
            let spec = ModelSpec::new(1, 16, 5);
            let cfg = TrainConfig {
                batch_size: 8,
                d1: 200,
                d2: 250,
                max_steps: 300,
                ..TrainConfig::default()
            };
            train(&spec, &cfg, &synth_glyphs(30, 20, 16, 1)?, |_, _| Ok(()))?.params
        }
    };
    let spec = params.spec().clone();
    let test = synth_glyphs(20, 20, spec.image_size, 2)?;
    let scorer = LcnnScorer { params: &params };
    for shot in [1, 5] {
        let report = evaluate_variant(&scorer, &test, spec.num_contrastive, shot, runs, 0)?;
        print!("{}", report.to_table());
        println!();
    }
    Ok(())
}
