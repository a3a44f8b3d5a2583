//! Trains on synthetic glyphs and reports held-out one-shot and five-shot accuracy.
//!
//! cargo run --release --example train_synth -- [steps] [batch] [image_size] [seed]

use std::time::Instant;

use lcl::dataset::synth_glyphs;
use lcl::evaluator::{evaluate_variant, LcnnScorer};
use lcl::model::ModelSpec;
use lcl::trainer::{train, TrainConfig};

fn arg(i: usize, default: u64) -> u64 {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> lcl::Result<()> {
    let steps = arg(1, 2000);
    let batch = arg(2, 8) as usize;
    let size = arg(3, 16) as usize;
    let seed = arg(4, 0);

    let spec = ModelSpec::new(1, size, 5);
    let train_set = synth_glyphs(30, 20, size, 1)?;
    let test_set = synth_glyphs(20, 20, size, 2)?;
    let cfg = TrainConfig {
        batch_size: batch,
        d1: steps * 7 / 9,
        d2: steps * 8 / 9,
        max_steps: steps,
        seed,
        ..TrainConfig::default()
    };

    let start = Instant::now();
    let mut window = Vec::new();
    let out = train(&spec, &cfg, &train_set, |_, rec| {
        window.push(rec.loss);
        if window.len() == (steps as usize / 20).max(1) {
            let mean = window.iter().sum::<f32>() / window.len() as f32;
            println!(
                "step {:>6}  lr {:<6}  loss {mean:.4}  ({:.1}s)",
                rec.step + 1,
                rec.lr,
                start.elapsed().as_secs_f64()
            );
            window.clear();
        }
        Ok(())
    })?;

    let scorer = LcnnScorer { params: &out.params };
    for shot in [1, 5] {
        let r = evaluate_variant(&scorer, &test_set, 5, shot, 10, 100)?;
        println!("{shot}-shot 5-way on held-out classes: {:.2}% ± {:.2}", 100.0 * r.mean, 100.0 * r.ci_halfwidth);
    }
    Ok(())
}
