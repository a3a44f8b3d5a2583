//! Trains repeatedly on one fixed batch; the loss should head to zero.
//!
//! cargo run --release --example overfit_batch -- [steps]

use lcl::dataset::synth_glyphs;
use lcl::model::ModelSpec;
use lcl::sampler::{make_batch, rng_stream};
use lcl::trainer::{TrainConfig, Trainer};

fn main() -> lcl::Result<()> {
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let spec = ModelSpec::new(1, 16, 5);
    let data = synth_glyphs(30, 20, 16, 1)?;
    let batch = make_batch(&data, 4, 5, &mut rng_stream(0, 1))?;
    let cfg = TrainConfig {
        batch_size: 4,
        d1: steps,
        d2: steps + 1,
        max_steps: steps + 2,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(&spec, &cfg)?;
    for _ in 0..steps {
        let rec = trainer.step_on(&data, &batch)?;
        if rec.step % 100 == 0 || rec.step + 1 == steps {
            println!("step {:>5}  loss {:.5}  correct {}/{}", rec.step, rec.loss, rec.correct, rec.contexts);
        }
    }
    Ok(())
}
