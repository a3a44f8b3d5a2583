//! Saves freshly initialised parameters, reloads them and checks every bit.
//!
//! cargo run --example checkpoint_roundtrip -- [path]

use lcl::model::ModelSpec;
use lcl::sampler::rng_stream;
use lcl::trainer::{init_params, load_checkpoint_for, save_checkpoint, CheckpointMeta, INIT_STREAM};

fn main() -> lcl::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("lcl_example.lcl"));
    let spec = ModelSpec::new(2, 28, 20);
    let params = init_params(&spec, &mut rng_stream(42, INIT_STREAM))?;
    save_checkpoint(&path, &params, &CheckpointMeta { step: 0, seed: 42 })?;
    let bytes = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);

    let back = load_checkpoint_for(&path, &spec)?;
    let identical = params.tensors().iter().all(|(name, t)| {
        let u = back.params.get(name).expect("same names");
        t.data().iter().zip(u.data()).all(|(a, b)| a.to_bits() == b.to_bits())
    });
    println!(
        "{} tensors, {} scalars, {bytes} bytes at {}",
        params.tensors().len(),
        params.num_scalars(),
        path.display()
    );
    println!("bitwise identical after reload: {identical}");
    match load_checkpoint_for(&path, &ModelSpec::new(1, 28, 20)) {
        Err(e) => println!("loading into a depth-1 spec: {e}"),
        Ok(_) => println!("unexpectedly loaded into a depth-1 spec"),
    }
    Ok(())
}
