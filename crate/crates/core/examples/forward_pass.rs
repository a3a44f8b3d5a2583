//! Builds the network for a few depths, runs one context through it and
//! shows the activations and the prediction.
//!
//! cargo run --example forward_pass

use lcl::dataset::synth_glyphs;
use lcl::model::{build_deg, lcnn_forward, Episode, Mode, ModelSpec};
use lcl::sampler::{generate_lcc, rng_stream};
use lcl::trainer::{init_params, INIT_STREAM};

fn main() -> lcl::Result<()> {
    for depth in [1, 2, 20] {
        let spec = ModelSpec::new(depth, 28, 20);
        let scalars: usize = build_deg(&spec)?.iter().map(|p| p.numel()).sum();
        println!("depth {depth:>2}: {:>3} layers, {scalars} parameters", spec.layer_count());
    }

    let spec = ModelSpec::new(1, 16, 5);
    let params = init_params(&spec, &mut rng_stream(0, INIT_STREAM))?;
    let data = synth_glyphs(10, 4, 16, 3)?;
    let lcc = generate_lcc(&data, 5, &mut rng_stream(1, 0))?;
    let episode = Episode {
        recognizing: data.pixels(lcc.recognizing[0]),
        candidates: lcc.contrastive.iter().map(|c| data.pixels(c.sample)).collect(),
    };
    let out = lcnn_forward(&params, &[episode], Mode::Eval)?;
    let cpla = &out.cpla[0];
    println!("labels      {:?}", lcc.labels());
    println!("activations {:.3?}", cpla.0);
    println!("predicted slot {} (answer {})", cpla.predict()?, lcc.positive_index());
    Ok(())
}
