//! Draws a few contexts from synthetic glyphs and prints them, then writes a manifest.
//!
//! cargo run --example sample_contexts -- [L] [n_shot] [count] [out.json]

use std::path::PathBuf;

use lcl::dataset::{synth_glyphs, write_manifest};
use lcl::sampler::sample_trials;

fn main() -> lcl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let l = args.first().and_then(|s| s.parse().ok()).unwrap_or(5);
    let n_shot = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let count = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3);
    let out = args.get(3).map(PathBuf::from);

    let data = synth_glyphs(12, 6, 8, 1)?;
    let lccs = sample_trials(&data, l, n_shot, count, 0)?;
    for (i, lcc) in lccs.iter().enumerate() {
        lcc.validate()?;
        let rec: Vec<&str> = lcc.recognizing.iter().map(|&r| data.sample(r).id.as_str()).collect();
        println!("context {i}: recognizing {rec:?}");
        for (slot, c) in lcc.contrastive.iter().enumerate() {
            println!("  slot {slot}: z={} {}", c.z, data.sample(c.sample).id);
        }
    }
    if let Some(path) = out {
        let entries: Vec<_> = lccs.iter().map(|c| c.to_entry(&data)).collect();
        write_manifest(&path, &entries)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
