//! Exact number of distinct one-shot contexts and the trial budget of the variant protocol.
//!
//! cargo run --example count_contexts -- [SC] [K] [L]

use lcl::sampler::{count_distinct_lccs, count_trials};

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let (sc, k, l) = match args[..] {
        [sc, k, l] => (sc, k, l),
        _ => (136, 20, 20),
    };
    let n = count_distinct_lccs(sc, k, l);
    let digits = n.to_string();
    println!("SC={sc} K={k} L={l}: {n}");
    if digits.len() > 6 {
        println!("  about {}.{}e{}", &digits[..1], &digits[1..4], digits.len() - 1);
    }
    for shot in [1, 5] {
        println!(
            "659 classes x 20 images, 20-way {shot}-shot: {} trials per run",
            count_trials(659, 20, 20, shot)
        );
    }
}
