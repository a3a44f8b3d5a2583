//! Compares backprop against central differences on a depth-1, L=3, 8x8 network in f64.
//!
//! cargo run --release --example gradcheck -- [seed] [coords_per_tensor]

use lcl::tensor::GradCheckConfig;
use lcl::trainer::lcnn_grad_check;

fn main() -> lcl::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let coords = args.next().and_then(|s| s.parse().ok()).unwrap_or(12);
    let cfg = GradCheckConfig {
        seed,
        coords_per_tensor: coords,
        ..GradCheckConfig::default()
    };
    let r = lcnn_grad_check(&cfg, 2)?;
    println!("checked {} coordinates", r.coords_checked);
    println!("max relative error {:.3e}", r.max_rel_error);
    println!(
        "worst: tensor {} element {} (analytic {:.6e}, numeric {:.6e})",
        r.worst.0, r.worst.1, r.worst_analytic, r.worst_numeric
    );
    Ok(())
}
