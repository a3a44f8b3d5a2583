//! Ingests a `root/<group>/<category>/*.png` tree, applies a split and rotation augmentation.
//!
//! cargo run --release --example load_directory -- <root> [tiny1|tiny2|full] [image_size]
//!
//! Without a root, a small tree of generated PNGs is written to a temp dir first.

use std::path::PathBuf;

use image::{GrayImage, Luma};
use lcl::dataset::{augment_rotations, load_image_dataset, split_background, SplitSpec};

fn demo_tree() -> std::io::Result<PathBuf> {
    let root = std::env::temp_dir().join("lcl_demo_tree");
    for g in 0..3u32 {
        for c in 0..3u32 {
            let dir = root.join(format!("alphabet{g}/char{c}"));
            std::fs::create_dir_all(&dir)?;
            for s in 0..4u32 {
                let img = GrayImage::from_fn(40, 40, |x, y| {
                    let on = (x + y * (g + 1) + c * 5 + s) % 13 == 0;
                    Luma([if on { 0 } else { 255 }])
                });
                img.save(dir.join(format!("{s}.png"))).map_err(std::io::Error::other)?;
            }
        }
    }
    Ok(root)
}

fn main() -> lcl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let root = match args.first() {
        Some(r) => PathBuf::from(r),
        None => demo_tree().map_err(|e| lcl::LclError::io("writing demo tree", e))?,
    };
    let split = match args.get(1).map(String::as_str) {
        Some("tiny1") => SplitSpec::Tiny1,
        Some("full") => SplitSpec::Full,
        _ => SplitSpec::Tiny2,
    };
    let size = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(28);

    let all = load_image_dataset(&root, size)?;
    let picked = split_background(&all, &split)?;
    let augmented = augment_rotations(&picked)?;
    println!("{}: {} categories, {} images", root.display(), all.num_categories(), all.num_samples());
    println!("after {split:?}: {} categories", picked.num_categories());
    println!("with rotations: {} categories", augmented.num_categories());
    for c in augmented.categories().iter().take(8) {
        println!("  {} ({} samples, group {})", c.id, c.samples.len(), c.group);
    }
    Ok(())
}
