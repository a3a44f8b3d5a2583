//! Labelled image collections.
//!
//! On disk a dataset is `root/<group>/<category>/<sample>.png` with 8-bit
//! grayscale PNGs (Omniglot's background and evaluation sets use exactly this
//! layout, the group being the alphabet). Everything is ordered by
//! lexicographic path so that splits defined by position are stable.

pub mod image;
pub mod manifest;
pub mod synth;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LclError, Result};
use crate::sampler::SampleRef;

pub use manifest::{load_bpl_trials, manifest_from_lake_runs, read_manifest, write_manifest, TrialEntry};
pub use synth::{synth_glyphs, SynthConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    /// Stable identifier; the path relative to the dataset root for ingested images.
    pub id: String,
    /// Square, row-major, values in `[0, 1]`, ink near 1.
    pub pixels: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Category {
    pub id: String,
    /// Alphabet (or other grouping) the category belongs to.
    pub group: String,
    pub samples: Vec<ImageSample>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    categories: Vec<Category>,
    image_size: usize,
    index: HashMap<String, SampleRef>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.image_size == other.image_size && self.categories == other.categories
    }
}

impl Dataset {
    pub fn new(categories: Vec<Category>, image_size: usize) -> Result<Self> {
        let plane = image_size * image_size;
        let mut index = HashMap::new();
        let mut seen = HashMap::new();
        for (ci, cat) in categories.iter().enumerate() {
            if seen.insert(cat.id.clone(), ci).is_some() {
                return Err(LclError::contract(format!("duplicate category id `{}`", cat.id)));
            }
            for (si, s) in cat.samples.iter().enumerate() {
                if s.pixels.len() != plane {
                    return Err(LclError::contract(format!(
                        "sample `{}` is not {image_size}x{image_size}",
                        s.id
                    )));
                }
                index.insert(
                    s.id.clone(),
                    SampleRef {
                        category: ci,
                        sample: si,
                    },
                );
            }
        }
        Ok(Dataset {
            categories,
            image_size,
            index,
        })
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn into_categories(self) -> Vec<Category> {
        self.categories
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn num_samples(&self) -> usize {
        self.categories.iter().map(|c| c.samples.len()).sum()
    }

    pub fn sample(&self, r: SampleRef) -> &ImageSample {
        &self.categories[r.category].samples[r.sample]
    }

    pub fn pixels(&self, r: SampleRef) -> &[f32] {
        &self.sample(r).pixels
    }

    pub fn find(&self, id: &str) -> Option<SampleRef> {
        self.index.get(id).copied()
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| LclError::Ingest {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| LclError::Ingest {
            path: dir.to_path_buf(),
            message: e.to_string(),
        })?;
        out.push(entry.path());
    }
    out.sort();
    Ok(out)
}

fn relative_id(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Ingests `root/<group>/<category>/*.png`, resizing every image to `image_size`.
///
/// Files without a `.png` extension are ignored; a PNG that cannot be
/// decoded or is not grayscale fails the whole load with its path.
pub fn load_image_dataset(root: &Path, image_size: usize) -> Result<Dataset> {
    if !root.is_dir() {
        return Err(LclError::Ingest {
            path: root.to_path_buf(),
            message: "dataset root is not a directory".into(),
        });
    }
    let mut categories = Vec::new();
    for group_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let group = relative_id(root, &group_dir);
        for cat_dir in sorted_entries(&group_dir)?.into_iter().filter(|p| p.is_dir()) {
            let mut samples = Vec::new();
            for file in sorted_entries(&cat_dir)? {
                let is_png = file
                    .extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("png"));
                if !is_png || !file.is_file() {
                    continue;
                }
                samples.push(ImageSample {
                    id: relative_id(root, &file),
                    pixels: image::load_grayscale(&file, image_size)?,
                });
            }
            if !samples.is_empty() {
                categories.push(Category {
                    id: relative_id(root, &cat_dir),
                    group: group.clone(),
                    samples,
                });
            }
        }
    }
    if categories.is_empty() {
        return Err(LclError::EmptyDataset(root.to_path_buf()));
    }
    log::info!(
        "loaded {} categories / {} images from {}",
        categories.len(),
        categories.iter().map(|c| c.samples.len()).sum::<usize>(),
        root.display()
    );
    Dataset::new(categories, image_size)
}

/// Each category becomes four: itself and its 90/180/270 degree clockwise
/// rotations, as separate categories.
pub fn augment_rotations(dataset: &Dataset) -> Result<Dataset> {
    let size = dataset.image_size();
    let mut out = Vec::with_capacity(dataset.num_categories() * 4);
    for cat in dataset.categories() {
        for quarters in 0..4 {
            let suffix = if quarters == 0 {
                String::new()
            } else {
                format!("@rot{}", quarters * 90)
            };
            out.push(Category {
                id: format!("{}{suffix}", cat.id),
                group: cat.group.clone(),
                samples: cat
                    .samples
                    .iter()
                    .map(|s| ImageSample {
                        id: format!("{}{suffix}", s.id),
                        pixels: image::rotate_quarters(&s.pixels, size, quarters),
                    })
                    .collect(),
            });
        }
    }
    Dataset::new(out, size)
}

/// Which categories of a background set to train on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitSpec {
    Full,
    /// The distributed "background small 1" tree; loaded as its own root, so the split keeps everything.
    Small1,
    /// As `Small1`, for "background small 2".
    Small2,
    /// First category of every group.
    Tiny1,
    /// First two categories of every group.
    Tiny2,
    /// First `count` categories of every group (groups with fewer keep what they have).
    FirstPerGroup { count: usize },
    /// First `count` categories in ingest order.
    FirstN { count: usize },
    Explicit { categories: Vec<String> },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Full
    }
}

pub fn split_background(dataset: &Dataset, spec: &SplitSpec) -> Result<Dataset> {
    let cats = dataset.categories();
    let picked: Vec<Category> = match spec {
        SplitSpec::Full | SplitSpec::Small1 | SplitSpec::Small2 => cats.to_vec(),
        SplitSpec::Tiny1 => first_per_group(cats, 1),
        SplitSpec::Tiny2 => first_per_group(cats, 2),
        SplitSpec::FirstPerGroup { count } => first_per_group(cats, *count),
        SplitSpec::FirstN { count } => {
            if *count > cats.len() {
                return Err(LclError::config(
                    "data.split.count",
                    format!("asked for {count} categories, dataset has {}", cats.len()),
                ));
            }
            cats[..*count].to_vec()
        }
        SplitSpec::Explicit { categories } => categories
            .iter()
            .map(|id| {
                cats.iter()
                    .find(|c| &c.id == id)
                    .cloned()
                    .ok_or_else(|| LclError::config("data.split.categories", format!("unknown category `{id}`")))
            })
            .collect::<Result<_>>()?,
    };
    if picked.is_empty() {
        return Err(LclError::config("data.split", "split selects no categories"));
    }
    Dataset::new(picked, dataset.image_size())
}

fn first_per_group(cats: &[Category], count: usize) -> Vec<Category> {
    let mut taken: HashMap<&str, usize> = HashMap::new();
    let mut out = Vec::new();
    for c in cats {
        let n = taken.entry(c.group.as_str()).or_insert(0);
        if *n < count {
            out.push(c.clone());
            *n += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(groups: usize, per_group: usize, k: usize) -> Dataset {
        let mut cats = Vec::new();
        for g in 0..groups {
            for c in 0..per_group {
                let id = format!("g{g}/c{c}");
                cats.push(Category {
                    id: id.clone(),
                    group: format!("g{g}"),
                    samples: (0..k)
                        .map(|s| ImageSample {
                            id: format!("{id}/{s}"),
                            pixels: vec![(g * 10 + c) as f32 / 100.0; 4],
                        })
                        .collect(),
                });
            }
        }
        Dataset::new(cats, 2).unwrap()
    }

    #[test]
    fn tiny_splits_take_leading_categories_per_group() {
        let d = toy(30, 4, 2);
        assert_eq!(split_background(&d, &SplitSpec::Tiny1).unwrap().num_categories(), 30);
        let t2 = split_background(&d, &SplitSpec::Tiny2).unwrap();
        assert_eq!(t2.num_categories(), 60);
        assert_eq!(t2.categories()[1].id, "g0/c1");
        assert_eq!(t2.categories()[2].id, "g1/c0");
        let all = split_background(&d, &SplitSpec::FirstN { count: d.num_categories() }).unwrap();
        assert_eq!(all, d);
    }

    #[test]
    fn short_groups_keep_what_they_have() {
        let d = toy(3, 1, 2);
        assert_eq!(split_background(&d, &SplitSpec::Tiny2).unwrap().num_categories(), 3);
    }

    #[test]
    fn rotation_quadruples_categories_and_keeps_k() {
        let d = toy(15, 4, 3);
        let a = augment_rotations(&d).unwrap();
        assert_eq!(a.num_categories(), 240);
        assert!(a.categories().iter().all(|c| c.samples.len() == 3));
        assert_eq!(a.categories()[1].id, "g0/c0@rot90");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut cats = toy(1, 2, 1).into_categories();
        cats[1].id = cats[0].id.clone();
        assert!(Dataset::new(cats, 2).is_err());
    }
}
