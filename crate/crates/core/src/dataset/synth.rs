//! Procedural handwritten-like glyphs for dataset-free experiments.
//!
//! A class is a handful of quadratic Bézier strokes. Each sample of the
//! class re-renders those strokes with control-point wobble, a small random
//! affine transform and a random pen width.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Category, Dataset, ImageSample};
use crate::error::{LclError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub image_size: usize,
    pub seed: u64,
}

type Point = (f64, f64);

struct Prototype {
    strokes: Vec<[Point; 3]>,
}

const CURVE_SEGMENTS: usize = 12;
const CLASSES_PER_GROUP: usize = 5;

fn stream(seed: u64, class: usize, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((class as u64) << 32) | sample as u64);
    rng
}

fn prototype(rng: &mut ChaCha8Rng) -> Prototype {
    let n = rng.random_range(2..=4);
    let pt = |rng: &mut ChaCha8Rng| (rng.random_range(0.15..0.85), rng.random_range(0.15..0.85));
    let strokes = (0..n).map(|_| [pt(rng), pt(rng), pt(rng)]).collect();
    Prototype { strokes }
}

fn bezier(c: &[Point; 3], t: f64) -> Point {
    let u = 1.0 - t;
    (
        u * u * c[0].0 + 2.0 * u * t * c[1].0 + t * t * c[2].0,
        u * u * c[0].1 + 2.0 * u * t * c[1].1 + t * t * c[2].1,
    )
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

fn render(proto: &Prototype, size: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let wobble = Normal::new(0.0, 0.025).expect("valid sigma");
    let angle: f64 = rng.random_range(-0.15..0.15);
    let scale: f64 = rng.random_range(0.9..1.1);
    let shift: Point = (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
    let half_width: f64 = rng.random_range(0.04..0.06);
    let (sin, cos) = angle.sin_cos();
    let transform = |p: Point| {
        let (x, y) = (p.0 - 0.5, p.1 - 0.5);
        (
            0.5 + scale * (cos * x - sin * y) + shift.0,
            0.5 + scale * (sin * x + cos * y) + shift.1,
        )
    };

    let mut polylines = Vec::with_capacity(proto.strokes.len());
    for stroke in &proto.strokes {
        let mut jittered = *stroke;
        for c in &mut jittered {
            *c = transform((c.0 + wobble.sample(rng), c.1 + wobble.sample(rng)));
        }
        let line: Vec<Point> = (0..=CURVE_SEGMENTS)
            .map(|i| bezier(&jittered, i as f64 / CURVE_SEGMENTS as f64))
            .collect();
        polylines.push(line);
    }

    let pixel = 1.0 / size as f64;
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let p = ((x as f64 + 0.5) * pixel, (y as f64 + 0.5) * pixel);
            let d = polylines
                .iter()
                .flat_map(|line| line.windows(2).map(move |w| segment_distance(p, w[0], w[1])))
                .fold(f64::INFINITY, f64::min);
            // one-pixel anti-aliased edge
            let v = ((half_width + 0.5 * pixel - d) / pixel).clamp(0.0, 1.0);
            out.push(v as f32);
        }
    }
    out
}

/// `num_classes` glyph classes with `k` renderings each. Deterministic in `seed`;
/// different seeds give unrelated classes.
pub fn synth_glyphs(num_classes: usize, k: usize, size: usize, seed: u64) -> Result<Dataset> {
    if num_classes == 0 || k == 0 {
        return Err(LclError::config("data.synth", "need at least one class and one sample"));
    }
    if size < 4 {
        return Err(LclError::config("data.synth.image_size", "must be at least 4"));
    }
    let categories = (0..num_classes)
        .map(|c| {
            let proto = prototype(&mut stream(seed, c, 0));
            let id = format!("synth{seed}/c{c:03}");
            let samples = (0..k)
                .map(|s| ImageSample {
                    id: format!("{id}/s{s:02}"),
                    pixels: render(&proto, size, &mut stream(seed, c, s + 1)),
                })
                .collect();
            Category {
                id,
                group: format!("synth{seed}/g{:02}", c / CLASSES_PER_GROUP),
                samples,
            }
        })
        .collect();
    Dataset::new(categories, size)
}

impl SynthConfig {
    pub fn generate(&self) -> Result<Dataset> {
        synth_glyphs(self.num_classes, self.samples_per_class, self.image_size, self.seed)
    }
}
