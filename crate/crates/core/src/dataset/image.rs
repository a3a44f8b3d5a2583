//! Single-channel image preprocessing.

use std::path::Path;

use image::DynamicImage;

use crate::error::{LclError, Result};

/// Bilinear resize of a `src_size`-square image to `size`-square with
/// corner-aligned sampling (corner pixels map onto corner pixels), clamped
/// to `[0, 1]`.
pub fn resize(pixels: &[f32], src_w: usize, src_h: usize, size: usize) -> Vec<f32> {
    assert_eq!(pixels.len(), src_w * src_h, "pixel buffer does not match extents");
    assert!(src_w >= 1 && src_h >= 1 && size >= 1);
    if src_w == size && src_h == size {
        return pixels.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    }
    let map = |i: usize, src: usize| -> (usize, usize, f64) {
        if size == 1 || src == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (src - 1) as f64 / (size - 1) as f64;
        let lo = (pos.floor() as usize).min(src - 1);
        let hi = (lo + 1).min(src - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let (y0, y1, fy) = map(y, src_h);
        for x in 0..size {
            let (x0, x1, fx) = map(x, src_w);
            let p = |yy: usize, xx: usize| pixels[yy * src_w + xx] as f64;
            let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
            let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
            let v = top * (1.0 - fy) + bottom * fy;
            out.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    out
}

/// Quarter turn clockwise of a square image.
pub fn rotate90(pixels: &[f32], size: usize) -> Vec<f32> {
    let mut out = vec![0.0; pixels.len()];
    for y in 0..size {
        for x in 0..size {
            out[y * size + x] = pixels[(size - 1 - x) * size + y];
        }
    }
    out
}

pub fn rotate_quarters(pixels: &[f32], size: usize, quarters: usize) -> Vec<f32> {
    let mut out = pixels.to_vec();
    for _ in 0..quarters % 4 {
        out = rotate90(&out, size);
    }
    out
}

/// Decodes an 8- or 16-bit grayscale PNG into `[0, 1]` intensities with ink
/// near 1: images whose mean is above one half (dark ink on a light page)
/// are inverted. The result is resized to `size`.
pub fn load_grayscale(path: &Path, size: usize) -> Result<Vec<f32>> {
    let img = image::open(path).map_err(|e| LclError::Ingest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw: Vec<f32> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect(),
        other => {
            return Err(LclError::Ingest {
                path: path.to_path_buf(),
                message: format!("expected a grayscale image, found {:?}", other.color()),
            })
        }
    };
    if w == 0 || h == 0 {
        return Err(LclError::Ingest {
            path: path.to_path_buf(),
            message: "image has no pixels".into(),
        });
    }
    Ok(resize(&normalize_polarity(raw), w, h, size))
}

pub fn normalize_polarity(mut pixels: Vec<f32>) -> Vec<f32> {
    let mean = pixels.iter().map(|&v| v as f64).sum::<f64>() / pixels.len().max(1) as f64;
    if mean > 0.5 {
        for v in &mut pixels {
            *v = 1.0 - *v;
        }
    }
    pixels
}
