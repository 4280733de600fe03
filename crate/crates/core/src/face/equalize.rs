//! Histogram equalization.
//!
//! Gray levels map through `round((cdf(v) - cdf_min) / (N - cdf_min) * 255)`.
//! Color images are equalized on their BT.601 luma and each pixel's RGB is
//! rescaled by the luma ratio, which keeps hue intact.

use super::image::luma;
use super::FaceImage;

/// Lookup table equalizing `levels`, or `None` when all values are equal.
pub fn equalization_table(levels: impl IntoIterator<Item = u8>) -> Option<[u8; 256]> {
    let mut hist = [0u64; 256];
    let mut n = 0u64;
    for v in levels {
        hist[v as usize] += 1;
        n += 1;
    }
    let mut cdf = [0u64; 256];
    let mut acc = 0u64;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let cdf_min = hist.iter().zip(&cdf).find(|(&h, _)| h > 0).map(|(_, &c)| c)?;
    let denom = n - cdf_min;
    if denom == 0 {
        return None;
    }
    let mut table = [0u8; 256];
    for (t, &c) in table.iter_mut().zip(&cdf) {
        let num = c.saturating_sub(cdf_min) * 255;
        // Round half up in exact integer arithmetic.
        *t = ((2 * num + denom) / (2 * denom)).min(255) as u8;
    }
    Some(table)
}

pub fn histogram_equalize(img: &FaceImage) -> FaceImage {
    if img.channels() == 1 {
        let Some(table) = equalization_table(img.pixels().iter().copied()) else {
            return img.clone();
        };
        let mut out = img.clone();
        for v in out.pixels_mut() {
            *v = table[*v as usize];
        }
        return out;
    }
    let lumas: Vec<u8> = img.pixels().chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect();
    let Some(table) = equalization_table(lumas.iter().copied()) else {
        return img.clone();
    };
    let mut out = img.clone();
    for (px, &y) in out.pixels_mut().chunks_exact_mut(3).zip(&lumas) {
        if y == 0 {
            px.fill(0);
            continue;
        }
        let ratio = f64::from(table[y as usize]) / f64::from(y);
        for v in px.iter_mut() {
            *v = (f64::from(*v) * ratio).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}
