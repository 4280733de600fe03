use super::{BoundingBox, FaceError, FaceImage};

/// Crops `bbox` (clamped to the image) and bilinearly resamples it to an
/// `out_size x out_size` RGB image, sampling at half-pixel centers.
pub fn crop_resize(img: &FaceImage, bbox: BoundingBox, out_size: usize) -> Result<FaceImage, FaceError> {
    let b = bbox.clamp_to(img.width(), img.height());
    if b.w == 0 || b.h == 0 || out_size == 0 {
        return Err(FaceError::DegenerateBox(bbox));
    }
    let src = img.to_rgb();
    let (bx, by, bw, bh) = (b.x as usize, b.y as usize, b.w as usize, b.h as usize);
    let axis = |o: usize, len: usize| -> (usize, usize, f64) {
        let s = ((o as f64 + 0.5) * len as f64 / out_size as f64 - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, s - i0 as f64)
    };
    let cols: Vec<_> = (0..out_size).map(|o| axis(o, bw)).collect();
    let rows: Vec<_> = (0..out_size).map(|o| axis(o, bh)).collect();
    let mut out = FaceImage::filled(out_size, out_size, 3, 0);
    for (oy, &(y0, y1, fy)) in rows.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in cols.iter().enumerate() {
            for c in 0..3 {
                let p = |x: usize, y: usize| f64::from(src.get(bx + x, by + y, c));
                let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out.set(ox, oy, c, v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(out)
}

/// Resamples a whole image to `w x h` with the same bilinear convention.
pub fn resize(img: &FaceImage, w: usize, h: usize) -> FaceImage {
    let src = img.to_rgb();
    let (sw, sh) = (src.width(), src.height());
    let axis = |o: usize, out: usize, len: usize| -> (usize, usize, f64) {
        let s = ((o as f64 + 0.5) * len as f64 / out as f64 - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = s.floor() as usize;
        (i0, (i0 + 1).min(len - 1), s - i0 as f64)
    };
    FaceImage::from_fn_rgb(w, h, |ox, oy| {
        let (x0, x1, fx) = axis(ox, w, sw);
        let (y0, y1, fy) = axis(oy, h, sh);
        let mut px = [0u8; 3];
        for (c, v) in px.iter_mut().enumerate() {
            let p = |x: usize, y: usize| f64::from(src.get(x, y, c));
            let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
            let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
            *v = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
        }
        px
    })
}
