//! Multi-scale sliding-window cascade evaluation and candidate grouping.

use serde::{Deserialize, Serialize};

use super::cascade::{CascadeModel, HaarRect};
use super::integral::IntegralImage;
use super::FaceImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        BoundingBox { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn intersection(&self, other: &BoundingBox) -> u64 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        if x1 <= x0 || y1 <= y0 {
            0
        } else {
            u64::from(x1 - x0) * u64::from(y1 - y0)
        }
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection(other) as f64;
        let union = self.area() as f64 + other.area() as f64 - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Grows each side by `fraction` of the box size, clamped to `width x height`.
    pub fn expand(&self, fraction: f64, width: usize, height: usize) -> BoundingBox {
        let dx = (f64::from(self.w) * fraction).round() as i64;
        let dy = (f64::from(self.h) * fraction).round() as i64;
        let x0 = (i64::from(self.x) - dx).max(0);
        let y0 = (i64::from(self.y) - dy).max(0);
        let x1 = (i64::from(self.x + self.w) + dx).min(width as i64);
        let y1 = (i64::from(self.y + self.h) + dy).min(height as i64);
        BoundingBox { x: x0 as u32, y: y0 as u32, w: (x1 - x0).max(0) as u32, h: (y1 - y0).max(0) as u32 }
    }

    /// Clamps to the image; the result may have zero width or height.
    pub fn clamp_to(&self, width: usize, height: usize) -> BoundingBox {
        let x = (self.x as usize).min(width);
        let y = (self.y as usize).min(height);
        let w = (self.w as usize).min(width - x);
        let h = (self.h as usize).min(height - y);
        BoundingBox { x: x as u32, y: y as u32, w: w as u32, h: h as u32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectParams {
    pub scale_factor: f64,
    pub min_neighbors: usize,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams { scale_factor: 1.1, min_neighbors: 3 }
    }
}

struct ScaledRect {
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    weight: f64,
}

struct ScaledWeak {
    rects: Vec<ScaledRect>,
    threshold: f64,
    left: f64,
    right: f64,
}

struct ScaledCascade {
    win_w: usize,
    win_h: usize,
    norm: (usize, usize, usize, usize),
    stages: Vec<(f64, Vec<ScaledWeak>)>,
}

fn scale_rect(r: &HaarRect, s: f64) -> (usize, usize, usize, usize) {
    let x = (f64::from(r.x) * s).round() as usize;
    let y = (f64::from(r.y) * s).round() as usize;
    let w = ((f64::from(r.w) * s).round() as usize).max(1);
    let h = ((f64::from(r.h) * s).round() as usize).max(1);
    (x, y, w, h)
}

impl ScaledCascade {
    fn new(c: &CascadeModel, s: f64) -> Self {
        let win_w = (f64::from(c.window_w) * s).round() as usize;
        let win_h = (f64::from(c.window_h) * s).round() as usize;
        let norm = scale_rect(&HaarRect { x: 1, y: 1, w: c.window_w - 2, h: c.window_h - 2, weight: 0.0 }, s);
        let stages = c
            .stages
            .iter()
            .map(|stage| {
                let weak = stage
                    .weak
                    .iter()
                    .map(|wc| {
                        let mut rects: Vec<ScaledRect> = wc
                            .rects
                            .iter()
                            .map(|r| {
                                let (x, y, w, h) = scale_rect(r, s);
                                // Rounding may push a rectangle past the window edge.
                                let w = w.min(win_w.saturating_sub(x)).max(1);
                                let h = h.min(win_h.saturating_sub(y)).max(1);
                                ScaledRect { x: x.min(win_w - 1), y: y.min(win_h - 1), w, h, weight: r.weight }
                            })
                            .collect();
                        // Keep the feature zero-sum after rounding by re-deriving the first weight.
                        if rects.len() > 1 {
                            let rest: f64 = rects[1..].iter().map(|r| r.weight * (r.w * r.h) as f64).sum();
                            let area0 = (rects[0].w * rects[0].h) as f64;
                            rects[0].weight = -rest / area0;
                        }
                        ScaledWeak { rects, threshold: wc.threshold, left: wc.left, right: wc.right }
                    })
                    .collect();
                (stage.threshold, weak)
            })
            .collect();
        ScaledCascade { win_w, win_h, norm, stages }
    }

    fn passes(&self, ii: &IntegralImage, x: usize, y: usize) -> bool {
        let (nx, ny, nw, nh) = self.norm;
        let area = (nw * nh) as f64;
        let sum = ii.rect_sum(x + nx, y + ny, nw, nh) as f64;
        let sq = ii.rect_sq_sum(x + nx, y + ny, nw, nh) as f64;
        let spread = area * sq - sum * sum;
        let norm = if spread > 0.0 { spread.sqrt() } else { 1.0 };
        for (stage_threshold, weak) in &self.stages {
            let mut total = 0.0;
            for wc in weak {
                let mut value = 0.0;
                for r in &wc.rects {
                    value += r.weight * ii.rect_sum(x + r.x, y + r.y, r.w, r.h) as f64;
                }
                total += if value < wc.threshold * norm { wc.left } else { wc.right };
            }
            if total < *stage_threshold {
                return false;
            }
        }
        true
    }
}

/// Every window that passes all cascade stages, before grouping.
pub fn candidate_windows(img: &FaceImage, cascade: &CascadeModel, scale_factor: f64) -> Vec<BoundingBox> {
    assert!(scale_factor > 1.0, "scale_factor must exceed 1");
    let gray = img.to_gray();
    let ii = IntegralImage::new(&gray);
    let (w, h) = (gray.width(), gray.height());
    let mut out = Vec::new();
    let mut scale = 1.0f64;
    loop {
        let sc = ScaledCascade::new(cascade, scale);
        if sc.win_w > w || sc.win_h > h {
            break;
        }
        let step = ((scale / 10.0).round() as usize).max(1);
        let mut y = 0;
        while y + sc.win_h <= h {
            let mut x = 0;
            while x + sc.win_w <= w {
                if sc.passes(&ii, x, y) {
                    out.push(BoundingBox::new(x as u32, y as u32, sc.win_w as u32, sc.win_h as u32));
                }
                x += step;
            }
            y += step;
        }
        scale *= scale_factor;
    }
    out
}

fn mutually_overlapping(a: &BoundingBox, b: &BoundingBox) -> bool {
    let inter = a.intersection(b);
    2 * inter >= a.area() && 2 * inter >= b.area()
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Clusters boxes that cover at least half of each other, drops clusters
/// with fewer than `min_neighbors` members, and returns each cluster's mean
/// box, largest area first.
pub fn group_candidates(candidates: &[BoundingBox], min_neighbors: usize) -> Vec<BoundingBox> {
    let n = candidates.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if mutually_overlapping(&candidates[i], &candidates[j]) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<&BoundingBox>> = std::collections::BTreeMap::new();
    for (i, c) in candidates.iter().enumerate() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(c);
    }
    let mut out: Vec<BoundingBox> = groups
        .into_values()
        .filter(|g| g.len() >= min_neighbors)
        .map(|g| {
            let k = g.len() as f64;
            let mean = |f: fn(&BoundingBox) -> u32| (g.iter().map(|b| f64::from(f(b))).sum::<f64>() / k).round() as u32;
            BoundingBox::new(mean(|b| b.x), mean(|b| b.y), mean(|b| b.w), mean(|b| b.h))
        })
        .collect();
    out.sort_by(|a, b| b.area().cmp(&a.area()).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)));
    out
}

/// Detects faces: cascade candidates over all scales, then grouping.
pub fn detect_faces(img: &FaceImage, cascade: &CascadeModel, params: DetectParams) -> Vec<BoundingBox> {
    let candidates = candidate_windows(img, cascade, params.scale_factor);
    group_candidates(&candidates, params.min_neighbors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_and_expand() {
        let a = BoundingBox::new(0, 0, 10, 10);
        let b = BoundingBox::new(5, 0, 10, 10);
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
        assert_eq!(a.iou(&BoundingBox::new(20, 20, 2, 2)), 0.0);
        assert_eq!(BoundingBox::new(10, 10, 20, 20).expand(0.1, 100, 100), BoundingBox::new(8, 8, 24, 24));
        assert_eq!(BoundingBox::new(0, 5, 20, 20).expand(0.1, 21, 100), BoundingBox::new(0, 3, 21, 24));
    }

    #[test]
    fn grouping_merges_and_filters() {
        let c = vec![
            BoundingBox::new(10, 10, 20, 20),
            BoundingBox::new(12, 10, 20, 20),
            BoundingBox::new(11, 12, 22, 22),
            BoundingBox::new(80, 80, 10, 10),
        ];
        let g = group_candidates(&c, 2);
        assert_eq!(g, vec![BoundingBox::new(11, 11, 21, 21)]);
        assert_eq!(group_candidates(&c, 0).len(), 2);
        assert!(group_candidates(&c, 4).is_empty());
    }

    #[test]
    fn blank_image_has_no_faces() {
        let cascade = CascadeModel::frontal_face();
        for v in [0u8, 128, 255] {
            let img = FaceImage::filled(96, 80, 3, v);
            assert!(detect_faces(&img, &cascade, DetectParams::default()).is_empty());
        }
    }
}
