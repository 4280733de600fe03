//! Procedural training data: cartoon faces in seven expressions, a small
//! keyword-driven emotion corpus and matching word vectors.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::classifier::{CellKind, ClassifierModel, EmotionLabel, LabeledCorpus, LstmParams};
use crate::embedding::EmbeddingStore;
use crate::face::FaceImage;
use crate::gan::{ExpressionDomain, GanCheckpoint, GanConfig};
use crate::pipeline::Models;
use crate::text::normalize;

/// Identity-level appearance shared by one face across all expressions.
#[derive(Debug, Clone, Copy)]
struct Identity {
    skin: [f64; 3],
    hair: [f64; 3],
    background: [f64; 3],
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    eye_dx: f64,
    mouth_w: f64,
}

impl Identity {
    fn draw(rng: &mut impl Rng) -> Identity {
        let tone = rng.random_range(0.35..0.95);
        let mut jitter = |base: f64, amt: f64| (base + rng.random_range(-amt..amt)).clamp(0.0, 1.0);
        let skin = [jitter(tone, 0.05) * 0.98 + 0.02, jitter(tone * 0.78, 0.05), jitter(tone * 0.62, 0.05)];
        let hair = [jitter(0.25, 0.2), jitter(0.18, 0.15), jitter(0.12, 0.1)];
        let background = [jitter(0.5, 0.4), jitter(0.5, 0.4), jitter(0.5, 0.4)];
        Identity {
            skin,
            hair,
            background,
            cx: rng.random_range(-0.04..0.04),
            cy: rng.random_range(-0.03..0.05),
            rx: rng.random_range(0.6..0.7),
            ry: rng.random_range(0.76..0.86),
            eye_dx: rng.random_range(0.21..0.27),
            mouth_w: rng.random_range(0.2..0.27),
        }
    }
}

/// Per-expression geometry, in face-normalized units (y grows downward).
struct Expression {
    eye_h: f64,
    /// Brow heights at the inner and outer ends, left then right.
    brow_in: [f64; 2],
    brow_out: [f64; 2],
    /// Mouth curvature: positive bends the middle down (smile), negative up.
    bend: f64,
    /// Vertical half-size of an open mouth; zero draws a line.
    open: f64,
    /// Mouth tilt from left to right corner.
    tilt: f64,
    width_scale: f64,
}

fn expression(d: ExpressionDomain) -> Expression {
    use ExpressionDomain::*;
    match d {
        Anger => Expression { eye_h: 0.035, brow_in: [-0.22, -0.22], brow_out: [-0.36, -0.36], bend: -0.05, open: 0.0, tilt: 0.0, width_scale: 0.8 },
        Disgust => Expression { eye_h: 0.03, brow_in: [-0.25, -0.33], brow_out: [-0.3, -0.4], bend: 0.0, open: 0.0, tilt: -0.12, width_scale: 0.9 },
        Fear => Expression { eye_h: 0.1, brow_in: [-0.42, -0.42], brow_out: [-0.34, -0.34], bend: -0.04, open: 0.05, tilt: 0.0, width_scale: 1.25 },
        Happiness => Expression { eye_h: 0.04, brow_in: [-0.33, -0.33], brow_out: [-0.33, -0.33], bend: 0.14, open: 0.0, tilt: 0.0, width_scale: 1.2 },
        Neutral => Expression { eye_h: 0.06, brow_in: [-0.31, -0.31], brow_out: [-0.31, -0.31], bend: 0.0, open: 0.0, tilt: 0.0, width_scale: 1.0 },
        Sadness => Expression { eye_h: 0.05, brow_in: [-0.38, -0.38], brow_out: [-0.26, -0.26], bend: -0.12, open: 0.0, tilt: 0.0, width_scale: 1.0 },
        Surprise => Expression { eye_h: 0.11, brow_in: [-0.46, -0.46], brow_out: [-0.44, -0.44], bend: 0.0, open: 0.13, tilt: 0.0, width_scale: 0.55 },
    }
}

/// Coverage of a shape whose signed distance is `d` (negative inside),
/// with a one-pixel soft edge of width `px`.
fn cover(d: f64, px: f64) -> f64 {
    (0.5 - d / px).clamp(0.0, 1.0)
}

fn segment_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let t = (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / (vx * vx + vy * vy)).clamp(0.0, 1.0);
    ((p.0 - a.0 - t * vx).powi(2) + (p.1 - a.1 - t * vy).powi(2)).sqrt()
}

fn ellipse_dist(p: (f64, f64), c: (f64, f64), rx: f64, ry: f64) -> f64 {
    // Scaled-radius approximation; exact on the axes.
    let (dx, dy) = ((p.0 - c.0) / rx, (p.1 - c.1) / ry);
    ((dx * dx + dy * dy).sqrt() - 1.0) * rx.min(ry)
}

fn blend(dst: &mut [f64; 3], src: [f64; 3], a: f64) {
    for k in 0..3 {
        dst[k] = dst[k] * (1.0 - a) + src[k] * a;
    }
}

fn render(id: &Identity, d: ExpressionDomain, size: usize, noise_seed: u64) -> FaceImage {
    let e = expression(d);
    let px = 2.0 / size as f64;
    let ink = [0.12, 0.08, 0.08];
    let lips = [0.55, 0.15, 0.15];
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let noise = Normal::new(0.0, 0.015).expect("valid std");
    let mut pixels = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            // Face-centered coordinates in [-1, 1].
            let p = ((x as f64 + 0.5) * px - 1.0 - id.cx, (y as f64 + 0.5) * px - 1.0 - id.cy);
            let mut c = id.background;
            let vgrad = 0.1 * (p.1 + 1.0) / 2.0;
            c.iter_mut().for_each(|v| *v = (*v - vgrad).max(0.0));
            let face = ellipse_dist(p, (0.0, 0.05), id.rx, id.ry);
            let hair = ellipse_dist(p, (0.0, -0.12), id.rx + 0.08, id.ry * 0.9).max(p.1 + 0.38);
            blend(&mut c, id.hair, cover(hair, px));
            blend(&mut c, id.skin, cover(face.max(-(p.1 + 0.5)), px) * cover(face, px));
            for side in [-1.0f64, 1.0] {
                let si = usize::from(side > 0.0);
                let ex = side * id.eye_dx;
                let eye = ellipse_dist(p, (ex, -0.12), 0.1, e.eye_h);
                blend(&mut c, [0.97, 0.97, 0.95], cover(eye, px));
                let pupil = ellipse_dist(p, (ex, -0.12), 0.045, e.eye_h.min(0.045));
                blend(&mut c, ink, cover(pupil, px));
                let inner = (side * 0.08, e.brow_in[si]);
                let outer = (side * (id.eye_dx + 0.13), e.brow_out[si]);
                blend(&mut c, id.hair.map(|v| v * 0.6), cover(segment_dist(p, inner, outer) - 0.03, px));
            }
            let nose = segment_dist(p, (0.0, -0.02), (0.03, 0.14)) - 0.015;
            blend(&mut c, id.skin.map(|v| v * 0.7), cover(nose, px));
            let mw = id.mouth_w * e.width_scale;
            let my = 0.38;
            if e.open > 0.0 {
                let mouth = ellipse_dist(p, (0.0, my), mw, e.open);
                blend(&mut c, lips, cover(mouth - 0.025, px));
                blend(&mut c, [0.2, 0.03, 0.05], cover(mouth, px));
            } else {
                let t = (p.0 / mw).clamp(-1.0, 1.0);
                let curve = my + e.bend * (1.0 - t * t) + e.tilt * t * 0.5 - e.bend * 0.3;
                let dist = if p.0.abs() <= mw { (p.1 - curve).abs() } else { f64::INFINITY };
                let end = |s: f64| ((p.0 - s * mw).powi(2) + (p.1 - (my + e.tilt * s * 0.5 - e.bend * 0.3)).powi(2)).sqrt();
                let dist = dist.min(end(-1.0)).min(end(1.0));
                blend(&mut c, lips, cover(dist - 0.03, px));
            }
            for v in c {
                let n = noise.sample(&mut rng);
                pixels.push(((v + n).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    FaceImage::new(size, size, 3, pixels).expect("consistent buffer")
}

/// `per_domain` distinct identities, each drawn in all seven expressions.
pub fn synthetic_faces(per_domain: usize, size: usize, seed: u64) -> Vec<(FaceImage, ExpressionDomain)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<Identity> = (0..per_domain).map(|_| Identity::draw(&mut rng)).collect();
    let mut out = Vec::with_capacity(per_domain * 7);
    for d in ExpressionDomain::ALL {
        for (i, id) in ids.iter().enumerate() {
            let noise_seed = seed ^ ((i as u64) << 8 | d.code() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            out.push((render(id, d, size, noise_seed), d));
        }
    }
    out
}

/// Writes faces as `<dir>/<domain>/synth_NNN.png`, the prepared-dataset layout.
pub fn write_face_folders(dir: &Path, faces: &[(FaceImage, ExpressionDomain)]) -> std::io::Result<()> {
    for (i, (img, d)) in faces.iter().enumerate() {
        let sub = dir.join(d.name());
        std::fs::create_dir_all(&sub)?;
        img.save_png(sub.join(format!("synth_{i:03}.png"))).map_err(std::io::Error::other)?;
    }
    Ok(())
}

const SUBJECTS: &[&str] = &["i", "i'm", "we", "my friend", "she", "he", "they", "my sister", "my brother", "everyone"];
const FILLERS: &[&str] = &["today", "this morning", "at work", "after school", "tonight", "again", "yesterday", "at home", "right now", "this week"];

/// Keyword phrases per emotion, in label-code order.
const PHRASES: [&[&str]; 7] = [
    &["happy", "so glad", "delighted about the news", "joyful and excited", "smiling all day", "thrilled with the result", "cheerful and grateful", "laughing with friends", "loved the party", "proud and happy"],
    &["not feeling well", "sad and lonely", "crying over the loss", "feeling down", "miserable and tired", "heartbroken", "missing my family", "depressed and empty", "unhappy about everything", "grieving quietly"],
    &["angry at the driver", "furious about the delay", "so mad", "annoyed and irritated", "outraged by the lie", "shouting in rage", "fuming about the bill", "hate being cheated", "losing my temper", "livid and bitter"],
    &["afraid of the dark", "scared of the exam", "terrified", "nervous and anxious", "frightened by a noise", "worried about danger", "panicking in the crowd", "fearful of the storm", "trembling with dread", "alarmed by the threat"],
    &["ashamed of my mistake", "embarrassed in class", "guilty about lying", "humiliated in public", "regret what i said", "blushing with shame", "felt foolish", "disgraced myself", "sorry for cheating", "mortified by the photo"],
    &["disgusted by the smell", "grossed out", "revolted by the food", "nauseated by the mess", "sickened by the cruelty", "repulsed by the dirt", "the rotten garbage", "vile and filthy", "yuck the slime", "loathe the stench"],
    &["surprised by the gift", "shocked by the news", "amazed at the view", "astonished", "stunned by the result", "never expected that", "caught off guard", "wow what a twist", "startled by the call", "unexpected visitor"],
];

/// `per_class` short sentences per emotion. Each pairs a subject and a
/// context filler with one or two of the class's keyword phrases.
pub fn synthetic_corpus(per_class: usize, seed: u64) -> LabeledCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(per_class * 7);
    for label in EmotionLabel::ALL {
        let phrases = PHRASES[label.code()];
        for _ in 0..per_class {
            let subject = SUBJECTS.choose(&mut rng).expect("non-empty");
            let filler = FILLERS.choose(&mut rng).expect("non-empty");
            let first = phrases.choose(&mut rng).expect("non-empty");
            let text = if rng.random_bool(0.3) {
                let second = phrases.choose(&mut rng).expect("non-empty");
                format!("{subject} {first} and {second} {filler}")
            } else if rng.random_bool(0.5) {
                format!("{filler} {subject} {first}")
            } else {
                format!("{subject} {first} {filler}")
            };
            items.push((text, label));
        }
    }
    LabeledCorpus::new(items)
}

/// Word vectors in the plain-text word-plus-floats layout. Keyword tokens
/// lean toward a per-emotion direction; everything else is isotropic noise.
pub fn synthetic_vectors(dim: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("valid std");
    let centers: Vec<Vec<f64>> = (0..7).map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect()).collect();
    let mut owner: std::collections::BTreeMap<String, usize> = Default::default();
    let mut words = BTreeSet::new();
    for (code, phrases) in PHRASES.iter().enumerate() {
        for p in phrases.iter() {
            for tok in normalize(p).into_inner() {
                owner.entry(tok.clone()).or_insert(code);
                words.insert(tok);
            }
        }
    }
    for s in SUBJECTS.iter().chain(FILLERS) {
        for tok in normalize(s).into_inner() {
            owner.remove(&tok);
            words.insert(tok);
        }
    }
    for extra in ["the", "a", "and", "of", "to", "is", "was", "feel", "felt", "very", "really", "day", "night", "home", "work", "school", "news", "sorrowful", "joy", "fury", "fright", "shame", "disgust", "surprise"] {
        words.insert(extra.to_string());
    }
    let mut out = String::new();
    for w in &words {
        let _ = write!(out, "{w}");
        let center = owner.get(w).map(|&c| &centers[c]);
        for k in 0..dim {
            let base = center.map_or(0.0, |c| 0.8 * c[k]);
            let _ = write!(out, " {:.5}", base + 0.45 * normal.sample(&mut rng));
        }
        out.push('\n');
    }
    out
}

/// [`synthetic_vectors`] parsed into a store.
pub fn synthetic_embedding(dim: usize, seed: u64) -> EmbeddingStore {
    EmbeddingStore::from_reader(synthetic_vectors(dim, seed).as_bytes()).expect("generated vectors parse")
}

/// Untrained but well-formed models, small enough for plumbing tests.
/// Predictions are arbitrary; everything is deterministic in `seed`.
pub fn tiny_models(seed: u64) -> Models {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let embedding = synthetic_embedding(8, seed);
    let params = LstmParams::init(CellKind::Lstm, embedding.dim(), 6, &mut rng);
    let classifier = ClassifierModel::from_embedding(params, embedding, 16);
    let config = GanConfig {
        image_size: 16,
        g_width: 4,
        g_res_blocks: 1,
        g_edge_kernel: 3,
        d_width: 4,
        d_layers: 2,
        seed,
        ..GanConfig::default()
    };
    let gan = GanCheckpoint::new(config).expect("valid tiny config");
    Models::new(Some(classifier), Some(gan))
}
