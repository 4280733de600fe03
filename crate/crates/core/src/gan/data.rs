use std::path::Path;

use super::real::Real;
use super::tensor::Tensor;
use super::train::{Batch, GanCheckpoint};
use super::{ExpressionDomain, GanError, NUM_DOMAINS};
use crate::face::{resize, FaceImage, FACE_SIZE};

/// Images in `[-1, 1]`, laid out batch x height x width x channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

pub fn to_unit(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

pub fn from_unit(v: f32) -> u8 {
    ((v as f64 + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

impl ImageTensor {
    pub fn new(batch: usize, height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self, GanError> {
        if data.len() != batch * height * width * channels {
            return Err(GanError::BadShape(format!("{} values for {batch}x{height}x{width}x{channels}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GanError::BadShape("non-finite value".into()));
        }
        Ok(ImageTensor { batch, height, width, channels, data })
    }

    /// Stacks RGB faces of equal size.
    pub fn from_faces(faces: &[FaceImage]) -> Result<Self, GanError> {
        let first = faces.first().ok_or_else(|| GanError::BadShape("empty batch".into()))?;
        let (w, h) = (first.width(), first.height());
        let mut data = Vec::with_capacity(faces.len() * w * h * 3);
        for f in faces {
            if (f.width(), f.height()) != (w, h) {
                return Err(GanError::BadShape("faces differ in size".into()));
            }
            data.extend(f.to_rgb().pixels().iter().map(|&v| to_unit(v)));
        }
        ImageTensor::new(faces.len(), h, w, 3, data)
    }

    pub fn to_faces(&self) -> Vec<FaceImage> {
        let len = self.height * self.width * self.channels;
        self.data
            .chunks(len)
            .map(|s| {
                let px = s.iter().map(|&v| from_unit(v)).collect();
                FaceImage::new(self.width, self.height, self.channels, px).expect("consistent shape")
            })
            .collect()
    }

    pub fn to_nchw<F: Real>(&self) -> Tensor<F> {
        let (h, w, c) = (self.height, self.width, self.channels);
        let mut t = Tensor::zeros(self.batch, c, h, w);
        for n in 0..self.batch {
            let src = &self.data[n * h * w * c..(n + 1) * h * w * c];
            let dst = t.sample_mut(n);
            for (p, px) in src.chunks(c).enumerate() {
                for (ch, &v) in px.iter().enumerate() {
                    dst[ch * h * w + p] = F::c(v as f64);
                }
            }
        }
        t
    }

    pub fn from_nchw<F: Real>(t: &Tensor<F>) -> ImageTensor {
        let (h, w, c) = (t.h, t.w, t.c);
        let mut data = vec![0.0f32; t.data.len()];
        for n in 0..t.n {
            let src = t.sample(n);
            let dst = &mut data[n * h * w * c..(n + 1) * h * w * c];
            for p in 0..h * w {
                for ch in 0..c {
                    dst[p * c + ch] = src[ch * h * w + p].as_f64() as f32;
                }
            }
        }
        ImageTensor { batch: t.n, height: h, width: w, channels: c, data }
    }
}

/// One-hot domain map: channel `d.code()` is all ones, the other six zero.
pub fn tile_label(d: ExpressionDomain, h: usize, w: usize) -> ImageTensor {
    let mut data = vec![0.0f32; h * w * NUM_DOMAINS];
    for px in data.chunks_mut(NUM_DOMAINS) {
        px[d.code()] = 1.0;
    }
    ImageTensor { batch: 1, height: h, width: w, channels: NUM_DOMAINS, data }
}

/// Translates every image in `x` to domain `d`.
pub fn generator_forward(ckpt: &GanCheckpoint, x: &ImageTensor, d: ExpressionDomain) -> Result<ImageTensor, GanError> {
    if x.channels != 3 || x.height % 4 != 0 || x.width % 4 != 0 || x.height == 0 || x.width == 0 {
        return Err(GanError::BadShape(format!("{}x{}x{} input", x.height, x.width, x.channels)));
    }
    let out = ckpt.generate(&x.to_nchw::<f32>(), &vec![d.code(); x.batch]);
    Ok(ImageTensor::from_nchw(&out))
}

/// Re-renders a prepared 128x128 face with expression `d`. Faces are
/// resampled to the checkpoint's training resolution and back.
pub fn synthesize(ckpt: &GanCheckpoint, face: &FaceImage, d: ExpressionDomain) -> Result<FaceImage, GanError> {
    if face.width() != FACE_SIZE || face.height() != FACE_SIZE || face.channels() != 3 {
        return Err(GanError::BadShape(format!(
            "expected {FACE_SIZE}x{FACE_SIZE}x3, got {}x{}x{}",
            face.width(),
            face.height(),
            face.channels()
        )));
    }
    let size = ckpt.config.image_size;
    let input = if size == FACE_SIZE { face.clone() } else { resize(face, size, size) };
    let out = generator_forward(ckpt, &ImageTensor::from_faces(&[input])?, d)?;
    let img = out.to_faces().pop().expect("one image");
    Ok(if size == FACE_SIZE { img } else { resize(&img, FACE_SIZE, FACE_SIZE) })
}

/// Square RGB training images with their expression domains.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceSet {
    images: Tensor<f32>,
    labels: Vec<ExpressionDomain>,
}

impl FaceSet {
    pub fn from_tensor(images: Tensor<f32>, labels: Vec<ExpressionDomain>) -> Result<FaceSet, GanError> {
        if images.c != 3 || images.h != images.w || images.n != labels.len() {
            return Err(GanError::BadShape(format!("{:?} with {} labels", images.shape(), labels.len())));
        }
        Ok(FaceSet { images, labels })
    }

    /// Resamples each face to `size x size` when needed.
    pub fn from_faces(faces: &[(FaceImage, ExpressionDomain)], size: usize) -> Result<FaceSet, GanError> {
        if faces.is_empty() {
            return Err(GanError::EmptyDataset);
        }
        let imgs: Vec<FaceImage> = faces
            .iter()
            .map(|(f, _)| if f.width() == size && f.height() == size { f.to_rgb() } else { resize(f, size, size) })
            .collect();
        let t = ImageTensor::from_faces(&imgs)?.to_nchw();
        FaceSet::from_tensor(t, faces.iter().map(|(_, d)| *d).collect())
    }

    /// Reads `<dir>/<domain>/*.png` for all seven domains.
    pub fn load_dir(dir: &Path, size: usize) -> Result<FaceSet, GanError> {
        let mut faces = Vec::new();
        for d in ExpressionDomain::ALL {
            let sub = dir.join(d.name());
            if !sub.is_dir() {
                continue;
            }
            let mut files: Vec<_> = std::fs::read_dir(&sub)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
                .collect();
            files.sort();
            for f in files {
                faces.push((FaceImage::open(&f)?, d));
            }
        }
        FaceSet::from_faces(&faces, size)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn size(&self) -> usize {
        self.images.h
    }

    pub fn images(&self) -> &Tensor<f32> {
        &self.images
    }

    pub fn labels(&self) -> &[ExpressionDomain] {
        &self.labels
    }

    /// Gathers `picks`, mirroring the samples whose `flips` entry is set.
    pub fn batch<F: Real>(&self, picks: &[usize], flips: &[bool], targets: Vec<usize>) -> Batch<F> {
        let s = self.size();
        let mut images = Tensor::zeros(picks.len(), 3, s, s);
        for (j, (&i, &flip)) in picks.iter().zip(flips).enumerate() {
            let src = self.images.sample(i);
            let dst = images.sample_mut(j);
            for (drow, srow) in dst.chunks_mut(s).zip(src.chunks(s)) {
                for (x, d) in drow.iter_mut().enumerate() {
                    *d = F::c(srow[if flip { s - 1 - x } else { x }] as f64);
                }
            }
        }
        Batch { images, labels: picks.iter().map(|&i| self.labels[i].code()).collect(), targets }
    }
}
