//! Face detection and preparation.
//!
//! A photograph is scanned with a Haar cascade, the largest detection is
//! padded by 10% per side, cropped and resampled to 128x128 RGB, and
//! histogram-equalized. [`build_dataset`] applies the same preparation to a
//! folder of expression-labeled photos.

mod cascade;
mod dataset;
mod detect;
mod equalize;
mod image;
mod integral;
mod resize;

use thiserror::Error;

pub use cascade::{CascadeModel, HaarRect, Stage, WeakClassifier, FRONTAL_FACE_XML};
pub use dataset::{build_dataset, DatasetManifest, SkippedImage, MANIFEST_FORMAT};
pub use detect::{candidate_windows, detect_faces, group_candidates, BoundingBox, DetectParams};
pub use equalize::{equalization_table, histogram_equalize};
pub use image::{luma, FaceImage};
pub use integral::IntegralImage;
pub use resize::{crop_resize, resize};

/// The bundled 20-photo annotated detection set (`annotations.json` plus PNGs).
pub const MINISET_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/miniset");

/// Side length of a prepared face.
pub const FACE_SIZE: usize = 128;

/// Fraction of the detected box added on every side before cropping.
pub const BOX_EXPANSION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum FaceError {
    #[error("NoFaceDetected: no face found in the image")]
    NoFaceDetected,
    #[error("UndecodableImage: {0}")]
    Undecodable(String),
    #[error("DegenerateBox: {0:?} is empty after clamping")]
    DegenerateBox(BoundingBox),
    #[error("BadShape: {width}x{height}x{channels} does not match {len} bytes or is unsupported")]
    BadShape { width: usize, height: usize, channels: usize, len: usize },
    #[error("BadCascade: {0}")]
    BadCascade(String),
    #[error("UnsupportedCascade: {0}")]
    UnsupportedCascade(String),
    #[error("EmptyDataset: no image could be prepared")]
    EmptyDataset,
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
    #[error("JsonError: {0}")]
    Json(#[from] serde_json::Error),
}

impl FaceError {
    pub fn kind(&self) -> &'static str {
        match self {
            FaceError::NoFaceDetected => "NoFaceDetected",
            FaceError::Undecodable(_) => "UndecodableImage",
            FaceError::DegenerateBox(_) => "DegenerateBox",
            FaceError::BadShape { .. } => "BadShape",
            FaceError::BadCascade(_) => "BadCascade",
            FaceError::UnsupportedCascade(_) => "UnsupportedCascade",
            FaceError::EmptyDataset => "EmptyDataset",
            FaceError::Io(_) => "IoError",
            FaceError::Json(_) => "JsonError",
        }
    }
}

/// A prepared face plus the detection it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFace {
    pub image: FaceImage,
    pub detection: BoundingBox,
    pub crop: BoundingBox,
}

/// Detects, crops, resizes and equalizes the largest face in `img`.
pub fn prep_face(img: &FaceImage, cascade: &CascadeModel) -> Result<FaceImage, FaceError> {
    prep_face_with(img, cascade, DetectParams::default()).map(|p| p.image)
}

pub fn prep_face_with(img: &FaceImage, cascade: &CascadeModel, params: DetectParams) -> Result<PreparedFace, FaceError> {
    let boxes = detect_faces(img, cascade, params);
    let detection = *boxes.first().ok_or(FaceError::NoFaceDetected)?;
    let crop = detection.expand(BOX_EXPANSION, img.width(), img.height());
    let resized = crop_resize(img, crop, FACE_SIZE)?;
    Ok(PreparedFace { image: histogram_equalize(&resized), detection, crop })
}
