use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{prep_face_with, CascadeModel, DetectParams, FaceError, FaceImage, BOX_EXPANSION, FACE_SIZE};
use crate::gan::ExpressionDomain;

pub const MANIFEST_FORMAT: &str = "facedataset/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedImage {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    pub scale_factor: f64,
    pub min_neighbors: usize,
    pub size: usize,
    pub expansion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    /// Prepared image count per domain, all seven domains listed.
    pub domains: BTreeMap<String, usize>,
    pub skipped: Vec<SkippedImage>,
    pub cascade_sha256: String,
    pub params: DatasetParams,
}

impl DatasetManifest {
    pub fn total(&self) -> usize {
        self.domains.values().sum()
    }
}

fn is_image_name(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>, FaceError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

/// Prepares every image under `raw_dir/<domain>/` into `out_dir/<domain>/<stem>.png`
/// and writes `out_dir/manifest.json`. Images that fail are listed as skipped.
pub fn build_dataset(raw_dir: &Path, cascade: &CascadeModel, out_dir: &Path, params: DetectParams) -> Result<DatasetManifest, FaceError> {
    let mut domains = BTreeMap::new();
    let mut skipped = Vec::new();
    for domain in ExpressionDomain::ALL {
        let src = raw_dir.join(domain.name());
        let mut count = 0usize;
        if src.is_dir() {
            let dst = out_dir.join(domain.name());
            std::fs::create_dir_all(&dst)?;
            let mut stems = BTreeSet::new();
            for file in sorted_files(&src)? {
                let display = file.strip_prefix(raw_dir).unwrap_or(&file).display().to_string();
                if !is_image_name(&file) {
                    skipped.push(SkippedImage { path: display, reason: "NotAnImage".into() });
                    continue;
                }
                let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string();
                if !stems.insert(stem.clone()) {
                    skipped.push(SkippedImage { path: display, reason: "DuplicateName".into() });
                    continue;
                }
                let prepared = std::fs::read(&file)
                    .map_err(FaceError::from)
                    .and_then(|b| FaceImage::decode(&b))
                    .and_then(|img| prep_face_with(&img, cascade, params));
                match prepared {
                    Ok(p) => {
                        p.image.save_png(dst.join(format!("{stem}.png")))?;
                        count += 1;
                    }
                    Err(e) => {
                        log::warn!("skipping {display}: {e}");
                        skipped.push(SkippedImage { path: display, reason: e.kind().to_string() });
                    }
                }
            }
        }
        domains.insert(domain.name().to_string(), count);
    }
    let manifest = DatasetManifest {
        format: MANIFEST_FORMAT.to_string(),
        domains,
        skipped,
        cascade_sha256: cascade.checksum.clone(),
        params: DatasetParams {
            scale_factor: params.scale_factor,
            min_neighbors: params.min_neighbors,
            size: FACE_SIZE,
            expansion: BOX_EXPANSION,
        },
    };
    if manifest.total() == 0 {
        return Err(FaceError::EmptyDataset);
    }
    std::fs::create_dir_all(out_dir)?;
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    std::fs::write(out_dir.join("manifest.json"), json)?;
    Ok(manifest)
}
