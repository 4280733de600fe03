use std::path::Path;

use moodshift::face::{
    build_dataset, detect_faces, prep_face, BoundingBox, CascadeModel, DetectParams, FaceError, FaceImage, MINISET_DIR,
};
use moodshift::gan::ExpressionDomain;

fn annotations() -> Vec<(String, BoundingBox)> {
    let text = std::fs::read_to_string(Path::new(MINISET_DIR).join("annotations.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["faces"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            let b = &f["box"];
            let n = |k: &str| b[k].as_u64().unwrap() as u32;
            (f["file"].as_str().unwrap().to_string(), BoundingBox::new(n("x"), n("y"), n("w"), n("h")))
        })
        .collect()
}

fn load(name: &str) -> FaceImage {
    FaceImage::decode(&std::fs::read(Path::new(MINISET_DIR).join(name)).unwrap()).unwrap()
}

#[test]
fn miniset_detections_match_annotations() {
    let cascade = CascadeModel::frontal_face();
    let faces = annotations();
    assert_eq!(faces.len(), 20);
    let mut hits = 0;
    for (file, truth) in &faces {
        let img = load(file);
        let boxes = detect_faces(&img, &cascade, DetectParams::default());
        if boxes.first().is_some_and(|b| b.iou(truth) >= 0.5) {
            hits += 1;
        }
        let prepped = prep_face(&img, &cascade);
        if let Ok(p) = prepped {
            assert_eq!((p.width(), p.height(), p.channels()), (128, 128, 3), "{file}");
        }
    }
    assert!(hits >= 18, "{hits}/20 detections with IoU >= 0.5");
}

#[test]
fn detection_follows_translation() {
    let cascade = CascadeModel::frontal_face();
    let (file, _) = &annotations()[0];
    let img = load(file);
    let base = detect_faces(&img, &cascade, DetectParams::default())[0];
    let (dx, dy) = (17usize, 9usize);
    let (w, h) = (img.width(), img.height());
    let src = img.pixels();
    let shifted = FaceImage::from_fn_rgb(w + dx, h + dy, |x, y| {
        if x < dx || y < dy {
            [0, 0, 0]
        } else {
            let i = ((y - dy) * w + (x - dx)) * 3;
            [src[i], src[i + 1], src[i + 2]]
        }
    });
    let moved = detect_faces(&shifted, &cascade, DetectParams::default())[0];
    assert!((moved.x as i64 - base.x as i64 - dx as i64).abs() <= 2, "{base:?} -> {moved:?}");
    assert!((moved.y as i64 - base.y as i64 - dy as i64).abs() <= 2, "{base:?} -> {moved:?}");
}

#[test]
fn detection_is_deterministic() {
    let cascade = CascadeModel::frontal_face();
    let img = load("face_03.png");
    assert_eq!(detect_faces(&img, &cascade, DetectParams::default()), detect_faces(&img, &cascade, DetectParams::default()));
}

#[test]
fn prepared_output_shape_and_errors() {
    let cascade = CascadeModel::frontal_face();
    let once = prep_face(&load("face_00.png"), &cascade).unwrap();
    assert_eq!((once.width(), once.height(), once.channels()), (128, 128, 3));
    if let Ok(twice) = prep_face(&once, &cascade) {
        assert_eq!((twice.width(), twice.height(), twice.channels()), (128, 128, 3));
    }
    let blank = FaceImage::filled(200, 200, 3, 90);
    assert!(matches!(prep_face(&blank, &cascade), Err(FaceError::NoFaceDetected)));
}

#[test]
fn dataset_from_miniset_folders() {
    let raw = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let cascade = CascadeModel::frontal_face();
    // Two detectable photos per domain.
    let usable: Vec<String> = annotations()
        .into_iter()
        .filter(|(f, _)| prep_face(&load(f), &cascade).is_ok())
        .map(|(f, _)| f)
        .take(14)
        .collect();
    assert_eq!(usable.len(), 14);
    for (i, file) in usable.iter().enumerate() {
        let dir = raw.path().join(ExpressionDomain::ALL[i / 2].name());
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::copy(Path::new(MINISET_DIR).join(file), dir.join(file)).unwrap();
    }
    std::fs::write(raw.path().join("anger").join("blank.png"), FaceImage::filled(64, 64, 3, 0).encode_png()).unwrap();

    let manifest = build_dataset(raw.path(), &cascade, out.path(), DetectParams::default()).unwrap();
    assert_eq!(manifest.domains.len(), 7);
    assert!(manifest.domains.values().all(|&n| n == 2));
    assert_eq!(manifest.skipped.len(), 1);
    assert!(manifest.skipped[0].path.ends_with("blank.png"));
    assert!(manifest.skipped[0].reason.contains("NoFaceDetected"));
    let written: usize =
        ExpressionDomain::ALL.iter().map(|d| std::fs::read_dir(out.path().join(d.name())).unwrap().count()).sum();
    assert_eq!(written, 15 - manifest.skipped.len());
    assert!(out.path().join("manifest.json").is_file());

    let empty = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(empty.path().join("fear")).unwrap();
    std::fs::write(empty.path().join("fear").join("blank.png"), FaceImage::filled(64, 64, 3, 0).encode_png()).unwrap();
    assert!(matches!(
        build_dataset(empty.path(), &cascade, out.path(), DetectParams::default()),
        Err(FaceError::EmptyDataset)
    ));
}
