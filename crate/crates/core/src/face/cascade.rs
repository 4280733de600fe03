//! Haar cascade model and its XML serialization.
//!
//! Both layouts written by the OpenCV tooling are understood: the current
//! `opencv-cascade-classifier` layout (stages referencing a shared feature
//! list) and the older `opencv-haar-classifier` layout (features inline in
//! each tree). Only stump weak classifiers and upright features are
//! accepted.

use sha2::{Digest, Sha256};

use super::FaceError;

/// The frontal-face cascade distributed with OpenCV (24x24 window, 25 stages).
pub const FRONTAL_FACE_XML: &str = include_str!("../../data/haarcascade_frontalface_default.xml");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaarRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakClassifier {
    pub rects: Vec<HaarRect>,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub threshold: f64,
    pub weak: Vec<WeakClassifier>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel {
    pub window_w: u32,
    pub window_h: u32,
    pub stages: Vec<Stage>,
    /// SHA-256 of the source document, hex encoded.
    pub checksum: String,
}

fn bad(msg: impl Into<String>) -> FaceError {
    FaceError::BadCascade(msg.into())
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|c| c.is_element() && c.tag_name().name() == name)
}

fn items<'a, 'i>(node: roxmltree::Node<'a, 'i>) -> impl Iterator<Item = roxmltree::Node<'a, 'i>> {
    node.children().filter(|c| c.is_element() && c.tag_name().name() == "_")
}

fn text_of<'a>(node: roxmltree::Node<'a, '_>) -> &'a str {
    node.text().unwrap_or("").trim()
}

fn numbers(s: &str) -> Result<Vec<f64>, FaceError> {
    s.split_whitespace()
        .map(|t| t.trim_end_matches('.').parse::<f64>().or_else(|_| t.parse::<f64>()))
        .collect::<Result<_, _>>()
        .map_err(|_| bad(format!("bad number list {s:?}")))
}

fn number(node: Option<roxmltree::Node<'_, '_>>, what: &str) -> Result<f64, FaceError> {
    let node = node.ok_or_else(|| bad(format!("missing <{what}>")))?;
    let v = numbers(text_of(node))?;
    match v.as_slice() {
        [x] => Ok(*x),
        _ => Err(bad(format!("<{what}> must hold one number"))),
    }
}

fn parse_rects(rects: roxmltree::Node<'_, '_>) -> Result<Vec<HaarRect>, FaceError> {
    let mut out = Vec::new();
    for r in items(rects) {
        let v = numbers(text_of(r))?;
        if v.len() != 5 || v[..4].iter().any(|&c| c < 0.0 || c.fract() != 0.0) {
            return Err(bad(format!("bad rectangle {:?}", text_of(r))));
        }
        out.push(HaarRect { x: v[0] as u32, y: v[1] as u32, w: v[2] as u32, h: v[3] as u32, weight: v[4] });
    }
    if out.is_empty() {
        return Err(bad("feature without rectangles"));
    }
    Ok(out)
}

fn check_tilted(feature: roxmltree::Node<'_, '_>) -> Result<(), FaceError> {
    if let Some(t) = child(feature, "tilted") {
        if text_of(t) != "0" {
            return Err(FaceError::UnsupportedCascade("tilted features".into()));
        }
    }
    Ok(())
}

impl CascadeModel {
    pub fn frontal_face() -> CascadeModel {
        CascadeModel::from_xml(FRONTAL_FACE_XML).expect("bundled cascade parses")
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<CascadeModel, FaceError> {
        let text = std::fs::read_to_string(path)?;
        CascadeModel::from_xml(&text)
    }

    pub fn from_xml(xml: &str) -> Result<CascadeModel, FaceError> {
        let doc = roxmltree::Document::parse(xml).map_err(|e| bad(e.to_string()))?;
        let storage = doc.root_element();
        let cascade = storage
            .children()
            .find(|c| c.is_element())
            .ok_or_else(|| bad("empty cascade document"))?;
        let mut model = match cascade.attribute("type_id") {
            Some("opencv-cascade-classifier") => Self::parse_current(cascade)?,
            Some("opencv-haar-classifier") => Self::parse_legacy(cascade)?,
            other => return Err(bad(format!("unknown cascade type {other:?}"))),
        };
        model.checksum = hex::encode(Sha256::digest(xml.as_bytes()));
        model.validate()?;
        Ok(model)
    }

    fn parse_current(cascade: roxmltree::Node<'_, '_>) -> Result<CascadeModel, FaceError> {
        if let Some(ft) = child(cascade, "featureType") {
            if text_of(ft) != "HAAR" {
                return Err(FaceError::UnsupportedCascade(format!("feature type {}", text_of(ft))));
            }
        }
        let window_w = number(child(cascade, "width"), "width")? as u32;
        let window_h = number(child(cascade, "height"), "height")? as u32;
        let features_node = child(cascade, "features").ok_or_else(|| bad("missing <features>"))?;
        let mut features = Vec::new();
        for f in items(features_node) {
            check_tilted(f)?;
            features.push(parse_rects(child(f, "rects").ok_or_else(|| bad("feature without <rects>"))?)?);
        }
        let stages_node = child(cascade, "stages").ok_or_else(|| bad("missing <stages>"))?;
        let mut stages = Vec::new();
        for s in items(stages_node) {
            let threshold = number(child(s, "stageThreshold"), "stageThreshold")?;
            let weak_node = child(s, "weakClassifiers").ok_or_else(|| bad("missing <weakClassifiers>"))?;
            let mut weak = Vec::new();
            for w in items(weak_node) {
                let nodes = numbers(text_of(child(w, "internalNodes").ok_or_else(|| bad("missing <internalNodes>"))?))?;
                let leaves = numbers(text_of(child(w, "leafValues").ok_or_else(|| bad("missing <leafValues>"))?))?;
                if nodes.len() != 4 || leaves.len() != 2 {
                    return Err(FaceError::UnsupportedCascade("non-stump weak classifier".into()));
                }
                let idx = nodes[2];
                if idx < 0.0 || idx as usize >= features.len() {
                    return Err(bad(format!("feature index {idx} out of range")));
                }
                weak.push(WeakClassifier {
                    rects: features[idx as usize].clone(),
                    threshold: nodes[3],
                    left: leaves[0],
                    right: leaves[1],
                });
            }
            stages.push(Stage { threshold, weak });
        }
        Ok(CascadeModel { window_w, window_h, stages, checksum: String::new() })
    }

    fn parse_legacy(cascade: roxmltree::Node<'_, '_>) -> Result<CascadeModel, FaceError> {
        let size = numbers(text_of(child(cascade, "size").ok_or_else(|| bad("missing <size>"))?))?;
        if size.len() != 2 {
            return Err(bad("<size> must hold two numbers"));
        }
        let stages_node = child(cascade, "stages").ok_or_else(|| bad("missing <stages>"))?;
        let mut stages = Vec::new();
        for s in items(stages_node) {
            let threshold = number(child(s, "stage_threshold"), "stage_threshold")?;
            let trees = child(s, "trees").ok_or_else(|| bad("missing <trees>"))?;
            let mut weak = Vec::new();
            for tree in items(trees) {
                let nodes: Vec<_> = items(tree).collect();
                if nodes.len() != 1 {
                    return Err(FaceError::UnsupportedCascade("non-stump tree".into()));
                }
                let node = nodes[0];
                let feature = child(node, "feature").ok_or_else(|| bad("missing <feature>"))?;
                check_tilted(feature)?;
                let rects = parse_rects(child(feature, "rects").ok_or_else(|| bad("missing <rects>"))?)?;
                if child(node, "left_val").is_none() || child(node, "right_val").is_none() {
                    return Err(FaceError::UnsupportedCascade("non-stump tree".into()));
                }
                weak.push(WeakClassifier {
                    rects,
                    threshold: number(child(node, "threshold"), "threshold")?,
                    left: number(child(node, "left_val"), "left_val")?,
                    right: number(child(node, "right_val"), "right_val")?,
                });
            }
            stages.push(Stage { threshold, weak });
        }
        Ok(CascadeModel { window_w: size[0] as u32, window_h: size[1] as u32, stages, checksum: String::new() })
    }

    fn validate(&self) -> Result<(), FaceError> {
        if self.window_w < 3 || self.window_h < 3 {
            return Err(bad("detection window too small"));
        }
        if self.stages.is_empty() {
            return Err(bad("cascade has no stages"));
        }
        for stage in &self.stages {
            if stage.weak.is_empty() {
                return Err(bad("stage without weak classifiers"));
            }
            for w in &stage.weak {
                for r in &w.rects {
                    if r.w == 0 || r.h == 0 || r.x + r.w > self.window_w || r.y + r.h > self.window_h {
                        return Err(bad(format!("rectangle {r:?} leaves the base window")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_cascade_parses() {
        let c = CascadeModel::frontal_face();
        assert_eq!((c.window_w, c.window_h), (24, 24));
        assert_eq!(c.stages.len(), 25);
        assert_eq!(c.stages[0].weak.len(), 9);
        assert!((c.stages[0].threshold + 5.042_550_086_975_098).abs() < 1e-12);
        let first = &c.stages[0].weak[0];
        assert_eq!(first.rects[0], HaarRect { x: 6, y: 4, w: 12, h: 9, weight: -1.0 });
        assert_eq!(first.rects[1], HaarRect { x: 6, y: 7, w: 12, h: 3, weight: 3.0 });
        assert_eq!(c.checksum.len(), 64);
    }

    const LEGACY: &str = r#"<?xml version="1.0"?>
<opencv_storage>
<tiny type_id="opencv-haar-classifier">
  <size>4 4</size>
  <stages>
    <_>
      <trees>
        <_>
          <_>
            <feature>
              <rects><_>0 0 4 4 -1.</_><_>0 0 4 2 2.</_></rects>
              <tilted>0</tilted></feature>
            <threshold>0.1</threshold>
            <left_val>-1.</left_val>
            <right_val>1.</right_val></_></_></trees>
      <stage_threshold>0.5</stage_threshold>
      <parent>-1</parent>
      <next>-1</next></_></stages></tiny>
</opencv_storage>"#;

    #[test]
    fn legacy_layout_parses() {
        let c = CascadeModel::from_xml(LEGACY).unwrap();
        assert_eq!((c.window_w, c.window_h), (4, 4));
        assert_eq!(c.stages[0].weak[0].rects[1].weight, 2.0);
        assert_eq!(c.stages[0].weak[0].right, 1.0);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(CascadeModel::from_xml("<opencv_storage/>").is_err());
        let out_of_window = LEGACY.replace("0 0 4 2 2.", "2 0 4 2 2.");
        assert!(matches!(CascadeModel::from_xml(&out_of_window), Err(FaceError::BadCascade(_))));
        let tilted = LEGACY.replace("<tilted>0</tilted>", "<tilted>1</tilted>");
        assert!(matches!(CascadeModel::from_xml(&tilted), Err(FaceError::UnsupportedCascade(_))));
    }
}
