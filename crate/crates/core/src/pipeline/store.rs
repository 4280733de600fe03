use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::classifier::{EmotionLabel, NUM_EMOTIONS};

pub const METADATA_FORMAT: &str = "blogstore/1";
const METADATA_FILE: &str = "metadata.json";
const BLOB_DIR: &str = "blobs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub id: String,
    pub name: String,
    pub original_photo: Option<String>,
    pub prepped_face: Option<String>,
    pub current_avatar: Option<String>,
    pub current_emotion: Option<EmotionLabel>,
}

impl UserRecord {
    pub fn hashes(&self) -> impl Iterator<Item = &str> {
        [&self.original_photo, &self.prepped_face, &self.current_avatar].into_iter().flatten().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub id: String,
    pub user_id: String,
    pub text: String,
    pub emotion: EmotionLabel,
    pub probabilities: [f64; NUM_EMOTIONS],
    pub low_confidence: bool,
    pub avatar: String,
    pub created_at: DateTime<Utc>,
}

/// Everything except the blobs: one JSON document, replaced atomically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub format: String,
    pub users: BTreeMap<String, UserRecord>,
    /// Append order, which is also creation order.
    pub posts: Vec<PostRecord>,
}

impl Default for Metadata {
    fn default() -> Self {
        Metadata { format: METADATA_FORMAT.to_string(), users: BTreeMap::new(), posts: Vec::new() }
    }
}

/// Content-addressed blobs under `root/blobs/<sha256>.png` plus `root/metadata.json`.
#[derive(Debug, Clone)]
pub struct ContentStore {
    root: PathBuf,
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn is_hash(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Writes `bytes` next to `path` and renames over it.
fn replace_file(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::File::open(&tmp)?.sync_all()?;
    std::fs::rename(&tmp, path)
}

impl ContentStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<ContentStore, PipelineError> {
        let root = root.into();
        std::fs::create_dir_all(root.join(BLOB_DIR))?;
        Ok(ContentStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn blob_path(&self, hash: &str) -> PathBuf {
        self.root.join(BLOB_DIR).join(format!("{hash}.png"))
    }

    /// Stores `bytes` and returns their hash. Existing blobs are left alone.
    pub fn put(&self, bytes: &[u8]) -> Result<String, PipelineError> {
        let hash = content_hash(bytes);
        let path = self.blob_path(&hash);
        if !path.exists() {
            replace_file(&path, bytes)?;
        }
        Ok(hash)
    }

    pub fn get(&self, hash: &str) -> Result<Vec<u8>, PipelineError> {
        if !is_hash(hash) {
            return Err(PipelineError::UnknownBlob(hash.to_string()));
        }
        match std::fs::read(self.blob_path(hash)) {
            Ok(b) => Ok(b),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(PipelineError::UnknownBlob(hash.to_string())),
            Err(e) => Err(e.into()),
        }
    }

    pub fn contains(&self, hash: &str) -> bool {
        is_hash(hash) && self.blob_path(hash).is_file()
    }

    /// The stored metadata, or an empty document for a fresh store.
    pub fn load_metadata(&self) -> Result<Metadata, PipelineError> {
        match std::fs::read(self.root.join(METADATA_FILE)) {
            Ok(bytes) => {
                let meta: Metadata = serde_json::from_slice(&bytes)?;
                if meta.format != METADATA_FORMAT {
                    return Err(PipelineError::Inconsistent(vec![format!("unknown metadata format {}", meta.format)]));
                }
                Ok(meta)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Metadata::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save_metadata(&self, meta: &Metadata) -> Result<(), PipelineError> {
        let mut bytes = serde_json::to_vec_pretty(meta)?;
        bytes.push(b'\n');
        replace_file(&self.root.join(METADATA_FILE), &bytes)?;
        Ok(())
    }

    /// Lists every problem found: dangling references, blobs whose bytes no
    /// longer match their name, and records that break their own invariants.
    pub fn check(&self, meta: &Metadata) -> Vec<String> {
        let mut problems = Vec::new();
        let mut verify = |owner: &str, hash: &str| match self.get(hash) {
            Ok(bytes) if content_hash(&bytes) == hash => {}
            Ok(_) => problems.push(format!("{owner}: blob {hash} does not match its hash")),
            Err(_) => problems.push(format!("{owner}: missing blob {hash}")),
        };
        for (id, u) in &meta.users {
            for h in u.hashes() {
                verify(&format!("user {id}"), h);
            }
        }
        for p in &meta.posts {
            verify(&format!("post {}", p.id), &p.avatar);
        }
        for (id, u) in &meta.users {
            if &u.id != id {
                problems.push(format!("user {id}: keyed under a different id"));
            }
            if u.current_avatar.is_some() && u.prepped_face.is_none() {
                problems.push(format!("user {id}: avatar without prepared face"));
            }
        }
        for p in &meta.posts {
            if !meta.users.contains_key(&p.user_id) {
                problems.push(format!("post {}: unknown user {}", p.id, p.user_id));
            }
            if crate::classifier::argmax(&p.probabilities) != p.emotion.code() {
                problems.push(format!("post {}: emotion is not the most probable label", p.id));
            }
        }
        problems
    }
}
