//! Text plus photo in, re-expressed avatar out, and the blog backend built on it.

mod store;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Duration, Utc};
use thiserror::Error;

pub use store::{content_hash, ContentStore, Metadata, PostRecord, UserRecord, METADATA_FORMAT};

use crate::classifier::{argmax, ClassifierModel, EmotionLabel, NUM_EMOTIONS};
use crate::face::{prep_face, CascadeModel, FaceError, FaceImage};
use crate::gan::{synthesize, ExpressionDomain, GanCheckpoint, GanError};
use crate::mapping::MappingTable;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("EmptyName: user name must not be empty")]
    EmptyName,
    #[error("UnknownUser: {0}")]
    UnknownUser(String),
    #[error("NoPhotoOnProfile: user {0} has no prepared face")]
    NoPhotoOnProfile(String),
    #[error("ModelNotLoaded: {0} model is not loaded")]
    ModelNotLoaded(&'static str),
    #[error("UnknownBlob: {0}")]
    UnknownBlob(String),
    #[error("Inconsistent: {}", .0.join("; "))]
    Inconsistent(Vec<String>),
    #[error(transparent)]
    Face(#[from] FaceError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
    #[error("JsonError: {0}")]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::EmptyName => "EmptyName",
            PipelineError::UnknownUser(_) => "UnknownUser",
            PipelineError::NoPhotoOnProfile(_) => "NoPhotoOnProfile",
            PipelineError::ModelNotLoaded(_) => "ModelNotLoaded",
            PipelineError::UnknownBlob(_) => "UnknownBlob",
            PipelineError::Inconsistent(_) => "Inconsistent",
            PipelineError::Face(e) => e.kind(),
            PipelineError::Gan(e) => e.kind(),
            PipelineError::Io(_) => "IoError",
            PipelineError::Json(_) => "JsonError",
        }
    }
}

/// The models one transfer needs. Either network may be absent, in which
/// case operations that need it fail with `ModelNotLoaded`.
#[derive(Debug, Clone)]
pub struct Models {
    pub classifier: Option<ClassifierModel>,
    pub gan: Option<GanCheckpoint>,
    pub cascade: CascadeModel,
    pub mapping: MappingTable,
    /// Posts whose top probability falls below this are flagged.
    pub low_confidence: f64,
}

impl Models {
    pub fn new(classifier: Option<ClassifierModel>, gan: Option<GanCheckpoint>) -> Models {
        Models {
            classifier,
            gan,
            cascade: CascadeModel::frontal_face(),
            mapping: MappingTable::default(),
            low_confidence: crate::classifier::LOW_CONFIDENCE,
        }
    }

    fn classifier(&self) -> Result<&ClassifierModel, PipelineError> {
        self.classifier.as_ref().ok_or(PipelineError::ModelNotLoaded("classifier"))
    }

    fn gan(&self) -> Result<&GanCheckpoint, PipelineError> {
        self.gan.as_ref().ok_or(PipelineError::ModelNotLoaded("gan"))
    }

    /// Classifies `text` and re-renders an already prepared face.
    pub fn express(&self, text: &str, prepped: &FaceImage) -> Result<Transfer, PipelineError> {
        let (classifier, gan) = (self.classifier()?, self.gan()?);
        let c = classifier.classify(text);
        let domain = self.mapping.map(c.label);
        let avatar = synthesize(gan, prepped, domain)?;
        let low_confidence = c.probabilities.iter().cloned().fold(f64::MIN, f64::max) < self.low_confidence;
        Ok(Transfer { emotion: c.label, probabilities: c.probabilities, low_confidence, domain, avatar })
    }
}

/// Result of one text-to-expression transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct Transfer {
    pub emotion: EmotionLabel,
    pub probabilities: [f64; NUM_EMOTIONS],
    pub low_confidence: bool,
    pub domain: ExpressionDomain,
    pub avatar: FaceImage,
}

/// Classifies `text`, prepares `face` and synthesizes it with the mapped expression.
pub fn transfer_emotion(text: &str, face: &FaceImage, models: &Models) -> Result<Transfer, PipelineError> {
    models.classifier()?;
    models.gan()?;
    let prepped = prep_face(face, &models.cascade)?;
    models.express(text, &prepped)
}

/// Users, photos and posts over a [`ContentStore`].
///
/// Reads work on snapshots of the metadata. Mutations for one user are
/// serialized, and every metadata change is persisted before it becomes
/// visible.
pub struct BlogService {
    store: ContentStore,
    models: Arc<Models>,
    meta: RwLock<Arc<Metadata>>,
    /// Serializes metadata writers.
    writer: Mutex<DateTime<Utc>>,
    user_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl BlogService {
    /// Opens the store and refuses to start if it is inconsistent.
    pub fn open(store: ContentStore, models: Arc<Models>) -> Result<BlogService, PipelineError> {
        let meta = store.load_metadata()?;
        let problems = store.check(&meta);
        if !problems.is_empty() {
            return Err(PipelineError::Inconsistent(problems));
        }
        let last = meta.posts.iter().map(|p| p.created_at).max().unwrap_or(DateTime::<Utc>::MIN_UTC);
        Ok(BlogService {
            store,
            models,
            meta: RwLock::new(Arc::new(meta)),
            writer: Mutex::new(last),
            user_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn models(&self) -> &Models {
        &self.models
    }

    pub fn store(&self) -> &ContentStore {
        &self.store
    }

    pub fn snapshot(&self) -> Arc<Metadata> {
        self.meta.read().expect("metadata lock").clone()
    }

    fn user_lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.user_locks.lock().expect("lock table").entry(id.to_string()).or_default().clone()
    }

    /// Applies `f` to a copy of the metadata, persists it, then publishes it.
    fn commit<T>(&self, f: impl FnOnce(&mut Metadata, DateTime<Utc>) -> Result<T, PipelineError>) -> Result<T, PipelineError> {
        let mut last = self.writer.lock().expect("writer lock");
        // Strictly increasing timestamps even if the clock stalls or steps back.
        let now = Utc::now().max(*last + Duration::microseconds(1));
        let mut next = (*self.snapshot()).clone();
        let out = f(&mut next, now)?;
        self.store.save_metadata(&next)?;
        *self.meta.write().expect("metadata lock") = Arc::new(next);
        *last = now;
        Ok(out)
    }

    pub fn create_user(&self, name: &str) -> Result<UserRecord, PipelineError> {
        let name = name.trim();
        if name.is_empty() {
            return Err(PipelineError::EmptyName);
        }
        let user = UserRecord {
            id: uuid::Uuid::new_v4().simple().to_string(),
            name: name.to_string(),
            original_photo: None,
            prepped_face: None,
            current_avatar: None,
            current_emotion: None,
        };
        self.commit(|m, _| {
            m.users.insert(user.id.clone(), user.clone());
            Ok(user)
        })
    }

    pub fn get_profile(&self, id: &str) -> Result<UserRecord, PipelineError> {
        self.snapshot().users.get(id).cloned().ok_or_else(|| PipelineError::UnknownUser(id.to_string()))
    }

    /// The user's posts, newest first.
    pub fn list_posts(&self, id: &str) -> Result<Vec<PostRecord>, PipelineError> {
        let snap = self.snapshot();
        if !snap.users.contains_key(id) {
            return Err(PipelineError::UnknownUser(id.to_string()));
        }
        let mut posts: Vec<PostRecord> = snap.posts.iter().filter(|p| p.user_id == id).cloned().collect();
        posts.sort_by_key(|p| std::cmp::Reverse(p.created_at));
        Ok(posts)
    }

    /// Stores a new profile photo. When no face is found the original is
    /// still recorded and `NoFaceDetected` is returned; the prepared face and
    /// avatar keep their previous values.
    pub fn set_photo(&self, id: &str, bytes: &[u8]) -> Result<UserRecord, PipelineError> {
        let lock = self.user_lock(id);
        let _guard = lock.lock().expect("user lock");
        self.get_profile(id)?;
        let img = FaceImage::decode(bytes)?;
        let original = self.store.put(&img.encode_png())?;
        let prepped = match prep_face(&img, &self.models.cascade) {
            Ok(p) => Some(self.store.put(&p.encode_png())?),
            Err(FaceError::NoFaceDetected) => None,
            Err(e) => return Err(e.into()),
        };
        let user = self.commit(|m, _| {
            let u = m.users.get_mut(id).ok_or_else(|| PipelineError::UnknownUser(id.to_string()))?;
            u.original_photo = Some(original);
            if let Some(h) = &prepped {
                u.prepped_face = Some(h.clone());
                u.current_avatar = Some(h.clone());
                u.current_emotion = None;
            }
            Ok(u.clone())
        })?;
        match prepped {
            Some(_) => Ok(user),
            None => Err(FaceError::NoFaceDetected.into()),
        }
    }

    /// Classifies `text`, regenerates the avatar from the stored prepared
    /// face and records the post together with the new avatar.
    pub fn create_post(&self, id: &str, text: &str) -> Result<(PostRecord, UserRecord), PipelineError> {
        let lock = self.user_lock(id);
        let _guard = lock.lock().expect("user lock");
        let user = self.get_profile(id)?;
        let prepped_hash = user.prepped_face.ok_or_else(|| PipelineError::NoPhotoOnProfile(id.to_string()))?;
        let prepped = FaceImage::decode(&self.store.get(&prepped_hash)?)?;
        let t = self.models.express(text, &prepped)?;
        let avatar = self.store.put(&t.avatar.encode_png())?;
        self.commit(|m, now| {
            let post = PostRecord {
                id: uuid::Uuid::new_v4().simple().to_string(),
                user_id: id.to_string(),
                text: text.to_string(),
                emotion: EmotionLabel::from_code(argmax(&t.probabilities)).expect("valid code"),
                probabilities: t.probabilities,
                low_confidence: t.low_confidence,
                avatar: avatar.clone(),
                created_at: now,
            };
            let u = m.users.get_mut(id).ok_or_else(|| PipelineError::UnknownUser(id.to_string()))?;
            u.current_avatar = Some(avatar);
            u.current_emotion = Some(post.emotion);
            let u = u.clone();
            m.posts.push(post.clone());
            Ok((post, u))
        })
    }

    /// Re-runs the store's consistency check on the current metadata.
    pub fn check(&self) -> Vec<String> {
        self.store.check(&self.snapshot())
    }
}
