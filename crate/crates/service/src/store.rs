//! One JSON file per session under a root directory.
//!
//! Writes go to a hidden temporary file that is synced and then renamed over
//! the record, so a reader (or a restart) sees either the old or the new
//! state, never a torn one. Mutations of one session are serialized by a
//! per-session lock held across load, change and write.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use thiserror::Error;
use tutor_core::Session;

const EXTENSION: &str = "json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no session with id `{0}`")]
    NotFound(String),
    #[error("session record `{id}` is unreadable: {message}")]
    CorruptRecord { id: String, message: String },
    #[error("session store I/O failed: {0}")]
    Io(#[from] std::io::Error),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::NotFound(_) => "session-not-found",
            StoreError::CorruptRecord { .. } => "corrupt-record",
            StoreError::Io(_) => "store-io",
        }
    }
}

#[derive(Debug)]
pub struct SessionStore {
    root: PathBuf,
    index: Mutex<BTreeMap<String, PathBuf>>,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

/// Ids become file names, so only a conservative alphabet is accepted.
fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl SessionStore {
    /// Opens (creating if needed) the store at `root` and indexes the records
    /// already there. Unreadable records are indexed too; they fail on restore.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let mut index = BTreeMap::new();
        for entry in fs::read_dir(&root)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some(EXTENSION) {
                continue;
            }
            if let Some(id) = path.file_stem().and_then(|s| s.to_str()) {
                if valid_id(id) {
                    index.insert(id.to_string(), path.clone());
                }
            }
        }
        Ok(SessionStore {
            root,
            index: Mutex::new(index),
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn ids(&self) -> Vec<String> {
        lock(&self.index).keys().cloned().collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        lock(&self.index).contains_key(id)
    }

    fn path_for(&self, id: &str) -> PathBuf {
        self.root.join(format!("{id}.{EXTENSION}"))
    }

    fn session_lock(&self, id: &str) -> Arc<Mutex<()>> {
        lock(&self.locks).entry(id.to_string()).or_default().clone()
    }

    pub fn persist(&self, session: &Session) -> Result<(), StoreError> {
        if !valid_id(&session.id) {
            return Err(StoreError::NotFound(session.id.clone()));
        }
        let guard = self.session_lock(&session.id);
        let _held = lock(&guard);
        self.write(session)
    }

    fn write(&self, session: &Session) -> Result<(), StoreError> {
        let path = self.path_for(&session.id);
        let tmp = self.root.join(format!(".{}.{EXTENSION}.tmp", session.id));
        let json = serde_json::to_vec_pretty(session).expect("sessions always serialize");
        {
            let mut file = fs::File::create(&tmp)?;
            file.write_all(&json)?;
            file.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        lock(&self.index).insert(session.id.clone(), path);
        Ok(())
    }

    pub fn restore(&self, id: &str) -> Result<Session, StoreError> {
        let path = lock(&self.index)
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        let bytes = match fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let session: Session =
            serde_json::from_slice(&bytes).map_err(|e| StoreError::CorruptRecord {
                id: id.to_string(),
                message: e.to_string(),
            })?;
        if session.id != id {
            return Err(StoreError::CorruptRecord {
                id: id.to_string(),
                message: format!("record holds session `{}`", session.id),
            });
        }
        Ok(session)
    }

    /// Loads, changes and writes back one session while holding its lock.
    /// The record is only rewritten when `change` succeeds.
    pub fn update<T, E>(
        &self,
        id: &str,
        change: impl FnOnce(&mut Session) -> Result<T, E>,
    ) -> Result<Result<T, E>, StoreError> {
        let guard = self.session_lock(id);
        let _held = lock(&guard);
        let mut session = self.restore(id)?;
        let outcome = change(&mut session);
        if outcome.is_ok() {
            self.write(&session)?;
        }
        Ok(outcome)
    }

    /// Every readable session, plus the errors for those that are not.
    pub fn load_all(&self) -> (Vec<Session>, Vec<StoreError>) {
        let mut sessions = Vec::new();
        let mut errors = Vec::new();
        for id in self.ids() {
            match self.restore(&id) {
                Ok(s) => sessions.push(s),
                Err(e) => errors.push(e),
            }
        }
        (sessions, errors)
    }
}
