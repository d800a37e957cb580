//! Session storage: one JSON file per session under a directory, cached in
//! memory, with an idle expiry.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{now, Hint, SessionError, SessionState, Status, TranscriptEntry};
use crate::diff::DiffReport;
use crate::sb3::{load_project, serialize_project, Asset};

pub const DEFAULT_TTL: Duration = Duration::from_secs(24 * 60 * 60);

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct StoredAsset {
    name: String,
    data: String,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct StoredSession {
    session_id: String,
    teacher: String,
    student: String,
    teacher_assets: Vec<StoredAsset>,
    student_assets: Vec<StoredAsset>,
    description: Option<String>,
    report_revision: u64,
    current_report: DiffReport,
    transcript: Vec<TranscriptEntry>,
    status: Status,
    current_hint: Option<Hint>,
    created_at: u64,
    updated_at: u64,
}

fn store_assets(a: &[Asset]) -> Vec<StoredAsset> {
    a.iter()
        .map(|x| StoredAsset {
            name: x.name.clone(),
            data: STANDARD.encode(&x.bytes),
        })
        .collect()
}

fn restore_assets(a: Vec<StoredAsset>) -> Result<Vec<Asset>, String> {
    a.into_iter()
        .map(|x| {
            Ok(Asset {
                bytes: STANDARD.decode(&x.data).map_err(|e| format!("asset {}: {e}", x.name))?,
                name: x.name,
            })
        })
        .collect()
}

impl StoredSession {
    fn from_state(s: &SessionState) -> Self {
        StoredSession {
            session_id: s.session_id.clone(),
            teacher: serialize_project(&s.teacher),
            student: serialize_project(&s.student),
            teacher_assets: store_assets(&s.teacher_assets),
            student_assets: store_assets(&s.student_assets),
            description: s.description.clone(),
            report_revision: s.report_revision,
            current_report: s.current_report.clone(),
            transcript: s.transcript.clone(),
            status: s.status,
            current_hint: s.current_hint.clone(),
            created_at: s.created_at,
            updated_at: s.updated_at,
        }
    }

    fn into_state(self) -> Result<SessionState, String> {
        Ok(SessionState {
            teacher: load_project(self.teacher.as_bytes()).map_err(|e| e.to_string())?,
            student: load_project(self.student.as_bytes()).map_err(|e| e.to_string())?,
            teacher_assets: restore_assets(self.teacher_assets)?,
            student_assets: restore_assets(self.student_assets)?,
            session_id: self.session_id,
            description: self.description,
            report_revision: self.report_revision,
            current_report: self.current_report,
            transcript: self.transcript,
            status: self.status,
            current_hint: self.current_hint,
            created_at: self.created_at,
            updated_at: self.updated_at,
        })
    }
}

type Handle = Arc<Mutex<SessionState>>;

/// Sessions keyed by id. With a directory, every change is written to
/// `<dir>/<id>.json` and sessions survive a restart.
pub struct SessionStore {
    dir: Option<PathBuf>,
    ttl: Duration,
    cache: Mutex<HashMap<String, Handle>>,
}

impl SessionStore {
    pub fn in_memory(ttl: Duration) -> Self {
        SessionStore {
            dir: None,
            ttl,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn open(dir: impl Into<PathBuf>, ttl: Duration) -> Result<Self, SessionError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| SessionError::Storage(format!("{}: {e}", dir.display())))?;
        Ok(SessionStore {
            dir: Some(dir),
            ttl,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn fresh_id(&self) -> String {
        format!("{:032x}", rand::thread_rng().gen::<u128>())
    }

    fn cache(&self) -> std::sync::MutexGuard<'_, HashMap<String, Handle>> {
        self.cache.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn is_empty(&self) -> bool {
        self.cache().is_empty()
            && self.dir.as_ref().is_none_or(|d| {
                fs::read_dir(d).map_or(true, |mut it| {
                    !it.any(|e| e.is_ok_and(|e| e.path().extension().is_some_and(|x| x == "json")))
                })
            })
    }

    fn path(&self, id: &str) -> Option<PathBuf> {
        let valid = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric());
        self.dir.as_ref().filter(|_| valid).map(|d| d.join(format!("{id}.json")))
    }

    fn expired(&self, s: &SessionState) -> bool {
        now().saturating_sub(s.updated_at) > self.ttl.as_secs()
    }

    pub fn insert(&self, state: SessionState) -> Result<(), SessionError> {
        self.persist(&state)?;
        self.cache().insert(state.session_id.clone(), Arc::new(Mutex::new(state)));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<Handle, SessionError> {
        let cached = self.cache().get(id).cloned();
        let handle = match cached {
            Some(h) => h,
            None => {
                let state = self.read(id)?;
                let mut cache = self.cache();
                cache
                    .entry(id.to_string())
                    .or_insert_with(|| Arc::new(Mutex::new(state)))
                    .clone()
            }
        };
        let expired = self.expired(&handle.lock().unwrap_or_else(|e| e.into_inner()));
        if expired {
            self.remove(id);
            return Err(SessionError::NotFound(id.to_string()));
        }
        Ok(handle)
    }

    fn read(&self, id: &str) -> Result<SessionState, SessionError> {
        let not_found = || SessionError::NotFound(id.to_string());
        let path = self.path(id).ok_or_else(not_found)?;
        let text = fs::read_to_string(&path).map_err(|_| not_found())?;
        let stored: StoredSession =
            serde_json::from_str(&text).map_err(|e| SessionError::Storage(format!("{}: {e}", path.display())))?;
        stored
            .into_state()
            .map_err(|e| SessionError::Storage(format!("{}: {e}", path.display())))
    }

    /// Write the session atomically (temp file, then rename).
    pub fn persist(&self, state: &SessionState) -> Result<(), SessionError> {
        let (Some(dir), Some(path)) = (&self.dir, self.path(&state.session_id)) else {
            return Ok(());
        };
        let err = |e: std::io::Error| SessionError::Storage(format!("{}: {e}", path.display()));
        let json = serde_json::to_vec(&StoredSession::from_state(state))
            .map_err(|e| SessionError::Storage(e.to_string()))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
        tmp.write_all(&json).map_err(err)?;
        tmp.persist(&path).map_err(|e| err(e.error))?;
        Ok(())
    }

    pub fn remove(&self, id: &str) {
        self.cache().remove(id);
        if let Some(p) = self.path(id) {
            let _ = fs::remove_file(p);
        }
    }

    /// Drop idle sessions; returns how many were removed.
    pub fn purge_expired(&self) -> usize {
        let mut ids: Vec<String> = self.cache().keys().cloned().collect();
        if let Some(dir) = &self.dir {
            if let Ok(entries) = fs::read_dir(dir) {
                for e in entries.flatten() {
                    let p = e.path();
                    if p.extension().is_some_and(|x| x == "json") {
                        if let Some(stem) = p.file_stem() {
                            ids.push(stem.to_string_lossy().into_owned());
                        }
                    }
                }
            }
        }
        ids.sort();
        ids.dedup();
        ids.into_iter()
            .filter(|id| matches!(self.get(id), Err(SessionError::NotFound(_))))
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::seeded_pairs;
    use crate::diff::diff_projects;

    fn state(id: &str, updated_at: u64) -> SessionState {
        let f = &seeded_pairs()[2];
        SessionState {
            session_id: id.into(),
            teacher: f.teacher.clone(),
            student: f.student.clone(),
            teacher_assets: vec![Asset {
                name: "a.svg".into(),
                bytes: b"<svg/>".to_vec(),
            }],
            student_assets: Vec::new(),
            description: Some("pong".into()),
            report_revision: 3,
            current_report: diff_projects(&f.student, &f.teacher).unwrap(),
            transcript: Vec::new(),
            status: Status::InProgress,
            current_hint: None,
            created_at: updated_at,
            updated_at,
        }
    }

    #[test]
    fn survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        let s = state("abc123", now());
        SessionStore::open(dir.path(), DEFAULT_TTL).unwrap().insert(s.clone()).unwrap();
        let reopened = SessionStore::open(dir.path(), DEFAULT_TTL).unwrap();
        let got = reopened.get("abc123").unwrap();
        let got = got.lock().unwrap();
        assert_eq!(got.report_revision, 3);
        assert_eq!(got.teacher_assets, s.teacher_assets);
        assert_eq!(got.current_report, s.current_report);
        assert_eq!(crate::diff::diff_projects(&got.student, &got.teacher).unwrap(), s.current_report);
    }

    #[test]
    fn idle_sessions_expire() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path(), Duration::from_secs(60)).unwrap();
        store.insert(state("old1", now() - 3600)).unwrap();
        store.insert(state("new1", now())).unwrap();
        assert_eq!(store.purge_expired(), 1);
        assert!(matches!(store.get("old1"), Err(SessionError::NotFound(_))));
        assert!(store.get("new1").is_ok());
    }

    #[test]
    fn rejects_path_like_ids() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path(), DEFAULT_TTL).unwrap();
        assert!(matches!(store.get("../etc/passwd"), Err(SessionError::NotFound(_))));
    }
}
