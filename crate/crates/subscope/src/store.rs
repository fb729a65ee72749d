//! In-memory sessions backed by JSON archives in a data directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use subscope_core::search::SearchResultDoc;
use tokio::sync::RwLock;

use crate::error::{ErrorDetail, ServiceError, ServiceResult};
use crate::session::{new_id, Session, SessionArchive};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub session_id: String,
    pub status: JobState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorDetail>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<SearchResultDoc>,
}

pub type SessionHandle = Arc<RwLock<Session>>;

#[derive(Default)]
pub struct Store {
    data_dir: Option<PathBuf>,
    sessions: Mutex<HashMap<String, SessionHandle>>,
    jobs: Mutex<HashMap<String, JobStatus>>,
}

fn archive_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

pub fn read_archive(path: &Path) -> ServiceResult<Session> {
    let text = std::fs::read_to_string(path)?;
    let archive: SessionArchive = serde_json::from_str(&text)?;
    Session::from_archive(archive)
}

/// Writes through a temporary file so a crash never leaves half an archive.
pub fn write_archive(path: &Path, s: &Session) -> ServiceResult<()> {
    let text = serde_json::to_vec_pretty(&s.to_archive())?;
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

impl Store {
    /// A store without persistence.
    pub fn in_memory() -> Self {
        Store::default()
    }

    /// Loads every archive found in `dir`, creating it if needed.
    pub fn open(dir: impl Into<PathBuf>) -> ServiceResult<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let s = read_archive(&path)?;
                sessions.insert(s.id.clone(), Arc::new(RwLock::new(s)));
            }
        }
        Ok(Store {
            data_dir: Some(dir),
            sessions: Mutex::new(sessions),
            jobs: Mutex::new(HashMap::new()),
        })
    }

    pub fn persist(&self, s: &Session) -> ServiceResult<()> {
        match &self.data_dir {
            Some(dir) => write_archive(&archive_path(dir, &s.id), s),
            None => Ok(()),
        }
    }

    pub fn create(&self) -> ServiceResult<String> {
        self.insert(Session::new())
    }

    /// Adds a session under its own id; fails if the id is taken.
    pub fn insert(&self, s: Session) -> ServiceResult<String> {
        let id = s.id.clone();
        self.persist(&s)?;
        let mut map = self.sessions.lock().unwrap();
        if map.contains_key(&id) {
            return Err(ServiceError::Conflict(format!("session `{id}` already exists")));
        }
        map.insert(id.clone(), Arc::new(RwLock::new(s)));
        Ok(id)
    }

    pub fn get(&self, id: &str) -> ServiceResult<SessionHandle> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no session `{id}`")))
    }

    /// Registers a running search job, refusing a second one for the session.
    pub fn start_job(&self, session_id: &str) -> ServiceResult<String> {
        let mut jobs = self.jobs.lock().unwrap();
        if jobs
            .values()
            .any(|j| j.session_id == session_id && j.status == JobState::Running)
        {
            return Err(ServiceError::Conflict(format!(
                "session `{session_id}` already has a running search"
            )));
        }
        let job_id = new_id();
        jobs.insert(
            job_id.clone(),
            JobStatus {
                job_id: job_id.clone(),
                session_id: session_id.to_string(),
                status: JobState::Running,
                error: None,
                result: None,
            },
        );
        Ok(job_id)
    }

    pub fn finish_job(&self, job_id: &str, outcome: ServiceResult<SearchResultDoc>) {
        if let Some(j) = self.jobs.lock().unwrap().get_mut(job_id) {
            match outcome {
                Ok(doc) => {
                    j.status = JobState::Done;
                    j.result = Some(doc);
                }
                Err(e) => {
                    j.status = JobState::Failed;
                    j.error = Some(e.body().error);
                }
            }
        }
    }

    pub fn job(&self, job_id: &str) -> ServiceResult<JobStatus> {
        self.jobs
            .lock()
            .unwrap()
            .get(job_id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no job `{job_id}`")))
    }
}
