//! Background job table, persisted as JSON next to the run artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sizer_core::{json, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Sizing,
    Experiment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub kind: JobKind,
    pub status: JobState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
    /// HTTP status a poll of a failed job answers with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_status: Option<u16>,
}

/// Error payload shared by every endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub violations: Vec<String>,
}

#[derive(Debug)]
pub struct JobTable {
    path: PathBuf,
    jobs: BTreeMap<String, Job>,
}

impl JobTable {
    /// Loads the table; jobs still marked running did not survive a restart.
    pub fn load(path: &Path) -> Result<Self> {
        let mut jobs: BTreeMap<String, Job> = if path.exists() {
            json::read(path)?
        } else {
            BTreeMap::new()
        };
        for j in jobs.values_mut().filter(|j| j.status == JobState::Running) {
            j.status = JobState::Failed;
            j.error = Some(ErrorBody {
                error: "interrupted".into(),
                violations: vec!["the service restarted before the job finished".into()],
            });
            j.error_status = Some(500);
        }
        Ok(JobTable {
            path: path.to_path_buf(),
            jobs,
        })
    }

    pub fn get(&self, id: &str) -> Option<&Job> {
        self.jobs.get(id)
    }

    pub fn put(&mut self, job: Job) -> Result<()> {
        self.jobs.insert(job.id.clone(), job);
        json::write(&self.path, &self.jobs)
    }
}
