//! File-based model store: one pretty-printed JSON document per model.

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::TacticConfig;

use super::model::QualityModel;

/// Default staleness window: seven virtual days (ms).
pub const DEFAULT_STALENESS: u64 = 7 * 24 * 3600 * 1000;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelKey {
    pub suc_hash: String,
    pub function: String,
    pub workload_class: String,
}

impl ModelKey {
    pub fn of(model: &QualityModel) -> Self {
        ModelKey {
            suc_hash: model.suc_hash.clone(),
            function: model.function.clone(),
            workload_class: model.workload_class.clone(),
        }
    }

    pub fn file_name(&self) -> String {
        let hash: String = self.suc_hash.chars().take(16).collect();
        format!(
            "{}--{}--{}.json",
            sanitize(&self.function),
            sanitize(&self.workload_class),
            sanitize(&hash)
        )
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ModelStore {
    dir: PathBuf,
}

struct WriteLock(PathBuf);

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

impl ModelStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ModelStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, key: &ModelKey) -> PathBuf {
        self.dir.join(key.file_name())
    }

    /// Takes the per-key write lock; fails if another writer holds it.
    fn lock(&self, key: &ModelKey) -> Result<WriteLock> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.path_of(key).with_extension("json.lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(WriteLock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::ConcurrentWrite(key.file_name()))
            }
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn put(&self, model: &QualityModel) -> Result<PathBuf> {
        let key = ModelKey::of(model);
        let _lock = self.lock(&key)?;
        let path = self.path_of(&key);
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, crate::json::to_pretty(model)?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        log::debug!("stored model {}", path.display());
        Ok(path)
    }

    pub fn get(&self, key: &ModelKey) -> Result<Option<QualityModel>> {
        let path = self.path_of(key);
        if !path.exists() {
            return Ok(None);
        }
        let model: QualityModel = crate::json::read(&path)?;
        Ok((ModelKey::of(&model) == *key).then_some(model))
    }

    /// Every stored model, ordered by file name.
    pub fn list(&self) -> Result<Vec<QualityModel>> {
        if !self.dir.exists() {
            return Ok(Vec::new());
        }
        let mut paths: Vec<PathBuf> = fs::read_dir(&self.dir)
            .map_err(|e| Error::io(&self.dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths.iter().map(crate::json::read).collect()
    }

    /// Newest model of a function and class regardless of SUC hash.
    pub fn latest(&self, function: &str, workload_class: &str) -> Result<Option<QualityModel>> {
        Ok(self
            .list()?
            .into_iter()
            .filter(|m| m.function == function && m.workload_class == workload_class)
            .max_by(|a, b| {
                a.created_at
                    .cmp(&b.created_at)
                    .then_with(|| ModelKey::of(b).cmp(&ModelKey::of(a)))
            }))
    }

    /// Looks a model up by a textual key: a file name, or
    /// `function/class` (newest), or `function/class/hash-prefix`.
    pub fn find(&self, key: &str) -> Result<QualityModel> {
        let direct = self.dir.join(key);
        if key.ends_with(".json") && direct.exists() {
            return crate::json::read(&direct);
        }
        let parts: Vec<&str> = key.split('/').collect();
        let found = match parts.as_slice() {
            [f, c] => self.latest(f, c)?,
            [f, c, h] => self
                .list()?
                .into_iter()
                .find(|m| m.function == *f && m.workload_class == *c && m.suc_hash.starts_with(h)),
            _ => None,
        };
        found.ok_or_else(|| Error::ModelNotFound(key.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Cached,
    Rebuilt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub suc_hash: String,
    pub function: String,
    pub workload_class: String,
    /// Virtual time of the request (ms).
    pub now: u64,
}

impl ModelRequest {
    pub fn key(&self) -> ModelKey {
        ModelKey {
            suc_hash: self.suc_hash.clone(),
            function: self.function.clone(),
            workload_class: self.workload_class.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub model: QualityModel,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
}

/// Serves a stored model when allowed, otherwise runs `build` and stores
/// the result.
pub fn get_or_build_model(
    request: &ModelRequest,
    store: &ModelStore,
    tactics: &TacticConfig,
    staleness: u64,
    build: impl FnOnce() -> Result<QualityModel>,
) -> Result<ModelOutcome> {
    let key = request.key();
    if let Some(reference) = &tactics.reuse_model {
        let model = if reference == "any" {
            match store.get(&key)? {
                Some(m) => Some(m),
                None => store.latest(&request.function, &request.workload_class)?,
            }
        } else {
            store.get(&ModelKey {
                suc_hash: reference.clone(),
                ..key.clone()
            })?
        };
        let model = model.ok_or_else(|| {
            Error::ModelNotFound(format!(
                "{}/{} ({reference})",
                request.function, request.workload_class
            ))
        })?;
        let mut warnings = Vec::new();
        if model.suc_hash != request.suc_hash {
            warnings.push(format!(
                "stale: model of `{}` was built for a different function version",
                request.function
            ));
        }
        return Ok(ModelOutcome {
            model,
            provenance: Provenance::Cached,
            warnings,
        });
    }
    if let Some(model) = store.get(&key)? {
        if request.now.saturating_sub(model.created_at) <= staleness {
            return Ok(ModelOutcome {
                model,
                provenance: Provenance::Cached,
                warnings: Vec::new(),
            });
        }
    }
    let model = build()?;
    store.put(&model)?;
    Ok(ModelOutcome {
        model,
        provenance: Provenance::Rebuilt,
        warnings: Vec::new(),
    })
}
