//! Directory-backed session store.
//!
//! ```text
//! <root>/<session_id>/session.json
//! <root>/<session_id>/base.png
//! <root>/<session_id>/step-0001.png ...
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place.
//! Step images go first and `session.json` last, so an interrupted write
//! leaves the previously committed session readable.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use segedit_core::pipeline::{EditInstruction, EditSession, EditStep, PipelineConfig, PipelineError, StepStatus};
use segedit_core::ranking::Selection;
use segedit_core::{CoreError, ImageBuffer, Mask};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const SESSION_FILE: &str = "session.json";
pub const BASE_IMAGE_FILE: &str = "base.png";

pub fn step_image_file(k: usize) -> String {
    format!("step-{k:04}.png")
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("session {0} not found")]
    NotFound(String),
    #[error("invalid session id {0:?}")]
    BadId(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: unsupported schema version {found}")]
    Schema { path: PathBuf, found: u32 },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: CoreError,
    },
    #[error("stored session is inconsistent: {0}")]
    Inconsistent(#[from] PipelineError),
}

/// A session together with its creation time.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredSession {
    pub created_at: DateTime<Utc>,
    pub session: EditSession,
}

impl StoredSession {
    /// Stamps `session` with the current time, truncated to milliseconds.
    pub fn new(session: EditSession) -> Self {
        let now = Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true);
        Self {
            created_at: DateTime::parse_from_rfc3339(&now).expect("own format").with_timezone(&Utc),
            session,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionRecord {
    schema: u32,
    session_id: String,
    created_at: DateTime<Utc>,
    width: u32,
    height: u32,
    config: PipelineConfig,
    base_image: String,
    steps: Vec<StepRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepRecord {
    index: usize,
    instruction: EditInstruction,
    selection: Option<Selection>,
    dilated_mask: Mask,
    output_image: String,
    seed: u64,
    status: StepStatus,
}

/// Session ids become directory names, so only a conservative alphabet is
/// accepted.
pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Serializes `stored` exactly as [`Store`] writes it to `session.json`.
pub fn session_json(stored: &StoredSession) -> Vec<u8> {
    let s = &stored.session;
    let record = SessionRecord {
        schema: SCHEMA_VERSION,
        session_id: s.session_id.clone(),
        created_at: stored.created_at,
        width: s.base_image.width(),
        height: s.base_image.height(),
        config: s.config.clone(),
        base_image: BASE_IMAGE_FILE.into(),
        steps: s
            .steps
            .iter()
            .enumerate()
            .map(|(i, step)| StepRecord {
                index: i + 1,
                instruction: step.instruction.clone(),
                selection: step.selection.clone(),
                dilated_mask: step.dilated_mask.clone(),
                output_image: step_image_file(i + 1),
                seed: step.seed,
                status: step.status.clone(),
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&record).expect("record is serializable");
    out.push(b'\n');
    out
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_dir(&self, id: &str) -> Result<PathBuf, StoreError> {
        if !valid_session_id(id) {
            return Err(StoreError::BadId(id.into()));
        }
        Ok(self.root.join(id))
    }

    pub fn exists(&self, id: &str) -> bool {
        self.session_dir(id)
            .map(|d| d.join(SESSION_FILE).is_file())
            .unwrap_or(false)
    }

    /// Writes every image and the record.
    pub fn save(&self, stored: &StoredSession) -> Result<(), StoreError> {
        self.save_from(stored, 0)
    }

    /// See [`write_session_dir`].
    pub fn save_from(&self, stored: &StoredSession, from_step: usize) -> Result<(), StoreError> {
        write_session_dir(&self.session_dir(&stored.session.session_id)?, stored, from_step)
    }

    pub fn load(&self, id: &str) -> Result<StoredSession, StoreError> {
        let dir = self.session_dir(id)?;
        if !dir.join(SESSION_FILE).is_file() {
            return Err(StoreError::NotFound(id.into()));
        }
        let stored = read_session_dir(&dir)?;
        if stored.session.session_id != id {
            return Err(PipelineError::Inconsistent(format!("record names session {}", stored.session.session_id)).into());
        }
        Ok(stored)
    }

    /// Ids of every session directory holding a record.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let entries = match fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&self.root, e)),
        };
        let mut ids: Vec<String> = entries
            .flatten()
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|id| self.exists(id))
            .collect();
        ids.sort();
        Ok(ids)
    }
}

/// Writes the images of steps `from_step..` (0 is the base image), then the
/// record, then removes images of steps that no longer exist. Pass
/// `from_step = steps.len()` after appending one step and `steps.len() + 1`
/// after an undo.
pub fn write_session_dir(dir: &Path, stored: &StoredSession, from_step: usize) -> Result<(), StoreError> {
    let s = &stored.session;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for k in from_step..=s.steps.len() {
        let name = if k == 0 { BASE_IMAGE_FILE.to_string() } else { step_image_file(k) };
        let path = dir.join(name);
        let img = s.image_at(k).expect("in range");
        let png = img.to_png().map_err(|e| StoreError::Image { path: path.clone(), source: e })?;
        write_atomic(&path, &png)?;
    }
    write_atomic(&dir.join(SESSION_FILE), &session_json(stored))?;
    prune(dir, s.steps.len())
}

fn prune(dir: &Path, len: usize) -> Result<(), StoreError> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    for entry in entries.flatten() {
        let name = entry.file_name();
        let Some(k) = name
            .to_str()
            .and_then(|n| n.strip_prefix("step-"))
            .and_then(|n| n.strip_suffix(".png"))
            .and_then(|n| n.parse::<usize>().ok())
        else {
            continue;
        };
        if k > len {
            let path = entry.path();
            fs::remove_file(&path).map_err(|e| io_err(&path, e))?;
        }
    }
    Ok(())
}

/// Reads a session directory written by [`write_session_dir`].
pub fn read_session_dir(dir: &Path) -> Result<StoredSession, StoreError> {
    let path = dir.join(SESSION_FILE);
    let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
    let value: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Json { path: path.clone(), source: e })?;
    let found = value.get("schema").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != SCHEMA_VERSION {
        return Err(StoreError::Schema { path, found });
    }
    let record: SessionRecord =
        serde_json::from_value(value).map_err(|e| StoreError::Json { path: path.clone(), source: e })?;

    let base_image = read_png(dir, &record.base_image)?;
    if base_image.dimensions() != (record.width, record.height) {
        return Err(PipelineError::Inconsistent("base image size differs from record".into()).into());
    }
    let steps = record
        .steps
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            if r.index != i + 1 {
                return Err(PipelineError::Inconsistent(format!("step {} stored at position {}", r.index, i + 1)).into());
            }
            Ok(EditStep {
                output_image: read_png(dir, &r.output_image)?,
                instruction: r.instruction,
                selection: r.selection,
                dilated_mask: r.dilated_mask,
                seed: r.seed,
                status: r.status,
            })
        })
        .collect::<Result<Vec<_>, StoreError>>()?;
    let session = EditSession {
        session_id: record.session_id,
        base_image,
        steps,
        config: record.config,
    };
    session.validate()?;
    Ok(StoredSession {
        created_at: record.created_at,
        session,
    })
}

fn read_png(dir: &Path, name: &str) -> Result<ImageBuffer, StoreError> {
    if name.contains(['/', '\\']) || name.starts_with('.') {
        return Err(PipelineError::Inconsistent(format!("image path {name:?} escapes the session directory")).into());
    }
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
    ImageBuffer::from_png(&bytes).map_err(|e| StoreError::Image { path, source: e })
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to a temporary file beside `path`, syncs it and renames
/// it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::Builder::new()
        .prefix(".tmp-")
        .tempfile_in(dir)
        .map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use segedit_core::backends::BackendStack;
    use segedit_core::fixtures;
    use segedit_core::pipeline::{parse_instructions, run_session_with};

    fn sample() -> StoredSession {
        let (img, _) = fixtures::two_disks();
        let script = parse_instructions("replace red with blue; replace orange with cyan; replace green with yellow").unwrap();
        let cfg = PipelineConfig {
            threshold: 0.5,
            temperature: 0.1,
            ..PipelineConfig::default()
        };
        StoredSession::new(run_session_with("s-1", &img, &script, &BackendStack::reference(), &cfg, None).unwrap())
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        let stored = sample();
        store.save(&stored).unwrap();
        let first = fs::read(dir.path().join("s-1").join(SESSION_FILE)).unwrap();
        let loaded = store.load("s-1").unwrap();
        assert_eq!(loaded, stored);
        store.save(&loaded).unwrap();
        assert_eq!(fs::read(dir.path().join("s-1").join(SESSION_FILE)).unwrap(), first);
        assert_eq!(store.list().unwrap(), vec!["s-1".to_string()]);
    }

    #[test]
    fn undo_prunes_images() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        let mut stored = sample();
        store.save(&stored).unwrap();
        stored.session.undo(1).unwrap();
        store.save_from(&stored, 2).unwrap();
        let sdir = dir.path().join("s-1");
        assert!(sdir.join("step-0001.png").exists());
        assert!(!sdir.join("step-0002.png").exists());
        assert_eq!(store.load("s-1").unwrap(), stored);
        let leftovers: Vec<_> = fs::read_dir(&sdir)
            .unwrap()
            .flatten()
            .filter(|e| e.file_name().to_string_lossy().starts_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn rejects_bad_records() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        assert!(matches!(store.load("nope"), Err(StoreError::NotFound(_))));
        assert!(matches!(store.load("../etc"), Err(StoreError::BadId(_))));

        let stored = sample();
        store.save(&stored).unwrap();
        let path = dir.path().join("s-1").join(SESSION_FILE);
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, text.replacen("\"schema\": 1", "\"schema\": 2", 1)).unwrap();
        assert!(matches!(store.load("s-1"), Err(StoreError::Schema { found: 2, .. })));

        fs::write(&path, text.replacen("step-0002.png", "../x.png", 1)).unwrap();
        assert!(matches!(store.load("s-1"), Err(StoreError::Inconsistent(_))));

        // a different image under a step name breaks the chain invariants
        fs::write(&path, &text).unwrap();
        fs::copy(dir.path().join("s-1/base.png"), dir.path().join("s-1/step-0002.png")).unwrap();
        assert!(matches!(store.load("s-1"), Err(StoreError::Inconsistent(_))));
    }

    #[test]
    fn interrupted_step_keeps_prior_state() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        let mut stored = sample();
        stored.session.undo(1).unwrap();
        store.save(&stored).unwrap();
        // a new step image landed but the record was never rewritten
        let (img, _) = fixtures::red_disk();
        fs::write(dir.path().join("s-1").join(step_image_file(2)), img.to_png().unwrap()).unwrap();
        assert_eq!(store.load("s-1").unwrap(), stored);
    }
}
