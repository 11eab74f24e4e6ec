//! Session state and the in-memory store with optional JSON snapshots.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use kaya_core::dbdl::{format_dbdl, validate, TestCase, TestSuite};
use kaya_core::minisol::SourceUnit;
use kaya_core::pipeline::{list_variables, load_source, load_suite, InputError, VariableListing};
use kaya_core::runner::RunError;

use crate::form::CaseForm;

pub const DEFAULT_TTL: Duration = Duration::from_secs(24 * 60 * 60);

#[derive(Clone, Debug)]
pub struct Upload {
    pub name: String,
    pub source: String,
    pub unit: SourceUnit,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub uploads: Vec<Upload>,
    pub cases: Vec<TestCase>,
    /// Rendered JSON of the latest run.
    pub report: Option<Vec<u8>>,
    pub running: bool,
}

#[derive(Serialize, Deserialize)]
struct UploadSnapshot {
    name: String,
    source: String,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    id: String,
    created_at: u64,
    uploads: Vec<UploadSnapshot>,
    dbdl: String,
    #[serde(default)]
    report: Option<String>,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl Session {
    fn new(id: String) -> Self {
        Session {
            id,
            created_at: now(),
            uploads: Vec::new(),
            cases: Vec::new(),
            report: None,
            running: false,
        }
    }

    /// Adds or replaces an upload and lists its variables.
    pub fn upload(&mut self, name: &str, source: &str) -> Result<VariableListing, InputError> {
        let unit = load_source(name, source)?;
        let listing = list_variables(&unit)?;
        for c in &unit.contracts {
            if let Some(other) = self
                .uploads
                .iter()
                .find(|u| u.name != name && u.unit.contracts.iter().any(|d| d.name == c.name))
            {
                return Err(InputError::single(
                    "DuplicateContract",
                    format!(
                        "contract `{}` is already defined by upload {:?}",
                        c.name, other.name
                    ),
                ));
            }
        }
        let upload = Upload {
            name: name.to_string(),
            source: source.to_string(),
            unit,
        };
        match self.uploads.iter_mut().find(|u| u.name == name) {
            Some(slot) => *slot = upload,
            None => self.uploads.push(upload),
        }
        Ok(listing)
    }

    /// `(contract name, upload name)` for every uploaded contract.
    pub fn contract_files(&self) -> Vec<(String, String)> {
        self.uploads
            .iter()
            .flat_map(|u| {
                u.unit
                    .contracts
                    .iter()
                    .map(|c| (c.name.clone(), u.name.clone()))
            })
            .collect()
    }

    pub fn units(&self) -> Vec<SourceUnit> {
        self.uploads.iter().map(|u| u.unit.clone()).collect()
    }

    pub fn suite(&self) -> TestSuite {
        TestSuite {
            cases: self.cases.clone(),
        }
    }

    /// Validates the case against the uploaded contracts, then inserts it or
    /// replaces the case with the same name. Returns the whole suite as DBDL.
    pub fn put_case(&mut self, form: &CaseForm) -> Result<String, InputError> {
        let case = form.into_case(&self.contract_files())?;
        let contracts: Vec<_> = self
            .uploads
            .iter()
            .flat_map(|u| u.unit.contracts.iter().cloned())
            .collect();
        let diags = validate(
            &TestSuite {
                cases: vec![case.clone()],
            },
            &contracts,
        );
        if !diags.is_empty() {
            return Err(RunError::Invalid(diags).into());
        }
        match self.cases.iter_mut().find(|c| c.name == case.name) {
            Some(slot) => *slot = case,
            None => self.cases.push(case),
        }
        Ok(format_dbdl(&self.suite()))
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            id: self.id.clone(),
            created_at: self.created_at,
            uploads: self
                .uploads
                .iter()
                .map(|u| UploadSnapshot {
                    name: u.name.clone(),
                    source: u.source.clone(),
                })
                .collect(),
            dbdl: format_dbdl(&self.suite()),
            report: self
                .report
                .as_ref()
                .map(|r| String::from_utf8_lossy(r).into_owned()),
        }
    }

    fn restore(s: Snapshot) -> Result<Self, InputError> {
        let mut session = Session::new(s.id);
        session.created_at = s.created_at;
        for u in &s.uploads {
            session.upload(&u.name, &u.source)?;
        }
        session.cases = load_suite("snapshot", &s.dbdl)?.cases;
        session.report = s.report.map(String::into_bytes);
        Ok(session)
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("state directory {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("snapshot {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

pub type SessionRef = Arc<tokio::sync::Mutex<Session>>;

/// All live sessions. Each session has its own lock, so writes to one
/// session are serialized while other sessions proceed.
pub struct Store {
    sessions: Mutex<HashMap<String, SessionRef>>,
    ttl: Duration,
    state_dir: Option<PathBuf>,
}

impl Store {
    pub fn new(ttl: Duration, state_dir: Option<PathBuf>) -> Result<Self, StoreError> {
        let store = Store {
            sessions: Mutex::new(HashMap::new()),
            ttl,
            state_dir,
        };
        if let Some(dir) = &store.state_dir {
            store.load(dir)?;
        }
        Ok(store)
    }

    fn load(&self, dir: &Path) -> Result<(), StoreError> {
        let io = |source| StoreError::Io {
            path: dir.to_path_buf(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut map = self.sessions.lock().expect("store lock");
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let corrupt = |message: String| StoreError::Corrupt {
                path: path.clone(),
                message,
            };
            let text = std::fs::read_to_string(&path).map_err(|e| corrupt(e.to_string()))?;
            let snap: Snapshot = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
            let session = Session::restore(snap).map_err(|e| corrupt(e.to_string()))?;
            if !self.expired(&session) {
                map.insert(
                    session.id.clone(),
                    Arc::new(tokio::sync::Mutex::new(session)),
                );
            }
        }
        Ok(())
    }

    fn expired(&self, s: &Session) -> bool {
        now().saturating_sub(s.created_at) >= self.ttl.as_secs()
    }

    pub fn create(&self) -> String {
        let id = format!("{:032x}", rand::random::<u128>());
        let session = Session::new(id.clone());
        self.persist(&session);
        self.sessions
            .lock()
            .expect("store lock")
            .insert(id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
        id
    }

    /// Looks up a live session, dropping every expired one on the way.
    pub fn get(&self, id: &str) -> Option<SessionRef> {
        let mut map = self.sessions.lock().expect("store lock");
        let ttl = self.ttl.as_secs();
        let t = now();
        let dead: Vec<String> = map
            .iter()
            .filter(|(_, s)| {
                s.try_lock()
                    .map(|g| t.saturating_sub(g.created_at) >= ttl)
                    .unwrap_or(false)
            })
            .map(|(k, _)| k.clone())
            .collect();
        for k in dead {
            map.remove(&k);
            if let Some(dir) = &self.state_dir {
                let _ = std::fs::remove_file(dir.join(format!("{k}.json")));
            }
        }
        map.get(id).cloned()
    }

    /// Writes the session snapshot when a state directory is configured.
    /// Failures are reported on stderr and do not fail the request.
    pub fn persist(&self, session: &Session) {
        let Some(dir) = &self.state_dir else { return };
        let path = dir.join(format!("{}.json", session.id));
        let tmp = dir.join(format!("{}.json.tmp", session.id));
        let body = serde_json::to_vec(&session.snapshot()).expect("serializable");
        if let Err(e) = std::fs::write(&tmp, body).and_then(|_| std::fs::rename(&tmp, &path)) {
            eprintln!("warning: could not write {}: {e}", path.display());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "contract C { uint256 x; function inc() { x += 1; } }";

    #[test]
    fn ids_are_128_bit_hex_and_distinct() {
        let store = Store::new(DEFAULT_TTL, None).unwrap();
        let a = store.create();
        let b = store.create();
        assert_eq!(a.len(), 32);
        assert!(a.chars().all(|c| c.is_ascii_hexdigit()));
        assert_ne!(a, b);
    }

    #[test]
    fn zero_ttl_expires_immediately() {
        let store = Store::new(Duration::ZERO, None).unwrap();
        let id = store.create();
        assert!(store.get(&id).is_none());
    }

    #[test]
    fn duplicate_contract_across_uploads_is_refused() {
        let mut s = Session::new("x".into());
        s.upload("a.msol", SRC).unwrap();
        assert!(s.upload("a.msol", SRC).is_ok());
        let err = s.upload("b.msol", SRC).unwrap_err();
        assert_eq!(err.diagnostics[0].kind, "DuplicateContract");
    }

    #[test]
    fn snapshot_restores_sessions() {
        let dir = tempfile::tempdir().unwrap();
        let id = {
            let store = Store::new(DEFAULT_TTL, Some(dir.path().into())).unwrap();
            let id = store.create();
            let s = store.get(&id).unwrap();
            let mut g = s.try_lock().unwrap();
            g.upload("c.msol", SRC).unwrap();
            g.put_case(&CaseForm {
                name: "t".into(),
                accounts: vec![crate::form::AccountForm {
                    alias: "a".into(),
                    balance: "1 wei".into(),
                }],
                events: vec![crate::form::EventForm {
                    call: "C.inc()".into(),
                    from: "a".into(),
                    value: None,
                }],
                ..CaseForm::default()
            })
            .unwrap();
            store.persist(&g);
            id
        };
        let store = Store::new(DEFAULT_TTL, Some(dir.path().into())).unwrap();
        let s = store.get(&id).unwrap();
        let g = s.try_lock().unwrap();
        assert_eq!(g.uploads.len(), 1);
        assert_eq!(g.cases[0].name, "t");
    }
}
