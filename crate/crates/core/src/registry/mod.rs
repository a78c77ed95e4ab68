//! Federated video source registry.
//!
//! Sources from heterogeneous systems are described by [`VideoSource`]
//! records. Their connection details ([`AccessParamDoc`]) are sealed with
//! the master key before they touch the record file and are only opened
//! for sessions of operator rank or above. [`Registry::poll_sources`]
//! re-reads each source's status document and re-seals changed parameters.

mod crypto;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crypto::{AccessParams, MasterKey, Sealer};

use crate::auth::{Session, UserType};
use crate::store::{RecordLog, StoreError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("master key is not configured")]
    KeyUnavailable,
    #[error("invalid master key: {0}")]
    InvalidKey(String),
    #[error("source `{0}` already registered")]
    DuplicateSource(String),
    #[error("no such source `{0}`")]
    NoSuchSource(String),
    #[error("insufficient privileges")]
    Forbidden,
    #[error("access parameters of `{0}` failed to decrypt")]
    CorruptRecord(String),
    #[error("invalid source descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("registry store: {0}")]
    Store(String),
}

impl From<StoreError> for RegistryError {
    fn from(e: StoreError) -> Self {
        RegistryError::Store(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemType {
    PublicSecurity,
    Traffic,
    CityManagement,
    WorkSafety,
    MobileCommand,
    Provider,
}

impl SystemType {
    pub const ALL: [SystemType; 6] = [
        SystemType::PublicSecurity,
        SystemType::Traffic,
        SystemType::CityManagement,
        SystemType::WorkSafety,
        SystemType::MobileCommand,
        SystemType::Provider,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SystemType::PublicSecurity => "public_security",
            SystemType::Traffic => "traffic",
            SystemType::CityManagement => "city_management",
            SystemType::WorkSafety => "work_safety",
            SystemType::MobileCommand => "mobile_command",
            SystemType::Provider => "provider",
        }
    }
}

impl fmt::Display for SystemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemType {
    type Err = RegistryError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SystemType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| RegistryError::InvalidDescriptor(format!("unknown system type `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceStatus {
    Online,
    Offline,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credentials {
    pub username: String,
    pub password: String,
}

/// Plaintext access parameters. Never persisted in this form.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessParamDoc {
    pub endpoint: String,
    pub protocol: String,
    pub credentials: Credentials,
    pub codec: String,
}

/// What a caller supplies to register a source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub id: String,
    pub name: String,
    pub system_type: SystemType,
    pub region: String,
    #[serde(default)]
    pub location: Option<GeoPoint>,
    /// URL of the source's status document, if it can be polled.
    #[serde(default)]
    pub poll_address: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoSource {
    pub id: String,
    pub name: String,
    pub system_type: SystemType,
    pub region: String,
    pub location: Option<GeoPoint>,
    pub status: SourceStatus,
    pub params_version: u64,
    /// Unix milliseconds.
    pub updated_at: u64,
    pub poll_address: Option<String>,
}

/// Search result entry. Carries nothing that leads to the credentials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub id: String,
    pub name: String,
    pub system_type: SystemType,
    pub region: String,
    pub location: Option<GeoPoint>,
    pub status: SourceStatus,
    pub params_version: u64,
}

impl From<&VideoSource> for SourceSummary {
    fn from(s: &VideoSource) -> Self {
        Self {
            id: s.id.clone(),
            name: s.name.clone(),
            system_type: s.system_type,
            region: s.region.clone(),
            location: s.location,
            status: s.status,
            params_version: s.params_version,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub source: VideoSource,
    pub params: AccessParams,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchQuery {
    /// Exact region; empty matches every region.
    #[serde(default)]
    pub region: String,
    /// Case-insensitive substring of the source name.
    #[serde(default)]
    pub keyword: Option<String>,
    #[serde(default)]
    pub system_type: Option<SystemType>,
}

impl SearchQuery {
    pub fn region(region: impl Into<String>) -> Self {
        Self { region: region.into(), ..Default::default() }
    }

    pub fn matches(&self, s: &VideoSource) -> bool {
        let region_ok = self.region.is_empty() || s.region == self.region;
        let keyword_ok = match self.keyword.as_deref() {
            None | Some("") => true,
            Some(k) => s.name.to_lowercase().contains(&k.to_lowercase()),
        };
        let type_ok = self.system_type.is_none_or(|t| t == s.system_type);
        region_ok && keyword_ok && type_ok
    }
}

/// Partial update; `None` fields are left as they are.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceUpdate {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub system_type: Option<SystemType>,
    #[serde(default)]
    pub region: Option<String>,
    #[serde(default)]
    pub location: Option<GeoPoint>,
    #[serde(default)]
    pub poll_address: Option<String>,
    #[serde(default)]
    pub params: Option<AccessParamDoc>,
}

/// Document served by a pollable source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeDoc {
    pub status: SourceStatus,
    pub params: AccessParamDoc,
}

/// Fetches a source's status document.
pub trait SourceProbe: Send + Sync {
    fn fetch(&self, address: &str) -> Result<ProbeDoc, String>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "change", content = "status", rename_all = "snake_case")]
pub enum PollChange {
    ParamsChanged,
    StatusChanged(SourceStatus),
    None,
}

struct Writer {
    records: BTreeMap<String, SourceRecord>,
    log: RecordLog<SourceRecord>,
}

pub struct Registry {
    sources: RwLock<BTreeMap<String, SourceRecord>>,
    writer: Mutex<Writer>,
    sealer: Option<Sealer>,
}

impl Registry {
    pub fn in_memory(key: Option<&MasterKey>, key_id: &str) -> Self {
        Self::build(RecordLog::in_memory(), BTreeMap::new(), key, key_id)
    }

    pub fn open(path: impl AsRef<Path>, key: Option<&MasterKey>, key_id: &str) -> Result<Self, RegistryError> {
        let (log, records) = RecordLog::open(path)?;
        Ok(Self::build(log, records, key, key_id))
    }

    fn build(log: RecordLog<SourceRecord>, records: BTreeMap<String, SourceRecord>, key: Option<&MasterKey>, key_id: &str) -> Self {
        Self {
            sources: RwLock::new(records.clone()),
            writer: Mutex::new(Writer { records, log }),
            sealer: key.map(|k| Sealer::new(k, key_id)),
        }
    }

    fn sealer(&self) -> Result<&Sealer, RegistryError> {
        self.sealer.as_ref().ok_or(RegistryError::KeyUnavailable)
    }

    fn persist(&self, w: &mut Writer, record: SourceRecord) -> Result<(), RegistryError> {
        let id = record.source.id.clone();
        w.log.put(&id, &record)?;
        w.records.insert(id.clone(), record.clone());
        let Writer { records, log } = w;
        log.maybe_compact(records)?;
        self.sources.write().insert(id, record);
        Ok(())
    }

    pub fn register_source(&self, desc: SourceDescriptor, params: &AccessParamDoc, now_ms: u64) -> Result<String, RegistryError> {
        let sealer = self.sealer()?;
        if desc.id.trim().is_empty() {
            return Err(RegistryError::InvalidDescriptor("id must not be empty".into()));
        }
        if desc.name.trim().is_empty() {
            return Err(RegistryError::InvalidDescriptor("name must not be empty".into()));
        }
        let mut w = self.writer.lock();
        if w.records.contains_key(&desc.id) {
            return Err(RegistryError::DuplicateSource(desc.id));
        }
        let record = SourceRecord {
            params: sealer.seal(&desc.id, params),
            source: VideoSource {
                id: desc.id.clone(),
                name: desc.name,
                system_type: desc.system_type,
                region: desc.region,
                location: desc.location,
                status: SourceStatus::Unknown,
                params_version: 1,
                updated_at: now_ms,
                poll_address: desc.poll_address,
            },
        };
        self.persist(&mut w, record)?;
        tracing::info!(target: "audit", source = %desc.id, "source registered");
        Ok(desc.id)
    }

    /// Applies `update`. The parameter version moves only if the decrypted
    /// parameters actually differ.
    pub fn update_source(&self, id: &str, update: SourceUpdate, now_ms: u64) -> Result<VideoSource, RegistryError> {
        let sealer = self.sealer()?;
        let mut w = self.writer.lock();
        let mut record = w.records.get(id).cloned().ok_or_else(|| RegistryError::NoSuchSource(id.to_string()))?;
        let s = &mut record.source;
        if let Some(v) = update.name {
            s.name = v;
        }
        if let Some(v) = update.system_type {
            s.system_type = v;
        }
        if let Some(v) = update.region {
            s.region = v;
        }
        if let Some(v) = update.location {
            s.location = Some(v);
        }
        if let Some(v) = update.poll_address {
            s.poll_address = Some(v);
        }
        if let Some(new_params) = update.params {
            let current = sealer.open(id, &record.params)?;
            if current != new_params {
                record.params = sealer.seal(id, &new_params);
                record.source.params_version += 1;
            }
        }
        record.source.updated_at = now_ms;
        let out = record.source.clone();
        self.persist(&mut w, record)?;
        Ok(out)
    }

    pub fn get(&self, id: &str) -> Option<VideoSource> {
        self.sources.read().get(id).map(|r| r.source.clone())
    }

    pub fn len(&self) -> usize {
        self.sources.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Matching sources, ordered by id.
    pub fn search(&self, query: &SearchQuery) -> Vec<SourceSummary> {
        self.sources
            .read()
            .values()
            .filter(|r| query.matches(&r.source))
            .map(|r| SourceSummary::from(&r.source))
            .collect()
    }

    /// Decrypted parameters of `id` for an operator-or-higher session.
    pub fn get_access_params(&self, id: &str, session: &Session) -> Result<AccessParamDoc, RegistryError> {
        let record = self.sources.read().get(id).cloned().ok_or_else(|| RegistryError::NoSuchSource(id.to_string()))?;
        if !session.usertype.at_least(UserType::Operator) {
            tracing::warn!(target: "audit", user = %session.username, source = id, "params access denied");
            return Err(RegistryError::Forbidden);
        }
        let doc = self.sealer()?.open(id, &record.params)?;
        tracing::info!(target: "audit", user = %session.username, source = id, "params accessed");
        Ok(doc)
    }

    /// One sweep over every pollable source. Fetches happen without holding
    /// the registry locks; a failing source is marked offline and the sweep
    /// carries on.
    pub fn poll_sources(&self, probe: &dyn SourceProbe, now_ms: u64) -> Result<Vec<(String, PollChange)>, RegistryError> {
        let sealer = self.sealer()?;
        let targets: Vec<(String, Option<String>)> = self
            .sources
            .read()
            .values()
            .map(|r| (r.source.id.clone(), r.source.poll_address.clone()))
            .collect();
        let mut out = Vec::with_capacity(targets.len());
        for (id, address) in targets {
            let Some(address) = address else {
                out.push((id, PollChange::None));
                continue;
            };
            let fetched = probe.fetch(&address);
            let change = self.apply_poll(sealer, &id, fetched, now_ms)?;
            out.push((id, change));
        }
        Ok(out)
    }

    fn apply_poll(
        &self,
        sealer: &Sealer,
        id: &str,
        fetched: Result<ProbeDoc, String>,
        now_ms: u64,
    ) -> Result<PollChange, RegistryError> {
        let mut w = self.writer.lock();
        let Some(mut record) = w.records.get(id).cloned() else {
            return Ok(PollChange::None);
        };
        let change = match fetched {
            Err(reason) => {
                if record.source.status == SourceStatus::Offline {
                    return Ok(PollChange::None);
                }
                tracing::warn!(source = id, %reason, "source unreachable");
                record.source.status = SourceStatus::Offline;
                PollChange::StatusChanged(SourceStatus::Offline)
            }
            Ok(doc) => {
                let current = match sealer.open(id, &record.params) {
                    Ok(p) => Some(p),
                    Err(e) => {
                        tracing::error!(source = id, error = %e, "stored params unreadable, replacing from source");
                        None
                    }
                };
                let status_changed = record.source.status != doc.status;
                record.source.status = doc.status;
                if current.as_ref() != Some(&doc.params) {
                    record.params = sealer.seal(id, &doc.params);
                    record.source.params_version += 1;
                    PollChange::ParamsChanged
                } else if status_changed {
                    PollChange::StatusChanged(doc.status)
                } else {
                    return Ok(PollChange::None);
                }
            }
        };
        record.source.updated_at = now_ms;
        self.persist(&mut w, record)?;
        Ok(change)
    }
}
