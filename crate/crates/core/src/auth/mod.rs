//! Identity verification and the user-type to transaction-priority mapping.
//!
//! Users are kept in a [`RecordLog`] file holding salted PBKDF2-SHA256
//! hashes. A successful login yields a [`Session`] identified by a random
//! 256-bit token; its priority is what the bus stamps on every transaction
//! the session submits.

mod password;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use parking_lot::{Mutex, RwLock};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use password::{check_password_policy, hash_password, verify_password};

use crate::scheduler::Priority;
use crate::store::{RecordLog, StoreError};
use crate::time::unix_millis;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuthError {
    #[error("authentication failed")]
    AuthFailed,
    #[error("user store unavailable: {0}")]
    StoreUnavailable(String),
    #[error("invalid session token")]
    TokenInvalid,
    #[error("session expired")]
    TokenExpired,
    #[error("unknown user type `{0}`")]
    InvalidUserType(String),
    #[error("password rejected: {0}")]
    WeakPassword(String),
    #[error("user `{0}` already exists")]
    DuplicateUser(String),
    #[error("invalid username: {0}")]
    InvalidUsername(String),
}

impl From<StoreError> for AuthError {
    fn from(e: StoreError) -> Self {
        AuthError::StoreUnavailable(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserType {
    Admin,
    Commander,
    Operator,
    Viewer,
}

impl UserType {
    pub const ALL: [UserType; 4] = [UserType::Admin, UserType::Commander, UserType::Operator, UserType::Viewer];

    pub fn as_str(self) -> &'static str {
        match self {
            UserType::Admin => "admin",
            UserType::Commander => "commander",
            UserType::Operator => "operator",
            UserType::Viewer => "viewer",
        }
    }

    /// Privilege level; higher is more privileged.
    pub fn rank(self) -> u8 {
        match self {
            UserType::Admin => 3,
            UserType::Commander => 2,
            UserType::Operator => 1,
            UserType::Viewer => 0,
        }
    }

    pub fn at_least(self, other: UserType) -> bool {
        self.rank() >= other.rank()
    }
}

impl fmt::Display for UserType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UserType {
    type Err = AuthError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UserType::ALL
            .into_iter()
            .find(|u| u.as_str() == s)
            .ok_or_else(|| AuthError::InvalidUserType(s.to_string()))
    }
}

/// User type to priority table. Keys are user type names so that a config
/// file with a misspelt type is caught by [`PriorityMap::validate`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorityMap(BTreeMap<String, u8>);

impl Default for PriorityMap {
    fn default() -> Self {
        Self(
            [("admin", 0), ("commander", 1), ("operator", 4), ("viewer", 7)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        )
    }
}

impl PriorityMap {
    pub fn new(entries: impl IntoIterator<Item = (UserType, u8)>) -> Self {
        Self(entries.into_iter().map(|(u, p)| (u.as_str().to_string(), p)).collect())
    }

    /// Every entry names a known user type and maps into 0..=9, and every
    /// user type has an entry. Errors carry the offending key.
    pub fn validate(&self) -> Result<(), (String, String)> {
        for (name, &p) in &self.0 {
            if name.parse::<UserType>().is_err() {
                return Err((name.clone(), "not a user type".into()));
            }
            if Priority::new(p).is_err() {
                return Err((name.clone(), format!("priority {p} is outside 0..=9")));
            }
        }
        for u in UserType::ALL {
            if !self.0.contains_key(u.as_str()) {
                return Err((u.as_str().to_string(), "missing priority entry".into()));
            }
        }
        Ok(())
    }

    pub fn priority_for(&self, usertype: &str) -> Result<Priority, AuthError> {
        usertype.parse::<UserType>()?;
        self.0
            .get(usertype)
            .and_then(|&p| Priority::new(p).ok())
            .ok_or_else(|| AuthError::InvalidUserType(usertype.to_string()))
    }

    pub fn priority(&self, usertype: UserType) -> Result<Priority, AuthError> {
        self.priority_for(usertype.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub username: String,
    #[serde(with = "hex_bytes")]
    pub password_hash: Vec<u8>,
    #[serde(with = "hex_bytes")]
    pub salt: Vec<u8>,
    pub iterations: u32,
    pub usertype: UserType,
}

// Keep hashes out of debug logs.
impl UserRecord {
    pub fn redacted(&self) -> String {
        format!("UserRecord {{ username: {:?}, usertype: {} }}", self.username, self.usertype)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub username: String,
    pub usertype: UserType,
    pub priority: Priority,
    /// Unix milliseconds.
    pub issued_at: u64,
    /// Unix milliseconds; the session is dead from this instant on.
    pub expires_at: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuthConfig {
    pub session_lifetime_secs: u64,
    pub kdf_iterations: u32,
    pub priorities: PriorityMap,
}

impl Default for AuthConfig {
    fn default() -> Self {
        Self { session_lifetime_secs: 8 * 3600, kdf_iterations: 60_000, priorities: PriorityMap::default() }
    }
}

impl AuthConfig {
    pub fn session_lifetime(&self) -> Duration {
        Duration::from_secs(self.session_lifetime_secs)
    }
}

struct Users {
    records: BTreeMap<String, UserRecord>,
    log: RecordLog<UserRecord>,
}

pub struct Authenticator {
    config: AuthConfig,
    users: RwLock<BTreeMap<String, UserRecord>>,
    writer: Mutex<Users>,
    sessions: RwLock<HashMap<String, Session>>,
    // Hash compared against when the username is unknown, so that both
    // failure paths cost the same.
    decoy: UserRecord,
}

impl Authenticator {
    pub fn in_memory(config: AuthConfig) -> Self {
        Self::with_log(config, RecordLog::in_memory(), BTreeMap::new())
    }

    pub fn open(config: AuthConfig, path: impl AsRef<Path>) -> Result<Self, AuthError> {
        let (log, records) = RecordLog::open(path)?;
        Ok(Self::with_log(config, log, records))
    }

    fn with_log(config: AuthConfig, log: RecordLog<UserRecord>, records: BTreeMap<String, UserRecord>) -> Self {
        let decoy = hash_password("decoy", "decoy-password-0", config.kdf_iterations, UserType::Viewer);
        Self {
            users: RwLock::new(records.clone()),
            writer: Mutex::new(Users { records, log }),
            sessions: RwLock::new(HashMap::new()),
            config,
            decoy,
        }
    }

    pub fn config(&self) -> &AuthConfig {
        &self.config
    }

    pub fn add_user(&self, username: &str, password: &str, usertype: UserType) -> Result<(), AuthError> {
        validate_username(username)?;
        check_password_policy(password)?;
        let record = hash_password(username, password, self.config.kdf_iterations, usertype);
        let mut w = self.writer.lock();
        if w.records.contains_key(username) {
            return Err(AuthError::DuplicateUser(username.to_string()));
        }
        w.log.put(username, &record)?;
        w.records.insert(username.to_string(), record.clone());
        let Users { records, log } = &mut *w;
        log.maybe_compact(records)?;
        self.users.write().insert(username.to_string(), record);
        tracing::info!(target: "audit", user = username, usertype = %usertype, "user added");
        Ok(())
    }

    pub fn user_count(&self) -> usize {
        self.users.read().len()
    }

    /// Username and user type only.
    pub fn lookup(&self, username: &str) -> Option<(String, UserType)> {
        self.users.read().get(username).map(|u| (u.username.clone(), u.usertype))
    }

    pub fn priority_for(&self, usertype: &str) -> Result<Priority, AuthError> {
        self.config.priorities.priority_for(usertype)
    }

    pub fn login(&self, username: &str, password: &str) -> Result<Session, AuthError> {
        self.login_at(username, password, unix_millis())
    }

    pub fn login_at(&self, username: &str, password: &str, now_ms: u64) -> Result<Session, AuthError> {
        let record = self.users.read().get(username).cloned();
        let ok = match &record {
            Some(r) => verify_password(r, password),
            None => {
                verify_password(&self.decoy, password);
                false
            }
        };
        let record = match (ok, record) {
            (true, Some(r)) => r,
            _ => return Err(AuthError::AuthFailed),
        };
        let priority = self.config.priorities.priority(record.usertype)?;
        let session = Session {
            token: new_token(),
            username: record.username,
            usertype: record.usertype,
            priority,
            issued_at: now_ms,
            expires_at: now_ms.saturating_add(self.config.session_lifetime().as_millis() as u64),
        };
        self.sessions.write().insert(session.token.clone(), session.clone());
        Ok(session)
    }

    pub fn validate(&self, token: &str) -> Result<Session, AuthError> {
        self.validate_at(token, unix_millis())
    }

    pub fn validate_at(&self, token: &str, now_ms: u64) -> Result<Session, AuthError> {
        let session = self.sessions.read().get(token).cloned().ok_or(AuthError::TokenInvalid)?;
        if now_ms >= session.expires_at {
            self.sessions.write().remove(token);
            return Err(AuthError::TokenExpired);
        }
        Ok(session)
    }

    pub fn logout(&self, token: &str) -> bool {
        self.sessions.write().remove(token).is_some()
    }

    /// Drops expired sessions; returns how many were removed.
    pub fn purge_expired(&self, now_ms: u64) -> usize {
        let mut s = self.sessions.write();
        let before = s.len();
        s.retain(|_, v| v.expires_at > now_ms);
        before - s.len()
    }
}

fn validate_username(name: &str) -> Result<(), AuthError> {
    if name.is_empty() || name.len() > 64 {
        return Err(AuthError::InvalidUsername("length must be 1..=64".into()));
    }
    if !name.chars().all(|c| c.is_alphanumeric() || "._-@".contains(c)) {
        return Err(AuthError::InvalidUsername("allowed characters are letters, digits and ._-@".into()));
    }
    Ok(())
}

fn new_token() -> String {
    let mut bytes = [0u8; 32];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}
