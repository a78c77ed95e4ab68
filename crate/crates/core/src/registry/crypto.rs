//! AES-256-GCM sealing of access parameter documents.
//!
//! Each seal draws a fresh 96-bit nonce. The source id is bound in as
//! associated data, so a ciphertext moved onto another record fails to open.

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{AccessParamDoc, RegistryError};

const NONCE_LEN: usize = 12;

/// 256-bit master key.
#[derive(Clone)]
pub struct MasterKey([u8; 32]);

impl MasterKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    /// Parses 64 hex characters.
    pub fn from_hex(s: &str) -> Result<Self, RegistryError> {
        let bytes = hex::decode(s.trim()).map_err(|e| RegistryError::InvalidKey(e.to_string()))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|v: Vec<u8>| RegistryError::InvalidKey(format!("expected 32 bytes, got {}", v.len())))?;
        Ok(Self(arr))
    }

    /// Reads a hex key from environment variable `var`. An unset variable
    /// gives `Ok(None)`.
    pub fn from_env(var: &str) -> Result<Option<Self>, RegistryError> {
        match std::env::var(var) {
            Ok(v) => Self::from_hex(&v).map(Some),
            Err(std::env::VarError::NotPresent) => Ok(None),
            Err(e) => Err(RegistryError::InvalidKey(e.to_string())),
        }
    }

    pub fn generate() -> Self {
        let mut k = [0u8; 32];
        rand::rng().fill_bytes(&mut k);
        Self(k)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl std::fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("MasterKey(..)")
    }
}

/// Sealed access parameters as persisted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessParams {
    #[serde(with = "b64")]
    pub ciphertext: Vec<u8>,
    #[serde(with = "b64")]
    pub nonce: Vec<u8>,
    pub key_id: String,
}

#[derive(Clone)]
pub struct Sealer {
    cipher: Aes256Gcm,
    key_id: String,
}

impl Sealer {
    pub fn new(key: &MasterKey, key_id: impl Into<String>) -> Self {
        Self { cipher: Aes256Gcm::new((&key.0).into()), key_id: key_id.into() }
    }

    pub fn key_id(&self) -> &str {
        &self.key_id
    }

    pub fn seal(&self, source_id: &str, doc: &AccessParamDoc) -> AccessParams {
        let plaintext = serde_json::to_vec(doc).expect("params serialize");
        let mut nonce = [0u8; NONCE_LEN];
        rand::rng().fill_bytes(&mut nonce);
        let ciphertext = self
            .cipher
            .encrypt(Nonce::from_slice(&nonce), Payload { msg: &plaintext, aad: source_id.as_bytes() })
            .expect("AES-GCM encryption does not fail for in-memory buffers");
        AccessParams { ciphertext, nonce: nonce.to_vec(), key_id: self.key_id.clone() }
    }

    pub fn open(&self, source_id: &str, sealed: &AccessParams) -> Result<AccessParamDoc, RegistryError> {
        let corrupt = || RegistryError::CorruptRecord(source_id.to_string());
        if sealed.key_id != self.key_id || sealed.nonce.len() != NONCE_LEN {
            return Err(corrupt());
        }
        let plaintext = self
            .cipher
            .decrypt(Nonce::from_slice(&sealed.nonce), Payload { msg: &sealed.ciphertext, aad: source_id.as_bytes() })
            .map_err(|_| corrupt())?;
        serde_json::from_slice(&plaintext).map_err(|_| corrupt())
    }
}

mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}
