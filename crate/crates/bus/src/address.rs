use std::fmt;

use serde::{Deserialize, Serialize};

use crate::BusError;

/// Parsed endpoint address. The authority part of `http://` and `tcp://`
/// addresses is informational; two addresses are the same endpoint when
/// their [`Address::key`] matches.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Address {
    /// `http://<authority>/<path>`
    Http { path: String },
    /// `tcp://<authority>/<op>`
    Tcp { op: String },
    /// `vm://<name>`
    Vm { name: String },
}

fn valid_segment(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '{' | '}'))
}

impl Address {
    pub fn parse(s: &str) -> Result<Self, BusError> {
        let bad = || BusError::InvalidAddress(s.to_string());
        let (scheme, rest) = s.split_once("://").ok_or_else(bad)?;
        match scheme {
            "vm" => {
                if valid_segment(rest) {
                    Ok(Address::Vm { name: rest.to_string() })
                } else {
                    Err(bad())
                }
            }
            "http" => {
                let slash = rest.find('/').ok_or_else(bad)?;
                let path = &rest[slash..];
                if path.len() > 1 && path[1..].split('/').all(valid_segment) {
                    Ok(Address::Http { path: path.to_string() })
                } else {
                    Err(bad())
                }
            }
            "tcp" => {
                let (_, op) = rest.rsplit_once('/').ok_or_else(bad)?;
                if valid_segment(op) {
                    Ok(Address::Tcp { op: op.to_string() })
                } else {
                    Err(bad())
                }
            }
            _ => Err(bad()),
        }
    }

    pub fn http(path: &str) -> Self {
        Address::Http { path: path.to_string() }
    }

    pub fn tcp(op: &str) -> Self {
        Address::Tcp { op: op.to_string() }
    }

    pub fn vm(name: &str) -> Self {
        Address::Vm { name: name.to_string() }
    }

    /// Uniqueness key: `http:<path>`, `tcp:<op>` or `vm:<name>`.
    pub fn key(&self) -> String {
        match self {
            Address::Http { path } => format!("http:{path}"),
            Address::Tcp { op } => format!("tcp:{op}"),
            Address::Vm { name } => format!("vm:{name}"),
        }
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Address::Http { path } => write!(f, "http://localhost{path}"),
            Address::Tcp { op } => write!(f, "tcp://localhost/{op}"),
            Address::Vm { name } => write!(f, "vm://{name}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointBinding {
    pub address: String,
    pub handler: String,
    pub enabled: bool,
}

impl EndpointBinding {
    pub fn new(address: impl Into<String>, handler: impl Into<String>) -> Self {
        Self { address: address.into(), handler: handler.into(), enabled: true }
    }
}
