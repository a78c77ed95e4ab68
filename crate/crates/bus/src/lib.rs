//! Multi-protocol service bus.
//!
//! Requests arrive over HTTP, newline-delimited JSON on TCP, or in-process
//! `vm://` named queues. Each becomes an [`Envelope`], is wrapped into a
//! scheduler transaction carrying the caller's session priority, and is
//! executed by a bound [`Handler`] on a scheduler worker thread. Replies
//! carry the request's message id as their correlation id.

mod address;
mod daemon;
mod envelope;
pub mod http;
mod router;
pub mod services;
pub mod tcp;

use thiserror::Error;

pub use address::{Address, EndpointBinding};
pub use daemon::{Daemon, DaemonError, HttpProbe, ListenConfig};
pub use envelope::{Envelope, ExchangePattern, Reply, Status};
pub use router::{Bus, BusConfig, Handler, Outcome, Request, Response};
pub use services::Services;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BusError {
    #[error("no endpoint at {0}")]
    NoSuchEndpoint(String),
    #[error("address {0} is already bound")]
    AddressInUse(String),
    #[error("malformed address {0:?}")]
    InvalidAddress(String),
    #[error("no handler named {0:?}")]
    UnknownHandler(String),
    #[error("overloaded, retry later")]
    Overloaded,
    #[error("request timed out")]
    Timeout,
    #[error("bus is shutting down")]
    ShuttingDown,
    #[error("invalid bus config: {0}")]
    InvalidConfig(String),
    #[error("internal error: {0}")]
    Internal(String),
}
