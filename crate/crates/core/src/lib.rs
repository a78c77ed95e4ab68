//! Core of the video service bus: the differentiated-services scheduler,
//! the encrypted video source registry, user authentication and a
//! deterministic simulation harness for comparing scheduling policies.

pub mod scheduler;
pub mod time;
pub mod auth;
pub mod store;
pub mod registry;
pub mod sim;
