//! Session-oriented HTTP API and batch CLI over `subscope-core`.
//!
//! [`ops`] holds every session operation; [`api`] and [`cli`] are thin
//! front ends over it and serialize results with [`to_json`].

pub mod api;
pub mod cli;
pub mod error;
pub mod ops;
pub mod session;
pub mod store;

pub use error::{ErrorBody, ServiceError, ServiceResult};
pub use session::{Session, SessionArchive};

/// Pretty JSON with a trailing newline, the one encoding used for every
/// API response body and CLI artifact.
pub fn to_json<T: serde::Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("documents serialize to JSON");
    out.push(b'\n');
    out
}
