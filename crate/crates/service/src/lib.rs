//! Session service for the fNIRS twin: records frames losslessly, streams live
//! raw and processed records to subscribers and relays operator commands to the
//! device.

pub mod control;
pub mod export;
pub mod record;
pub mod server;
pub mod session;

pub use control::{ControlDocument, ControlError};
pub use record::{StreamRecord, SCHEMA_JSON, SCHEMA_VERSION};
pub use server::{router, serve, ServerConfig, DEFAULT_PORT, PORT_ENV};
pub use session::{SessionError, SessionManager, SessionSpec, SessionSummary, SourceSpec};
