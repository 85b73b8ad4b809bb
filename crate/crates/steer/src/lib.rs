//! Steering service: drives live kinon simulations through a versioned,
//! line-delimited JSON protocol.
//!
//! A session wraps one [`kinon_core::io::Runner`] on its own thread.
//! Parameter changes queue for the next cycle boundary and are acknowledged
//! with the cycle after which they apply, which is exactly the `at_cycle` a
//! batch schedule needs to reproduce the session.

pub mod client;
pub mod manager;
pub mod protocol;
pub mod server;
mod session;

pub use client::{ClientError, LocalClient, TcpClient};
pub use manager::SessionManager;
pub use protocol::{
    decode_message, decode_request, encode_message, encode_request, Command, ErrorCode, Message, Request, RunState,
    SeriesRecord, SessionId, StopReason, WireFieldError, WireFrame, PROTOCOL_VERSION,
};
pub use server::serve;
pub use session::Outbox;
