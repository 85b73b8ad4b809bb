//! Wire messages. One JSON object per line in each direction; every object
//! carries `"v"` (the protocol version) and a `"type"` tag. Requests may
//! carry an `"id"` that the matching reply echoes; stream updates carry none.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use kinon_core::analysis::MacroRecord;
use kinon_core::io::RunConfig;
use kinon_core::{FieldError, ModelParams, ParamPatch};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

pub type SessionId = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum Command {
    Create { config: RunConfig },
    Start { session: SessionId },
    Pause { session: SessionId },
    Step { session: SessionId, n: u64 },
    SetParams { session: SessionId, params: ParamPatch },
    Subscribe { session: SessionId, stride: u64 },
    Unsubscribe { session: SessionId, subscription: u64 },
    GetFrame { session: SessionId },
    GetSeries {
        session: SessionId,
        /// Only records with a later cycle.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        since: Option<u64>,
    },
    GetStatus { session: SessionId },
    Snapshot { session: SessionId },
    Close { session: SessionId },
}

impl Command {
    pub fn session(&self) -> Option<SessionId> {
        match *self {
            Command::Create { .. } => None,
            Command::Start { session }
            | Command::Pause { session }
            | Command::Step { session, .. }
            | Command::SetParams { session, .. }
            | Command::Subscribe { session, .. }
            | Command::Unsubscribe { session, .. }
            | Command::GetFrame { session }
            | Command::GetSeries { session, .. }
            | Command::GetStatus { session }
            | Command::Snapshot { session }
            | Command::Close { session } => Some(session),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub id: Option<u64>,
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Paused,
    Running,
    /// A conservation audit failed; the session only answers queries.
    Failed,
}

/// Why a running session stopped on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxCycles,
    Stasis,
    AuditFailure,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    UnsupportedVersion,
    InvalidConfig,
    InvalidParams,
    UnknownSession,
    UnknownSubscription,
    SessionFailed,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFieldError {
    pub path: String,
    pub message: String,
}

impl From<&FieldError> for WireFieldError {
    fn from(e: &FieldError) -> Self {
        Self {
            path: e.path.clone(),
            message: e.message.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub cycle: u64,
    pub ke: f64,
    pub kt: f64,
    pub drift: f64,
}

impl From<&MacroRecord> for SeriesRecord {
    fn from(r: &MacroRecord) -> Self {
        Self {
            cycle: r.cycle,
            ke: r.exchange_rate,
            kt: r.turnover_rate,
            drift: r.drift,
        }
    }
}

/// A binary PGM frame, base64 encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFrame {
    pub width: usize,
    pub height: usize,
    pub pgm: String,
}

impl WireFrame {
    pub fn new(width: usize, height: usize, pgm: &[u8]) -> Self {
        Self {
            width,
            height,
            pgm: STANDARD.encode(pgm),
        }
    }

    pub fn pgm_bytes(&self) -> Result<Vec<u8>, base64::DecodeError> {
        STANDARD.decode(&self.pgm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Message {
    Created {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        session: SessionId,
        cycle: u64,
    },
    /// Reply to Start, Pause and `Step { n: 0 }`.
    Ack {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        session: SessionId,
        cycle: u64,
        state: RunState,
    },
    /// Sent once the requested cycles are done, or fewer if a later Start,
    /// Pause or Step superseded the request.
    Stepped {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        session: SessionId,
        cycle: u64,
        completed: u64,
        state: RunState,
    },
    /// The queued patch applies after cycle `at_cycle` completes, before
    /// cycle `at_cycle + 1`: the same convention as a scheduled change.
    ParamsQueued {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        session: SessionId,
        at_cycle: u64,
        pending: ParamPatch,
    },
    Subscribed {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        session: SessionId,
        subscription: u64,
        stride: u64,
    },
    Unsubscribed {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        session: SessionId,
        subscription: u64,
    },
    Frame {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        session: SessionId,
        cycle: u64,
        frame: WireFrame,
    },
    Series {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        session: SessionId,
        records: Vec<SeriesRecord>,
    },
    Status {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        session: SessionId,
        cycle: u64,
        state: RunState,
        params: ModelParams,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pending: Option<ParamPatch>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stasis_cycle: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        border_hit_cycle: Option<u64>,
        subscriptions: Vec<u64>,
    },
    /// The persistence-format state, base64 encoded.
    Snapshot {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        session: SessionId,
        cycle: u64,
        data: String,
    },
    Closed {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        session: SessionId,
    },
    /// Stream item for one subscription, after a completed cycle.
    Update {
        session: SessionId,
        subscription: u64,
        cycle: u64,
        ke: f64,
        kt: f64,
        drift: f64,
        frame: WireFrame,
    },
    /// A running session paused itself.
    Stopped {
        session: SessionId,
        cycle: u64,
        reason: StopReason,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        code: ErrorCode,
        message: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        fields: Vec<WireFieldError>,
    },
}

impl Message {
    /// The request id this message answers, if any.
    pub fn id(&self) -> Option<u64> {
        match self {
            Message::Created { id, .. }
            | Message::Ack { id, .. }
            | Message::Stepped { id, .. }
            | Message::ParamsQueued { id, .. }
            | Message::Subscribed { id, .. }
            | Message::Unsubscribed { id, .. }
            | Message::Frame { id, .. }
            | Message::Series { id, .. }
            | Message::Status { id, .. }
            | Message::Snapshot { id, .. }
            | Message::Closed { id, .. }
            | Message::Error { id, .. } => *id,
            Message::Update { .. } | Message::Stopped { .. } => None,
        }
    }

    pub fn error(id: Option<u64>, code: ErrorCode, message: impl Into<String>) -> Self {
        Message::Error {
            id,
            code,
            message: message.into(),
            fields: Vec::new(),
        }
    }

    pub fn field_error(id: Option<u64>, code: ErrorCode, message: impl Into<String>, fields: &[FieldError]) -> Self {
        Message::Error {
            id,
            code,
            message: message.into(),
            fields: fields.iter().map(WireFieldError::from).collect(),
        }
    }
}

fn versioned(mut value: Value) -> Value {
    if let Value::Object(map) = &mut value {
        map.insert("v".into(), PROTOCOL_VERSION.into());
    }
    value
}

/// One wire line (without the newline).
pub fn encode_message(message: &Message) -> String {
    versioned(serde_json::to_value(message).expect("messages serialize")).to_string()
}

pub fn encode_request(request: &Request) -> String {
    let mut value = versioned(serde_json::to_value(&request.command).expect("commands serialize"));
    if let (Some(id), Value::Object(map)) = (request.id, &mut value) {
        map.insert("id".into(), id.into());
    }
    value.to_string()
}

/// Splits off `v` and `id`, then checks the version.
fn envelope(line: &str) -> Result<(Option<u64>, Value), Message> {
    let mut value: Value = serde_json::from_str(line)
        .map_err(|e| Message::error(None, ErrorCode::BadRequest, format!("not JSON: {e}")))?;
    let Value::Object(map) = &mut value else {
        return Err(Message::error(None, ErrorCode::BadRequest, "expected a JSON object"));
    };
    let id = match map.remove("id") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_u64().ok_or_else(|| {
            Message::field_error(None, ErrorCode::BadRequest, "bad id", &[FieldError::new("id", "must be an unsigned integer")])
        })?),
    };
    match map.remove("v") {
        None => {}
        Some(v) if v.as_u64() == Some(PROTOCOL_VERSION as u64) => {}
        Some(v) => {
            return Err(Message::error(
                id,
                ErrorCode::UnsupportedVersion,
                format!("protocol version {v} is not supported; this service speaks {PROTOCOL_VERSION}"),
            ))
        }
    }
    Ok((id, value))
}

fn payload_error(id: Option<u64>, value: &Value) -> Option<Message> {
    fn locate<T: serde::de::DeserializeOwned>(
        id: Option<u64>,
        key: &str,
        code: ErrorCode,
        value: &Value,
    ) -> Option<Message> {
        let e = serde_path_to_error::deserialize::<_, T>(value.get(key)?.clone()).err()?;
        let path = match e.path().to_string().as_str() {
            "." => key.to_string(),
            p => format!("{key}.{p}"),
        };
        let field = FieldError::new(path, e.inner().to_string());
        Some(Message::field_error(id, code, "malformed request", &[field]))
    }
    match value.get("type")?.as_str()? {
        "Create" => locate::<RunConfig>(id, "config", ErrorCode::InvalidConfig, value),
        "SetParams" => locate::<ParamPatch>(id, "params", ErrorCode::InvalidParams, value),
        _ => None,
    }
}

pub fn decode_request(line: &str) -> Result<Request, Message> {
    let (id, value) = envelope(line)?;
    // The tagged enum buffers its content, which hides field paths, so a
    // failing payload is decoded again on its own to locate the error.
    let payload_error = payload_error(id, &value);
    let command: Command = serde_json::from_value(value).map_err(|e| {
        payload_error.unwrap_or_else(|| Message::error(id, ErrorCode::BadRequest, format!("malformed request: {e}")))
    })?;
    if let Command::Create { config } = &command {
        config.validate().map_err(|e| {
            let fields: Vec<FieldError> = e.fields().iter().cloned().map(|f| f.nested("config")).collect();
            Message::field_error(id, ErrorCode::InvalidConfig, "invalid config", &fields)
        })?;
    }
    Ok(Request { id, command })
}

pub fn decode_message(line: &str) -> Result<Message, String> {
    let mut value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if let Value::Object(map) = &mut value {
        match map.remove("v") {
            Some(v) if v.as_u64() != Some(PROTOCOL_VERSION as u64) => return Err(format!("unsupported version {v}")),
            _ => {}
        }
    }
    serde_json::from_value(value).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn requests_round_trip_with_id_and_version() {
        let req = Request {
            id: Some(7),
            command: Command::Step { session: 3, n: 5 },
        };
        let line = encode_request(&req);
        let v: Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["type"], "Step");
        assert_eq!(v["v"], 1);
        assert_eq!(v["id"], 7);
        assert_eq!(decode_request(&line).unwrap(), req);
        assert_eq!(
            decode_request(r#"{"type":"GetSeries","session":1}"#).unwrap().command,
            Command::GetSeries { session: 1, since: None }
        );
    }

    #[test]
    fn malformed_requests_name_the_field() {
        let Err(Message::Error { code, fields, id, .. }) =
            decode_request(r#"{"id":4,"type":"SetParams","session":1,"params":{"kapa":2}}"#)
        else {
            panic!("accepted")
        };
        assert_eq!((code, id), (ErrorCode::InvalidParams, Some(4)));
        assert_eq!(fields[0].path, "params.kapa");
        assert!(fields[0].message.contains("kapa"));

        let Err(Message::Error { code, .. }) = decode_request(r#"{"type":"Step","session":1}"#) else {
            panic!("accepted")
        };
        assert_eq!(code, ErrorCode::BadRequest);
        let Err(Message::Error { code, .. }) = decode_request(r#"{"v":2,"type":"Close","session":1}"#) else {
            panic!("accepted")
        };
        assert_eq!(code, ErrorCode::UnsupportedVersion);
        assert!(decode_request("[1]").is_err());
        assert!(decode_request(r#"{"type":"Launch"}"#).is_err());
    }

    #[test]
    fn create_validates_the_config() {
        let line = r#"{"type":"Create","config":{"topology":{"degree":4,"width":8,"height":8},"omega":32,"params":{"kappa":-1,"theta":1}}}"#;
        let Err(Message::Error { code, fields, .. }) = decode_request(line) else {
            panic!("accepted")
        };
        assert_eq!(code, ErrorCode::InvalidConfig);
        let paths: Vec<&str> = fields.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(paths, ["config.params.kappa", "config.params.theta"]);
    }

    #[test]
    fn messages_round_trip() {
        let messages = [
            Message::Ack {
                id: Some(1),
                session: 2,
                cycle: 3,
                state: RunState::Running,
            },
            Message::Stopped {
                session: 2,
                cycle: 9,
                reason: StopReason::Stasis,
                detail: None,
            },
            Message::field_error(None, ErrorCode::InvalidParams, "x", &[FieldError::new("params.kappa", "bad")]),
        ];
        for m in messages {
            let line = encode_message(&m);
            assert!(line.contains("\"v\":1"));
            assert_eq!(decode_message(&line).unwrap(), m);
        }
    }
}
