use std::collections::BTreeMap;
use std::sync::Mutex;

use kinon_core::KinonError;

use crate::protocol::{Command, ErrorCode, Message, Request, SessionId};
use crate::session::{self, Envelope, Outbox, SessionHandle};

/// Routes requests to session threads. Replies arrive on the caller's
/// outbox, possibly after later requests to other sessions were answered.
#[derive(Default)]
pub struct SessionManager {
    sessions: Mutex<BTreeMap<SessionId, SessionHandle>>,
    next_id: Mutex<SessionId>,
}

impl SessionManager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session table").len()
    }

    pub fn handle(&self, request: Request, reply: &Outbox) {
        let Request { id, command } = request;
        let session = match command {
            Command::Create { config } => {
                let sid = {
                    let mut next = self.next_id.lock().expect("id counter");
                    *next += 1;
                    *next
                };
                let message = match session::spawn(sid, &config) {
                    Ok(handle) => {
                        self.sessions.lock().expect("session table").insert(sid, handle);
                        Message::Created {
                            id,
                            session: sid,
                            cycle: 0,
                        }
                    }
                    Err(KinonError::Validation(v)) => {
                        let fields: Vec<_> = v.fields().iter().cloned().map(|f| f.nested("config")).collect();
                        Message::field_error(id, ErrorCode::InvalidConfig, "invalid config", &fields)
                    }
                    Err(e) => Message::error(id, ErrorCode::InvalidConfig, e.to_string()),
                };
                let _ = reply.send(message);
                return;
            }
            ref other => other.session().expect("non-Create commands name a session"),
        };
        let closing = matches!(command, Command::Close { .. });
        let mut table = self.sessions.lock().expect("session table");
        let Some(handle) = table.get(&session) else {
            let _ = reply.send(Message::error(id, ErrorCode::UnknownSession, format!("no session {session}")));
            return;
        };
        let envelope = Envelope {
            id,
            command,
            reply: reply.clone(),
        };
        if handle.commands.send(envelope).is_err() {
            table.remove(&session);
            let _ = reply.send(Message::error(id, ErrorCode::UnknownSession, format!("session {session} has ended")));
            return;
        }
        if closing {
            if let Some(mut handle) = table.remove(&session) {
                drop(table);
                if let Some(thread) = handle.thread.take() {
                    let _ = thread.join();
                }
            }
        }
    }
}

impl Drop for SessionManager {
    fn drop(&mut self) {
        let sessions = std::mem::take(self.sessions.get_mut().expect("session table"));
        for (_, mut handle) in sessions {
            // Dropping the sender ends the session loop.
            drop(handle.commands);
            if let Some(thread) = handle.thread.take() {
                let _ = thread.join();
            }
        }
    }
}
