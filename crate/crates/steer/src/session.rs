//! One simulation thread per session. The thread owns the [`Runner`];
//! commands reach it over a channel and are applied only between cycles, so
//! a session has exactly one mutator and never changes parameters
//! mid-cycle.

use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::thread::JoinHandle;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use kinon_core::io::{RunConfig, RunError, Runner, StateSnapshot};
use kinon_core::network::Execution;
use kinon_core::KinonError;

use crate::protocol::{Command, ErrorCode, Message, RunState, SeriesRecord, SessionId, StopReason, WireFrame};

/// Where replies and stream updates go: one sender per client connection.
pub type Outbox = Sender<Message>;

pub(crate) struct Envelope {
    pub id: Option<u64>,
    pub command: Command,
    pub reply: Outbox,
}

pub(crate) struct SessionHandle {
    pub commands: Sender<Envelope>,
    pub thread: Option<JoinHandle<()>>,
}

struct Subscription {
    id: u64,
    stride: u64,
    sink: Outbox,
    last_cycle: Option<u64>,
}

struct PendingStep {
    id: Option<u64>,
    reply: Outbox,
    requested: u64,
    completed: u64,
}

struct Session {
    id: SessionId,
    runner: Runner,
    running: bool,
    failed: Option<String>,
    step: Option<PendingStep>,
    subscriptions: Vec<Subscription>,
    next_subscription: u64,
}

pub(crate) fn spawn(id: SessionId, config: &RunConfig) -> Result<SessionHandle, KinonError> {
    let runner = Runner::new(config, Execution::Parallel)?;
    let (tx, rx) = mpsc::channel();
    let session = Session {
        id,
        runner,
        running: false,
        failed: None,
        step: None,
        subscriptions: Vec::new(),
        next_subscription: 1,
    };
    let thread = std::thread::Builder::new()
        .name(format!("kinon-session-{id}"))
        .spawn(move || session.serve(rx))
        .expect("spawning a session thread");
    Ok(SessionHandle {
        commands: tx,
        thread: Some(thread),
    })
}

fn send(out: &Outbox, message: Message) {
    // A vanished client is not the session's problem.
    let _ = out.send(message);
}

impl Session {
    fn state(&self) -> RunState {
        if self.failed.is_some() {
            RunState::Failed
        } else if self.running || self.step.is_some() {
            RunState::Running
        } else {
            RunState::Paused
        }
    }

    fn busy(&self) -> bool {
        self.failed.is_none() && (self.running || self.step.is_some())
    }

    fn serve(mut self, commands: Receiver<Envelope>) {
        loop {
            // Drain every queued command before the next cycle.
            let next = if self.busy() {
                match commands.try_recv() {
                    Ok(e) => Some(e),
                    Err(TryRecvError::Empty) => None,
                    Err(TryRecvError::Disconnected) => return,
                }
            } else {
                match commands.recv() {
                    Ok(e) => Some(e),
                    Err(_) => return,
                }
            };
            match next {
                Some(envelope) => {
                    if !self.handle(envelope) {
                        return;
                    }
                }
                None => self.advance(),
            }
        }
    }

    /// Settles an outstanding Step request with what it got done.
    fn settle_step(&mut self) {
        if let Some(step) = self.step.take() {
            let message = Message::Stepped {
                id: step.id,
                session: self.id,
                cycle: self.runner.cycle(),
                completed: step.completed,
                state: self.state(),
            };
            send(&step.reply, message);
        }
    }

    fn frame(&self) -> WireFrame {
        let image = self.runner.frame();
        WireFrame::new(image.width, image.height, &image.to_pgm())
    }

    fn refuse_if_failed(&self, id: Option<u64>, reply: &Outbox) -> bool {
        match &self.failed {
            Some(why) => {
                send(reply, Message::error(id, ErrorCode::SessionFailed, why.clone()));
                true
            }
            None => false,
        }
    }

    /// Returns false once the session is closed.
    fn handle(&mut self, Envelope { id, command, reply }: Envelope) -> bool {
        let session = self.id;
        let ack = |this: &Self| Message::Ack {
            id,
            session,
            cycle: this.runner.cycle(),
            state: this.state(),
        };
        match command {
            Command::Create { .. } => send(&reply, Message::error(id, ErrorCode::Internal, "Create reached a session")),
            Command::Start { .. } => {
                if !self.refuse_if_failed(id, &reply) {
                    self.running = true;
                    self.settle_step();
                    send(&reply, ack(self));
                }
            }
            Command::Pause { .. } => {
                self.running = false;
                self.settle_step();
                send(&reply, ack(self));
            }
            Command::Step { n, .. } => {
                if !self.refuse_if_failed(id, &reply) {
                    self.running = false;
                    self.settle_step();
                    if n == 0 {
                        send(&reply, ack(self));
                    } else {
                        self.step = Some(PendingStep {
                            id,
                            reply,
                            requested: n,
                            completed: 0,
                        });
                    }
                }
            }
            Command::SetParams { params, .. } => {
                if !self.refuse_if_failed(id, &reply) {
                    match self.runner.queue_patch(&params) {
                        Ok(pending) => send(
                            &reply,
                            Message::ParamsQueued {
                                id,
                                session,
                                at_cycle: self.runner.cycle(),
                                pending,
                            },
                        ),
                        Err(KinonError::Validation(v)) => {
                            let fields: Vec<_> = v.fields().iter().cloned().map(|f| f.nested("params")).collect();
                            send(
                                &reply,
                                Message::field_error(id, ErrorCode::InvalidParams, "invalid parameters", &fields),
                            );
                        }
                        Err(e) => send(&reply, Message::error(id, ErrorCode::InvalidParams, e.to_string())),
                    }
                }
            }
            Command::Subscribe { stride, .. } => {
                if stride == 0 {
                    send(
                        &reply,
                        Message::field_error(
                            id,
                            ErrorCode::BadRequest,
                            "invalid subscription",
                            &[kinon_core::FieldError::new("stride", "must be at least 1")],
                        ),
                    );
                } else {
                    let subscription = self.next_subscription;
                    self.next_subscription += 1;
                    self.subscriptions.push(Subscription {
                        id: subscription,
                        stride,
                        sink: reply.clone(),
                        last_cycle: None,
                    });
                    send(
                        &reply,
                        Message::Subscribed {
                            id,
                            session,
                            subscription,
                            stride,
                        },
                    );
                }
            }
            Command::Unsubscribe { subscription, .. } => {
                let before = self.subscriptions.len();
                self.subscriptions.retain(|s| s.id != subscription);
                if self.subscriptions.len() < before {
                    send(
                        &reply,
                        Message::Unsubscribed {
                            id,
                            session,
                            subscription,
                        },
                    );
                } else {
                    send(
                        &reply,
                        Message::error(id, ErrorCode::UnknownSubscription, format!("no subscription {subscription}")),
                    );
                }
            }
            Command::GetFrame { .. } => send(
                &reply,
                Message::Frame {
                    id,
                    session,
                    cycle: self.runner.cycle(),
                    frame: self.frame(),
                },
            ),
            Command::GetSeries { since, .. } => {
                let records = self
                    .runner
                    .series()
                    .iter()
                    .filter(|r| since.is_none_or(|s| r.cycle > s))
                    .map(SeriesRecord::from)
                    .collect();
                send(&reply, Message::Series { id, session, records });
            }
            Command::GetStatus { .. } => send(
                &reply,
                Message::Status {
                    id,
                    session,
                    cycle: self.runner.cycle(),
                    state: self.state(),
                    params: *self.runner.simulation().params(),
                    pending: self.runner.pending_patch(),
                    stasis_cycle: self.runner.stasis(),
                    border_hit_cycle: self.runner.border_hit(),
                    subscriptions: self.subscriptions.iter().map(|s| s.id).collect(),
                },
            ),
            Command::Snapshot { .. } => match StateSnapshot::of(self.runner.simulation()) {
                Ok(snapshot) => send(
                    &reply,
                    Message::Snapshot {
                        id,
                        session,
                        cycle: self.runner.cycle(),
                        data: STANDARD.encode(snapshot.encode()),
                    },
                ),
                Err(e) => send(&reply, Message::error(id, ErrorCode::Internal, e.to_string())),
            },
            Command::Close { .. } => {
                self.running = false;
                self.settle_step();
                send(&reply, Message::Closed { id, session });
                return false;
            }
        }
        true
    }

    /// Computes one cycle, then publishes and settles whatever it completes.
    fn advance(&mut self) {
        match self.runner.step() {
            Ok(record) => {
                let cycle = record.cycle;
                self.publish(cycle);
                if let Some(step) = &mut self.step {
                    step.completed += 1;
                    if step.completed == step.requested {
                        self.settle_step();
                    }
                } else if self.running {
                    let schedule = &self.runner.config().schedule;
                    let reason = if cycle >= schedule.max_cycles {
                        Some(StopReason::MaxCycles)
                    } else if schedule.stop_on_stasis && self.runner.stasis().is_some() {
                        Some(StopReason::Stasis)
                    } else {
                        None
                    };
                    if let Some(reason) = reason {
                        self.running = false;
                        self.broadcast_stop(reason, None);
                    }
                }
            }
            Err(e) => {
                let detail = e.to_string();
                self.failed = Some(detail.clone());
                self.running = false;
                // The cycle completed even though it failed the audit.
                self.publish(self.runner.cycle());
                self.settle_step();
                let reason = match e {
                    RunError::Audit { .. } => StopReason::AuditFailure,
                    _ => StopReason::Error,
                };
                self.broadcast_stop(reason, Some(detail));
            }
        }
    }

    fn publish(&mut self, cycle: u64) {
        let due: Vec<usize> = (0..self.subscriptions.len())
            .filter(|&i| cycle % self.subscriptions[i].stride == 0)
            .collect();
        if due.is_empty() {
            return;
        }
        let frame = self.frame();
        let record = self.runner.series().last().copied();
        let Some(record) = record else { return };
        let session = self.id;
        self.subscriptions.retain_mut(|s| {
            if cycle % s.stride != 0 || s.last_cycle.is_some_and(|c| c >= cycle) {
                return true;
            }
            s.last_cycle = Some(cycle);
            s.sink
                .send(Message::Update {
                    session,
                    subscription: s.id,
                    cycle,
                    ke: record.exchange_rate,
                    kt: record.turnover_rate,
                    drift: record.drift,
                    frame: frame.clone(),
                })
                .is_ok()
        });
    }

    fn broadcast_stop(&mut self, reason: StopReason, detail: Option<String>) {
        let session = self.id;
        let cycle = self.runner.cycle();
        self.subscriptions.retain(|s| {
            s.sink
                .send(Message::Stopped {
                    session,
                    cycle,
                    reason,
                    detail: detail.clone(),
                })
                .is_ok()
        });
    }
}
