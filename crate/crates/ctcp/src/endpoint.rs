//! Connection endpoints: the handshake, data, and teardown state machines
//! wrapped around the sender and receiver cores.
//!
//! Endpoints speak typed [`Message`] values and are clock-driven, so the
//! same engine runs unchanged under the deterministic simulator and the
//! UDP datapath. The receiver initiates: it sends a SYN on every path and
//! the sender answers each with a SYNACK carrying the authoritative
//! connection parameters (block geometry and stream length). Teardown is a
//! three-message FIN exchange with retransmission on both sides.

use std::time::Duration;

use crate::config::ProtocolParams;
use crate::receiver::ReceiverState;
use crate::sender::{SenderError, SenderState};
use crate::trace::TraceEvent;
use crate::wire::{Handshake, HandshakeKind, Message};

/// Resend interval for SYN and FIN control messages.
const CTRL_RETRY: Duration = Duration::from_millis(500);
/// SYN attempts per path before the handshake is declared failed.
const SYN_BUDGET: u32 = 20;
/// FIN retransmissions before the sender closes unilaterally.
const FIN_BUDGET: u32 = 10;
/// How long the receiver lingers after echoing a FIN.
const FIN_LINGER: Duration = Duration::from_secs(2);

fn handshake(kind: HandshakeKind, path_id: u8, params: &ProtocolParams, stream_length: u64) -> Message {
    Message::Handshake(Handshake {
        kind,
        path_id,
        blksize: params.blksize,
        numblks: params.numblks,
        payload_size: params.payload_size,
        stream_length,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SenderPhase {
    /// Waiting for the first SYN.
    Listening,
    /// At least one path is live and data may flow.
    Established,
    /// All blocks acknowledged; FIN exchange in progress.
    Closing,
    Closed,
}

/// Data-source side of a connection.
pub struct SenderEndpoint {
    state: SenderState,
    phase: SenderPhase,
    fin_sent_at: Option<Duration>,
    fin_tries: u32,
}

impl SenderEndpoint {
    pub fn new(params: ProtocolParams, stream_length: u64, num_paths: usize, seed: u64) -> Self {
        Self {
            state: SenderState::new(params, stream_length, num_paths, seed),
            phase: SenderPhase::Listening,
            fin_sent_at: None,
            fin_tries: 0,
        }
    }

    pub fn push_stream(&mut self, bytes: &[u8]) -> Result<(), SenderError> {
        self.state.push_stream(bytes)
    }

    pub fn state(&self) -> &SenderState {
        &self.state
    }

    pub fn is_closed(&self) -> bool {
        self.phase == SenderPhase::Closed
    }

    /// All stream blocks have been acknowledged as decoded.
    pub fn transfer_done(&self) -> bool {
        self.state.is_complete()
    }

    pub fn set_trace_enabled(&mut self, enabled: bool) {
        self.state.trace = crate::trace::TraceBuffer::new(enabled);
    }

    pub fn drain_trace(&mut self) -> Vec<TraceEvent> {
        self.state.trace.drain()
    }

    pub fn handle_message(&mut self, msg: &Message, now: Duration) -> Vec<Message> {
        match msg {
            Message::Handshake(h) if h.kind == HandshakeKind::Syn => {
                let path = h.path_id as usize;
                if path >= self.state.num_paths() {
                    return Vec::new();
                }
                self.state.activate_path(path, now);
                if self.phase == SenderPhase::Listening {
                    self.phase = SenderPhase::Established;
                }
                // answer every SYN so a lost SYNACK self-heals
                vec![handshake(
                    HandshakeKind::SynAck,
                    h.path_id,
                    self.state.params(),
                    self.state.stream_length(),
                )]
            }
            Message::Handshake(h) if h.kind == HandshakeKind::Fin => {
                // the receiver's echo: confirm and finish
                if self.phase == SenderPhase::Closing {
                    self.phase = SenderPhase::Closed;
                    return self.fin_messages();
                }
                Vec::new()
            }
            Message::Ack(ack) => {
                let path = ack.path_id as usize;
                if path < self.state.num_paths() {
                    self.state.on_ack(path, ack, now);
                }
                Vec::new()
            }
            _ => Vec::new(),
        }
    }

    fn fin_messages(&self) -> Vec<Message> {
        (0..self.state.num_paths())
            .filter(|&p| self.state.path(p).active)
            .map(|p| {
                handshake(
                    HandshakeKind::Fin,
                    p as u8,
                    self.state.params(),
                    self.state.stream_length(),
                )
            })
            .collect()
    }

    /// Drive timeouts and the FIN exchange; call every few milliseconds.
    pub fn on_tick(&mut self, now: Duration) -> Vec<Message> {
        for path in 0..self.state.num_paths() {
            self.state.on_tick(path, now);
        }
        match self.phase {
            SenderPhase::Established if self.state.is_complete() => {
                self.phase = SenderPhase::Closing;
                self.fin_sent_at = Some(now);
                self.fin_tries = 1;
                self.fin_messages()
            }
            SenderPhase::Closing => {
                let due = self
                    .fin_sent_at
                    .is_none_or(|t| now >= t + CTRL_RETRY);
                if !due {
                    return Vec::new();
                }
                if self.fin_tries >= FIN_BUDGET {
                    self.phase = SenderPhase::Closed;
                    return Vec::new();
                }
                self.fin_sent_at = Some(now);
                self.fin_tries += 1;
                self.fin_messages()
            }
            _ => Vec::new(),
        }
    }

    /// One transmit opportunity on `path`. Pump until `None` after every
    /// state change.
    pub fn poll_transmit(&mut self, path: usize, now: Duration) -> Option<Message> {
        if self.phase != SenderPhase::Established {
            return None;
        }
        self.state.try_transmit(path, now).map(Message::Data)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ReceiverPhase {
    /// SYNs out, waiting for the first SYNACK.
    Connecting,
    Established,
    /// FIN echoed; lingering to answer retransmitted FINs.
    Draining,
    Closed,
    /// No SYNACK within the retry budget.
    Failed,
}

/// Data-sink side of a connection; the initiator of the handshake.
pub struct ReceiverEndpoint {
    proposal: ProtocolParams,
    num_paths: usize,
    state: Option<ReceiverState>,
    path_established: Vec<bool>,
    phase: ReceiverPhase,
    syn_sent_at: Option<Duration>,
    syn_tries: u32,
    drain_started: Option<Duration>,
    completed_at: Option<Duration>,
    trace_enabled: bool,
}

impl ReceiverEndpoint {
    pub fn new(proposal: ProtocolParams, num_paths: usize) -> Self {
        Self {
            proposal,
            num_paths,
            state: None,
            path_established: vec![false; num_paths],
            phase: ReceiverPhase::Connecting,
            syn_sent_at: None,
            syn_tries: 0,
            drain_started: None,
            completed_at: None,
            trace_enabled: false,
        }
    }

    pub fn set_trace_enabled(&mut self, enabled: bool) {
        self.trace_enabled = enabled;
        if let Some(state) = &mut self.state {
            state.trace = crate::trace::TraceBuffer::new(enabled);
        }
    }

    pub fn drain_trace(&mut self) -> Vec<TraceEvent> {
        self.state
            .as_mut()
            .map(|s| s.trace.drain())
            .unwrap_or_default()
    }

    pub fn state(&self) -> Option<&ReceiverState> {
        self.state.as_ref()
    }

    /// Parameters adopted from the SYNACK, once established.
    pub fn negotiated(&self) -> Option<&ProtocolParams> {
        self.state.as_ref().map(ReceiverState::params)
    }

    pub fn is_complete(&self) -> bool {
        self.state.as_ref().is_some_and(ReceiverState::is_complete)
    }

    /// When the final stream byte was decoded.
    pub fn completed_at(&self) -> Option<Duration> {
        self.completed_at
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.phase, ReceiverPhase::Closed | ReceiverPhase::Failed)
    }

    pub fn handshake_failed(&self) -> bool {
        self.phase == ReceiverPhase::Failed
    }

    pub fn read_delivered(&mut self) -> Vec<u8> {
        self.state
            .as_mut()
            .map(ReceiverState::read_delivered)
            .unwrap_or_default()
    }

    fn syn_messages(&self) -> Vec<Message> {
        (0..self.num_paths)
            .filter(|&p| !self.path_established[p])
            .map(|p| handshake(HandshakeKind::Syn, p as u8, &self.proposal, 0))
            .collect()
    }

    /// Kick off the handshake: one SYN per path.
    pub fn start(&mut self, now: Duration) -> Vec<Message> {
        self.syn_sent_at = Some(now);
        self.syn_tries = 1;
        self.syn_messages()
    }

    pub fn handle_message(&mut self, msg: &Message, now: Duration) -> Vec<Message> {
        match msg {
            Message::Handshake(h) if h.kind == HandshakeKind::SynAck => {
                let path = h.path_id as usize;
                if path >= self.num_paths {
                    return Vec::new();
                }
                if self.state.is_none() {
                    // adopt the sender's authoritative parameters
                    let params = ProtocolParams {
                        blksize: h.blksize,
                        numblks: h.numblks,
                        payload_size: h.payload_size,
                        ..self.proposal.clone()
                    };
                    let mut state = ReceiverState::new(params, h.stream_length);
                    state.trace = crate::trace::TraceBuffer::new(self.trace_enabled);
                    self.state = Some(state);
                }
                self.path_established[path] = true;
                if self.phase == ReceiverPhase::Connecting {
                    self.phase = ReceiverPhase::Established;
                }
                Vec::new()
            }
            Message::Handshake(h) if h.kind == HandshakeKind::Fin => {
                if matches!(self.phase, ReceiverPhase::Established | ReceiverPhase::Draining) {
                    self.phase = ReceiverPhase::Draining;
                    self.drain_started.get_or_insert(now);
                    return vec![handshake(
                        HandshakeKind::Fin,
                        h.path_id,
                        &self.proposal,
                        0,
                    )];
                }
                Vec::new()
            }
            Message::Data(pkt) => {
                let Some(state) = &mut self.state else {
                    // SYNACK still missing: drop, the SYN retry recovers it
                    return Vec::new();
                };
                let was_complete = state.is_complete();
                let ack = state.on_data(pkt, now);
                if !was_complete && state.is_complete() {
                    self.completed_at = Some(now);
                }
                vec![Message::Ack(ack)]
            }
            _ => Vec::new(),
        }
    }

    pub fn on_tick(&mut self, now: Duration) -> Vec<Message> {
        match self.phase {
            ReceiverPhase::Connecting => {
                let due = self.syn_sent_at.is_none_or(|t| now >= t + CTRL_RETRY);
                if !due {
                    return Vec::new();
                }
                if self.syn_tries >= SYN_BUDGET {
                    self.phase = ReceiverPhase::Failed;
                    return Vec::new();
                }
                self.syn_sent_at = Some(now);
                self.syn_tries += 1;
                self.syn_messages()
            }
            ReceiverPhase::Established => {
                // paths that never completed the handshake keep trying
                // within the budget; the connection runs degraded meanwhile
                if self.path_established.iter().all(|&e| e) || self.syn_tries >= SYN_BUDGET {
                    return Vec::new();
                }
                let due = self.syn_sent_at.is_none_or(|t| now >= t + CTRL_RETRY);
                if !due {
                    return Vec::new();
                }
                self.syn_sent_at = Some(now);
                self.syn_tries += 1;
                self.syn_messages()
            }
            ReceiverPhase::Draining => {
                if self
                    .drain_started
                    .is_some_and(|t| now >= t + FIN_LINGER)
                {
                    self.phase = ReceiverPhase::Closed;
                }
                Vec::new()
            }
            _ => Vec::new(),
        }
    }
}
