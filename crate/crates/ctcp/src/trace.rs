//! Structured event trace shared by the sender and receiver engines.
//!
//! Events are plain serializable records, one JSON object per line when
//! written out. Drivers drain the buffer between steps; with tracing
//! disabled the hot paths pay one branch.

use serde::Serialize;
use std::time::Duration;

/// Why a path's token count changed. Every mutation of the token gauge is
/// tagged so tests can audit the full history. Transmissions do not touch
/// the gauge: a sent packet borrows a token until an ACK returns it (or
/// reports it lost) by advancing the unacknowledged cursor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenCause {
    /// Slow-start growth, +1 per ACK.
    SlowStart,
    /// Vegas delay adjustment, +/- 1/tokens.
    VegasAdjust,
    /// Loss-spike cut, -(p - p_long)/2.
    LossSpikeCut,
    /// Timeout reset to the initial token count.
    TimeoutReset,
    /// Clamped up to the floor or down to the cap.
    Clamp,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    PacketSent {
        t: f64,
        path: u8,
        seqno: u32,
        blockno: u32,
        systematic: bool,
        tokens_after: f64,
    },
    AckProcessed {
        t: f64,
        path: u8,
        ack_seqno: u32,
        ack_currblk: u32,
        ack_currdof: u16,
        losses: u32,
        rtt_sample: f64,
        p: f64,
        tokens_after: f64,
    },
    AckIgnored {
        t: f64,
        path: u8,
        ack_seqno: u32,
    },
    Timeout {
        t: f64,
        path: u8,
        rto_after: f64,
        tokens_after: f64,
    },
    TokenChange {
        t: f64,
        path: u8,
        cause: TokenCause,
        delta: f64,
        value_after: f64,
    },
    PacketReceived {
        t: f64,
        path: u8,
        seqno: u32,
        blockno: u32,
        innovative: bool,
    },
    PacketStale {
        t: f64,
        path: u8,
        blockno: u32,
    },
    BlockDecoded {
        t: f64,
        blockno: u32,
    },
}

/// Collects events when enabled; drained by the driving loop.
#[derive(Debug, Default)]
pub struct TraceBuffer {
    enabled: bool,
    events: Vec<TraceEvent>,
}

impl TraceBuffer {
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            events: Vec::new(),
        }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    #[inline]
    pub fn push(&mut self, event: impl FnOnce() -> TraceEvent) {
        if self.enabled {
            self.events.push(event());
        }
    }

    pub fn drain(&mut self) -> Vec<TraceEvent> {
        std::mem::take(&mut self.events)
    }
}

/// Seconds represented by `d`, for trace records.
pub fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}
