//! Protocol parameters and tuning constants.
//!
//! Every constant the engine uses lives here so experiments can override
//! them in one place. Defaults target a ~20 Mbps, ~100 ms RTT path.

use serde::{Deserialize, Serialize};

/// Which block scheduler drives transmissions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    /// Pick per the path count: one path uses `Single`, otherwise `Multi`.
    Auto,
    /// Single-path guard: compares per-path in-flight cover to the block size.
    Single,
    /// Multi-path guard: folds in combined throughput and cross-path cover.
    Multi,
}

/// Connection-wide protocol parameters, fixed at handshake time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Packets per block.
    pub blksize: u16,
    /// Payload bytes per packet.
    pub payload_size: u16,
    /// Active blocks held in memory on both ends.
    pub numblks: u16,

    /// RTT EWMA weight.
    pub alpha_rtt: f64,
    /// Short-term loss EWMA weight.
    pub mu: f64,
    /// Long-term loss EWMA weight; must stay below `mu`.
    pub nu: f64,
    /// RTO multiplier: rto = gamma * rtt.
    pub gamma: f64,
    /// Vegas lower delay threshold (grow below it).
    pub alpha_vegas: f64,
    /// Vegas upper delay threshold (shrink above it).
    pub beta_vegas: f64,

    /// Token count restored on timeout.
    pub initial_tokens: f64,
    /// Congestion-control adjustments never push tokens below this.
    pub token_floor: f64,
    /// Slow start exits above this token count.
    pub initial_ss_threshold: f64,
    /// Optional hard cap on per-path tokens (window throttle).
    pub token_cap: Option<f64>,

    /// RTT estimate before the first sample, seconds.
    pub initial_rtt: f64,
    /// Short-term loss estimate at start.
    pub initial_p: f64,
    /// Long-term loss estimate at start.
    pub initial_p_long: f64,
    /// Loss deviation estimate at start.
    pub initial_p_stdlong: f64,

    /// Packets older than this many RTTs no longer count as in flight.
    pub onfly_age_factor: f64,

    /// Scheduler selection.
    pub scheduler: SchedulerKind,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            blksize: 32,
            payload_size: 1024,
            numblks: 8,
            alpha_rtt: 0.125,
            mu: 0.1,
            nu: 0.01,
            gamma: 3.0,
            alpha_vegas: 0.05,
            beta_vegas: 0.25,
            initial_tokens: 2.0,
            token_floor: 1.0,
            initial_ss_threshold: 256.0,
            token_cap: None,
            initial_rtt: 0.5,
            initial_p: 0.0,
            initial_p_long: 0.0,
            initial_p_stdlong: 0.01,
            onfly_age_factor: 1.5,
            scheduler: SchedulerKind::Auto,
        }
    }
}

impl ProtocolParams {
    /// Application bytes carried by one full block.
    pub fn block_bytes(&self) -> u64 {
        self.blksize as u64 * self.payload_size as u64
    }

    /// Number of blocks a stream of `stream_length` bytes occupies.
    pub fn total_blocks(&self, stream_length: u64) -> u32 {
        stream_length.div_ceil(self.block_bytes()) as u32
    }

    /// Packets actually present in block `blkno` of a `stream_length`-byte
    /// stream (the final block may be short).
    pub fn fill_of(&self, blkno: u32, stream_length: u64) -> u16 {
        let start = blkno as u64 * self.block_bytes();
        if start >= stream_length {
            return 0;
        }
        let remaining = stream_length - start;
        let packets = remaining.div_ceil(self.payload_size as u64);
        packets.min(self.blksize as u64) as u16
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.blksize == 0 {
            return Err("blksize must be at least 1".into());
        }
        if self.payload_size == 0 {
            return Err("payload_size must be at least 1".into());
        }
        if self.numblks == 0 {
            return Err("numblks must be at least 1".into());
        }
        if !(self.nu < self.mu) {
            return Err("nu must be smaller than mu".into());
        }
        if self.gamma < 1.0 {
            return Err("gamma must be at least 1".into());
        }
        if self.onfly_age_factor < 1.0 {
            return Err("onfly_age_factor must be at least 1".into());
        }
        Ok(())
    }
}
