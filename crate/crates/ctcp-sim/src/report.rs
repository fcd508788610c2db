//! Transfer reports: the structured record a simulation run emits.

use serde::Serialize;

/// Per-path packet accounting and goodput share.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct PathReport {
    pub path: usize,
    /// Data packets handed to the link (including queue-dropped ones).
    pub data_sent: u64,
    /// Data packets that reached the receiver.
    pub data_delivered: u64,
    /// Bernoulli drops on the forward channel.
    pub random_losses: u64,
    /// Serialization-queue overflows.
    pub queue_drops: u64,
    /// Scheduled deliveries still pending when the run ended.
    pub in_flight_at_end: u64,
    /// Delivered packets that advanced a block's rank.
    pub innovative_dofs: u64,
    /// Delivered packets that were linearly dependent (or stale).
    pub dependent_packets: u64,
    /// Innovative payload bytes over the transfer duration.
    pub goodput_mbps: f64,
}

/// One 100 ms throughput bucket for one path.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ThroughputSample {
    pub t_s: f64,
    pub path: usize,
    pub mbps: f64,
}

/// Token and loss-estimate sample taken at every clock tick.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct EstimatorSample {
    pub t_s: f64,
    pub path: usize,
    pub tokens: f64,
    pub p: f64,
    pub rtt_s: f64,
}

/// Result of one simulated transfer.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct TransferReport {
    pub stream_bytes: u64,
    /// Time until the receiver decoded the final stream byte, seconds.
    pub duration_s: f64,
    /// Application goodput: stream bytes over the duration.
    pub goodput_mbps: f64,
    pub per_path: Vec<PathReport>,
    pub throughput_series: Vec<ThroughputSample>,
    pub estimator_series: Vec<EstimatorSample>,
}

impl TransferReport {
    /// Single line with the headline numbers.
    pub fn summary(&self) -> String {
        let per_path: Vec<String> = self
            .per_path
            .iter()
            .map(|p| format!("path{}={:.2}", p.path, p.goodput_mbps))
            .collect();
        format!(
            "{} bytes in {:.2}s, {:.2} Mbps ({})",
            self.stream_bytes,
            self.duration_s,
            self.goodput_mbps,
            per_path.join(" ")
        )
    }

    /// The full report as one JSON line.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}
