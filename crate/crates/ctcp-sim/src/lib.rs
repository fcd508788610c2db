//! Deterministic lossy-network simulator for the transport engine.
//!
//! Replaces host-level loss injection with a discrete-event model of each
//! path: FIFO serialization at the configured bandwidth, fixed propagation
//! delay, finite queue, and i.i.d. Bernoulli drops from a per-path seeded
//! generator. Identical scenarios and seeds give byte-identical reports
//! and traces.

pub mod report;
pub mod scenario;
pub mod sim;

pub use report::{EstimatorSample, PathReport, ThroughputSample, TransferReport};
pub use scenario::{parse_scenario, PathConfig, Scenario, ScenarioError, TransferSpec};
pub use sim::{loss_draw, run_transfer, SimError, SimLimits, TransferOutcome};

/// Deterministic pseudo-random stream content for experiments.
pub fn test_stream(len: usize, seed: u64) -> Vec<u8> {
    let mut state = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    (0..len)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 32) as u8
        })
        .collect()
}
