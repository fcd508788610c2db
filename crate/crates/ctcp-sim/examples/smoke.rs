//! Quick manual run of the reference single-path scenario.

use ctcp::config::ProtocolParams;
use ctcp_sim::{run_transfer, test_stream, PathConfig, SimLimits};

fn main() {
    let loss: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.0);
    let bytes: usize = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(11_492_499);
    let paths = vec![PathConfig {
        one_way_delay: 0.05,
        bandwidth: 20e6,
        loss_rate: loss,
        queue_capacity: 100,
        seed: 1,
        ..PathConfig::default()
    }];
    let stream = test_stream(bytes, 42);
    let limits = SimLimits {
        collect_traces: false,
        ..SimLimits::default()
    };
    let start = std::time::Instant::now();
    match run_transfer(&paths, &ProtocolParams::default(), &stream, &limits, 7) {
        Ok(out) => {
            println!("{}", out.report.summary());
            let p = &out.report.per_path[0];
            println!(
                "sent={} delivered={} lost={} qdrops={} innovative={} dependent={} inflight={}",
                p.data_sent,
                p.data_delivered,
                p.random_losses,
                p.queue_drops,
                p.innovative_dofs,
                p.dependent_packets,
                p.in_flight_at_end
            );
            println!("wall: {:?}", start.elapsed());
        }
        Err(e) => println!("error: {e}"),
    }
}
