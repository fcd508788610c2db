//! Aggregate token mutations by cause to debug congestion behavior.

use ctcp::config::ProtocolParams;
use ctcp::trace::TraceEvent;
use ctcp_sim::{run_transfer, test_stream, PathConfig, SimLimits};
use std::collections::BTreeMap;

fn main() {
    let loss: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.0);
    let bytes: usize = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2_000_000);
    let paths = vec![PathConfig {
        one_way_delay: 0.05,
        bandwidth: 20e6,
        loss_rate: loss,
        queue_capacity: 100,
        seed: 1,
        ..PathConfig::default()
    }];
    let stream = test_stream(bytes, 42);
    let out = run_transfer(
        &paths,
        &ProtocolParams::default(),
        &stream,
        &SimLimits::default(),
        7,
    )
    .unwrap();
    println!("{}", out.report.summary());
    let p = &out.report.per_path[0];
    println!(
        "sent={} delivered={} lost={} qdrops={}",
        p.data_sent, p.data_delivered, p.random_losses, p.queue_drops
    );

    let mut by_cause: BTreeMap<String, (u64, f64)> = BTreeMap::new();
    let mut max_tokens: f64 = 0.0;
    let mut timeouts = 0u64;
    for ev in &out.sender_trace {
        match ev {
            TraceEvent::TokenChange {
                cause,
                delta,
                value_after,
                ..
            } => {
                let e = by_cause.entry(format!("{cause:?}")).or_default();
                e.0 += 1;
                e.1 += delta;
                max_tokens = max_tokens.max(*value_after);
            }
            TraceEvent::Timeout { .. } => timeouts += 1,
            _ => {}
        }
    }
    println!("max_tokens={max_tokens:.1} timeouts={timeouts}");
    for (cause, (count, sum)) in by_cause {
        println!("{cause:<16} count={count:<8} sum={sum:+.1}");
    }
    // sample the token/estimator series every 500ms
    for s in out
        .report
        .estimator_series
        .iter()
        .filter(|s| (s.t_s * 100.0).round() as u64 % 50 == 0)
    {
        println!(
            "t={:.2} tokens={:.1} p={:.3} rtt={:.3}",
            s.t_s, s.tokens, s.p, s.rtt_s
        );
    }
}
