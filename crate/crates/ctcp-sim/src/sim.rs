//! Deterministic discrete-event simulation of one transfer over a set of
//! lossy, rate-limited paths.
//!
//! Each path has a forward channel (data direction) modeled as a FIFO
//! serialization queue of finite capacity followed by a fixed propagation
//! delay and an i.i.d. Bernoulli drop, and a reverse channel (ACKs) with
//! the same rate and delay but no queue bound and its own loss setting.
//! Events are processed in nondecreasing time, ties broken by insertion
//! order, so identical seeds give bit-identical runs.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::time::Duration;

use ctcp::config::ProtocolParams;
use ctcp::endpoint::{ReceiverEndpoint, SenderEndpoint};
use ctcp::trace::TraceEvent;
use ctcp::wire::{self, Message, WireConfig};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::report::{EstimatorSample, PathReport, TransferReport};
use crate::scenario::PathConfig;

/// Simulation control knobs independent of the network model.
#[derive(Clone, Debug)]
pub struct SimLimits {
    /// Abort when nothing advances for this long (simulated time).
    pub stall_timeout: Duration,
    /// Hard cap on simulated time.
    pub max_sim_time: Duration,
    /// Record sender and receiver event traces in the outcome.
    pub collect_traces: bool,
}

impl Default for SimLimits {
    fn default() -> Self {
        Self {
            stall_timeout: Duration::from_secs(30),
            max_sim_time: Duration::from_secs(600),
            collect_traces: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("transfer stalled at t={at_s:.2}s ({stalled_for_s:.2}s without progress)\n{diagnostic}")]
    Stall {
        at_s: f64,
        stalled_for_s: f64,
        diagnostic: String,
    },
    #[error("handshake failed: no SYNACK within the retry budget\n{diagnostic}")]
    HandshakeFailed { diagnostic: String },
    #[error("simulated time exceeded the {0:.0}s cap")]
    TimeCapExceeded(f64),
    #[error("stream must be nonempty")]
    EmptyStream,
    #[error("at least one path is required")]
    NoPaths,
    #[error("bad path config: {0}")]
    BadPath(String),
}

/// Everything a run produces: the report plus (optionally) both traces.
pub struct TransferOutcome {
    pub report: TransferReport,
    pub sender_trace: Vec<TraceEvent>,
    pub receiver_trace: Vec<TraceEvent>,
}

/// One Bernoulli drop decision.
pub fn loss_draw(loss_rate: f64, rng: &mut ChaCha8Rng) -> bool {
    rng.gen::<f64>() < loss_rate
}

fn mix_seed(a: u64, b: u64) -> u64 {
    // splitmix64 over the combined value
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FIFO serialization: finite room, one packet at a time onto the wire.
struct Serializer {
    busy_until: Duration,
    departures: VecDeque<Duration>,
    capacity: usize,
}

impl Serializer {
    fn new(capacity: usize) -> Self {
        Self {
            busy_until: Duration::ZERO,
            departures: VecDeque::new(),
            capacity,
        }
    }

    /// Space the packet onto the wire; `None` means the queue was full.
    fn enqueue(&mut self, now: Duration, bits: f64, bandwidth: f64) -> Option<Duration> {
        while self.departures.front().is_some_and(|&d| d <= now) {
            self.departures.pop_front();
        }
        if self.departures.len() >= self.capacity {
            return None;
        }
        let start = self.busy_until.max(now);
        let departure = start + Duration::from_secs_f64(bits / bandwidth);
        self.busy_until = departure;
        self.departures.push_back(departure);
        Some(departure)
    }
}

#[derive(Default)]
struct PathCounters {
    data_sent: u64,
    data_delivered: u64,
    random_losses: u64,
    queue_drops: u64,
}

struct Link {
    cfg: PathConfig,
    forward: Serializer,
    reverse: Serializer,
    data_rng: ChaCha8Rng,
    ack_rng: ChaCha8Rng,
    jitter_rng: ChaCha8Rng,
    counters: PathCounters,
}

impl Link {
    fn new(cfg: PathConfig, run_seed: u64) -> Self {
        let base = mix_seed(cfg.seed, run_seed);
        Self {
            forward: Serializer::new(cfg.queue_capacity),
            reverse: Serializer::new(usize::MAX),
            data_rng: ChaCha8Rng::seed_from_u64(mix_seed(base, 1)),
            ack_rng: ChaCha8Rng::seed_from_u64(mix_seed(base, 2)),
            jitter_rng: ChaCha8Rng::seed_from_u64(mix_seed(base, 3)),
            counters: PathCounters::default(),
            cfg,
        }
    }

    fn jitter(&mut self) -> Duration {
        match self.cfg.jitter {
            None => Duration::ZERO,
            Some(mean) => {
                let u: f64 = self.jitter_rng.gen();
                Duration::from_secs_f64(-mean * (1.0 - u).ln())
            }
        }
    }
}

struct Event {
    path: usize,
    to_sender: bool,
    lost: bool,
    msg: Message,
}

/// Min-heap keyed by (time, insertion sequence).
struct EventQueue {
    heap: BinaryHeap<Reverse<(Duration, u64)>>,
    slots: Vec<Option<Event>>,
}

impl EventQueue {
    fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            slots: Vec::new(),
        }
    }

    fn push(&mut self, at: Duration, event: Event) {
        let seq = self.slots.len() as u64;
        self.slots.push(Some(event));
        self.heap.push(Reverse((at, seq)));
    }

    fn pop(&mut self) -> Option<(Duration, Event)> {
        let Reverse((at, seq)) = self.heap.pop()?;
        Some((at, self.slots[seq as usize].take().expect("event popped once")))
    }

    fn peek_time(&self) -> Option<Duration> {
        self.heap.peek().map(|Reverse((at, _))| *at)
    }
}

const TICK_INTERVAL: Duration = Duration::from_millis(10);

struct Simulation {
    wire_cfg: WireConfig,
    links: Vec<Link>,
    queue: EventQueue,
    sender: SenderEndpoint,
    receiver: ReceiverEndpoint,
    sender_trace: Vec<TraceEvent>,
    receiver_trace: Vec<TraceEvent>,
    estimator_series: Vec<EstimatorSample>,
    last_progress: Duration,
    progress_mark: (u32, u16, u32, u64),
}

impl Simulation {
    /// Send every queued outbound message from one side onto its link.
    fn route(&mut self, from_sender: bool, msg: Message, now: Duration) {
        let path = msg.path_id() as usize;
        debug_assert!(path < self.links.len());
        let bits = 8.0 * wire::wire_size(&msg, &self.wire_cfg) as f64;
        let is_data = matches!(msg, Message::Data(_));
        let link = &mut self.links[path];
        let bandwidth = link.cfg.bandwidth;
        let delay = Duration::from_secs_f64(link.cfg.one_way_delay);

        if from_sender {
            if is_data {
                link.counters.data_sent += 1;
            }
            let Some(departure) = link.forward.enqueue(now, bits, bandwidth) else {
                if is_data {
                    link.counters.queue_drops += 1;
                }
                return;
            };
            let lost = loss_draw(link.cfg.loss_rate, &mut link.data_rng);
            let arrival = departure + delay + link.jitter();
            self.queue.push(
                arrival,
                Event {
                    path,
                    to_sender: false,
                    lost,
                    msg,
                },
            );
        } else {
            let departure = link
                .reverse
                .enqueue(now, bits, bandwidth)
                .expect("reverse channel is unbounded");
            let lost = loss_draw(link.cfg.ack_loss_rate, &mut link.ack_rng);
            let arrival = departure + delay + link.jitter();
            self.queue.push(
                arrival,
                Event {
                    path,
                    to_sender: true,
                    lost,
                    msg,
                },
            );
        }
    }

    fn pump_transmissions(&mut self, now: Duration) {
        for path in 0..self.links.len() {
            while let Some(msg) = self.sender.poll_transmit(path, now) {
                self.route(true, msg, now);
            }
        }
    }

    fn drain_traces(&mut self, keep: bool) {
        let s = self.sender.drain_trace();
        let r = self.receiver.drain_trace();
        if keep {
            self.sender_trace.extend(s);
            self.receiver_trace.extend(r);
        } else {
            // receiver events still feed the per-path statistics
            self.receiver_trace.extend(r.into_iter().filter(|e| {
                matches!(
                    e,
                    TraceEvent::PacketReceived { .. } | TraceEvent::BlockDecoded { .. }
                )
            }));
        }
    }

    fn check_progress(&mut self, now: Duration) {
        let mark = (
            self.receiver.state().map_or(0, |s| s.ack_currblk()),
            self.receiver.state().map_or(0, |s| s.ack_currdof()),
            self.sender.state().currblk(),
            self.receiver.state().map_or(0, |s| s.bytes_decoded()),
        );
        if mark != self.progress_mark {
            self.progress_mark = mark;
            self.last_progress = now;
        }
    }

    fn diagnostic(&self, now: Duration) -> String {
        let mut out = String::new();
        let s = self.sender.state();
        out.push_str(&format!(
            "t={:.3}s sender: currblk={}/{} currdof={}\n",
            now.as_secs_f64(),
            s.currblk(),
            s.total_blocks(),
            s.currdof(),
        ));
        if let Some(r) = self.receiver.state() {
            out.push_str(&format!(
                "receiver: ack_currblk={} ack_currdof={} decoded_bytes={}\n",
                r.ack_currblk(),
                r.ack_currdof(),
                r.bytes_decoded(),
            ));
        } else {
            out.push_str("receiver: handshake incomplete\n");
        }
        for (i, link) in self.links.iter().enumerate() {
            let ps = s.path(i);
            out.push_str(&format!(
                "path {i}: sent={} delivered={} lost={} queue_drops={} tokens={:.2} p={:.4} rtt={:.4} rto={:.4} mode={:?} active={}\n",
                link.counters.data_sent,
                link.counters.data_delivered,
                link.counters.random_losses,
                link.counters.queue_drops,
                ps.tokens,
                ps.p,
                ps.rtt,
                ps.rto,
                ps.mode,
                ps.active,
            ));
        }
        out
    }
}

/// Simulate one full transfer (handshake, data, teardown) of `stream`
/// over `paths` and report durations, goodputs, and per-path statistics.
/// Identical inputs and seeds give byte-identical outcomes.
pub fn run_transfer(
    paths: &[PathConfig],
    params: &ProtocolParams,
    stream: &[u8],
    limits: &SimLimits,
    run_seed: u64,
) -> Result<TransferOutcome, SimError> {
    if paths.is_empty() {
        return Err(SimError::NoPaths);
    }
    if stream.is_empty() {
        return Err(SimError::EmptyStream);
    }
    for cfg in paths {
        cfg.validate().map_err(SimError::BadPath)?;
    }

    let wire_cfg = WireConfig {
        blksize: params.blksize,
        payload_size: params.payload_size,
    };
    let mut sender = SenderEndpoint::new(
        params.clone(),
        stream.len() as u64,
        paths.len(),
        mix_seed(run_seed, 0xc0de),
    );
    sender
        .push_stream(stream)
        .expect("stream length matches declaration");
    sender.set_trace_enabled(true);
    let mut receiver = ReceiverEndpoint::new(params.clone(), paths.len());
    receiver.set_trace_enabled(true);

    let mut sim = Simulation {
        wire_cfg,
        links: paths
            .iter()
            .map(|cfg| Link::new(cfg.clone(), run_seed))
            .collect(),
        queue: EventQueue::new(),
        sender,
        receiver,
        sender_trace: Vec::new(),
        receiver_trace: Vec::new(),
        estimator_series: Vec::new(),
        last_progress: Duration::ZERO,
        progress_mark: (0, 0, 0, 0),
    };

    // the receiver opens the connection at t=0
    for msg in sim.receiver.start(Duration::ZERO) {
        sim.route(false, msg, Duration::ZERO);
    }
    let mut next_tick = Duration::ZERO;

    loop {
        // interleave clock ticks with queued events deterministically:
        // a tick due at or before the next event runs first
        let now = match sim.queue.peek_time() {
            Some(t) => t.min(next_tick),
            None => next_tick,
        };

        if now > limits.max_sim_time {
            return Err(SimError::TimeCapExceeded(limits.max_sim_time.as_secs_f64()));
        }

        if now == next_tick {
            let tick_outputs = sim.sender.on_tick(now);
            for msg in tick_outputs {
                sim.route(true, msg, now);
            }
            let tick_outputs = sim.receiver.on_tick(now);
            for msg in tick_outputs {
                sim.route(false, msg, now);
            }
            sim.pump_transmissions(now);

            for (i, _) in paths.iter().enumerate() {
                let ps = sim.sender.state().path(i);
                sim.estimator_series.push(EstimatorSample {
                    t_s: now.as_secs_f64(),
                    path: i,
                    tokens: ps.tokens,
                    p: ps.p,
                    rtt_s: ps.rtt,
                });
            }

            sim.check_progress(now);
            if sim.receiver.handshake_failed() {
                return Err(SimError::HandshakeFailed {
                    diagnostic: sim.diagnostic(now),
                });
            }
            if now - sim.last_progress > limits.stall_timeout {
                return Err(SimError::Stall {
                    at_s: now.as_secs_f64(),
                    stalled_for_s: (now - sim.last_progress).as_secs_f64(),
                    diagnostic: sim.diagnostic(now),
                });
            }
            next_tick += TICK_INTERVAL;
        } else {
            let (at, event) = sim.queue.pop().expect("peeked event exists");
            debug_assert_eq!(at, now);
            let is_data = matches!(event.msg, Message::Data(_));
            if event.lost {
                if is_data && !event.to_sender {
                    sim.links[event.path].counters.random_losses += 1;
                }
            } else if event.to_sender {
                let outputs = sim.sender.handle_message(&event.msg, now);
                for msg in outputs {
                    sim.route(true, msg, now);
                }
            } else {
                if is_data {
                    sim.links[event.path].counters.data_delivered += 1;
                }
                let outputs = sim.receiver.handle_message(&event.msg, now);
                for msg in outputs {
                    sim.route(false, msg, now);
                }
            }
            sim.pump_transmissions(now);
            sim.check_progress(now);
        }

        sim.drain_traces(limits.collect_traces);

        if sim.sender.is_closed() && sim.receiver.is_closed() {
            break;
        }
    }

    let completed_at = sim
        .receiver
        .completed_at()
        .filter(|_| sim.receiver.is_complete());
    let Some(completed_at) = completed_at else {
        // closed without finishing (e.g. FIN budget exhausted mid-loss)
        let now = next_tick;
        return Err(SimError::Stall {
            at_s: now.as_secs_f64(),
            stalled_for_s: (now - sim.last_progress).as_secs_f64(),
            diagnostic: sim.diagnostic(now),
        });
    };

    // in-flight leftovers: events never processed before termination
    let mut in_flight = vec![0u64; paths.len()];
    while let Some((_, ev)) = sim.queue.pop() {
        if matches!(ev.msg, Message::Data(_)) && !ev.to_sender {
            in_flight[ev.path] += 1;
        }
    }

    let duration_s = completed_at.as_secs_f64();
    let payload_bytes = params.payload_size as f64;
    let mut per_path: Vec<PathReport> = sim
        .links
        .iter()
        .enumerate()
        .map(|(i, link)| PathReport {
            path: i,
            data_sent: link.counters.data_sent,
            data_delivered: link.counters.data_delivered,
            random_losses: link.counters.random_losses,
            queue_drops: link.counters.queue_drops,
            in_flight_at_end: in_flight[i],
            innovative_dofs: 0,
            dependent_packets: 0,
            goodput_mbps: 0.0,
        })
        .collect();

    // fold receiver events into per-path dof counts and throughput buckets
    let bucket_width = 0.1;
    let mut buckets: Vec<std::collections::BTreeMap<u64, u64>> =
        vec![Default::default(); paths.len()];
    for ev in &sim.receiver_trace {
        if let TraceEvent::PacketReceived {
            t,
            path,
            innovative,
            ..
        } = ev
        {
            let path = *path as usize;
            if *innovative {
                per_path[path].innovative_dofs += 1;
                *buckets[path].entry((t / bucket_width) as u64).or_default() += 1;
            } else {
                per_path[path].dependent_packets += 1;
            }
        }
    }
    for report in per_path.iter_mut() {
        report.goodput_mbps =
            report.innovative_dofs as f64 * payload_bytes * 8.0 / duration_s / 1e6;
    }
    let throughput_series = buckets
        .iter()
        .enumerate()
        .flat_map(|(path, b)| {
            b.iter().map(move |(&bucket, &dofs)| crate::report::ThroughputSample {
                t_s: bucket as f64 * bucket_width,
                path,
                mbps: dofs as f64 * payload_bytes * 8.0 / bucket_width / 1e6,
            })
        })
        .collect();

    let report = TransferReport {
        stream_bytes: stream.len() as u64,
        duration_s,
        goodput_mbps: stream.len() as f64 * 8.0 / duration_s / 1e6,
        per_path,
        throughput_series,
        estimator_series: sim.estimator_series,
    };

    // the delivered bytes must equal the pushed stream, always
    let delivered = sim.receiver.read_delivered();
    assert_eq!(
        delivered, stream,
        "decoded stream diverged from the source"
    );

    Ok(TransferOutcome {
        report,
        sender_trace: sim.sender_trace,
        receiver_trace: sim.receiver_trace,
    })
}
