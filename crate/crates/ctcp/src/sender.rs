//! Sender state machine: per-path network estimation, token-based
//! congestion control, block admission, and block scheduling.
//!
//! All operations are clock-driven and transport-agnostic: the caller
//! (simulator or UDP event loop) feeds in parsed ACKs, clock ticks, and
//! transmit opportunities. One `SenderState` is owned by one logical
//! event loop; nothing here is shared.

use std::collections::{BTreeMap, VecDeque};
use std::time::Duration;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::{encode, Block};
use crate::config::{ProtocolParams, SchedulerKind};
use crate::trace::{secs, TokenCause, TraceBuffer, TraceEvent};
use crate::wire::{AckPacket, CoeffEncoding, DataPacket};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SenderError {
    #[error("stream overflow: {pushed} bytes pushed against a declared length of {declared}")]
    StreamOverflow { pushed: u64, declared: u64 },
    #[error("unknown path {0}")]
    UnknownPath(usize),
}

/// Congestion-control mode of one path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CcMode {
    SlowStart,
    CongestionAvoidance,
}

/// Send-time record for one transmitted packet: which block it came from
/// and when it left, keyed by per-path sequence number.
#[derive(Clone, Copy, Debug)]
pub struct SentEntry {
    pub blockno: u32,
    pub sent_at: Duration,
}

/// Per-path log of unacknowledged transmissions. The front always sits at
/// `seqno_una`; a timeout wipes it so ACKs from before the timeout find no
/// entry and are discarded.
#[derive(Debug, Default)]
pub struct SentLog {
    base: u32,
    entries: VecDeque<SentEntry>,
}

impl SentLog {
    pub fn get(&self, seqno: u32) -> Option<&SentEntry> {
        let offset = seqno.checked_sub(self.base)? as usize;
        self.entries.get(offset)
    }

    pub fn push(&mut self, entry: SentEntry) {
        self.entries.push_back(entry);
    }

    /// Drop entries below `seqno` (exclusive new base).
    pub fn prune_below(&mut self, seqno: u32) {
        while self.base < seqno {
            if self.entries.pop_front().is_none() {
                break;
            }
            self.base += 1;
        }
        self.base = self.base.max(seqno);
    }

    /// Invalidate everything up to `seqno`; used on timeout.
    pub fn clear_to(&mut self, seqno: u32) {
        self.entries.clear();
        self.base = seqno;
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &SentEntry)> {
        self.entries
            .iter()
            .enumerate()
            .map(move |(i, e)| (self.base + i as u32, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Estimator and congestion state for one path.
#[derive(Debug)]
pub struct PathState {
    /// Short-term loss rate estimate.
    pub p: f64,
    /// Long-term loss rate estimate.
    pub p_long: f64,
    /// Long-term deviation of the loss rate.
    pub p_stdlong: f64,
    /// Smoothed round-trip time, seconds.
    pub rtt: f64,
    /// Retransmission timeout, seconds; gamma * rtt after every ACK.
    pub rto: f64,
    /// Next sequence number to transmit on this path.
    pub seqno_nxt: u32,
    /// Oldest unacknowledged sequence number.
    pub seqno_una: u32,
    /// Slow start exits above this token count.
    pub ss_threshold: f64,
    /// When the latest ACK (or the activating SYN) arrived.
    pub time_lastack: Duration,
    /// Transmission credits on this path. Each unacknowledged packet
    /// borrows one; a packet may be sent while at least one whole token is
    /// unborrowed. ACKs return credits implicitly by advancing
    /// `seqno_una` past delivered and lost packets alike.
    pub tokens: f64,
    pub mode: CcMode,
    /// Handshake seen; inactive paths neither transmit nor time out.
    pub active: bool,
    pub sent_log: SentLog,
}

impl PathState {
    /// Packets sent and not yet accounted for by an ACK or timeout.
    pub fn outstanding(&self) -> u32 {
        self.seqno_nxt - self.seqno_una
    }

    /// Tokens not currently borrowed by an in-flight packet.
    pub fn available_tokens(&self) -> f64 {
        self.tokens - self.outstanding() as f64
    }
}

impl PathState {
    fn new(params: &ProtocolParams) -> Self {
        Self {
            p: params.initial_p,
            p_long: params.initial_p_long,
            p_stdlong: params.initial_p_stdlong,
            rtt: params.initial_rtt,
            rto: params.gamma * params.initial_rtt,
            seqno_nxt: 0,
            seqno_una: 0,
            ss_threshold: params.initial_ss_threshold,
            time_lastack: Duration::ZERO,
            tokens: params.initial_tokens,
            mode: CcMode::SlowStart,
            active: false,
            sent_log: SentLog::default(),
        }
    }
}

/// Batched loss EWMA: fold one delivered packet plus `losses` lost packets
/// into the estimate in a single step. Equivalent to one success update
/// followed by `losses` loss updates of a scalar EWMA with weight `w`.
pub fn batched_loss_ewma(p: f64, w: f64, losses: u32) -> f64 {
    let keep = 1.0 - w;
    p * keep.powi(losses as i32 + 1) + (1.0 - keep.powi(losses as i32))
}

/// Connection-wide sender state: the block window, delivery cursor, and
/// one `PathState` per configured path.
pub struct SenderState {
    params: ProtocolParams,
    stream_length: u64,
    stream: Vec<u8>,
    currblk: u32,
    currdof: u16,
    blocks: BTreeMap<u32, Block>,
    /// Next transmission index per active block; the first `fill_count`
    /// transmissions of a block (across all paths) are systematic.
    encode_index: BTreeMap<u32, usize>,
    next_admit: u32,
    paths: Vec<PathState>,
    rng: ChaCha8Rng,
    pub trace: TraceBuffer,
}

impl SenderState {
    pub fn new(params: ProtocolParams, stream_length: u64, num_paths: usize, seed: u64) -> Self {
        debug_assert!(params.validate().is_ok());
        debug_assert!(num_paths >= 1);
        let paths = (0..num_paths).map(|_| PathState::new(&params)).collect();
        Self {
            params,
            stream_length,
            stream: Vec::new(),
            currblk: 0,
            currdof: 0,
            blocks: BTreeMap::new(),
            encode_index: BTreeMap::new(),
            next_admit: 0,
            paths,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace: TraceBuffer::default(),
        }
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn stream_length(&self) -> u64 {
        self.stream_length
    }

    pub fn currblk(&self) -> u32 {
        self.currblk
    }

    pub fn currdof(&self) -> u16 {
        self.currdof
    }

    pub fn total_blocks(&self) -> u32 {
        self.params.total_blocks(self.stream_length)
    }

    /// Every block has been acknowledged as decoded.
    pub fn is_complete(&self) -> bool {
        self.currblk >= self.total_blocks()
    }

    pub fn path(&self, path: usize) -> &PathState {
        &self.paths[path]
    }

    pub fn path_mut(&mut self, path: usize) -> &mut PathState {
        &mut self.paths[path]
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn active_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Mark a path live once its handshake completes; starts the timeout
    /// clock on that path.
    pub fn activate_path(&mut self, path: usize, now: Duration) {
        let ps = &mut self.paths[path];
        if !ps.active {
            ps.active = true;
            ps.time_lastack = now;
        }
    }

    /// Append application bytes to the outgoing stream. The total may never
    /// exceed the stream length declared at connection setup.
    pub fn push_stream(&mut self, bytes: &[u8]) -> Result<(), SenderError> {
        let pushed = self.stream.len() as u64 + bytes.len() as u64;
        if pushed > self.stream_length {
            return Err(SenderError::StreamOverflow {
                pushed,
                declared: self.stream_length,
            });
        }
        self.stream.extend_from_slice(bytes);
        self.admit_blocks();
        Ok(())
    }

    /// Materialize blocks into the active window as stream data becomes
    /// available. Block `i` must be full before block `i+1` forms; the
    /// final block may be short, its last packet zero-padded.
    fn admit_blocks(&mut self) {
        let block_bytes = self.params.block_bytes();
        let payload = self.params.payload_size as usize;
        while (self.blocks.len() as u64) < self.params.numblks as u64
            && self.next_admit < self.total_blocks()
            && (self.next_admit as u64) < self.currblk as u64 + self.params.numblks as u64
        {
            let start = self.next_admit as u64 * block_bytes;
            let end = (start + block_bytes).min(self.stream_length);
            let have_all = self.stream.len() as u64 >= end;
            if !have_all {
                break;
            }
            let mut packets = Vec::new();
            let mut off = start as usize;
            while (off as u64) < end {
                let take = payload.min(end as usize - off);
                let mut pkt = self.stream[off..off + take].to_vec();
                pkt.resize(payload, 0);
                packets.push(pkt);
                off += take;
            }
            self.blocks.insert(self.next_admit, Block::new(self.next_admit, packets));
            self.next_admit += 1;
        }
    }

    fn adjust_tokens(&mut self, path: usize, cause: TokenCause, delta: f64, now: Duration) {
        let ps = &mut self.paths[path];
        ps.tokens += delta;
        let value_after = ps.tokens;
        self.trace.push(|| TraceEvent::TokenChange {
            t: secs(now),
            path: path as u8,
            cause,
            delta,
            value_after,
        });
    }

    fn clamp_tokens(&mut self, path: usize, now: Duration) {
        let floor = self.params.token_floor;
        let cap = self.params.token_cap;
        let current = self.paths[path].tokens;
        let mut target = current.max(floor);
        if let Some(cap) = cap {
            target = target.min(cap.max(floor));
        }
        if target != current {
            self.adjust_tokens(path, TokenCause::Clamp, target - current, now);
        }
    }

    /// Process one ACK received on `path`: update the RTT and loss
    /// estimators, advance the block window, return transmission credits,
    /// and run the congestion-control adjustment.
    ///
    /// ACKs whose sequence number has no send-time record (stale after a
    /// timeout, duplicates, reordered below the cumulative point) are
    /// ignored entirely.
    pub fn on_ack(&mut self, path: usize, ack: &AckPacket, now: Duration) {
        let params = self.params.clone();
        let Some(entry) = self.paths[path].sent_log.get(ack.ack_seqno) else {
            self.trace.push(|| TraceEvent::AckIgnored {
                t: secs(now),
                path: path as u8,
                ack_seqno: ack.ack_seqno,
            });
            return;
        };
        let sent_at = entry.sent_at;

        let ps = &mut self.paths[path];
        ps.time_lastack = now;
        let rtt_sample = (now - sent_at).as_secs_f64();
        ps.rtt = ps.rtt * (1.0 - params.alpha_rtt) + rtt_sample * params.alpha_rtt;

        if ack.ack_currblk > self.currblk {
            let freed: Vec<u32> = self
                .blocks
                .range(..ack.ack_currblk)
                .map(|(&b, _)| b)
                .collect();
            for b in freed {
                self.blocks.remove(&b);
                self.encode_index.remove(&b);
            }
            self.currdof = ack.ack_currdof;
            self.currblk = ack.ack_currblk;
            self.admit_blocks();
        }

        let ps = &mut self.paths[path];
        let mut losses = 0u32;
        if ack.ack_seqno >= ps.seqno_una {
            losses = ack.ack_seqno - ps.seqno_una;
            ps.p = batched_loss_ewma(ps.p, params.mu, losses);
            ps.p_long = batched_loss_ewma(ps.p_long, params.nu, losses);
            ps.p_stdlong =
                ps.p_stdlong * (1.0 - params.nu) + params.nu * (ps.p - ps.p_long).abs();
        }
        ps.seqno_una = ack.ack_seqno + 1;
        ps.sent_log.prune_below(ps.seqno_una);
        if ack.ack_currblk == self.currblk {
            self.currdof = self.currdof.max(ack.ack_currdof);
        }

        self.on_ack_cc(path, rtt_sample, now);

        let ps = &self.paths[path];
        let (p, tokens_after) = (ps.p, ps.tokens);
        self.trace.push(|| TraceEvent::AckProcessed {
            t: secs(now),
            path: path as u8,
            ack_seqno: ack.ack_seqno,
            ack_currblk: ack.ack_currblk,
            ack_currdof: ack.ack_currdof,
            losses,
            rtt_sample,
            p,
            tokens_after,
        });
    }

    /// Congestion-control branch run once per accepted ACK: refresh the
    /// RTO, grow tokens in slow start, fine-tune them against the delay
    /// signal in avoidance, and cut on loss spikes.
    pub fn on_ack_cc(&mut self, path: usize, rtt_sample: f64, now: Duration) {
        let params = self.params.clone();
        let ps = &mut self.paths[path];
        ps.rto = params.gamma * ps.rtt;

        match ps.mode {
            CcMode::SlowStart => {
                self.adjust_tokens(path, TokenCause::SlowStart, 1.0, now);
                let ps = &mut self.paths[path];
                if ps.tokens > ps.ss_threshold {
                    ps.mode = CcMode::CongestionAvoidance;
                }
            }
            CcMode::CongestionAvoidance => {
                let delta = 1.0 - ps.rtt / rtt_sample;
                let tokens = ps.tokens;
                if delta > params.beta_vegas {
                    self.adjust_tokens(path, TokenCause::VegasAdjust, -1.0 / tokens, now);
                } else if delta < params.alpha_vegas {
                    self.adjust_tokens(path, TokenCause::VegasAdjust, 1.0 / tokens, now);
                }
            }
        }

        let ps = &self.paths[path];
        if ps.p > ps.p_long + ps.p_stdlong {
            let cut = -(ps.p - ps.p_long) / 2.0;
            self.adjust_tokens(path, TokenCause::LossSpikeCut, cut, now);
        }
        self.clamp_tokens(path, now);
    }

    /// Timeout check; call at least every rto/4. On expiry the RTO doubles,
    /// tokens reset, outstanding per-path accounting is invalidated, and
    /// the path re-enters slow start. A timeout means ACKs the path was
    /// waiting for never came; an idle path cannot time out.
    pub fn on_tick(&mut self, path: usize, now: Duration) {
        let params = self.params.clone();
        let ps = &mut self.paths[path];
        if !ps.active || ps.outstanding() == 0 {
            return;
        }
        if now <= ps.time_lastack + Duration::from_secs_f64(ps.rto) {
            return;
        }
        ps.rto *= 2.0;
        ps.ss_threshold = ps.tokens / 2.0;
        let delta = params.initial_tokens - ps.tokens;
        ps.seqno_una = ps.seqno_nxt;
        ps.sent_log.clear_to(ps.seqno_nxt);
        ps.mode = CcMode::SlowStart;
        ps.time_lastack = now;
        self.adjust_tokens(path, TokenCause::TimeoutReset, delta, now);
        self.clamp_tokens(path, now);
        let ps = &self.paths[path];
        let (rto_after, tokens_after) = (ps.rto, ps.tokens);
        self.trace.push(|| TraceEvent::Timeout {
            t: secs(now),
            path: path as u8,
            rto_after,
            tokens_after,
        });
    }

    /// Count logged, unacknowledged packets younger than
    /// `onfly_age_factor * rtt` per window block for one path.
    fn onfly(&self, path: usize, now: Duration) -> Vec<u32> {
        let ps = &self.paths[path];
        let horizon = Duration::from_secs_f64(self.params.onfly_age_factor * ps.rtt);
        let numblks = self.params.numblks as u32;
        let mut counts = vec![0u32; numblks as usize];
        for (_, entry) in ps.sent_log.iter() {
            if now < entry.sent_at + horizon
                && entry.blockno >= self.currblk
                && entry.blockno < self.currblk + numblks
            {
                counts[(entry.blockno - self.currblk) as usize] += 1;
            }
        }
        counts
    }

    fn block_fill(&self, blkno: u32) -> Option<f64> {
        self.blocks.get(&blkno).map(|b| b.fill_count() as f64)
    }

    /// Single-path block selection: pick the lowest block whose expected
    /// delivered in-flight cover leaves a deficit.
    pub fn schedule_single(&self, path: usize, now: Duration) -> Option<u32> {
        let ps = &self.paths[path];
        let onfly = self.onfly(path, now);
        let survive = 1.0 - ps.p;
        for (idx, blkno) in (self.currblk..self.currblk + self.params.numblks as u32).enumerate() {
            let fill = self.block_fill(blkno)?;
            let cover = survive * onfly[idx] as f64;
            if blkno == self.currblk {
                if cover < fill - self.currdof as f64 {
                    return Some(blkno);
                }
            } else if cover < fill {
                return Some(blkno);
            }
        }
        None
    }

    /// Multi-path block selection for `path`: combine expected in-flight
    /// cover across all paths and weigh this path's RTT against the
    /// connection's aggregate throughput before claiming the current block.
    pub fn schedule_multi(&self, path: usize, now: Duration) -> Option<u32> {
        let numblks = self.params.numblks as usize;
        let mut thru = 0.0;
        let mut sent = 0.0;
        let mut cof = vec![0.0f64; numblks];
        for (k, ps) in self.paths.iter().enumerate() {
            let survive = 1.0 - ps.p;
            let outstanding = (ps.seqno_nxt - ps.seqno_una) as f64;
            thru += survive * outstanding / ps.rtt;
            sent += survive * outstanding;
            for (idx, count) in self.onfly(k, now).into_iter().enumerate() {
                cof[idx] += survive * count as f64;
            }
        }

        let rtt_i = self.paths[path].rtt;
        for (idx, blkno) in (self.currblk..self.currblk + self.params.numblks as u32).enumerate() {
            let fill = self.block_fill(blkno)?;
            if blkno == self.currblk {
                // Deficit guard: the delay correction plus expected cover
                // must fall short of the dofs the receiver still needs.
                if thru * rtt_i - sent + cof[idx] < fill - self.currdof as f64 {
                    return Some(blkno);
                }
            } else if cof[idx] < fill {
                return Some(blkno);
            }
        }
        None
    }

    fn schedule(&self, path: usize, now: Duration) -> Option<u32> {
        let kind = match self.params.scheduler {
            SchedulerKind::Auto => {
                if self.paths.len() > 1 {
                    SchedulerKind::Multi
                } else {
                    SchedulerKind::Single
                }
            }
            k => k,
        };
        match kind {
            SchedulerKind::Single => self.schedule_single(path, now),
            SchedulerKind::Multi => self.schedule_multi(path, now),
            SchedulerKind::Auto => unreachable!(),
        }
    }

    /// One transmit opportunity on `path`: if a whole token is unborrowed
    /// and the scheduler names a block, borrow the token and emit the next
    /// (systematic or coded) packet for that block. A withheld
    /// transmission keeps the token free.
    pub fn try_transmit(&mut self, path: usize, now: Duration) -> Option<DataPacket> {
        if !self.paths[path].active || self.paths[path].available_tokens() < 1.0 {
            return None;
        }
        let blkno = self.schedule(path, now)?;
        let blksize = self.params.blksize as usize;
        let index = *self.encode_index.get(&blkno).unwrap_or(&0);
        let block = self.blocks.get(&blkno).expect("scheduled block is admitted");
        let systematic = index < block.fill_count();
        let coded = encode(block, blksize, index, &mut self.rng)
            .expect("admitted blocks are never empty");
        self.encode_index.insert(blkno, index + 1);

        let coeffs = if systematic {
            CoeffEncoding::Systematic(index as u16)
        } else {
            CoeffEncoding::Dense(coded.coeffs)
        };

        let ps = &mut self.paths[path];
        let seqno = ps.seqno_nxt;
        ps.sent_log.push(SentEntry {
            blockno: blkno,
            sent_at: now,
        });
        ps.seqno_nxt += 1;

        let tokens_after = self.paths[path].available_tokens();
        self.trace.push(|| TraceEvent::PacketSent {
            t: secs(now),
            path: path as u8,
            seqno,
            blockno: blkno,
            systematic,
            tokens_after,
        });

        Some(DataPacket {
            path_id: path as u8,
            seqno,
            blockno: blkno,
            coeffs,
            payload: coded.data,
        })
    }
}
