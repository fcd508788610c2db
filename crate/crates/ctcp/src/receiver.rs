//! Receiver state machine: per-block decoding buffers, ACK construction,
//! and in-order delivery of the decoded byte stream.

use std::collections::BTreeMap;
use std::time::Duration;

use crate::codec::{BlockDecoder, CodedPayload};
use crate::config::ProtocolParams;
use crate::trace::{secs, TraceBuffer, TraceEvent};
use crate::wire::{AckPacket, CoeffEncoding, DataPacket};

/// Connection-wide receiver state. Blocks decode lazily: rows accumulate
/// per packet, and the Gauss-Jordan finish runs once a block holds enough
/// degrees of freedom, as the window cursor passes it.
pub struct ReceiverState {
    params: ProtocolParams,
    stream_length: u64,
    ack_currblk: u32,
    ack_currdof: u16,
    decoders: BTreeMap<u32, BlockDecoder>,
    /// Decoded, in-order bytes not yet handed to the application.
    outbox: Vec<u8>,
    /// Bytes already decoded into `outbox` (including drained ones).
    delivered: u64,
    pub trace: TraceBuffer,
}

impl ReceiverState {
    pub fn new(params: ProtocolParams, stream_length: u64) -> Self {
        debug_assert!(params.validate().is_ok());
        Self {
            params,
            stream_length,
            ack_currblk: 0,
            ack_currdof: 0,
            decoders: BTreeMap::new(),
            outbox: Vec::new(),
            delivered: 0,
            trace: TraceBuffer::default(),
        }
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn ack_currblk(&self) -> u32 {
        self.ack_currblk
    }

    pub fn ack_currdof(&self) -> u16 {
        self.ack_currdof
    }

    pub fn total_blocks(&self) -> u32 {
        self.params.total_blocks(self.stream_length)
    }

    /// Every stream byte has been decoded (not necessarily drained).
    pub fn is_complete(&self) -> bool {
        self.delivered >= self.stream_length
    }

    pub fn bytes_decoded(&self) -> u64 {
        self.delivered
    }

    /// Handle one data packet and build the ACK for it. Every arriving
    /// packet produces exactly one ACK, including linearly dependent,
    /// stale, and out-of-window ones.
    pub fn on_data(&mut self, pkt: &DataPacket, now: Duration) -> AckPacket {
        let blkno = pkt.blockno;
        let window_end = self.ack_currblk as u64 + self.params.numblks as u64;
        let in_window = blkno >= self.ack_currblk && (blkno as u64) < window_end;

        let fill = self.fill_of(blkno);
        if in_window && fill > 0 {
            let payload = self.expand(pkt);
            // a valid transmission never mixes packet slots past the block's
            // fill count; anything else would corrupt rank accounting
            let well_formed = payload.coeffs.iter().skip(fill).all(|&c| c == 0);
            let dec = self.decoders.entry(blkno).or_insert_with(|| {
                BlockDecoder::new(
                    blkno,
                    self.params.blksize as usize,
                    self.params.payload_size as usize,
                )
            });
            let innovative = well_formed && dec.insert(payload).unwrap_or(false);
            if innovative && blkno == self.ack_currblk {
                self.ack_currdof += 1;
            }
            self.trace.push(|| TraceEvent::PacketReceived {
                t: secs(now),
                path: pkt.path_id,
                seqno: pkt.seqno,
                blockno: blkno,
                innovative,
            });
            self.advance(now);
        } else {
            self.trace.push(|| TraceEvent::PacketStale {
                t: secs(now),
                path: pkt.path_id,
                blockno: blkno,
            });
        }

        AckPacket {
            path_id: pkt.path_id,
            ack_seqno: pkt.seqno,
            ack_currblk: self.ack_currblk,
            ack_currdof: self.ack_currdof,
        }
    }

    /// Drain all newly decoded in-order bytes.
    pub fn read_delivered(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.outbox)
    }

    fn fill_of(&self, blkno: u32) -> usize {
        self.params.fill_of(blkno, self.stream_length) as usize
    }

    fn expand(&self, pkt: &DataPacket) -> CodedPayload {
        match &pkt.coeffs {
            CoeffEncoding::Systematic(index) => CodedPayload::systematic(
                self.params.blksize as usize,
                *index as usize,
                pkt.payload.clone(),
            ),
            CoeffEncoding::Dense(coeffs) => CodedPayload {
                coeffs: coeffs.clone(),
                data: pkt.payload.clone(),
            },
        }
    }

    /// Decode and deliver every complete block at the window cursor, then
    /// point `ack_currdof` at the rank already held for the new current
    /// block.
    fn advance(&mut self, now: Duration) {
        loop {
            let blkno = self.ack_currblk;
            let fill = self.fill_of(blkno);
            if fill == 0 {
                break; // past the end of the stream
            }
            let complete = self
                .decoders
                .get(&blkno)
                .is_some_and(|d| d.is_complete(fill));
            if !complete {
                break;
            }
            let dec = self.decoders.remove(&blkno).unwrap();
            let packets = dec.decode(fill).expect("rank checked above");
            let offset = blkno as u64 * self.params.block_bytes();
            let take = (self.stream_length - offset).min(self.params.block_bytes()) as usize;
            let mut written = 0usize;
            for pkt in packets {
                if written >= take {
                    break;
                }
                let n = pkt.len().min(take - written);
                self.outbox.extend_from_slice(&pkt[..n]);
                written += n;
            }
            self.delivered += written as u64;
            self.trace.push(|| TraceEvent::BlockDecoded {
                t: secs(now),
                blockno: blkno,
            });
            self.ack_currblk += 1;
            self.ack_currdof = self
                .decoders
                .get(&self.ack_currblk)
                .map_or(0, BlockDecoder::rank);
        }
    }
}
