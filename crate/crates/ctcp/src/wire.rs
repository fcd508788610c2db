//! Bit-exact serialization of the protocol's three message families.
//!
//! Every message starts with a one-byte type tag and a one-byte path id;
//! remaining fields follow in declaration order, multi-byte integers
//! big-endian. Data packets carry either a compact (flag, index) pair for
//! systematic transmissions or the full `blksize`-byte coefficient vector
//! for dense ones. Offsets are tabulated in `docs/wire.md`; parsing a
//! datagram never panics, and a parse failure never tears down a
//! connection -- the caller drops the datagram.
//!
//! Coefficient-vector and payload lengths are connection parameters fixed
//! at handshake time, so data packets do not repeat them on the wire;
//! [`WireConfig`] supplies them to both directions of the codec.

use thiserror::Error;

pub const MSG_DATA: u8 = 0x01;
pub const MSG_ACK: u8 = 0x02;
pub const MSG_SYN: u8 = 0x03;
pub const MSG_SYNACK: u8 = 0x04;
pub const MSG_FIN: u8 = 0x05;

const FLAG_SYSTEMATIC: u8 = 0x00;
const FLAG_DENSE: u8 = 0x01;

/// Connection parameters the data-packet layout depends on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WireConfig {
    pub blksize: u16,
    pub payload_size: u16,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("buffer truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("unknown coefficient flag {0:#04x}")]
    UnknownCoeffFlag(u8),
    #[error("systematic index {index} out of range for blksize {blksize}")]
    SystematicIndex { index: u16, blksize: u16 },
    #[error("coefficient vector length {got} does not match blksize {expected}")]
    CoeffLength { got: usize, expected: u16 },
    #[error("payload length {got} does not match payload_size {expected}")]
    PayloadLength { got: usize, expected: u16 },
    #[error("handshake field {field} must be at least 1")]
    ZeroField { field: &'static str },
}

/// Coefficient encoding carried in a data packet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CoeffEncoding {
    /// Uncoded packet `index` of its block; expands to a unit vector.
    Systematic(u16),
    /// Full coefficient vector, one byte per block slot.
    Dense(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataPacket {
    pub path_id: u8,
    /// Per-path transmission counter (not a byte offset).
    pub seqno: u32,
    pub blockno: u32,
    pub coeffs: CoeffEncoding,
    pub payload: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AckPacket {
    pub path_id: u8,
    /// Sequence number of the packet being acknowledged.
    pub ack_seqno: u32,
    /// Smallest block the receiver has not yet decoded.
    pub ack_currblk: u32,
    /// Degrees of freedom held for that block.
    pub ack_currdof: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HandshakeKind {
    Syn,
    SynAck,
    Fin,
}

/// Connection setup and teardown message. SYN carries the initiator's
/// proposed parameters; SYNACK answers with the authoritative ones,
/// including the stream length the receiver needs to strip padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Handshake {
    pub kind: HandshakeKind,
    pub path_id: u8,
    pub blksize: u16,
    pub numblks: u16,
    pub payload_size: u16,
    pub stream_length: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Data(DataPacket),
    Ack(AckPacket),
    Handshake(Handshake),
}

impl Message {
    pub fn path_id(&self) -> u8 {
        match self {
            Message::Data(d) => d.path_id,
            Message::Ack(a) => a.path_id,
            Message::Handshake(h) => h.path_id,
        }
    }
}

/// Exact wire image length of a message under `cfg`, without serializing.
pub fn wire_size(msg: &Message, cfg: &WireConfig) -> usize {
    match msg {
        Message::Data(d) => {
            let coeff_len = match d.coeffs {
                CoeffEncoding::Systematic(_) => 2,
                CoeffEncoding::Dense(_) => cfg.blksize as usize,
            };
            2 + 4 + 4 + 1 + coeff_len + cfg.payload_size as usize
        }
        Message::Ack(_) => 2 + 4 + 4 + 2,
        Message::Handshake(_) => 2 + 2 + 2 + 2 + 8,
    }
}

pub fn serialize(msg: &Message, cfg: &WireConfig) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(wire_size(msg, cfg));
    match msg {
        Message::Data(d) => {
            out.push(MSG_DATA);
            out.push(d.path_id);
            out.extend_from_slice(&d.seqno.to_be_bytes());
            out.extend_from_slice(&d.blockno.to_be_bytes());
            match &d.coeffs {
                CoeffEncoding::Systematic(index) => {
                    if *index >= cfg.blksize {
                        return Err(WireError::SystematicIndex {
                            index: *index,
                            blksize: cfg.blksize,
                        });
                    }
                    out.push(FLAG_SYSTEMATIC);
                    out.extend_from_slice(&index.to_be_bytes());
                }
                CoeffEncoding::Dense(coeffs) => {
                    if coeffs.len() != cfg.blksize as usize {
                        return Err(WireError::CoeffLength {
                            got: coeffs.len(),
                            expected: cfg.blksize,
                        });
                    }
                    out.push(FLAG_DENSE);
                    out.extend_from_slice(coeffs);
                }
            }
            if d.payload.len() != cfg.payload_size as usize {
                return Err(WireError::PayloadLength {
                    got: d.payload.len(),
                    expected: cfg.payload_size,
                });
            }
            out.extend_from_slice(&d.payload);
        }
        Message::Ack(a) => {
            out.push(MSG_ACK);
            out.push(a.path_id);
            out.extend_from_slice(&a.ack_seqno.to_be_bytes());
            out.extend_from_slice(&a.ack_currblk.to_be_bytes());
            out.extend_from_slice(&a.ack_currdof.to_be_bytes());
        }
        Message::Handshake(h) => {
            for (field, value) in [
                ("blksize", h.blksize),
                ("numblks", h.numblks),
                ("payload_size", h.payload_size),
            ] {
                if value == 0 {
                    return Err(WireError::ZeroField { field });
                }
            }
            out.push(match h.kind {
                HandshakeKind::Syn => MSG_SYN,
                HandshakeKind::SynAck => MSG_SYNACK,
                HandshakeKind::Fin => MSG_FIN,
            });
            out.push(h.path_id);
            out.extend_from_slice(&h.blksize.to_be_bytes());
            out.extend_from_slice(&h.numblks.to_be_bytes());
            out.extend_from_slice(&h.payload_size.to_be_bytes());
            out.extend_from_slice(&h.stream_length.to_be_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() - self.pos < n {
            return Err(WireError::Truncated {
                need: self.pos + n,
                have: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parse one message from the front of `bytes`; trailing bytes are ignored
/// so a reparse of a re-serialized message always prefix-matches.
pub fn deserialize(bytes: &[u8], cfg: &WireConfig) -> Result<Message, WireError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let msg_type = r.u8()?;
    let path_id = r.u8()?;
    match msg_type {
        MSG_DATA => {
            let seqno = r.u32()?;
            let blockno = r.u32()?;
            let coeffs = match r.u8()? {
                FLAG_SYSTEMATIC => {
                    let index = r.u16()?;
                    if index >= cfg.blksize {
                        return Err(WireError::SystematicIndex {
                            index,
                            blksize: cfg.blksize,
                        });
                    }
                    CoeffEncoding::Systematic(index)
                }
                FLAG_DENSE => CoeffEncoding::Dense(r.take(cfg.blksize as usize)?.to_vec()),
                other => return Err(WireError::UnknownCoeffFlag(other)),
            };
            let payload = r.take(cfg.payload_size as usize)?.to_vec();
            Ok(Message::Data(DataPacket {
                path_id,
                seqno,
                blockno,
                coeffs,
                payload,
            }))
        }
        MSG_ACK => Ok(Message::Ack(AckPacket {
            path_id,
            ack_seqno: r.u32()?,
            ack_currblk: r.u32()?,
            ack_currdof: r.u16()?,
        })),
        MSG_SYN | MSG_SYNACK | MSG_FIN => {
            let kind = match msg_type {
                MSG_SYN => HandshakeKind::Syn,
                MSG_SYNACK => HandshakeKind::SynAck,
                _ => HandshakeKind::Fin,
            };
            let blksize = r.u16()?;
            let numblks = r.u16()?;
            let payload_size = r.u16()?;
            let stream_length = r.u64()?;
            for (field, value) in [
                ("blksize", blksize),
                ("numblks", numblks),
                ("payload_size", payload_size),
            ] {
                if value == 0 {
                    return Err(WireError::ZeroField { field });
                }
            }
            Ok(Message::Handshake(Handshake {
                kind,
                path_id,
                blksize,
                numblks,
                payload_size,
                stream_length,
            }))
        }
        other => Err(WireError::UnknownType(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, RngCore, SeedableRng};

    fn cfg() -> WireConfig {
        WireConfig {
            blksize: 32,
            payload_size: 1024,
        }
    }

    fn random_message(rng: &mut StdRng, cfg: &WireConfig) -> Message {
        match rng.gen_range(0..3) {
            0 => {
                let coeffs = if rng.gen_bool(0.5) {
                    CoeffEncoding::Systematic(rng.gen_range(0..cfg.blksize))
                } else {
                    let mut v = vec![0u8; cfg.blksize as usize];
                    rng.fill_bytes(&mut v);
                    CoeffEncoding::Dense(v)
                };
                let mut payload = vec![0u8; cfg.payload_size as usize];
                rng.fill_bytes(&mut payload);
                Message::Data(DataPacket {
                    path_id: rng.gen(),
                    seqno: rng.gen(),
                    blockno: rng.gen(),
                    coeffs,
                    payload,
                })
            }
            1 => Message::Ack(AckPacket {
                path_id: rng.gen(),
                ack_seqno: rng.gen(),
                ack_currblk: rng.gen(),
                ack_currdof: rng.gen_range(0..=cfg.blksize),
            }),
            _ => Message::Handshake(Handshake {
                kind: *[HandshakeKind::Syn, HandshakeKind::SynAck, HandshakeKind::Fin]
                    .iter()
                    .nth(rng.gen_range(0..3))
                    .unwrap(),
                path_id: rng.gen(),
                blksize: rng.gen_range(1..=4096),
                numblks: rng.gen_range(1..=256),
                payload_size: rng.gen_range(1..=9000),
                stream_length: rng.gen(),
            }),
        }
    }

    #[test]
    fn empty_buffer_is_truncated() {
        assert!(matches!(
            deserialize(&[], &cfg()),
            Err(WireError::Truncated { .. })
        ));
    }

    #[test]
    fn unknown_type_is_rejected() {
        assert_eq!(
            deserialize(&[0x7f, 0x00, 0, 0], &cfg()),
            Err(WireError::UnknownType(0x7f))
        );
    }

    #[test]
    fn systematic_index_must_sit_inside_block() {
        let msg = Message::Data(DataPacket {
            path_id: 0,
            seqno: 0,
            blockno: 0,
            coeffs: CoeffEncoding::Systematic(32),
            payload: vec![0; 1024],
        });
        assert_eq!(
            serialize(&msg, &cfg()),
            Err(WireError::SystematicIndex {
                index: 32,
                blksize: 32
            })
        );
    }

    #[test]
    fn roundtrip_randomized_messages() {
        let c = cfg();
        let mut rng = StdRng::seed_from_u64(0x5eed);
        for _ in 0..10_000 {
            let msg = random_message(&mut rng, &c);
            let bytes = serialize(&msg, &c).expect("serialize");
            assert_eq!(bytes.len(), wire_size(&msg, &c));
            let back = deserialize(&bytes, &c).expect("deserialize");
            assert_eq!(back, msg);
        }
    }

    #[test]
    fn systematic_image_is_strictly_smaller_than_dense() {
        let c = cfg();
        let sys = Message::Data(DataPacket {
            path_id: 0,
            seqno: 1,
            blockno: 2,
            coeffs: CoeffEncoding::Systematic(3),
            payload: vec![0; c.payload_size as usize],
        });
        let dense = Message::Data(DataPacket {
            path_id: 0,
            seqno: 1,
            blockno: 2,
            coeffs: CoeffEncoding::Dense(vec![1; c.blksize as usize]),
            payload: vec![0; c.payload_size as usize],
        });
        let sys_len = serialize(&sys, &c).unwrap().len();
        let dense_len = serialize(&dense, &c).unwrap().len();
        // type + path + seqno + blockno + flag
        let header = 1 + 1 + 4 + 4 + 1;
        assert_eq!(sys_len, header + 2 + c.payload_size as usize);
        assert_eq!(dense_len, header + c.blksize as usize + c.payload_size as usize);
        assert!(sys_len < dense_len);
    }

    #[test]
    fn fuzzed_buffers_never_panic_and_reparse_consistently() {
        let c = cfg();
        let mut rng = StdRng::seed_from_u64(0xf022);
        for _ in 0..100_000 {
            let len = rng.gen_range(0..96);
            let mut buf = vec![0u8; len];
            rng.fill_bytes(&mut buf);
            // nudge a fraction toward valid type bytes so the parse goes deep
            if len > 0 && rng.gen_bool(0.5) {
                buf[0] = rng.gen_range(1..=5);
            }
            if let Ok(msg) = deserialize(&buf, &c) {
                let bytes = serialize(&msg, &c).expect("parsed message must serialize");
                assert_eq!(&buf[..bytes.len()], &bytes[..], "prefix mismatch");
            }
        }
    }
}
