//! Engine for a network-coded, multipath, reliable stream transport.
//!
//! The sender segments a stream into fixed-size blocks, transmits each
//! block's packets systematically first and as random linear combinations
//! over GF(256) afterwards, and paces itself with a token gauge driven by
//! delay and loss-rate estimates. The receiver accumulates degrees of
//! freedom per block, acknowledges cumulative decoding progress instead of
//! byte ranges, and delivers decoded blocks in order.
//!
//! Everything here is transport-agnostic and clock-driven: the
//! [`endpoint`] state machines run identically under a deterministic
//! simulator or a UDP datapath.

pub mod codec;
pub mod config;
pub mod endpoint;
pub mod gf256;
pub mod receiver;
pub mod sender;
pub mod trace;
pub mod wire;

pub use codec::{Block, BlockDecoder, CodedPayload};
pub use config::{ProtocolParams, SchedulerKind};
pub use endpoint::{ReceiverEndpoint, SenderEndpoint};
pub use receiver::ReceiverState;
pub use sender::{CcMode, PathState, SenderState};
pub use wire::{AckPacket, DataPacket, Handshake, HandshakeKind, Message};
