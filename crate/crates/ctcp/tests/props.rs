//! Property tests for the wire codec and the block codec.

use ctcp::codec::{encode, Block, BlockDecoder};
use ctcp::wire::{
    deserialize, serialize, AckPacket, CoeffEncoding, DataPacket, Handshake, HandshakeKind,
    Message, WireConfig,
};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn message_strategy(cfg: WireConfig) -> impl Strategy<Value = Message> {
    let data = (
        any::<u8>(),
        any::<u32>(),
        any::<u32>(),
        prop_oneof![
            (0..cfg.blksize).prop_map(CoeffEncoding::Systematic),
            proptest::collection::vec(any::<u8>(), cfg.blksize as usize)
                .prop_map(CoeffEncoding::Dense),
        ],
        proptest::collection::vec(any::<u8>(), cfg.payload_size as usize),
    )
        .prop_map(|(path_id, seqno, blockno, coeffs, payload)| {
            Message::Data(DataPacket {
                path_id,
                seqno,
                blockno,
                coeffs,
                payload,
            })
        });
    let ack = (any::<u8>(), any::<u32>(), any::<u32>(), any::<u16>()).prop_map(
        |(path_id, ack_seqno, ack_currblk, ack_currdof)| {
            Message::Ack(AckPacket {
                path_id,
                ack_seqno,
                ack_currblk,
                ack_currdof,
            })
        },
    );
    let hs = (
        prop_oneof![
            Just(HandshakeKind::Syn),
            Just(HandshakeKind::SynAck),
            Just(HandshakeKind::Fin)
        ],
        any::<u8>(),
        1..=u16::MAX,
        1..=u16::MAX,
        1..=u16::MAX,
        any::<u64>(),
    )
        .prop_map(
            |(kind, path_id, blksize, numblks, payload_size, stream_length)| {
                Message::Handshake(Handshake {
                    kind,
                    path_id,
                    blksize,
                    numblks,
                    payload_size,
                    stream_length,
                })
            },
        );
    prop_oneof![data, ack, hs]
}

proptest! {
    #[test]
    fn wire_roundtrip_is_identity(msg in message_strategy(WireConfig { blksize: 16, payload_size: 64 })) {
        let cfg = WireConfig { blksize: 16, payload_size: 64 };
        let bytes = serialize(&msg, &cfg).unwrap();
        prop_assert_eq!(deserialize(&bytes, &cfg).unwrap(), msg);
    }

    #[test]
    fn any_accepted_packet_mix_decodes_to_the_source(
        blksize in prop_oneof![Just(1usize), Just(2), Just(8), Just(32)],
        payload in 1usize..48,
        seed in any::<u64>(),
        drop_mask in any::<u32>(),
    ) {
        let mut rng = StdRng::seed_from_u64(seed);
        let packets: Vec<Vec<u8>> = (0..blksize)
            .map(|i| (0..payload).map(|j| ((i * 251 + j * 37 + seed as usize) % 256) as u8).collect())
            .collect();
        let block = Block::new(0, packets.clone());
        let mut dec = BlockDecoder::new(0, blksize, payload);
        // systematic pass with drops, then coded repair until complete
        for i in 0..blksize {
            if drop_mask & (1 << (i % 32)) != 0 {
                continue;
            }
            let _ = dec.insert(encode(&block, blksize, i, &mut rng).unwrap()).unwrap();
        }
        let mut index = blksize;
        while !dec.is_complete(blksize) {
            let _ = dec.insert(encode(&block, blksize, index, &mut rng).unwrap()).unwrap();
            index += 1;
        }
        let out = dec.decode(blksize).unwrap();
        prop_assert_eq!(out, packets);
    }
}
