//! Systematic block encoding and incremental per-block decoding.
//!
//! A block is up to `blksize` equal-length packets. The first `fill`
//! transmissions of a block are the packets themselves (unit coefficient
//! vectors); every later transmission mixes all packets in the block with
//! coefficients drawn uniformly from GF(256). The receiver feeds arriving
//! payloads into a [`BlockDecoder`], which keeps its coefficient matrix
//! upper-triangular with a unit diagonal so the final decode is a plain
//! back-substitution.

use rand::Rng;
use thiserror::Error;

use crate::gf256::{addmul_slice, scale_slice, Gf256};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("cannot encode from an empty block")]
    EmptyBlock,
    #[error("block {blkno} is not decodable: rank {rank} of {needed}")]
    NotDecodable { blkno: u32, rank: u16, needed: u16 },
    #[error("coefficient vector length {got} does not match blksize {expected}")]
    CoeffLength { got: usize, expected: usize },
}

/// A group of up to `blksize` equal-length payload packets; the unit of
/// coding, acknowledgment, and reliability.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub blkno: u32,
    packets: Vec<Vec<u8>>,
}

impl Block {
    pub fn new(blkno: u32, packets: Vec<Vec<u8>>) -> Self {
        debug_assert!(
            packets.windows(2).all(|w| w[0].len() == w[1].len()),
            "block packets must share one length"
        );
        Self { blkno, packets }
    }

    /// Packets currently present (the final block of a stream may hold
    /// fewer than `blksize`).
    pub fn fill_count(&self) -> usize {
        self.packets.len()
    }

    pub fn packet(&self, index: usize) -> &[u8] {
        &self.packets[index]
    }

    pub fn payload_len(&self) -> usize {
        self.packets.first().map_or(0, Vec::len)
    }
}

/// One coded (or systematic) payload: a coefficient vector over the block's
/// packet slots plus the combined payload bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodedPayload {
    /// Always `blksize` long; positions past the block's fill count are zero.
    pub coeffs: Vec<u8>,
    pub data: Vec<u8>,
}

impl CodedPayload {
    /// Unit coefficient vector: the uncoded packet `index` verbatim.
    pub fn systematic(blksize: usize, index: usize, data: Vec<u8>) -> Self {
        debug_assert!(index < blksize);
        let mut coeffs = vec![0u8; blksize];
        coeffs[index] = 1;
        Self { coeffs, data }
    }
}

/// Produce the `index`-th transmission for a block: packets themselves
/// while `index < fill_count`, dense random combinations afterwards.
///
/// Dense coefficients are drawn uniformly over the whole field (zeros
/// included) for every present packet; an all-zero draw is retried.
pub fn encode<R: Rng + ?Sized>(
    block: &Block,
    blksize: usize,
    index: usize,
    rng: &mut R,
) -> Result<CodedPayload, CodecError> {
    let fill = block.fill_count();
    if fill == 0 {
        return Err(CodecError::EmptyBlock);
    }
    debug_assert!(fill <= blksize);

    if index < fill {
        return Ok(CodedPayload::systematic(
            blksize,
            index,
            block.packet(index).to_vec(),
        ));
    }

    let mut coeffs = vec![0u8; blksize];
    loop {
        rng.fill(&mut coeffs[..fill]);
        if coeffs[..fill].iter().any(|&c| c != 0) {
            break;
        }
    }
    let mut data = vec![0u8; block.payload_len()];
    for (i, &c) in coeffs[..fill].iter().enumerate() {
        addmul_slice(&mut data, block.packet(i), Gf256(c));
    }
    Ok(CodedPayload { coeffs, data })
}

/// Incremental Gaussian decoder for one block.
///
/// Rows are held upper-triangular with unit diagonal entries: an incoming
/// vector is eliminated against stored rows until its leading position hits
/// an empty row (insert, rank +1) or it vanishes (linearly dependent).
#[derive(Clone, Debug)]
pub struct BlockDecoder {
    pub blkno: u32,
    blksize: usize,
    payload_len: usize,
    coeff_rows: Vec<Vec<u8>>,
    payload_rows: Vec<Vec<u8>>,
    row_filled: Vec<bool>,
    rank: u16,
}

impl BlockDecoder {
    pub fn new(blkno: u32, blksize: usize, payload_len: usize) -> Self {
        Self {
            blkno,
            blksize,
            payload_len,
            coeff_rows: vec![Vec::new(); blksize],
            payload_rows: vec![Vec::new(); blksize],
            row_filled: vec![false; blksize],
            rank: 0,
        }
    }

    pub fn rank(&self) -> u16 {
        self.rank
    }

    /// Forward-eliminate `pkt` into the decoder. Returns `true` when the
    /// packet was innovative (rank grew), `false` when it was linearly
    /// dependent on rows already held.
    pub fn insert(&mut self, pkt: CodedPayload) -> Result<bool, CodecError> {
        if pkt.coeffs.len() != self.blksize {
            return Err(CodecError::CoeffLength {
                got: pkt.coeffs.len(),
                expected: self.blksize,
            });
        }
        let mut coeffs = pkt.coeffs;
        let mut data = pkt.data;
        data.resize(self.payload_len, 0);

        loop {
            let Some(index) = coeffs.iter().position(|&c| c != 0) else {
                // vanished: dependent on stored rows (or arrived all-zero)
                return Ok(false);
            };
            let pivot = Gf256(coeffs[index]);
            if !self.row_filled[index] {
                let inv = pivot.inv();
                scale_slice(&mut coeffs, inv);
                scale_slice(&mut data, inv);
                self.coeff_rows[index] = coeffs;
                self.payload_rows[index] = data;
                self.row_filled[index] = true;
                self.rank += 1;
                return Ok(true);
            }
            // eliminate the leading term and keep going
            addmul_slice(&mut coeffs, &self.coeff_rows[index], pivot);
            addmul_slice(&mut data, &self.payload_rows[index], pivot);
        }
    }

    /// `true` once the decoder holds `fill` independent rows.
    pub fn is_complete(&self, fill: usize) -> bool {
        usize::from(self.rank) >= fill
    }

    /// Back-substitute the upper-triangular system and return the original
    /// packets in order. Requires rank = `fill` (the block's packet count).
    pub fn decode(mut self, fill: usize) -> Result<Vec<Vec<u8>>, CodecError> {
        if usize::from(self.rank) < fill {
            return Err(CodecError::NotDecodable {
                blkno: self.blkno,
                rank: self.rank,
                needed: fill as u16,
            });
        }
        // Coefficients past `fill` are zero for every valid transmission, so
        // the filled rows are exactly 0..fill.
        debug_assert!(self.row_filled[..fill].iter().all(|&f| f));

        for col in (1..fill).rev() {
            let (above, below) = self.payload_rows.split_at_mut(col);
            let pivot_payload = &below[0];
            for row in 0..col {
                let factor = Gf256(self.coeff_rows[row][col]);
                if factor.is_zero() {
                    continue;
                }
                addmul_slice(&mut above[row], pivot_payload, factor);
                // mirror the elimination in C so it ends as the identity
                let (c_above, c_below) = self.coeff_rows.split_at_mut(col);
                addmul_slice(&mut c_above[row], &c_below[0], factor);
            }
        }
        self.payload_rows.truncate(fill);
        Ok(self.payload_rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{RngCore, SeedableRng};

    fn sample_block(blkno: u32, fill: usize, payload_len: usize, seed: u64) -> Block {
        let mut rng = StdRng::seed_from_u64(seed);
        let packets = (0..fill)
            .map(|_| {
                let mut p = vec![0u8; payload_len];
                rng.fill_bytes(&mut p);
                p
            })
            .collect();
        Block::new(blkno, packets)
    }

    /// Naive multiply-accumulate using shift-and-add arithmetic, kept
    /// independent of the table-driven path in `gf256`.
    fn naive_mul(mut a: u8, mut b: u8) -> u8 {
        let mut acc = 0u8;
        while b != 0 {
            if b & 1 != 0 {
                acc ^= a;
            }
            let hi = a & 0x80 != 0;
            a <<= 1;
            if hi {
                a ^= 0x1b;
            }
            b >>= 1;
        }
        acc
    }

    fn naive_combination(block: &Block, coeffs: &[u8]) -> Vec<u8> {
        let mut out = vec![0u8; block.payload_len()];
        for (i, &c) in coeffs.iter().take(block.fill_count()).enumerate() {
            for (o, &b) in out.iter_mut().zip(block.packet(i)) {
                *o ^= naive_mul(c, b);
            }
        }
        out
    }

    #[test]
    fn systematic_phase_returns_packets_verbatim() {
        let block = sample_block(0, 4, 64, 1);
        let mut rng = StdRng::seed_from_u64(2);
        let pkt = encode(&block, 8, 2, &mut rng).unwrap();
        let mut expected = vec![0u8; 8];
        expected[2] = 1;
        assert_eq!(pkt.coeffs, expected);
        assert_eq!(pkt.data, block.packet(2));
    }

    #[test]
    fn dense_payload_matches_naive_combination() {
        let block = sample_block(0, 4, 128, 3);
        let mut rng = StdRng::seed_from_u64(4);
        let pkt = encode(&block, 8, 4, &mut rng).unwrap();
        assert!(pkt.coeffs[..4].iter().any(|&c| c != 0));
        assert!(pkt.coeffs[4..].iter().all(|&c| c == 0));
        assert_eq!(pkt.data, naive_combination(&block, &pkt.coeffs));
    }

    #[test]
    fn single_packet_block_codes_as_scalar_multiple() {
        let block = sample_block(0, 1, 32, 5);
        let mut rng = StdRng::seed_from_u64(6);
        let pkt = encode(&block, 8, 5, &mut rng).unwrap();
        let c = pkt.coeffs[0];
        assert_ne!(c, 0, "single-coefficient draws are retried until nonzero");
        let expected: Vec<u8> = block.packet(0).iter().map(|&b| naive_mul(c, b)).collect();
        assert_eq!(pkt.data, expected);
    }

    #[test]
    fn empty_block_is_a_contract_violation() {
        let block = Block::new(0, Vec::new());
        let mut rng = StdRng::seed_from_u64(7);
        assert_eq!(encode(&block, 8, 0, &mut rng), Err(CodecError::EmptyBlock));
    }

    #[test]
    fn systematic_insert_bumps_rank() {
        let mut dec = BlockDecoder::new(0, 4, 16);
        let pkt = CodedPayload::systematic(4, 0, vec![9u8; 16]);
        assert_eq!(dec.insert(pkt).unwrap(), true);
        assert_eq!(dec.rank(), 1);
    }

    #[test]
    fn duplicate_insert_is_rejected() {
        let mut dec = BlockDecoder::new(0, 4, 16);
        let pkt = CodedPayload::systematic(4, 0, vec![9u8; 16]);
        assert!(dec.insert(pkt.clone()).unwrap());
        assert_eq!(dec.insert(pkt).unwrap(), false);
        assert_eq!(dec.rank(), 1);
    }

    #[test]
    fn all_zero_vector_is_degenerate() {
        let mut dec = BlockDecoder::new(0, 4, 16);
        let pkt = CodedPayload {
            coeffs: vec![0; 4],
            data: vec![0; 16],
        };
        assert_eq!(dec.insert(pkt).unwrap(), false);
        assert_eq!(dec.rank(), 0);
    }

    #[test]
    fn wrong_coeff_length_is_an_error() {
        let mut dec = BlockDecoder::new(0, 4, 16);
        let pkt = CodedPayload {
            coeffs: vec![1; 3],
            data: vec![0; 16],
        };
        assert!(matches!(
            dec.insert(pkt),
            Err(CodecError::CoeffLength { got: 3, expected: 4 })
        ));
    }

    #[test]
    fn decode_below_full_rank_is_refused() {
        let mut dec = BlockDecoder::new(3, 4, 16);
        dec.insert(CodedPayload::systematic(4, 0, vec![1u8; 16]))
            .unwrap();
        let err = dec.decode(4).unwrap_err();
        assert_eq!(
            err,
            CodecError::NotDecodable {
                blkno: 3,
                rank: 1,
                needed: 4
            }
        );
    }

    #[test]
    fn all_systematic_block_decodes_verbatim() {
        let block = sample_block(0, 4, 32, 8);
        let mut dec = BlockDecoder::new(0, 4, 32);
        let mut rng = StdRng::seed_from_u64(9);
        for i in 0..4 {
            assert!(dec.insert(encode(&block, 4, i, &mut rng).unwrap()).unwrap());
        }
        let out = dec.decode(4).unwrap();
        for i in 0..4 {
            assert_eq!(out[i], block.packet(i));
        }
    }

    #[test]
    fn one_dense_packet_repairs_one_systematic_loss() {
        let block = sample_block(0, 8, 64, 10);
        let mut dec = BlockDecoder::new(0, 8, 64);
        let mut rng = StdRng::seed_from_u64(11);
        // drop systematic packet 3, then take one coded repair
        for i in 0..8 {
            if i != 3 {
                assert!(dec.insert(encode(&block, 8, i, &mut rng).unwrap()).unwrap());
            }
        }
        assert!(dec.insert(encode(&block, 8, 8, &mut rng).unwrap()).unwrap());
        let out = dec.decode(8).unwrap();
        for i in 0..8 {
            assert_eq!(out[i], block.packet(i), "packet {i}");
        }
    }

    #[test]
    fn invariant_upper_triangular_unit_diagonal_after_every_insert() {
        let block = sample_block(0, 8, 16, 12);
        let mut dec = BlockDecoder::new(0, 8, 16);
        let mut rng = StdRng::seed_from_u64(13);
        for index in [0usize, 9, 1, 10, 11, 2, 3, 12] {
            let _ = dec.insert(encode(&block, 8, index, &mut rng).unwrap());
            for r in 0..8 {
                if dec.row_filled[r] {
                    assert_eq!(dec.coeff_rows[r][r], 1, "diagonal at {r}");
                    for j in 0..r {
                        assert_eq!(dec.coeff_rows[r][j], 0, "below-diagonal {r},{j}");
                    }
                }
            }
        }
    }

    #[test]
    fn roundtrip_random_mixes_across_block_sizes() {
        let mut rng = StdRng::seed_from_u64(14);
        for &blksize in &[1usize, 2, 8, 32] {
            for trial in 0..300 {
                let block = sample_block(0, blksize, 24, 1000 + trial);
                let mut dec = BlockDecoder::new(0, blksize, 24);
                let mut index = if trial % 2 == 0 { 0 } else { blksize };
                while !dec.is_complete(blksize) {
                    let pkt = encode(&block, blksize, index, &mut rng).unwrap();
                    index += 1;
                    let _ = dec.insert(pkt).unwrap();
                }
                let out = dec.decode(blksize).unwrap();
                for i in 0..blksize {
                    assert_eq!(out[i], block.packet(i), "blksize {blksize} trial {trial}");
                }
            }
        }
    }

    #[test]
    fn short_final_block_decodes_at_fill_count() {
        // fill 3 of blksize 8: coefficient slots past the fill stay zero
        let block = sample_block(0, 3, 40, 15);
        let mut dec = BlockDecoder::new(0, 8, 40);
        let mut rng = StdRng::seed_from_u64(16);
        assert!(dec.insert(encode(&block, 8, 0, &mut rng).unwrap()).unwrap());
        assert!(dec.insert(encode(&block, 8, 3, &mut rng).unwrap()).unwrap());
        assert!(dec.insert(encode(&block, 8, 4, &mut rng).unwrap()).unwrap());
        assert!(dec.is_complete(3));
        let out = dec.decode(3).unwrap();
        assert_eq!(out.len(), 3);
        for i in 0..3 {
            assert_eq!(out[i], block.packet(i));
        }
    }

    #[test]
    fn insert_agrees_with_brute_force_rank_oracle() {
        // Independent oracle: Gaussian elimination over the raw received
        // vectors using the shift-and-add multiply.
        fn oracle_rank(rows: &[Vec<u8>]) -> usize {
            let mut m: Vec<Vec<u8>> = rows.to_vec();
            let width = m.first().map_or(0, Vec::len);
            let mut rank = 0;
            for col in 0..width {
                let Some(pivot) = (rank..m.len()).find(|&r| m[r][col] != 0) else {
                    continue;
                };
                m.swap(rank, pivot);
                let inv_row = m[rank].clone();
                let lead = inv_row[col];
                // normalize via naive inverse search
                let inv = (1..=255u8).find(|&x| naive_mul(lead, x) == 1).unwrap();
                let norm: Vec<u8> = inv_row.iter().map(|&v| naive_mul(v, inv)).collect();
                m[rank] = norm.clone();
                for r in 0..m.len() {
                    if r != rank && m[r][col] != 0 {
                        let f = m[r][col];
                        for c in 0..width {
                            m[r][c] ^= naive_mul(f, norm[c]);
                        }
                    }
                }
                rank += 1;
            }
            rank
        }

        let mut rng = StdRng::seed_from_u64(17);
        for trial in 0..200 {
            let blksize = 1 + (trial % 8);
            let block = sample_block(0, blksize, 8, 2000 + trial as u64);
            let mut dec = BlockDecoder::new(0, blksize, 8);
            let mut received: Vec<Vec<u8>> = Vec::new();
            for step in 0..blksize + 4 {
                // mix of systematic, coded, and duplicated packets
                let index = if step % 3 == 0 { step % blksize } else { blksize + step };
                let pkt = encode(&block, blksize, index, &mut rng).unwrap();
                let before = oracle_rank(&received);
                received.push(pkt.coeffs.clone());
                let after = oracle_rank(&received);
                let accepted = dec.insert(pkt).unwrap();
                assert_eq!(accepted, after > before, "trial {trial} step {step}");
                assert_eq!(usize::from(dec.rank()), after);
            }
        }
    }

    #[test]
    fn dense_packet_nearly_always_completes_a_block() {
        // With blksize-1 independent rows held, one dense packet is rejected
        // only if its projection on the missing dimension draws zero.
        let mut rng = StdRng::seed_from_u64(18);
        let blksize = 4usize;
        let trials = 20_000u32;
        let mut accepted = 0u32;
        for trial in 0..trials {
            let block = sample_block(0, blksize, 4, 50_000 + trial as u64);
            let mut dec = BlockDecoder::new(0, blksize, 4);
            for i in 0..blksize - 1 {
                assert!(dec.insert(encode(&block, blksize, i, &mut rng).unwrap()).unwrap());
            }
            if dec.insert(encode(&block, blksize, blksize, &mut rng).unwrap()).unwrap() {
                accepted += 1;
            }
        }
        let rate = accepted as f64 / trials as f64;
        assert!(rate >= 1.0 - 2.0 / 256.0, "acceptance rate {rate}");
    }
}
