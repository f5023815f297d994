//! Message dispersal: split a message into `n` shares such that any `m` of
//! them rebuild it.
//!
//! The code is systematic. The message is prefixed with its length as a
//! 4-byte big-endian integer, zero padded to a multiple of `m` and cut into
//! `m` equal stripes which become shares `0..m` verbatim. Shares `m..n` are
//! parity rows of a Cauchy matrix over GF(256). Every `m x m` submatrix of
//! `[I; C]` is invertible, so any `m` distinct shares suffice.

mod gf256;

use std::collections::BTreeMap;

use thiserror::Error;

pub use gf256::Matrix as GfMatrix;

/// Bytes taken by the length prefix prepended before striping.
pub const LENGTH_HEADER: usize = 4;

/// Fixed bytes surrounding a payload on the wire.
pub const SHARE_OVERHEAD: usize = 8 + 1 + 1 + 1 + 2 + 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DispersalError {
    #[error("invalid dispersal config: n={n}, m={m} (need 1 <= m <= n <= 255)")]
    InvalidConfig { n: usize, m: usize },
    #[error("cannot disperse an empty message")]
    EmptyMessage,
    #[error("message of {len} bytes does not fit in 16-bit share payloads")]
    MessageTooLarge { len: usize },
    #[error("insufficient shares: have {have} valid distinct, need {need}")]
    InsufficientShares { have: usize, need: usize },
    #[error("inconsistent shares: {0}")]
    Inconsistent(&'static str),
    #[error("malformed share: {0}")]
    Malformed(&'static str),
}

/// Piece count `n` and reconstruction threshold `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DispersalConfig {
    n: u8,
    m: u8,
}

impl DispersalConfig {
    pub fn new(n: usize, m: usize) -> Result<Self, DispersalError> {
        if m == 0 || m > n || n > u8::MAX as usize {
            return Err(DispersalError::InvalidConfig { n, m });
        }
        Ok(DispersalConfig { n: n as u8, m: m as u8 })
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn m(&self) -> usize {
        self.m as usize
    }

    pub fn redundancy(&self) -> f64 {
        self.n as f64 / self.m as f64
    }

    /// Payload bytes per share for a message of `len` bytes.
    pub fn payload_len(&self, len: usize) -> usize {
        (len + LENGTH_HEADER).div_ceil(self.m())
    }
}

/// One dispersed piece of a message.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MessageShare {
    pub dispersal_id: u64,
    pub index: u8,
    pub n: u8,
    pub m: u8,
    pub payload: Vec<u8>,
    pub checksum: u32,
}

impl MessageShare {
    fn sealed(dispersal_id: u64, index: u8, cfg: DispersalConfig, payload: Vec<u8>) -> Self {
        let checksum = share_checksum(dispersal_id, index, &payload);
        MessageShare { dispersal_id, index, n: cfg.n, m: cfg.m, payload, checksum }
    }

    pub fn is_intact(&self) -> bool {
        self.checksum == share_checksum(self.dispersal_id, self.index, &self.payload)
    }

    /// Wire layout: id(8) | index(1) | n(1) | m(1) | payload_len(2, BE) |
    /// payload | checksum(4, BE).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SHARE_OVERHEAD + self.payload.len());
        out.extend_from_slice(&self.dispersal_id.to_be_bytes());
        out.push(self.index);
        out.push(self.n);
        out.push(self.m);
        out.extend_from_slice(&(self.payload.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(&self.checksum.to_be_bytes());
        out
    }

    /// Parses the wire layout. Does not verify the checksum; see
    /// [`MessageShare::is_intact`].
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DispersalError> {
        if bytes.len() < SHARE_OVERHEAD {
            return Err(DispersalError::Malformed("truncated header"));
        }
        let dispersal_id = u64::from_be_bytes(bytes[0..8].try_into().unwrap());
        let (index, n, m) = (bytes[8], bytes[9], bytes[10]);
        let len = u16::from_be_bytes([bytes[11], bytes[12]]) as usize;
        if bytes.len() != SHARE_OVERHEAD + len {
            return Err(DispersalError::Malformed("payload length mismatch"));
        }
        let payload = bytes[13..13 + len].to_vec();
        let checksum = u32::from_be_bytes(bytes[13 + len..].try_into().unwrap());
        Ok(MessageShare { dispersal_id, index, n, m, payload, checksum })
    }
}

/// CRC-32 over `dispersal_id (BE) | index | payload`.
pub fn share_checksum(dispersal_id: u64, index: u8, payload: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&dispersal_id.to_be_bytes());
    h.update(&[index]);
    h.update(payload);
    h.finalize()
}

/// Coefficient of stripe `col` in parity row `row` (`row >= m`).
fn cauchy(row: usize, col: usize) -> u8 {
    // x_row = row, y_col = col; disjoint ranges keep x + y non-zero
    gf256::inv(gf256::add(row as u8, col as u8))
}

fn coefficient_row(index: usize, m: usize) -> Vec<u8> {
    if index < m {
        (0..m).map(|c| u8::from(c == index)).collect()
    } else {
        (0..m).map(|c| cauchy(index, c)).collect()
    }
}

/// Splits `message` into `config.n()` shares.
pub fn disperse(
    message: &[u8],
    config: DispersalConfig,
    dispersal_id: u64,
) -> Result<Vec<MessageShare>, DispersalError> {
    if message.is_empty() {
        return Err(DispersalError::EmptyMessage);
    }
    let m = config.m();
    let stripe = config.payload_len(message.len());
    if stripe > u16::MAX as usize || message.len() > u32::MAX as usize {
        return Err(DispersalError::MessageTooLarge { len: message.len() });
    }
    let mut data = Vec::with_capacity(stripe * m);
    data.extend_from_slice(&(message.len() as u32).to_be_bytes());
    data.extend_from_slice(message);
    data.resize(stripe * m, 0);

    let stripes: Vec<&[u8]> = data.chunks(stripe).collect();
    let mut shares = Vec::with_capacity(config.n());
    for index in 0..config.n() {
        let payload = if index < m {
            stripes[index].to_vec()
        } else {
            let coeffs = coefficient_row(index, m);
            let mut p = vec![0u8; stripe];
            for (c, s) in coeffs.iter().zip(&stripes) {
                for (out, &b) in p.iter_mut().zip(s.iter()) {
                    *out ^= gf256::mul(*c, b);
                }
            }
            p
        };
        shares.push(MessageShare::sealed(dispersal_id, index as u8, config, payload));
    }
    Ok(shares)
}

/// Rebuilds the message from any `m` distinct intact shares.
///
/// Shares failing their checksum are discarded before counting. Duplicate
/// indices count once.
pub fn reconstruct<'a, I>(shares: I) -> Result<Vec<u8>, DispersalError>
where
    I: IntoIterator<Item = &'a MessageShare>,
{
    let mut by_index: BTreeMap<u8, &MessageShare> = BTreeMap::new();
    let mut header: Option<(u64, u8, u8, usize)> = None;
    for share in shares.into_iter().filter(|s| s.is_intact()) {
        let key = (share.dispersal_id, share.n, share.m, share.payload.len());
        match header {
            None => header = Some(key),
            Some(h) if h.0 != key.0 => return Err(DispersalError::Inconsistent("mixed dispersal ids")),
            Some(h) if (h.1, h.2) != (key.1, key.2) => {
                return Err(DispersalError::Inconsistent("mixed (n, m) parameters"))
            }
            Some(h) if h.3 != key.3 => return Err(DispersalError::Inconsistent("mixed payload lengths")),
            Some(_) => {}
        }
        by_index.entry(share.index).or_insert(share);
    }
    let Some((_, n, m, stripe)) = header else {
        return Err(DispersalError::InsufficientShares { have: 0, need: 1 });
    };
    let config = DispersalConfig::new(n as usize, m as usize)
        .map_err(|_| DispersalError::Inconsistent("invalid (n, m) in share header"))?;
    if by_index.keys().any(|&i| i >= n) {
        return Err(DispersalError::Inconsistent("share index out of range"));
    }
    let m = config.m();
    if by_index.len() < m {
        return Err(DispersalError::InsufficientShares { have: by_index.len(), need: m });
    }

    let chosen: Vec<&MessageShare> = by_index.values().take(m).copied().collect();
    let mut data = vec![0u8; stripe * m];
    if chosen.iter().enumerate().all(|(i, s)| s.index as usize == i) {
        for (i, s) in chosen.iter().enumerate() {
            data[i * stripe..(i + 1) * stripe].copy_from_slice(&s.payload);
        }
    } else {
        let rows: Vec<Vec<u8>> = chosen.iter().map(|s| coefficient_row(s.index as usize, m)).collect();
        let decode = GfMatrix::from_rows(&rows)
            .invert()
            .expect("any m rows of a systematic Cauchy matrix are independent");
        for out_stripe in 0..m {
            let dst = &mut data[out_stripe * stripe..(out_stripe + 1) * stripe];
            for (k, s) in chosen.iter().enumerate() {
                let c = decode.get(out_stripe, k);
                if c == 0 {
                    continue;
                }
                for (d, &b) in dst.iter_mut().zip(&s.payload) {
                    *d ^= gf256::mul(c, b);
                }
            }
        }
    }

    if data.len() < LENGTH_HEADER {
        return Err(DispersalError::Malformed("missing length header"));
    }
    let len = u32::from_be_bytes(data[..LENGTH_HEADER].try_into().unwrap()) as usize;
    if len == 0 || len > data.len() - LENGTH_HEADER {
        return Err(DispersalError::Malformed("length header exceeds decoded data"));
    }
    data.truncate(LENGTH_HEADER + len);
    data.drain(..LENGTH_HEADER);
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(matches!(DispersalConfig::new(3, 4), Err(DispersalError::InvalidConfig { .. })));
        assert!(matches!(DispersalConfig::new(3, 0), Err(DispersalError::InvalidConfig { .. })));
        assert!(DispersalConfig::new(256, 1).is_err());
        assert!(DispersalConfig::new(1, 1).is_ok());
    }

    #[test]
    fn twelve_bytes_into_four_of_three() {
        let cfg = DispersalConfig::new(4, 3).unwrap();
        let shares = disperse(&[7u8; 12], cfg, 42).unwrap();
        assert_eq!(shares.len(), 4);
        // (12 + 4) / 3 rounded up
        assert!(shares.iter().all(|s| s.payload.len() == 6));
        assert!(shares.iter().all(|s| s.dispersal_id == 42 && s.n == 4 && s.m == 3));
    }

    #[test]
    fn single_share_identity() {
        let cfg = DispersalConfig::new(1, 1).unwrap();
        let msg = b"hello ad hoc world";
        let shares = disperse(msg, cfg, 1).unwrap();
        assert_eq!(shares.len(), 1);
        assert_eq!(&shares[0].payload[4..4 + msg.len()], msg);
        assert_eq!(reconstruct(&shares).unwrap(), msg);
    }

    #[test]
    fn systematic_shares_carry_the_prefixed_message() {
        let cfg = DispersalConfig::new(5, 2).unwrap();
        let msg = b"abcdefgh";
        let shares = disperse(msg, cfg, 9).unwrap();
        let mut joined = shares[0].payload.clone();
        joined.extend_from_slice(&shares[1].payload);
        assert_eq!(&joined[..4], &8u32.to_be_bytes());
        assert_eq!(&joined[4..12], msg);
    }

    #[test]
    fn empty_message_is_rejected() {
        let cfg = DispersalConfig::new(2, 1).unwrap();
        assert_eq!(disperse(&[], cfg, 0), Err(DispersalError::EmptyMessage));
    }

    #[test]
    fn too_few_shares() {
        let cfg = DispersalConfig::new(4, 3).unwrap();
        let shares = disperse(b"threshold", cfg, 5).unwrap();
        assert_eq!(
            reconstruct(&shares[1..3]),
            Err(DispersalError::InsufficientShares { have: 2, need: 3 })
        );
        assert_eq!(
            reconstruct(std::iter::empty()),
            Err(DispersalError::InsufficientShares { have: 0, need: 1 })
        );
    }

    #[test]
    fn duplicate_indices_count_once() {
        let cfg = DispersalConfig::new(3, 2).unwrap();
        let shares = disperse(b"dup", cfg, 5).unwrap();
        let dup = [shares[2].clone(), shares[2].clone()];
        assert!(matches!(reconstruct(&dup), Err(DispersalError::InsufficientShares { have: 1, .. })));
    }

    #[test]
    fn mixed_ids_are_inconsistent() {
        let cfg = DispersalConfig::new(3, 2).unwrap();
        let a = disperse(b"first message", cfg, 1).unwrap();
        let b = disperse(b"second message", cfg, 2).unwrap();
        let mixed = [a[0].clone(), b[1].clone()];
        assert_eq!(reconstruct(&mixed), Err(DispersalError::Inconsistent("mixed dispersal ids")));
    }

    #[test]
    fn wire_layout_is_bit_exact() {
        let share = MessageShare {
            dispersal_id: 0x0102_0304_0506_0708,
            index: 2,
            n: 4,
            m: 3,
            payload: vec![0xaa, 0xbb],
            checksum: 0xdead_beef,
        };
        let bytes = share.to_bytes();
        assert_eq!(
            bytes,
            vec![1, 2, 3, 4, 5, 6, 7, 8, 2, 4, 3, 0, 2, 0xaa, 0xbb, 0xde, 0xad, 0xbe, 0xef]
        );
        assert_eq!(MessageShare::from_bytes(&bytes).unwrap(), share);
        assert!(MessageShare::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
