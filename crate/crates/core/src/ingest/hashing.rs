//! FNV-1a feature hashing for namespaced identifiers and their conjunctions.

use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Separates a namespace from its token.
pub const UNIT_SEP: u8 = 0x1f;
/// Separates the two halves of a conjunction.
pub const RECORD_SEP: u8 = 0x1e;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_parts(&[bytes])
}

fn fnv1a64_parts(parts: &[&[u8]]) -> u64 {
    let mut h = FNV_OFFSET;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashConfig {
    bits: u8,
    /// Namespace pairs whose tokens are crossed.
    pub conjunctions: Vec<(String, String)>,
}

impl HashConfig {
    pub const MIN_BITS: u8 = 8;
    pub const MAX_BITS: u8 = 30;

    pub fn new(bits: u8, conjunctions: Vec<(String, String)>) -> Result<Self> {
        if !(Self::MIN_BITS..=Self::MAX_BITS).contains(&bits) {
            return Err(Error::InvalidConfig(format!(
                "hash bits must lie in [{}, {}], got {bits}",
                Self::MIN_BITS,
                Self::MAX_BITS
            )));
        }
        for (a, b) in &conjunctions {
            validate_namespace(a)?;
            validate_namespace(b)?;
        }
        Ok(Self { bits, conjunctions })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn dim(&self) -> usize {
        1usize << self.bits
    }

    fn fold(&self, h: u64) -> u32 {
        (h & ((1u64 << self.bits) - 1)) as u32
    }
}

/// Namespaces are non-empty ASCII without whitespace or colons.
pub fn validate_namespace(ns: &str) -> Result<()> {
    if ns.is_empty() || !ns.bytes().all(|b| b.is_ascii_graphic() && b != b':' && b != b'|') {
        return Err(Error::InvalidInput(format!("invalid namespace {ns:?}")));
    }
    Ok(())
}

/// Index of `namespace 0x1F token` in `[0, 2^bits)`.
pub fn hash_feature(namespace: &str, token: &str, cfg: &HashConfig) -> u32 {
    cfg.fold(fnv1a64_parts(&[namespace.as_bytes(), &[UNIT_SEP], token.as_bytes()]))
}

/// Index of `nsA 0x1F tokA 0x1E nsB 0x1F tokB`.
pub fn hash_conjunction(ns_a: &str, tok_a: &str, ns_b: &str, tok_b: &str, cfg: &HashConfig) -> u32 {
    cfg.fold(fnv1a64_parts(&[
        ns_a.as_bytes(),
        &[UNIT_SEP],
        tok_a.as_bytes(),
        &[RECORD_SEP],
        ns_b.as_bytes(),
        &[UNIT_SEP],
        tok_b.as_bytes(),
    ]))
}
