//! Circular (Morgan/ECFP-style) fingerprints and Tanimoto similarity.
//!
//! Atom environments are hashed with 64-bit FNV-1a over little-endian words
//! followed by the SplitMix64 finaliser; each environment sets bit
//! `hash % width`. The construction is fixed, so bits are stable across runs
//! and platforms. Compatibility with other toolkits' bit layouts is not a goal.

use std::collections::BTreeSet;
use std::fmt;

use super::graph::MolGraph;
use super::ChemError;

pub const DEFAULT_RADIUS: usize = 2;
pub const DEFAULT_WIDTH: usize = 512;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the little-endian bytes of `words`, finalised with SplitMix64.
pub fn mix_hash(words: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    for w in words {
        for byte in w.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fixed-width bitset.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    words: Vec<u64>,
    width: usize,
    pub radius: usize,
}

impl Fingerprint {
    pub fn empty(width: usize, radius: usize) -> Self {
        Fingerprint { words: vec![0; width.div_ceil(64)], width, radius }
    }

    pub fn from_bits(width: usize, bits: impl IntoIterator<Item = usize>) -> Self {
        let mut fp = Fingerprint::empty(width, 0);
        for b in bits {
            fp.set(b);
        }
        fp
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn set(&mut self, bit: usize) {
        assert!(bit < self.width, "bit {bit} outside width {}", self.width);
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        bit < self.width && self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).filter(|&b| self.get(b))
    }

    /// Bits as 0/1 values, bit 0 first.
    pub fn to_dense<T: From<u8>>(&self) -> Vec<T> {
        (0..self.width).map(|b| T::from(self.get(b) as u8)).collect()
    }

    /// Hex dump: byte `k` holds bits `8k..8k+8` (bit `8k` in its least
    /// significant position); each byte is written high nibble first.
    pub fn to_hex(&self) -> String {
        let bytes: Vec<u8> = (0..self.width.div_ceil(8))
            .map(|k| {
                (0..8).fold(0u8, |acc, j| acc | ((self.get(8 * k + j) as u8) << j))
            })
            .collect();
        hex::encode(bytes)
    }

    pub fn from_hex(s: &str, width: usize) -> Result<Self, ChemError> {
        let bytes = hex::decode(s.trim()).map_err(|_| ChemError::BadFingerprintHex)?;
        if bytes.len() != width.div_ceil(8) {
            return Err(ChemError::BadFingerprintHex);
        }
        let mut fp = Fingerprint::empty(width, 0);
        for (k, byte) in bytes.iter().enumerate() {
            for j in 0..8 {
                if byte >> j & 1 == 1 {
                    if 8 * k + j >= width {
                        return Err(ChemError::BadFingerprintHex);
                    }
                    fp.set(8 * k + j);
                }
            }
        }
        Ok(fp)
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({} bits, {} set: {})", self.width, self.count_ones(), self.to_hex())
    }
}

/// Circular fingerprint of `g` with `radius` rounds folded into `width` bits.
pub fn morgan_fingerprint(g: &MolGraph, radius: usize, width: usize) -> Result<Fingerprint, ChemError> {
    if width == 0 || !width.is_power_of_two() {
        return Err(ChemError::InvalidWidth { width });
    }
    let ring = g.ring_atoms();
    let mut current: Vec<u64> = (0..g.atom_count())
        .map(|a| {
            let atom = &g.atoms[a];
            mix_hash(&[
                atom.atomic_number() as u64,
                g.degree(a) as u64,
                atom.charge as i64 as u64,
                g.hydrogen_count(a) as u64,
                atom.aromatic as u64,
                ring[a] as u64,
            ])
        })
        .collect();
    let mut environments: BTreeSet<u64> = current.iter().copied().collect();
    for round in 1..=radius {
        let next: Vec<u64> = (0..g.atom_count())
            .map(|a| {
                let mut env: Vec<(u64, u64)> = g
                    .incident(a)
                    .iter()
                    .map(|&bi| {
                        let b = &g.bonds[bi];
                        (b.order.code(), current[b.other(a)])
                    })
                    .collect();
                env.sort_unstable();
                let mut words = vec![round as u64, current[a]];
                for (o, h) in env {
                    words.push(o);
                    words.push(h);
                }
                mix_hash(&words)
            })
            .collect();
        environments.extend(next.iter().copied());
        current = next;
    }
    let mut fp = Fingerprint::empty(width, radius);
    for h in environments {
        fp.set((h % width as u64) as usize);
    }
    Ok(fp)
}

/// |a ∧ b| / |a ∨ b|, 1.0 when both are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, ChemError> {
    if a.width != b.width {
        return Err(ChemError::WidthMismatch { left: a.width, right: b.width });
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones() as u64;
        union += (x | y).count_ones() as u64;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}
