//! Minimal perfect hash over 64-bit codes: a cascade of bit arrays in which a
//! key claims the bit it hashes to only when no other pending key lands
//! there. A global per-word rank turns a set bit into a dense index, and a
//! store of `(code, value)` pairs at that index rejects codes that were never
//! inserted.

use std::collections::HashSet;

use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::linalg::mix64;

const MAGIC: &[u8; 4] = b"MPHT";
const VERSION: u32 = 1;

pub const DEFAULT_GAMMA: f64 = 2.0;
pub const DEFAULT_MAX_LEVELS: u32 = 32;
pub const DEFAULT_SEED: u64 = 0x6d70_685f_7365_6564;

#[inline]
fn rehash(mut x: u64) -> u64 {
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    x.wrapping_mul(0x2545_F491_4F6C_DD1D)
}

/// Level-`level` hash of `code`: the finalizer of `code ^ seed`, then one
/// xorshift-multiply step per level.
pub fn hash_level(code: i64, level: u32, seed: u64) -> u64 {
    let mut h = mix64(code as u64 ^ seed);
    for _ in 0..level {
        h = rehash(h);
    }
    h
}

#[derive(Clone, Debug, PartialEq)]
struct Level {
    bits: u64,
    /// Index of this level's first word in the global word space.
    word_base: usize,
    words: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MphTable {
    levels: Vec<Level>,
    rank: Vec<u64>,
    store: Vec<(i64, u32)>,
    /// Sorted keys that never found a free bit; their index is
    /// `level_keys + position`.
    fallback: Vec<i64>,
    gamma: f64,
    max_levels: u32,
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct MphStats {
    pub num_keys: usize,
    pub levels: usize,
    pub level_bits: u64,
    pub level_bits_per_key: f64,
    pub rank_bits: u64,
    pub fallback_keys: usize,
    pub total_bits_per_key: f64,
}

impl MphTable {
    pub fn build(keys: &[i64], values: &[usize], gamma: f64, seed: u64) -> Result<Self> {
        Self::build_with_levels(keys, values, gamma, seed, DEFAULT_MAX_LEVELS)
    }

    pub fn build_with_levels(
        keys: &[i64],
        values: &[usize],
        gamma: f64,
        seed: u64,
        max_levels: u32,
    ) -> Result<Self> {
        if keys.is_empty() {
            return Err(Error::EmptyKeys);
        }
        if keys.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} keys, {} values",
                keys.len(),
                values.len()
            )));
        }
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma {gamma} must be >= 1")));
        }
        if let Some(&v) = values.iter().find(|&&v| v > u32::MAX as usize) {
            return Err(Error::InvalidArgument(format!("value {v} exceeds u32")));
        }
        let mut seen = HashSet::with_capacity(keys.len());
        for &k in keys {
            if !seen.insert(k) {
                return Err(Error::DuplicateKey(k));
            }
        }

        let mut levels = Vec::new();
        let mut pending: Vec<usize> = (0..keys.len()).collect();
        let mut hashes: Vec<u64> = keys.iter().map(|&k| hash_level(k, 0, seed)).collect();
        let mut word_base = 0;
        for d in 0..max_levels {
            if pending.is_empty() {
                break;
            }
            if d > 0 {
                for &i in &pending {
                    hashes[i] = rehash(hashes[i]);
                }
            }
            let want = (gamma * pending.len() as f64).ceil() as u64;
            let bits = want.div_ceil(64).max(1) * 64;
            let nwords = (bits / 64) as usize;
            let mut hit = vec![0u64; nwords];
            let mut clash = vec![0u64; nwords];
            for &i in &pending {
                let b = hashes[i] % bits;
                let (w, m) = ((b / 64) as usize, 1u64 << (b % 64));
                if hit[w] & m != 0 {
                    clash[w] |= m;
                }
                hit[w] |= m;
            }
            let words: Vec<u64> = hit.iter().zip(&clash).map(|(h, c)| h & !c).collect();
            pending.retain(|&i| {
                let b = hashes[i] % bits;
                words[(b / 64) as usize] & (1u64 << (b % 64)) == 0
            });
            levels.push(Level {
                bits,
                word_base,
                words,
            });
            word_base += nwords;
        }

        let mut rank = Vec::with_capacity(word_base);
        let mut acc = 0u64;
        for l in &levels {
            for w in &l.words {
                rank.push(acc);
                acc += w.count_ones() as u64;
            }
        }
        let level_keys = acc as usize;

        let mut fallback: Vec<i64> = pending.iter().map(|&i| keys[i]).collect();
        fallback.sort_unstable();
        if !fallback.is_empty() {
            log::debug!("mph: {} keys moved to fallback", fallback.len());
        }

        let mut table = Self {
            levels,
            rank,
            store: vec![(0, 0); keys.len()],
            fallback,
            gamma,
            max_levels,
            seed,
        };
        debug_assert_eq!(level_keys + table.fallback.len(), keys.len());
        for (&k, &v) in keys.iter().zip(values) {
            let (idx, _) = table.locate(k);
            let idx = idx.expect("inserted key resolves");
            table.store[idx] = (k, v as u32);
        }
        Ok(table)
    }

    /// Candidate index for `code` and the number of level probes spent.
    fn locate(&self, code: i64) -> (Option<usize>, u32) {
        let mut h = hash_level(code, 0, self.seed);
        for (d, l) in self.levels.iter().enumerate() {
            if d > 0 {
                h = rehash(h);
            }
            let b = h % l.bits;
            let (w, off) = ((b / 64) as usize, b % 64);
            let word = l.words[w];
            if word & (1u64 << off) != 0 {
                let below = if off == 63 {
                    word
                } else {
                    word & ((1u64 << (off + 1)) - 1)
                };
                let idx = self.rank[l.word_base + w] + below.count_ones() as u64 - 1;
                return (Some(idx as usize), d as u32 + 1);
            }
        }
        let probes = self.levels.len() as u32;
        match self.fallback.binary_search(&code) {
            Ok(pos) => (Some(self.level_keys() + pos), probes),
            Err(_) => (None, probes),
        }
    }

    fn level_keys(&self) -> usize {
        self.store.len() - self.fallback.len()
    }

    /// MPH index of an inserted code (unverified: absent codes may alias).
    pub fn index_of(&self, code: i64) -> Option<usize> {
        self.locate(code).0
    }

    /// Stored value for `code`, or `None` if it was never inserted.
    #[inline]
    pub fn lookup(&self, code: i64) -> Option<usize> {
        self.lookup_with_probes(code).0
    }

    pub fn lookup_with_probes(&self, code: i64) -> (Option<usize>, u32) {
        let (idx, probes) = self.locate(code);
        let v = idx.and_then(|i| {
            let (k, v) = self.store[i];
            (k == code).then_some(v as usize)
        });
        (v, probes)
    }

    pub fn num_keys(&self) -> usize {
        self.store.len()
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn keys(&self) -> impl Iterator<Item = i64> + '_ {
        self.store.iter().map(|&(k, _)| k)
    }

    pub fn stats(&self) -> MphStats {
        let n = self.num_keys();
        let level_bits: u64 = self.levels.iter().map(|l| l.bits).sum();
        let rank_bits = 64 * self.rank.len() as u64;
        let fallback_bits = 64 * self.fallback.len() as u64;
        MphStats {
            num_keys: n,
            levels: self.levels.len(),
            level_bits,
            level_bits_per_key: level_bits as f64 / n as f64,
            rank_bits,
            fallback_keys: self.fallback.len(),
            total_bits_per_key: (level_bits + rank_bits + fallback_bits) as f64 / n as f64,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        self.write(&mut w);
        w.into_inner()
    }

    pub(crate) fn write(&self, w: &mut ByteWriter) {
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.len_prefixed(self.store.len());
        w.f64(self.gamma);
        w.u32(self.max_levels);
        w.u64(self.seed);
        w.len_prefixed(self.levels.len());
        for l in &self.levels {
            w.u64(l.bits);
            for &x in &l.words {
                w.u64(x);
            }
        }
        w.len_prefixed(self.rank.len());
        for &r in &self.rank {
            w.u64(r);
        }
        for &(k, v) in &self.store {
            w.i64(k);
            w.u32(v);
        }
        w.len_prefixed(self.fallback.len());
        for &k in &self.fallback {
            w.i64(k);
        }
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(b, "mph");
        let t = Self::read(&mut r)?;
        r.finish()?;
        Ok(t)
    }

    pub(crate) fn read(r: &mut ByteReader) -> Result<Self> {
        if r.take(4)? != MAGIC {
            return Err(Error::BadMagic("mph"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Version {
                what: "mph",
                found: version,
                expected: VERSION,
            });
        }
        let n = r.len(12)?;
        let gamma = r.f64()?;
        let max_levels = r.u32()?;
        let seed = r.u64()?;
        let nlevels = r.len(8)?;
        let mut levels = Vec::with_capacity(nlevels);
        let mut word_base = 0;
        for _ in 0..nlevels {
            let bits = r.u64()?;
            if bits == 0 || bits % 64 != 0 || bits / 64 > r.remaining() as u64 / 8 {
                return Err(Error::corrupt("mph", format!("level of {bits} bits")));
            }
            let nwords = (bits / 64) as usize;
            let words = (0..nwords).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
            levels.push(Level {
                bits,
                word_base,
                words,
            });
            word_base += nwords;
        }
        let nrank = r.len(8)?;
        if nrank != word_base {
            return Err(Error::corrupt("mph", "rank length differs from word count"));
        }
        let rank = (0..nrank).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let store = (0..n)
            .map(|_| Ok((r.i64()?, r.u32()?)))
            .collect::<Result<Vec<_>>>()?;
        let nfb = r.len(8)?;
        let fallback = (0..nfb).map(|_| r.i64()).collect::<Result<Vec<_>>>()?;
        let t = Self {
            levels,
            rank,
            store,
            fallback,
            gamma,
            max_levels,
            seed,
        };
        t.validate()?;
        Ok(t)
    }

    /// Structural checks plus a full self-lookup of every stored key.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::corrupt("mph", m));
        let mut acc = 0u64;
        let mut k = 0;
        for l in &self.levels {
            for w in &l.words {
                if self.rank[k] != acc {
                    return bad(format!("rank[{k}] = {}, expected {acc}", self.rank[k]));
                }
                acc += w.count_ones() as u64;
                k += 1;
            }
        }
        if acc as usize + self.fallback.len() != self.store.len() {
            return bad("set bits + fallback != key count".into());
        }
        if self.fallback.windows(2).any(|w| w[0] >= w[1]) {
            return bad("fallback not sorted".into());
        }
        for (i, &(code, _)) in self.store.iter().enumerate() {
            if self.index_of(code) != Some(i) {
                return bad(format!("stored key {code} does not resolve to slot {i}"));
            }
        }
        Ok(())
    }
}
