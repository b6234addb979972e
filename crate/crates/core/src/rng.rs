//! Portable seeded generator.
//!
//! Every random draw in the toolkit (scope sampling, substitution draws,
//! oracle weights, bootstrap resampling) goes through this module so that an
//! independent implementation can replay a run from its seeds alone. The
//! algorithms and constants below are part of the external contract:
//!
//! * stream generator: SplitMix64 (increment `0x9E3779B97F4A7C15`, finalizer
//!   multipliers `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`, shifts 30/27/31);
//! * string keys: FNV-1a 64 (offset `0xCBF29CE484222325`, prime `0x100000001B3`)
//!   over the UTF-8 bytes;
//! * seed derivation: `h = 0x243F6A8885A308D3`, then for each part `p`:
//!   `h = mix64(h ^ mix64(p + 0x9E3779B97F4A7C15))`;
//! * bounded integers: rejection sampling, reject `x < (2^64 - n) mod n`, return `x mod n`;
//! * subsets: partial Fisher-Yates over the ascending candidate list, first
//!   `k` slots kept, then sorted ascending.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const DERIVE_INIT: u64 = 0x243F_6A88_85A3_08D3;
const FNV_OFFSET: u64 = 0xCBF2_9CE4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a 64 of a string key.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Derives a child seed from an ordered list of parts.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(DERIVE_INIT, |h, &p| mix64(h ^ mix64(p.wrapping_add(GOLDEN))))
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Generator seeded from [`derive_seed`] over `parts`.
    pub fn from_parts(parts: &[u64]) -> Self {
        Self::new(derive_seed(parts))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % n;
            }
        }
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    /// Uniform `k`-subset of `candidates`, returned in ascending order.
    ///
    /// `candidates` must already be sorted ascending; the draw depends on
    /// their order, not only on the set.
    pub fn sample_subset(&mut self, candidates: &[usize], k: usize) -> Vec<usize> {
        assert!(k <= candidates.len(), "subset larger than candidate pool");
        let mut pool = candidates.to_vec();
        for i in 0..k {
            let j = i + self.index(pool.len() - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool.sort_unstable();
        pool
    }
}
