//! Seeded counter-based random number generation.
//!
//! Every stochastic choice in this crate (parameter initialization, noise
//! synthesis, patch shuffling) flows through [`CounterRng`] so that a run is a
//! pure function of its seeds and the bit-stream can be reproduced from the
//! description below in any language.
//!
//! Generator algorithm (64-bit, counter-based):
//!
//! ```text
//! mix(z):   z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9;
//!           z ^= z >> 27;  z *= 0x94D049BB133111EB;
//!           z ^= z >> 31;  return z            (all ops mod 2^64)
//!
//! output(key, i) = mix(key + (i + 1) * 0x9E3779B97F4A7C15)
//! ```
//!
//! `i` is the zero-based draw counter. This is the SplitMix64 sequence with
//! random access by index, which makes sub-streams trivially parallelizable.
//!
//! Sub-streams: `substream(key, label) = mix(key ^ (label * 0xA24BAED4963EE407))`.
//! Disjoint labels give statistically independent streams; the label table for
//! noise synthesis is documented in [`crate::noise::synth`].
//!
//! Derived values:
//! - `uniform01`: `(output >> 11) * 2^-53`, in `[0, 1)`.
//! - `normal`: Box-Muller, consuming two raw outputs per value:
//!   `u1 = ((a >> 11) + 1) * 2^-53` (in `(0, 1]`), `u2 = (b >> 11) * 2^-53`,
//!   `z = sqrt(-2 ln u1) * cos(2 pi u2)`.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_GAMMA: u64 = 0xA24B_AED4_963E_E407;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

/// Derive an independent stream key from a parent key and a stream label.
#[inline]
pub fn substream(key: u64, label: u64) -> u64 {
    mix64(key ^ label.wrapping_mul(STREAM_GAMMA))
}

/// FNV-1a over the UTF-8 bytes of a string; used to derive per-name stream
/// labels (`substream(seed, fnv1a64(name))`) so that, e.g., parameter
/// initialization depends only on the seed and the parameter's name, never
/// on construction order.
pub fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in s.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Counter-based generator: the i-th output depends only on `(key, i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        CounterRng { key, counter: 0 }
    }

    /// Stream derived from this generator's key; does not advance `self`.
    pub fn substream(&self, label: u64) -> CounterRng {
        CounterRng::new(substream(self.key, label))
    }

    pub fn next_u64(&mut self) -> u64 {
        let i = self.counter;
        self.counter += 1;
        mix64(self.key.wrapping_add((i + 1).wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform in `[lo, hi)` (degenerates to `lo` when `lo == hi`).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    /// Standard normal via Box-Muller; consumes exactly two raw outputs.
    pub fn normal(&mut self) -> f64 {
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / 9007199254740992.0);
        let u2 = (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform integer in `[0, n)`. Plain modulo reduction: the tiny bias is
    /// irrelevant here and keeping the mapping trivial makes the bit-stream
    /// easy to reproduce elsewhere.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// First `k` elements of a seeded Fisher-Yates shuffle of `0..n`,
    /// returned in ascending order.
    pub fn choose_sorted(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        let mut picked = pool[..k].to_vec();
        picked.sort_unstable();
        picked
    }

    /// Seeded Fisher-Yates shuffle of `items` in place.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        let n = items.len();
        for i in 0..n.saturating_sub(1) {
            let j = i + self.below(n - i);
            items.swap(i, j);
        }
    }
}
