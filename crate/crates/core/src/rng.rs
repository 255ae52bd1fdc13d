//! Counter-based random numbers.
//!
//! Every variate is a pure function of `(seed, domain, index, counter)`: the
//! Philox4x32-10 block cipher is keyed by the seed and domain and encrypts the
//! 128-bit counter `(counter, index)`. A path, particle or batch owns the
//! `index`; the time step or draw number is the `counter`. No generator state
//! is carried between draws, so results do not depend on evaluation order or
//! on how work is split across threads.

use crate::math::normal_quantile;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Philox4x32 with 10 rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Philox4x32 {
    key: [u32; 2],
}

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

impl Philox4x32 {
    pub const fn from_key(key: [u32; 2]) -> Self {
        Self { key }
    }

    pub const fn new(key: u64) -> Self {
        Self {
            key: [key as u32, (key >> 32) as u32],
        }
    }

    #[inline]
    pub fn block(&self, counter: [u32; 4]) -> [u32; 4] {
        let mut c = counter;
        let mut k = self.key;
        for round in 0..10 {
            if round > 0 {
                k[0] = k[0].wrapping_add(PHILOX_W0);
                k[1] = k[1].wrapping_add(PHILOX_W1);
            }
            let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
            let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
            c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
        }
        c
    }
}

/// SplitMix64 finalizer, used only to derive keys from `(seed, domain)`.
const fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream families derived from one user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    /// Brownian increments of particles and representative paths.
    Brownian = 1,
    /// Draws of initial states from an initial law.
    InitialLaw = 2,
    /// Probe samples of the monotonicity check.
    Monotonicity = 3,
}

#[inline]
fn to_open_unit(hi: u32, lo: u32) -> f64 {
    let bits = ((u64::from(hi) << 32) | u64::from(lo)) >> 11;
    // midpoint of one of 2^53 equal cells, never 0 or 1
    (bits as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Keyed source of uniform and Gaussian variates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    cipher: Philox4x32,
}

impl NoiseSource {
    pub const fn new(seed: u64, domain: Domain) -> Self {
        let key = splitmix64(seed ^ splitmix64(domain as u64));
        Self {
            cipher: Philox4x32::new(key),
        }
    }

    #[inline]
    fn block(&self, index: u64, pair: u64) -> [u32; 4] {
        self.cipher
            .block([pair as u32, (pair >> 32) as u32, index as u32, (index >> 32) as u32])
    }

    /// Uniform variate in the open interval (0, 1).
    #[inline]
    pub fn uniform(&self, index: u64, counter: u64) -> f64 {
        let w = self.block(index, counter >> 1);
        if counter & 1 == 0 {
            to_open_unit(w[0], w[1])
        } else {
            to_open_unit(w[2], w[3])
        }
    }

    /// Standard normal variate by inverse CDF of [`uniform`](Self::uniform).
    #[inline]
    pub fn normal(&self, index: u64, counter: u64) -> f64 {
        normal_quantile(self.uniform(index, counter))
    }

    /// The two normals for counters `2 * pair` and `2 * pair + 1` from a
    /// single cipher block.
    #[inline]
    pub fn normal_pair(&self, index: u64, pair: u64) -> (f64, f64) {
        let w = self.block(index, pair);
        (
            normal_quantile(to_open_unit(w[0], w[1])),
            normal_quantile(to_open_unit(w[2], w[3])),
        )
    }

    /// Sequential reader of the normals `normal(index, 0), normal(index, 1), ...`.
    pub fn normals(&self, index: u64) -> NormalStream {
        NormalStream {
            source: *self,
            index,
            next: 0,
            spare: None,
        }
    }
}

/// Iterator over one index's Gaussian stream; it reuses the second half of
/// each cipher block.
#[derive(Debug, Clone)]
pub struct NormalStream {
    source: NoiseSource,
    index: u64,
    next: u64,
    spare: Option<f64>,
}

impl Iterator for NormalStream {
    type Item = f64;

    #[inline]
    fn next(&mut self) -> Option<f64> {
        if let Some(z) = self.spare.take() {
            self.next += 1;
            return Some(z);
        }
        let (a, b) = self.source.normal_pair(self.index, self.next >> 1);
        if self.next & 1 == 0 {
            self.spare = Some(b);
            self.next += 1;
            Some(a)
        } else {
            self.next += 1;
            Some(b)
        }
    }
}
