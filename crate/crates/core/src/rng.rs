//! Counter-based random streams.
//!
//! A [`StreamKey`] is a 64-bit hash of a path such as
//! `(seed, replica, step, colony, particle)`. Every key opens an independent
//! SplitMix64-style [`CounterStream`] whose `i`-th output is a pure function
//! of `(key, i)`, so results never depend on which thread draws them or in
//! what order keys are visited.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        StreamKey(mix(seed ^ 0x6A09_E667_F3BC_C909))
    }

    #[inline]
    pub fn child(self, index: u64) -> Self {
        StreamKey(mix(self.0.rotate_left(23) ^ mix(index.wrapping_add(GOLDEN))))
    }

    #[inline]
    pub fn stream(self) -> CounterStream {
        CounterStream {
            key: self.0,
            counter: 0,
        }
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct CounterStream {
    key: u64,
    counter: u64,
}

impl CounterStream {
    pub fn position(&self) -> u64 {
        self.counter
    }
}

impl RngCore for CounterStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_pure_functions_of_the_key() {
        let key = StreamKey::root(7).child(3).child(11);
        let a: Vec<u64> = {
            let mut s = key.stream();
            (0..5).map(|_| s.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut s = StreamKey::root(7).child(3).child(11).stream();
            (0..5).map(|_| s.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(key, StreamKey::root(7).child(11).child(3));
    }

    #[test]
    fn uniform_moments_are_sane() {
        let root = StreamKey::root(1);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for i in 0..n {
            let u: f64 = root.child(i).stream().random();
            sum += u;
            sq += u * u;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        // SE of the mean is sqrt(1/12/n) ≈ 6.5e-4
        assert!((mean - 0.5).abs() < 4.0 * (1.0f64 / 12.0 / n as f64).sqrt());
        assert!((var - 1.0 / 12.0).abs() < 2e-3);
    }

    #[test]
    fn sibling_streams_are_uncorrelated() {
        let root = StreamKey::root(99);
        let n = 100_000;
        let mut cross = 0.0;
        for i in 0..n {
            let a: f64 = root.child(2 * i).stream().random::<f64>() - 0.5;
            let b: f64 = root.child(2 * i + 1).stream().random::<f64>() - 0.5;
            cross += a * b;
        }
        // sd of the mean product is 1/12/sqrt(n)
        assert!((cross / n as f64).abs() < 4.0 / 12.0 / (n as f64).sqrt());
    }
}
