//! Seeded, splittable random streams.
//!
//! A [`Stream`] is a ChaCha generator keyed by `(seed, stream id)`. Child
//! streams are derived from the parent key and an index, never from the
//! parent's position, so work split across threads draws the same numbers
//! regardless of scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone)]
pub struct Stream {
    seed: u64,
    id: u64,
    rng: ChaCha12Rng,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self::with_id(seed, 0)
    }

    fn with_id(seed: u64, id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(id);
        Self { seed, id, rng }
    }

    /// Independent child stream number `index`.
    pub fn split(&self, index: u64) -> Stream {
        let id = splitmix(self.id ^ splitmix(index.wrapping_add(1)));
        let seed = splitmix(self.seed ^ id.rotate_left(17));
        Stream::with_id(seed, id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_seed_same_numbers() {
        let mut a = Stream::new(3);
        let mut b = Stream::new(3);
        for _ in 0..16 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn split_ignores_parent_position() {
        let a = Stream::new(11);
        let mut b = Stream::new(11);
        let _: f64 = b.random();
        let mut ca = a.split(4);
        let mut cb = b.split(4);
        assert_eq!(ca.next_u64(), cb.next_u64());
        let mut other = a.split(5);
        assert_ne!(a.split(4).next_u64(), other.next_u64());
    }
}
