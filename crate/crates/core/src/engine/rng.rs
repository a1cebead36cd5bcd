use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A named, independently seeded random stream.
///
/// The generator key depends on `(seed, stream_id)` only; adding a stream
/// leaves the draws of existing ones unchanged.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: String,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: impl Into<String>) -> Self {
        let stream_id = stream_id.into();
        let key = splitmix64(seed ^ fnv1a64(stream_id.as_bytes()));
        RngStream { seed, stream_id, inner: ChaCha8Rng::seed_from_u64(key) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }

    /// A child stream whose id is `"<parent>/<name>"`.
    pub fn derive(&self, name: &str) -> RngStream {
        RngStream::new(self.seed, format!("{}/{}", self.stream_id, name))
    }

    /// Uniform draw in the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        loop {
            // 53 random mantissa bits
            let u = (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            if u > 0.0 {
                return u;
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_name_repeat() {
        let mut a = RngStream::new(7, "arrivals");
        let mut b = RngStream::new(7, "arrivals");
        let xs: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn streams_are_independent_by_name() {
        let mut a = RngStream::new(7, "arrivals");
        let mut b = RngStream::new(7, "service:search");
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn open01_in_range() {
        let mut r = RngStream::new(1, "u");
        for _ in 0..10_000 {
            let u = r.open01();
            assert!(u > 0.0 && u < 1.0);
        }
    }
}
