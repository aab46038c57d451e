use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded, platform-independent random stream.
///
/// Backed by ChaCha8, so the output sequence depends only on the seed, the
/// stream id and the call sequence. The full position can be captured with
/// [`Rng::position`] and restored with [`Rng::restore`].
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    /// Independent stream keyed by `seed` and a list of tags (epoch, class, fold, ...).
    pub fn derive(seed: u64, tags: &[u64]) -> Self {
        let mut h = splitmix64(seed);
        for &t in tags {
            h = splitmix64(h ^ t.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        }
        Self::new(h)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `(seed, stream, word position)`.
    pub fn position(&self) -> (u64, u64, u128) {
        (self.seed, self.stream, self.inner.get_word_pos())
    }

    pub fn restore(seed: u64, stream: u64, word_pos: u128) -> Self {
        let mut rng = Self::with_stream(seed, stream);
        rng.inner.set_word_pos(word_pos);
        rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = Rng::new(7);
        let mut b = Rng::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn restore_resumes_sequence() {
        let mut a = Rng::with_stream(3, 5);
        for _ in 0..17 {
            a.unit();
        }
        let (seed, stream, pos) = a.position();
        let mut b = Rng::restore(seed, stream, pos);
        for _ in 0..10 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derived_streams_differ() {
        let a = Rng::derive(1, &[0]).next_u64_owned();
        let b = Rng::derive(1, &[1]).next_u64_owned();
        assert_ne!(a, b);
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut p = Rng::new(11).permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }

    impl Rng {
        fn next_u64_owned(mut self) -> u64 {
            self.next_u64()
        }
    }
}
