use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seedable PRNG used for every stochastic choice in a run: parameter
/// init, batch shuffles, fold assignment, splits and oversampling.
///
/// One instance is created per run from the user-supplied seed and
/// threaded through the pipeline, so a seed fully determines a run.
#[derive(Debug, Clone)]
pub struct RunRng(ChaCha8Rng);

impl RunRng {
    pub fn from_seed(seed: u64) -> Self {
        RunRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Standard normal draw via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let mut u1 = self.unit();
        if u1 < 1e-300 {
            u1 = 1e-300;
        }
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Unbiased integer draw in `[0, n)` by rejection sampling.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.0.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Derives an independent child generator. Used to hand each
    /// parallel subtask its own stream while keeping the parent's
    /// draw sequence the sole source of randomness.
    pub fn child(&mut self) -> RunRng {
        RunRng::from_seed(self.next_u64())
    }
}
