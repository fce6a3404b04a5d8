//! Deterministic random number generation.
//!
//! Everything stochastic in this crate (weight init, dataset synthesis,
//! batch shuffling) draws from [`DetRng`], a SplitMix64 stream with a
//! Box–Muller normal sampler on top. The generator is fully specified here
//! so that identical seeds give bit-identical streams on every platform:
//!
//! * state update: `s += 0x9E3779B97F4A7C15`
//! * output: `z = s; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//!   z = (z ^ (z >> 27)) * 0x94D049BB133111EB; z ^ (z >> 31)`
//! * uniform f64 in `[0, 1)`: top 53 bits / 2^53
//! * normal pairs: Box–Muller on `(1 - u1, u2)` so the log argument is in
//!   `(0, 1]`; the second variate of each pair is cached.
//!
//! Sub-streams come from [`DetRng::derive`], which reseeds through one
//! SplitMix64 output step so per-item streams are decorrelated from the
//! parent seed.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix_output(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded deterministic generator (SplitMix64 + Box–Muller).
#[derive(Debug, Clone)]
pub struct DetRng {
    state: u64,
    spare_normal: Option<f64>,
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        DetRng {
            state: seed,
            spare_normal: None,
        }
    }

    /// Deterministic sub-stream `k` of the stream that `seed` would start.
    pub fn derive(seed: u64, k: u64) -> Self {
        let mixed = splitmix_output(seed ^ GOLDEN.wrapping_mul(k.wrapping_add(1)));
        DetRng::new(mixed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        splitmix_output(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Uniform integer in `[0, n)`.
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_f64() * n as f64) as usize % n
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_index(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = DetRng::new(42);
        let mut b = DetRng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derived_streams_differ_from_parent_and_each_other() {
        let mut parent = DetRng::new(7);
        let mut c0 = DetRng::derive(7, 0);
        let mut c1 = DetRng::derive(7, 1);
        let (p, a, b) = (parent.next_u64(), c0.next_u64(), c1.next_u64());
        assert_ne!(p, a);
        assert_ne!(a, b);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = DetRng::new(1);
        for _ in 0..10_000 {
            let u = rng.next_f64();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_moments_close_to_standard() {
        let mut rng = DetRng::new(3);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z = rng.next_normal();
            sum += z;
            sum_sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        // 4 standard errors of the mean for 1e5 standard normals.
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean = {mean}");
        assert!((var - 1.0).abs() < 0.02, "var = {var}");
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = DetRng::new(9);
        let mut items: Vec<usize> = (0..50).collect();
        rng.shuffle(&mut items);
        let mut sorted = items.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }
}
