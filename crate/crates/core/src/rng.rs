//! Seedable pseudo-random generator with named sub-streams.
//!
//! The generator is xoshiro256++ seeded through splitmix64 (the reference
//! seeding procedure). The algorithm is fixed for this crate, so a seed fully
//! determines the stream. Every source of randomness in a run derives from one
//! root seed through [`Prng::substream`], keyed by a label and an index, so
//! e.g. the mask drawn at a given step is independent of whether weight
//! initialization consumed more or fewer samples.

/// xoshiro256++ generator.
#[derive(Debug, Clone)]
pub struct Prng {
    seed: u64,
    state: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// FNV-1a over a label, used to key sub-streams.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let state = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Prng { seed, state }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive an independent generator keyed by `(label, index)`.
    ///
    /// The derivation mixes the root seed with a hash of the label and the
    /// index, so sub-streams never depend on how much of any other stream has
    /// been consumed.
    pub fn substream(&self, label: &str, index: u64) -> Prng {
        let mixed = self
            .seed
            .wrapping_add(fnv1a(label.as_bytes()).rotate_left(17))
            .wrapping_add(index.wrapping_mul(0x9e3779b97f4a7c15));
        Prng::new(mixed)
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform integer in `[0, bound)` by rejection, bias-free.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "next_below: bound must be positive");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let v = self.next_u64();
            if v >= threshold {
                return v % bound;
            }
        }
    }

    pub fn usize_below(&mut self, bound: usize) -> usize {
        self.next_below(bound as u64) as usize
    }

    /// Uniform f64 in `[0, 1)` using the high 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform f64 in `[lo, hi)`.
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal sample via Box-Muller (two uniforms per sample, the
    /// spare is discarded to keep the state a pure function of draw count).
    pub fn next_normal(&mut self) -> f64 {
        loop {
            let u1 = self.next_f64();
            if u1 <= f64::MIN_POSITIVE {
                continue;
            }
            let u2 = self.next_f64();
            let r = (-2.0 * u1.ln()).sqrt();
            return r * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }

    /// Normal sample truncated to `[-2σ, 2σ]` by resampling.
    pub fn next_trunc_normal(&mut self, std: f64) -> f64 {
        loop {
            let v = self.next_normal();
            if v.abs() <= 2.0 {
                return v * std;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.usize_below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices drawn uniformly from `0..n`, in random order
    /// (partial Fisher-Yates).
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "sample_indices: k={k} exceeds n={n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.usize_below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
