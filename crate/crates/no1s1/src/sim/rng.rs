//! Deterministic RNG for agent behaviour and scheduling jitter.
//!
//! SplitMix64 (Steele, Lea, Flood 2014): a single 64-bit state advanced by a
//! fixed odd constant, output mixed with two xor-shift-multiply rounds. Small,
//! portable, and identical across platforms, which the replay contract
//! depends on. Not cryptographically secure.

/// SplitMix64 generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimRng {
    state: u64,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [0, n). Modulo bias is irrelevant at simulation scale.
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    pub fn next_bool(&mut self, probability: f64) -> bool {
        self.next_f64() < probability
    }

    /// Exponential variate with the given mean, for arrival processes.
    pub fn next_exponential(&mut self, mean_s: f64) -> f64 {
        let u = self.next_f64();
        -mean_s * (1.0 - u).ln()
    }

    /// Pick an index by relative weight; uniform when weights are empty or
    /// shorter than the slice.
    pub fn pick_weighted(&mut self, len: usize, weights: Option<&[f64]>) -> usize {
        debug_assert!(len > 0);
        match weights {
            Some(w) if w.len() >= len && w.iter().take(len).all(|x| *x >= 0.0) => {
                let total: f64 = w.iter().take(len).sum();
                if total <= 0.0 {
                    return self.next_below(len as u64) as usize;
                }
                let mut target = self.next_f64() * total;
                for (i, weight) in w.iter().take(len).enumerate() {
                    if target < *weight {
                        return i;
                    }
                    target -= weight;
                }
                len - 1
            }
            _ => self.next_below(len as u64) as usize,
        }
    }
}
