//! Walker/Vose alias table over integer weights.
//!
//! Construction runs in exact integer arithmetic; each bucket holds an
//! acceptance threshold as a 64-bit fraction. A single `u64` draw selects both
//! the bucket (high part of `x * m`) and the acceptance coin (low part).

#[derive(Debug, Clone)]
pub struct AliasTable {
    threshold: Vec<u64>,
    alias: Vec<u32>,
}

impl AliasTable {
    /// Builds the table. `weights` must be non-empty, shorter than `u32::MAX`,
    /// and contain at least one non-zero entry.
    pub fn new(weights: &[u64]) -> Self {
        let m = weights.len();
        assert!(
            m > 0 && m < u32::MAX as usize,
            "alias table size out of range"
        );
        let total: u128 = weights.iter().map(|&w| w as u128).sum();
        assert!(total > 0, "alias table needs positive total weight");
        assert!(
            total <= u64::MAX as u128,
            "alias table total weight overflows u64"
        );

        // Every bucket has capacity `total`; scaled weights sum to m * total.
        let mut scaled: Vec<u128> = weights.iter().map(|&w| w as u128 * m as u128).collect();
        let mut accept: Vec<u128> = vec![total; m];
        let mut alias: Vec<u32> = (0..m as u32).collect();

        let mut small = Vec::new();
        let mut large = Vec::new();
        for (i, &s) in scaled.iter().enumerate() {
            if s < total {
                small.push(i);
            } else {
                large.push(i);
            }
        }

        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            accept[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] -= total - scaled[s];
            if scaled[l] < total {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are full buckets (exact arithmetic leaves nothing in `small`
        // except entries that are themselves exactly full).
        for i in large.into_iter().chain(small) {
            accept[i] = total;
            alias[i] = i as u32;
        }

        let threshold = accept
            .iter()
            .map(|&a| {
                if a >= total {
                    u64::MAX
                } else {
                    ((a << 64) / total) as u64
                }
            })
            .collect();

        AliasTable { threshold, alias }
    }

    pub fn len(&self) -> usize {
        self.threshold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.threshold.is_empty()
    }

    #[inline]
    pub fn sample(&self, x: u64) -> usize {
        let wide = x as u128 * self.threshold.len() as u128;
        let bucket = (wide >> 64) as usize;
        let coin = wide as u64;
        if coin < self.threshold[bucket] {
            bucket
        } else {
            self.alias[bucket] as usize
        }
    }

    /// Probability mass the table assigns to `index`, reconstructed from the
    /// thresholds. Used for self-checks.
    pub fn implied_probability(&self, index: usize) -> f64 {
        let m = self.len() as f64;
        let scale = 2f64.powi(64);
        let mut p = 0.0;
        for (b, (&t, &a)) in self.threshold.iter().zip(&self.alias).enumerate() {
            let keep = if t == u64::MAX { 1.0 } else { t as f64 / scale };
            if b == index {
                p += keep / m;
            }
            if a as usize == index && a as usize != b {
                p += (1.0 - keep) / m;
            }
        }
        p
    }
}
