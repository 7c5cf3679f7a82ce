use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

/// z for a 68.27 % two-sided interval.
pub const Z_68: f64 = 1.0;

/// Tail probability of a two-sided 3σ Gaussian band, per side.
pub const THREE_SIGMA_TAIL: f64 = 0.001_349_898;

/// Binomial proportion `successes / attempts`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Estimate {
    pub successes: u64,
    pub attempts: u64,
}

impl Estimate {
    pub fn new(successes: u64, attempts: u64) -> Self {
        Self { successes, attempts }
    }

    /// `None` when there were no attempts.
    pub fn value(&self) -> Option<f64> {
        (self.attempts > 0).then(|| self.successes as f64 / self.attempts as f64)
    }

    pub fn std_error(&self) -> Option<f64> {
        self.value().map(|p| (p * (1.0 - p) / self.attempts as f64).sqrt())
    }

    /// Wilson score interval at `z` standard deviations.
    pub fn wilson(&self, z: f64) -> Option<(f64, f64)> {
        let p = self.value()?;
        let n = self.attempts as f64;
        let z2 = z * z;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        Some(((center - half).max(0.0), (center + half).min(1.0)))
    }
}

/// Exact two-sided binomial test: true when `k` successes in `n` trials are
/// not in either 3σ tail of Binomial(n, p).
pub fn binomial_within_3sigma(k: u64, n: u64, p: f64) -> bool {
    if n == 0 {
        return false;
    }
    let Ok(d) = Binomial::new(p.clamp(0.0, 1.0), n) else { return false };
    let lower = d.cdf(k);
    let upper = if k == 0 { 1.0 } else { d.sf(k - 1) };
    lower >= THREE_SIGMA_TAIL && upper >= THREE_SIGMA_TAIL
}

/// Normal-approximation pull `(k − np)/√(np(1−p))`.
pub fn binomial_pull(k: u64, n: u64, p: f64) -> f64 {
    let n = n as f64;
    (k as f64 - n * p) / (n * p * (1.0 - p)).sqrt()
}
