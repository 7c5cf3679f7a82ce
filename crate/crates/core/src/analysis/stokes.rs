use serde::{Deserialize, Serialize};

use crate::quantum::{stokes_and_purity, StokesVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesComponent {
    pub value: f64,
    pub std_error: f64,
    pub counts: u64,
}

/// Stokes components from the three analyzer settings; `None` marks a
/// setting with no counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesEstimate {
    pub components: [Option<StokesComponent>; 3],
}

impl StokesEstimate {
    pub fn vector(&self) -> Option<StokesVector> {
        let [a, b, c] = self.components;
        Some(StokesVector { s1: a?.value, s2: b?.value, s3: c?.value })
    }

    /// Purity `(1 + |S|²)/2`, when all components are defined. An estimate
    /// with `|S| > 1` from noise is scaled back onto the sphere.
    pub fn purity(&self) -> Option<f64> {
        let s = self.vector()?;
        let m = s.magnitude();
        let s = if m > 1.0 { StokesVector { s1: s.s1 / m, s2: s.s2 / m, s3: s.s3 / m } } else { s };
        stokes_and_purity(s).ok()
    }
}

/// `s_k = (N₊ − N₋)/(N₊ + N₋)` for the (H/V, D/A, σ+/σ−) analyzer settings,
/// `counts[k] = (N₊, N₋)`, with binomial standard errors `√((1 − s²)/N)`.
pub fn stokes_estimate(counts: [(u64, u64); 3]) -> StokesEstimate {
    StokesEstimate {
        components: counts.map(|(np, nm)| {
            let n = np + nm;
            (n > 0).then(|| {
                let s = ((np as f64 - nm as f64) / n as f64).clamp(-1.0, 1.0);
                StokesComponent { value: s, std_error: ((1.0 - s * s) / n as f64).sqrt(), counts: n }
            })
        }),
    }
}
