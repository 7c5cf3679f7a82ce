use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::holo::SiteLayout;
use crate::optics::{coupling_efficiency, CollectionOptics};
use crate::rng::SeedTree;

/// Fluorescence-collection settings for an alignment scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    /// Detected photon rate of a loaded, perfectly aligned atom.
    pub fluorescence_rate_hz: f64,
    /// Detected background rate per channel.
    pub background_hz: f64,
    pub exposure_ms: f64,
    pub trials: u32,
    pub loading_probability: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            fluorescence_rate_hz: 1000.0,
            background_hz: 30.0,
            exposure_ms: 30.0,
            trials: 200,
            loading_probability: 0.5,
        }
    }
}

/// Photon counts collected at one layout of the scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub index: usize,
    pub r_ref: [f64; 3],
    /// Counts per exposure, trial-major: `counts[trial * n_sites + site]`.
    pub counts: Vec<u32>,
    pub total: u64,
}

/// Simulates fluorescence collection for each candidate layout. The atoms
/// sit at `layout` while the waveguide modes are fixed at `optimum`, so the
/// displacement of every site is `layout.r_ref − optimum.r_ref`.
pub fn run_scan_simulation(
    layouts: &[SiteLayout],
    optimum: &SiteLayout,
    optics: &CollectionOptics,
    config: &ScanConfig,
    seeds: &SeedTree,
) -> Result<Vec<ScanPoint>, SimError> {
    optics.validate().map_err(|e| SimError::Config(e.to_string()))?;
    if !(config.exposure_ms > 0.0 && config.fluorescence_rate_hz >= 0.0 && config.background_hz >= 0.0) {
        return Err(SimError::Config("scan rates must be >= 0 and exposure > 0".into()));
    }
    if !(0.0..=1.0).contains(&config.loading_probability) {
        return Err(SimError::Config("loading probability out of range".into()));
    }
    let eta0 = coupling_efficiency([0.0; 3], optics);
    let exposure_s = config.exposure_ms * 1e-3;
    Ok(layouts
        .par_iter()
        .enumerate()
        .map(|(index, layout)| {
            let mut rng = seeds.stream("scan", index as u64);
            let d = std::array::from_fn(|k| layout.r_ref[k] - optimum.r_ref[k]);
            let rel = if eta0 > 0.0 { coupling_efficiency(d, optics) / eta0 } else { 0.0 };
            let signal = config.fluorescence_rate_hz * exposure_s * rel;
            let bg = config.background_hz * exposure_s;
            let n = config.trials as usize * layout.n_sites;
            let counts: Vec<u32> = (0..n)
                .map(|_| {
                    let loaded = rng.random::<f64>() < config.loading_probability;
                    let mean = bg + if loaded { signal } else { 0.0 };
                    if mean > 0.0 {
                        Poisson::new(mean).map(|p| p.sample(&mut rng) as u32).unwrap_or(0)
                    } else {
                        0
                    }
                })
                .collect();
            let total = counts.iter().map(|&c| c as u64).sum();
            ScanPoint { index, r_ref: layout.r_ref, counts, total }
        })
        .collect())
}
