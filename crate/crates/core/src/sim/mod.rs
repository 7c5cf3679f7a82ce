//! Monte Carlo replay of the loading / excitation / detection sequences.

mod emission;
mod entanglement;
mod fluorescence;
mod records;
mod scan;

pub use emission::{default_emission_profile, emission_time_sample, EmissionSampler};
pub use entanglement::{
    run_entanglement_sequence, Analyzer, EntanglementOutcome, EntanglementRun, Imperfections, InitFailure,
};
pub use fluorescence::{run_fluorescence_sequence, sample_detection, FluorescenceRun, SequenceOutcome};
pub use records::{
    read_records, write_records, DetectionRecord, Detector, Origin, RecordError, SCHEMA_NAME, SCHEMA_VERSION,
};
pub use scan::{run_scan_simulation, ScanConfig, ScanPoint};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::holo::{target_positions, SiteLayout};
use crate::optics::{coupling_efficiency, CollectionOptics};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Net coupling row of the reference device (rounded to 0.1 %).
pub const TABLE_ETA_NET: [f64; 10] = [0.009, 0.008, 0.009, 0.010, 0.007, 0.003, 0.010, 0.012, 0.003, 0.005];
/// Per-channel background click rates of the reference device, Hz.
pub const TABLE_BACKGROUND_HZ: [f64; 10] = [23.0, 20.0, 48.0, 31.0, 30.0, 16.0, 27.0, 28.0, 22.0, 28.0];

/// Efficiency chain from an initialized atom to a detector click.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelChain {
    pub p_init: f64,
    pub eta_ext: f64,
    pub eta_net: Vec<f64>,
    pub eta_fiber: f64,
    pub eta_det: f64,
    pub background_hz: Vec<f64>,
    pub detection_window_ns: f64,
}

impl Default for ChannelChain {
    fn default() -> Self {
        Self {
            p_init: 0.90,
            eta_ext: 0.67,
            eta_net: TABLE_ETA_NET.to_vec(),
            eta_fiber: 0.8,
            eta_det: 0.8,
            background_hz: TABLE_BACKGROUND_HZ.to_vec(),
            detection_window_ns: 100.0,
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SimError::Config(format!("{name} = {p} is not a probability")))
    }
}

impl ChannelChain {
    pub fn n_channels(&self) -> usize {
        self.eta_net.len()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, p) in [
            ("p_init", self.p_init),
            ("eta_ext", self.eta_ext),
            ("eta_fiber", self.eta_fiber),
            ("eta_det", self.eta_det),
        ] {
            check_prob(name, p)?;
        }
        for &p in &self.eta_net {
            check_prob("eta_net", p)?;
        }
        if self.background_hz.len() != self.eta_net.len() {
            return Err(SimError::Config("background_hz and eta_net differ in length".into()));
        }
        if self.background_hz.iter().any(|r| !(*r >= 0.0)) {
            return Err(SimError::Config("background rates must be >= 0".into()));
        }
        if !(self.detection_window_ns > 0.0) {
            return Err(SimError::Config("detection window must be > 0".into()));
        }
        Ok(())
    }

    /// Factors common to all channels: `p_init·η_ext·η_fiber·η_det`.
    pub fn common_factor(&self) -> f64 {
        self.p_init * self.eta_ext * self.eta_fiber * self.eta_det
    }

    pub fn click_probability(&self, channel: usize) -> f64 {
        self.common_factor() * self.eta_net[channel]
    }

    /// Probability of at least one background click in the detection window.
    pub fn background_probability(&self, channel: usize) -> f64 {
        -(-self.background_hz[channel] * self.detection_window_ns * 1e-9).exp_m1()
    }
}

/// Relative coupling `rel[i][j]` of site `j` into channel `i`; channel `i`'s
/// efficiency for site `j` is `η_net[i]·rel[i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    rel: Vec<Vec<f64>>,
}

impl CouplingMatrix {
    pub fn identity(n: usize) -> Self {
        Self { rel: (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect() }
    }

    pub fn from_rows(rel: Vec<Vec<f64>>) -> Result<Self, SimError> {
        let n = rel.len();
        if rel.iter().any(|r| r.len() != n) {
            return Err(SimError::Config("coupling matrix must be square".into()));
        }
        if rel.iter().flatten().any(|v| !(*v >= 0.0)) {
            return Err(SimError::Config("coupling entries must be >= 0".into()));
        }
        Ok(Self { rel })
    }

    /// Mode-overlap coupling with waveguide `i` imaged onto the nominal site
    /// `i` and the atoms displaced rigidly by `offset`.
    pub fn from_optics(layout: &SiteLayout, optics: &CollectionOptics, offset: [f64; 3]) -> Self {
        let sites = target_positions(layout);
        let eta0 = coupling_efficiency([0.0; 3], optics);
        let rel = sites
            .iter()
            .map(|w| {
                sites
                    .iter()
                    .map(|r| {
                        let d = std::array::from_fn(|k| r[k] + offset[k] - w[k]);
                        if eta0 > 0.0 {
                            coupling_efficiency(d, optics) / eta0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        Self { rel }
    }

    pub fn n(&self) -> usize {
        self.rel.len()
    }

    pub fn get(&self, channel: usize, site: usize) -> f64 {
        self.rel[channel][site]
    }
}

/// Per-sequence settings shared by the fluorescence and entanglement modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceConfig {
    pub n_sites: usize,
    pub loading_probability: f64,
    /// Excitation trials per sequence in fluorescence mode.
    pub trials_per_sequence: u32,
    /// Attempt cap per sequence in entanglement mode.
    pub max_attempts: u32,
    pub atom_measurement_exposure_ms: f64,
    /// Length of each trial's detection slot.
    pub detection_slot_us: f64,
    pub sequences: u64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            n_sites: 10,
            loading_probability: 0.5,
            trials_per_sequence: 40,
            max_attempts: 30,
            atom_measurement_exposure_ms: 40.0,
            detection_slot_us: 10.0,
            sequences: 1500,
        }
    }
}

impl SequenceConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_sites == 0 || self.trials_per_sequence == 0 || self.max_attempts == 0 {
            return Err(SimError::Config("site, trial and attempt counts must be >= 1".into()));
        }
        check_prob("loading_probability", self.loading_probability)?;
        if !(self.detection_slot_us > 0.0) {
            return Err(SimError::Config("detection slot must be > 0".into()));
        }
        Ok(())
    }

    pub fn slot_ns(&self) -> f64 {
        self.detection_slot_us * 1e3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_chain_products() {
        let c = ChannelChain::default();
        assert!(c.validate().is_ok());
        // 0.9·0.67·0.009·0.8·0.8
        assert!((c.click_probability(0) - 3.473e-3).abs() < 1e-6);
        assert!((c.background_probability(0) - 2.3e-6).abs() < 1e-10);
    }

    #[test]
    fn optics_coupling_matrix() {
        let layout = SiteLayout::new([0.0; 3], [7.5, 0.0, 0.0], 10).unwrap();
        let m = CouplingMatrix::from_optics(&layout, &CollectionOptics::default(), [0.0; 3]);
        for i in 0..10 {
            assert_eq!(m.get(i, i), 1.0);
            for j in 0..10 {
                if i != j {
                    assert!(m.get(i, j) < 1e-6);
                }
            }
        }
        assert!(CouplingMatrix::from_rows(vec![vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn invalid_chain() {
        let c = ChannelChain { p_init: 1.5, ..Default::default() };
        assert!(c.validate().is_err());
        let c = ChannelChain { background_hz: vec![1.0], ..Default::default() };
        assert!(c.validate().is_err());
    }
}
