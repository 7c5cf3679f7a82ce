//! Scenario files: TOML with one table per pipeline stage.

use std::fmt;
use std::path::PathBuf;

use atomlink_core::holo::{ScanPlane, SiteLayout, WgsConfig};
use atomlink_core::optics::CollectionOptics;
use atomlink_core::planner::LinkParams;
use atomlink_core::quantum::BasisKind;
use atomlink_core::sim::{ChannelChain, Imperfections, ScanConfig, SequenceConfig};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Scan,
    Fluorescence,
    Entanglement,
    FitBloch,
    FitFringe,
    Wgs,
    Plan,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Scan => "scan",
            Mode::Fluorescence => "fluorescence",
            Mode::Entanglement => "entanglement",
            Mode::FitBloch => "fit-bloch",
            Mode::FitFringe => "fit-fringe",
            Mode::Wgs => "wgs",
            Mode::Plan => "plan",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Optional; must agree with the mode given on the command line.
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    #[serde(default = "default_layout")]
    pub layout: SiteLayout,
    #[serde(default)]
    pub optics: CollectionOptics,
    #[serde(default)]
    pub sequence: SequenceConfig,
    #[serde(default)]
    pub chain: ChannelChain,
    #[serde(default)]
    pub imperfections: Imperfections,
    #[serde(default)]
    pub fluorescence: FluorescenceBlock,
    #[serde(default)]
    pub entanglement: EntanglementBlock,
    #[serde(default)]
    pub scan: ScanBlock,
    #[serde(default)]
    pub wgs: WgsBlock,
    #[serde(default)]
    pub fit_bloch: FitBlochBlock,
    #[serde(default)]
    pub fit_fringe: FitFringeBlock,
    #[serde(default)]
    pub plan: LinkParams,
}

/// Ten sites at 7.5 µm pitch along x, centered on the origin.
pub fn default_layout() -> SiteLayout {
    SiteLayout { r_ref: [-33.75, 0.0, 0.0], delta_r: [7.5, 0.0, 0.0], n_sites: 10 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingSource {
    /// Each site couples only to its own channel.
    #[default]
    Identity,
    /// Mode-overlap model with the atoms displaced by `misalignment_um`.
    Optics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub channel: usize,
    pub site: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluorescenceBlock {
    pub coupling: CouplingSource,
    pub misalignment_um: [f64; 3],
    /// Extra relative couplings, e.g. an injected crosstalk path.
    pub inject: Vec<Injection>,
    pub pulse_time_ns: f64,
    pub profile_bins: usize,
}

impl Default for FluorescenceBlock {
    fn default() -> Self {
        Self {
            coupling: CouplingSource::Identity,
            misalignment_um: [0.0; 3],
            inject: Vec::new(),
            pulse_time_ns: 0.0,
            profile_bins: 150,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntanglementBlock {
    pub basis: BasisKind,
    /// Analyzer angles, evenly spaced over `[0, π)`.
    pub angles: usize,
    pub angle_factor: f64,
}

impl Default for EntanglementBlock {
    fn default() -> Self {
        Self { basis: BasisKind::Circular, angles: 16, angle_factor: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanBlock {
    pub extent_um: f64,
    pub steps: usize,
    pub plane: ScanPlane,
    /// Offset of the true optimum from `layout`.
    pub optimum_offset_um: [f64; 3],
    pub histogram_bin: u32,
    pub fluorescence_rate_hz: f64,
    pub background_hz: f64,
    pub exposure_ms: f64,
    pub trials: u32,
    pub loading_probability: f64,
}

impl Default for ScanBlock {
    fn default() -> Self {
        let c = ScanConfig::default();
        Self {
            extent_um: 4.0,
            steps: 9,
            plane: ScanPlane::Xy,
            optimum_offset_um: [0.5, -1.0, 0.0],
            histogram_bin: 1,
            fluorescence_rate_hz: c.fluorescence_rate_hz,
            background_hz: c.background_hz,
            exposure_ms: c.exposure_ms,
            trials: c.trials,
            loading_probability: c.loading_probability,
        }
    }
}

impl ScanBlock {
    pub fn collection(&self) -> ScanConfig {
        ScanConfig {
            fluorescence_rate_hz: self.fluorescence_rate_hz,
            background_hz: self.background_hz,
            exposure_ms: self.exposure_ms,
            trials: self.trials,
            loading_probability: self.loading_probability,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskFormat {
    #[default]
    Text,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WgsBlock {
    pub grid: usize,
    pub iterations: usize,
    pub pitch_um: f64,
    pub mask_format: MaskFormat,
}

impl Default for WgsBlock {
    fn default() -> Self {
        let c = WgsConfig::default();
        Self { grid: c.grid, iterations: c.iterations, pitch_um: c.pitch_um, mask_format: MaskFormat::Text }
    }
}

impl WgsBlock {
    pub fn config(&self) -> WgsConfig {
        WgsConfig { grid: self.grid, iterations: self.iterations, pitch_um: self.pitch_um }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitBlochBlock {
    /// CSV with `time_ns,counts`; when absent a synthetic histogram is drawn
    /// from the reference drive.
    pub input: Option<PathBuf>,
    pub synthetic_counts: u64,
    pub bin_ns: f64,
    pub n_bins: usize,
    pub rise_time_ns: f64,
    /// Pulse center of the synthetic truth.
    pub truth_center_ns: f64,
    /// fwhm, peak Ω, δ, γ, t0. δ enters only as δ² and is held by default.
    pub free: [bool; 5],
}

impl Default for FitBlochBlock {
    fn default() -> Self {
        Self {
            input: None,
            synthetic_counts: 10_000,
            bin_ns: 1.0,
            n_bins: 150,
            rise_time_ns: 40.0,
            truth_center_ns: 40.0,
            free: [true, true, false, true, true],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitFringeBlock {
    /// CSV with `angle_rad,successes,trials`; overrides the inline arrays.
    pub input: Option<PathBuf>,
    pub angles: Vec<f64>,
    pub successes: Vec<u64>,
    pub trials: Vec<u64>,
    pub angle_factor: f64,
}

impl Default for FitFringeBlock {
    fn default() -> Self {
        Self { input: None, angles: Vec::new(), successes: Vec::new(), trials: Vec::new(), angle_factor: 2.0 }
    }
}

impl Scenario {
    /// Parses TOML, reporting schema violations with their field path.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let de = toml::Deserializer::parse(text).map_err(|e| HarnessError::Schema(e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            HarnessError::Schema(format!("{path}: {}", e.into_inner()))
        })
    }

    /// Checks the mode and the blocks it uses.
    pub fn validate(&self, mode: Mode) -> Result<(), HarnessError> {
        let schema = |m: String| Err(HarnessError::Schema(m));
        if let Some(m) = self.mode {
            if m != mode {
                return schema(format!("mode: scenario says {m}, command line says {mode}"));
            }
        }
        let stochastic = matches!(mode, Mode::Scan | Mode::Fluorescence | Mode::Entanglement | Mode::Wgs)
            || (mode == Mode::FitBloch && self.fit_bloch.input.is_none());
        if stochastic && self.seed.is_none() {
            return schema(format!("seed: required for {mode} mode"));
        }
        self.layout.validate().map_err(|e| HarnessError::Schema(format!("layout: {e}")))?;
        match mode {
            Mode::Fluorescence | Mode::Entanglement => {
                self.sequence.validate().map_err(|e| HarnessError::Schema(format!("sequence: {e}")))?;
                self.chain.validate().map_err(|e| HarnessError::Schema(format!("chain: {e}")))?;
                if self.sequence.n_sites != self.chain.n_channels() || self.layout.n_sites != self.sequence.n_sites {
                    return schema(format!(
                        "sequence.n_sites: {} sites but {} channels and {} layout sites",
                        self.sequence.n_sites,
                        self.chain.n_channels(),
                        self.layout.n_sites
                    ));
                }
                for inj in &self.fluorescence.inject {
                    if inj.channel >= self.sequence.n_sites || inj.site >= self.sequence.n_sites || !(inj.value >= 0.0)
                    {
                        return schema(format!("fluorescence.inject: bad entry {inj:?}"));
                    }
                }
                if mode == Mode::Entanglement && self.entanglement.angles < 4 {
                    return schema("entanglement.angles: need at least 4".into());
                }
            }
            Mode::Scan => {
                self.optics.validate().map_err(|e| HarnessError::Schema(format!("optics: {e}")))?;
                if self.scan.steps == 0 || !(self.scan.extent_um >= 0.0) {
                    return schema("scan: steps must be >= 1 and extent >= 0".into());
                }
            }
            Mode::FitBloch => {
                let f = &self.fit_bloch;
                if !(f.bin_ns > 0.0) || f.n_bins == 0 {
                    return schema("fit_bloch: bin_ns and n_bins must be > 0".into());
                }
            }
            Mode::FitFringe => {
                let f = &self.fit_fringe;
                if f.input.is_none() && (f.angles.len() != f.successes.len() || f.angles.len() != f.trials.len()) {
                    return schema("fit_fringe: angles, successes and trials differ in length".into());
                }
            }
            Mode::Plan => {
                self.plan.validate().map_err(|e| HarnessError::Schema(format!("plan: {e}")))?;
            }
            Mode::Wgs => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_and_defaults() {
        let s = Scenario::parse("seed = 3\n").unwrap();
        assert_eq!(s.seed, Some(3));
        assert_eq!(s.layout.n_sites, 10);
        assert_eq!(s.entanglement.angles, 16);
        assert_eq!(s.scan.collection().trials, 200);
        assert!(s.validate(Mode::Fluorescence).is_ok());
        assert!(Scenario::parse("").unwrap().validate(Mode::Scan).is_err());
        assert!(Scenario::parse("").unwrap().validate(Mode::Plan).is_ok());
    }

    #[test]
    fn field_paths_in_errors() {
        let e = Scenario::parse("[chain]\np_init = \"high\"\n").unwrap_err();
        assert!(e.to_string().contains("chain.p_init"), "{e}");
        let e = Scenario::parse("[scan]\nbogus = 1\n").unwrap_err();
        assert!(e.to_string().contains("scan"), "{e}");
        let e = Scenario::parse("mode = \"plan\"\n").unwrap().validate(Mode::Wgs).unwrap_err();
        assert!(matches!(e, HarnessError::Schema(_)));
    }

    #[test]
    fn block_fields() {
        let s = Scenario::parse("[wgs]\ngrid = 256\nmask_format = \"binary\"\n[scan]\ntrials = 50\nplane = \"z\"\n")
            .unwrap();
        assert_eq!(s.wgs.config().grid, 256);
        assert_eq!(s.wgs.mask_format, MaskFormat::Binary);
        assert_eq!(s.scan.collection().trials, 50);
        assert_eq!(s.scan.plane, ScanPlane::Z);
    }
}
