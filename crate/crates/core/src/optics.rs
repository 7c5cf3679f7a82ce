//! Scalar Gaussian mode-overlap model of atom-to-waveguide coupling.
//!
//! Lengths are in µm. The waveguide mode is imaged back to the atom plane
//! (waist `MFD/2/M`) and overlapped with the collection mode set by the
//! objective NA (waist `λ/(π NA)`).

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpticsError {
    #[error("invalid optics: {0}")]
    Invalid(String),
    #[error("profile does not cross half maximum on the {0} side")]
    NoHalfMaxCrossing(&'static str),
    #[error("profile needs at least 3 samples with matching lengths")]
    BadProfile,
}

/// How axial defocus reduces the overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefocusModel {
    /// Exact two-beam overlap per transverse axis:
    /// `[(1+(z/z_x)²)(1+(z/z_y)²)]^{-1/2}` with `z_a = π(w_a² + w_c²)/λ`.
    #[default]
    Elliptical,
    /// Single Lorentzian `1/(1+(z/z_eff)²)`, `z_eff = π w̄²/λ` with `w̄` the
    /// mean of the three waists.
    MeanWaistLorentzian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollectionOptics {
    pub numerical_aperture: f64,
    pub magnification: f64,
    /// Waveguide mode-field diameters (x, y).
    pub mfd_um: (f64, f64),
    pub waveguide_pitch_um: f64,
    pub wavelength_um: f64,
    /// Overlap at zero displacement.
    pub peak_efficiency: f64,
    pub defocus: DefocusModel,
}

impl Default for CollectionOptics {
    fn default() -> Self {
        Self {
            numerical_aperture: 0.7,
            magnification: 25.0 / 7.5,
            mfd_um: (3.1, 2.1),
            waveguide_pitch_um: 25.0,
            wavelength_um: 0.780,
            peak_efficiency: 0.5,
            defocus: DefocusModel::default(),
        }
    }
}

impl CollectionOptics {
    pub fn validate(&self) -> Result<(), OpticsError> {
        let bad = |m: &str| Err(OpticsError::Invalid(m.to_string()));
        if !(self.numerical_aperture > 0.0 && self.numerical_aperture < 1.0) {
            return bad("numerical aperture must be in (0, 1)");
        }
        if !(self.magnification > 0.0) {
            return bad("magnification must be > 0");
        }
        if !(self.mfd_um.0 > 0.0 && self.mfd_um.1 > 0.0) {
            return bad("mode-field diameters must be > 0");
        }
        if !(self.wavelength_um > 0.0) || !(self.waveguide_pitch_um > 0.0) {
            return bad("wavelength and pitch must be > 0");
        }
        if !(0.0..=1.0).contains(&self.peak_efficiency) {
            return bad("peak efficiency must be in [0, 1]");
        }
        Ok(())
    }
}

/// Effective Gaussian waists in the atom plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomPlaneMode {
    pub w_x: f64,
    pub w_y: f64,
    pub w_coll: f64,
}

pub fn atom_plane_mode(optics: &CollectionOptics) -> AtomPlaneMode {
    AtomPlaneMode {
        w_x: optics.mfd_um.0 / 2.0 / optics.magnification,
        w_y: optics.mfd_um.1 / 2.0 / optics.magnification,
        w_coll: optics.wavelength_um / (PI * optics.numerical_aperture),
    }
}

/// Axial scale lengths `(z_x, z_y)` of the elliptical defocus model, or
/// `(z_eff, z_eff)` for the mean-waist Lorentzian.
pub fn defocus_lengths(optics: &CollectionOptics) -> (f64, f64) {
    let m = atom_plane_mode(optics);
    let lam = optics.wavelength_um;
    match optics.defocus {
        DefocusModel::Elliptical => {
            let wc2 = m.w_coll * m.w_coll;
            (PI * (m.w_x * m.w_x + wc2) / lam, PI * (m.w_y * m.w_y + wc2) / lam)
        }
        DefocusModel::MeanWaistLorentzian => {
            let w = (m.w_x + m.w_y + m.w_coll) / 3.0;
            let z = PI * w * w / lam;
            (z, z)
        }
    }
}

/// Overlap efficiency for an atom displaced by `d` from the mode center.
pub fn coupling_efficiency(d: [f64; 3], optics: &CollectionOptics) -> f64 {
    let m = atom_plane_mode(optics);
    let wc2 = m.w_coll * m.w_coll;
    let tx = (-2.0 * d[0] * d[0] / (m.w_x * m.w_x + wc2)).exp();
    let ty = (-2.0 * d[1] * d[1] / (m.w_y * m.w_y + wc2)).exp();
    let (zx, zy) = defocus_lengths(optics);
    let axial = match optics.defocus {
        DefocusModel::Elliptical => ((1.0 + (d[2] / zx).powi(2)) * (1.0 + (d[2] / zy).powi(2))).sqrt().recip(),
        DefocusModel::MeanWaistLorentzian => 1.0 / (1.0 + (d[2] / zx).powi(2)),
    };
    optics.peak_efficiency * tx * ty * axial
}

/// Image of an atom-plane coordinate on the waveguide facet.
pub fn map_atom_to_waveguide_plane(position_um: f64, optics: &CollectionOptics) -> f64 {
    position_um * optics.magnification
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingProfile {
    pub displacements: Vec<f64>,
    pub efficiencies: Vec<f64>,
    pub peak: f64,
}

/// Samples the model along one axis on `n` points spanning `[-half_range, half_range]`.
pub fn coupling_profile(optics: &CollectionOptics, axis: Axis, half_range: f64, n: usize) -> CouplingProfile {
    let n = n.max(2);
    let displacements: Vec<f64> = (0..n).map(|i| -half_range + 2.0 * half_range * i as f64 / (n - 1) as f64).collect();
    let efficiencies = displacements
        .iter()
        .map(|&s| {
            let mut d = [0.0; 3];
            d[axis.index()] = s;
            coupling_efficiency(d, optics)
        })
        .collect();
    CouplingProfile { displacements, efficiencies, peak: optics.peak_efficiency }
}

/// Width at half of the sampled maximum, by linear interpolation.
pub fn fwhm(profile: &CouplingProfile) -> Result<f64, OpticsError> {
    let (xs, ys) = (&profile.displacements, &profile.efficiencies);
    if xs.len() < 3 || xs.len() != ys.len() {
        return Err(OpticsError::BadProfile);
    }
    let (imax, &ymax) = ys.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).ok_or(OpticsError::BadProfile)?;
    let half = 0.5 * ymax;
    let lo = (0..imax)
        .rev()
        .find(|&i| ys[i] < half)
        .map(|i| xs[i] + (half - ys[i]) / (ys[i + 1] - ys[i]) * (xs[i + 1] - xs[i]))
        .ok_or(OpticsError::NoHalfMaxCrossing("low"))?;
    let hi = (imax + 1..ys.len())
        .find(|&i| ys[i] < half)
        .map(|i| xs[i - 1] + (ys[i - 1] - half) / (ys[i - 1] - ys[i]) * (xs[i] - xs[i - 1]))
        .ok_or(OpticsError::NoHalfMaxCrossing("high"))?;
    Ok(hi - lo)
}

/// Closed-form transverse FWHM along x or y: `√(2 ln 2 (w² + w_c²))`.
pub fn transverse_fwhm(optics: &CollectionOptics, axis: Axis) -> Option<f64> {
    let m = atom_plane_mode(optics);
    let w = match axis {
        Axis::X => m.w_x,
        Axis::Y => m.w_y,
        Axis::Z => return None,
    };
    Some((2.0 * LN_2 * (w * w + m.w_coll * m.w_coll)).sqrt())
}
