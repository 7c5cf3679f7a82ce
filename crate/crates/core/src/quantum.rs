//! Finite-dimensional atom–photon state algebra.
//!
//! Conventions used throughout the crate (every other module imports them
//! from here):
//!
//! * Photon kets are stored in the linear `{H, V}` basis.
//! * Circular states are `|σ±⟩ = (|H⟩ ± i|V⟩)/√2`, so `|σ+⟩` has Stokes
//!   `s3 = +1`.
//! * Joint atom–photon amplitudes are ordered
//!   `{|+1⟩|σ−⟩, |+1⟩|σ+⟩, |−1⟩|σ−⟩, |−1⟩|σ+⟩}`, where `±1` labels the
//!   `m_F = ±1` Zeeman sublevel.
//! * Stokes components are `s1 = |H|² − |V|²`, `s2 = 2 Re(H* V)`,
//!   `s3 = 2 Im(H* V)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probabilities below this are treated as a null measurement outcome.
pub const NULL_OUTCOME_THRESHOLD: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("null outcome: projection probability {0:e} is below threshold")]
    NullOutcome(f64),
    #[error("cannot normalize a zero vector")]
    ZeroNorm,
    #[error("invalid Stokes vector: |S| = {0} exceeds 1")]
    InvalidStokes(f64),
}

/// A single-photon polarization state in the `{H, V}` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationKet {
    pub amp_h: C64,
    pub amp_v: C64,
}

impl PolarizationKet {
    pub const fn new(amp_h: C64, amp_v: C64) -> Self {
        Self { amp_h, amp_v }
    }

    pub fn horizontal() -> Self {
        Self::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0))
    }

    pub fn vertical() -> Self {
        Self::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0))
    }

    pub fn sigma_plus() -> Self {
        Self::new(C64::new(FRAC_1_SQRT_2, 0.0), C64::new(0.0, FRAC_1_SQRT_2))
    }

    pub fn sigma_minus() -> Self {
        Self::new(C64::new(FRAC_1_SQRT_2, 0.0), C64::new(0.0, -FRAC_1_SQRT_2))
    }

    /// Superposition `a|σ+⟩ + b|σ−⟩` expressed in the linear basis.
    pub fn from_circular(amp_plus: C64, amp_minus: C64) -> Self {
        let p = Self::sigma_plus();
        let m = Self::sigma_minus();
        Self::new(amp_plus * p.amp_h + amp_minus * m.amp_h, amp_plus * p.amp_v + amp_minus * m.amp_v)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp_h.norm_sqr() + self.amp_v.norm_sqr()
    }

    pub fn normalized(&self) -> Result<Self, QuantumError> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(QuantumError::ZeroNorm);
        }
        Ok(Self::new(self.amp_h / n, self.amp_v / n))
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amp_h.conj() * other.amp_h + self.amp_v.conj() * other.amp_v
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self::new(self.amp_h * factor, self.amp_v * factor)
    }

    pub fn stokes(&self) -> StokesVector {
        let n = self.norm_sqr();
        let hv = self.amp_h.conj() * self.amp_v;
        StokesVector {
            s1: (self.amp_h.norm_sqr() - self.amp_v.norm_sqr()) / n,
            s2: 2.0 * hv.re / n,
            s3: 2.0 * hv.im / n,
        }
    }

    /// True when `self` and `other` differ only by a global phase.
    pub fn equals_up_to_phase(&self, other: &Self, tol: f64) -> bool {
        let overlap = self.inner(other).norm_sqr();
        (overlap - self.norm_sqr() * other.norm_sqr()).abs() <= tol
    }
}

/// Polarization Bloch vector `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesVector {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    pub const fn new(s1: f64, s2: f64, s3: f64) -> Self {
        Self { s1, s2, s3 }
    }

    pub fn magnitude(&self) -> f64 {
        (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt()
    }
}

/// Purity `Tr(ρ²) = (1 + |S|²)/2` of the polarization state with Stokes vector `s`.
pub fn stokes_and_purity(s: StokesVector) -> Result<f64, QuantumError> {
    let mag = s.magnitude();
    if mag > 1.0 + 1e-9 {
        return Err(QuantumError::InvalidStokes(mag));
    }
    Ok(0.5 * (1.0 + mag * mag))
}

/// Reported ellipticity `tan χ = cos θ` of dipole emission viewed at angle
/// `theta_tilt` from the quantization axis.
pub fn tilt_ellipticity(theta_tilt: f64) -> f64 {
    theta_tilt.cos()
}

/// Photon kets actually collected for the `σ+` and `σ−` transitions when the
/// collection axis is tilted by `theta_tilt` from the quantization axis.
///
/// A circular dipole `(x ± iy)` seen along a tilted axis projects to
/// `(cos θ·H ± i·V)`, i.e. an ellipse with `tan χ = cos θ`.
pub fn tilted_emission(theta_tilt: f64) -> (PolarizationKet, PolarizationKet) {
    let c = theta_tilt.cos();
    let n = (1.0 + c * c).sqrt();
    let plus = PolarizationKet::new(C64::new(c / n, 0.0), C64::new(0.0, 1.0 / n));
    let minus = PolarizationKet::new(C64::new(c / n, 0.0), C64::new(0.0, -1.0 / n));
    (plus, minus)
}

/// A linear retarder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveplateSetting {
    /// Phase retardance in `[0, 2π)`.
    pub retardance: f64,
    /// Fast-axis angle from H in `[0, π)`.
    pub fast_axis_angle: f64,
}

impl WaveplateSetting {
    pub fn new(retardance: f64, fast_axis_angle: f64) -> Self {
        Self { retardance: retardance.rem_euclid(TAU), fast_axis_angle: fast_axis_angle.rem_euclid(PI) }
    }

    pub fn half_wave(fast_axis_angle: f64) -> Self {
        Self::new(PI, fast_axis_angle)
    }

    pub fn quarter_wave(fast_axis_angle: f64) -> Self {
        Self::new(PI / 2.0, fast_axis_angle)
    }

    /// Jones matrix `R(θ)·diag(e^{−iΓ/2}, e^{iΓ/2})·R(−θ)`, row-major.
    pub fn matrix(&self) -> [[C64; 2]; 2] {
        let (s, c) = self.fast_axis_angle.sin_cos();
        let a = C64::from_polar(1.0, -self.retardance / 2.0);
        let b = C64::from_polar(1.0, self.retardance / 2.0);
        let off = (a - b) * (c * s);
        [[a * (c * c) + b * (s * s), off], [off, a * (s * s) + b * (c * c)]]
    }
}

pub fn apply_waveplate(ket: PolarizationKet, wp: WaveplateSetting) -> PolarizationKet {
    let m = wp.matrix();
    PolarizationKet::new(m[0][0] * ket.amp_h + m[0][1] * ket.amp_v, m[1][0] * ket.amp_h + m[1][1] * ket.amp_v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Circular,
    Linear,
}

/// Orthonormal analyzer pair. The first element is routed to the H detector.
///
/// Circular: `{cosθ|σ+⟩ + sinθ|σ−⟩, −sinθ|σ+⟩ + cosθ|σ−⟩}`.
/// Linear: `{cosθ|H⟩ + sinθ|V⟩, −sinθ|H⟩ + cosθ|V⟩}`.
pub fn analyzer_basis(theta: f64, kind: BasisKind) -> (PolarizationKet, PolarizationKet) {
    let (s, c) = theta.sin_cos();
    let (c, s) = (C64::new(c, 0.0), C64::new(s, 0.0));
    match kind {
        BasisKind::Circular => (PolarizationKet::from_circular(c, s), PolarizationKet::from_circular(-s, c)),
        BasisKind::Linear => (PolarizationKet::new(c, s), PolarizationKet::new(-s, c)),
    }
}

/// Atomic qubit over `{|m=+1⟩, |m=−1⟩}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomKet {
    pub plus: C64,
    pub minus: C64,
}

impl AtomKet {
    /// Probability of finding the atom in `|m=−1⟩`.
    pub fn minus_probability(&self) -> f64 {
        let n = self.plus.norm_sqr() + self.minus.norm_sqr();
        self.minus.norm_sqr() / n
    }
}

/// Joint state over `{+1, −1} ⊗ {σ−, σ+}` in the crate-wide ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointAtomPhotonState {
    amps: [C64; 4],
}

pub const IDX_PLUS_SIGMA_MINUS: usize = 0;
pub const IDX_PLUS_SIGMA_PLUS: usize = 1;
pub const IDX_MINUS_SIGMA_MINUS: usize = 2;
pub const IDX_MINUS_SIGMA_PLUS: usize = 3;

impl JointAtomPhotonState {
    pub fn from_amplitudes(amps: [C64; 4]) -> Result<Self, QuantumError> {
        let n: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(QuantumError::ZeroNorm);
        }
        Ok(Self { amps: amps.map(|a| a / n) })
    }

    /// Product state `|atom⟩ ⊗ |photon⟩`; the photon is decomposed onto `σ±`.
    pub fn product(atom: AtomKet, photon: PolarizationKet) -> Result<Self, QuantumError> {
        let pm = PolarizationKet::sigma_minus().inner(&photon);
        let pp = PolarizationKet::sigma_plus().inner(&photon);
        Self::from_amplitudes([atom.plus * pm, atom.plus * pp, atom.minus * pm, atom.minus * pp])
    }

    /// `(|+1⟩|e−⟩ + |−1⟩|e+⟩)/√2` with the photon kets distorted by a
    /// collection-axis tilt (see [`tilted_emission`]). Zero tilt is the Bell state.
    pub fn tilted_bell(theta_tilt: f64) -> Self {
        let (e_plus, e_minus) = tilted_emission(theta_tilt);
        let sp = PolarizationKet::sigma_plus();
        let sm = PolarizationKet::sigma_minus();
        let r = FRAC_1_SQRT_2;
        Self { amps: [sm.inner(&e_minus) * r, sp.inner(&e_minus) * r, sm.inner(&e_plus) * r, sp.inner(&e_plus) * r] }
    }

    pub fn amplitudes(&self) -> [C64; 4] {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Applies the Zeeman precession phase `e^{i·2π·Δν·t}` to the `m=+1`
    /// components. Off by default everywhere in the crate.
    pub fn precessed(&self, splitting_mhz: f64, elapsed_us: f64) -> Self {
        let phase = C64::from_polar(1.0, TAU * splitting_mhz * elapsed_us);
        let mut amps = self.amps;
        amps[IDX_PLUS_SIGMA_MINUS] *= phase;
        amps[IDX_PLUS_SIGMA_PLUS] *= phase;
        Self { amps }
    }

    /// Unnormalized photon ket conditioned on the atom being in `m = ±1`.
    fn photon_given_atom(&self, plus: bool) -> PolarizationKet {
        let (im, ip) = if plus {
            (IDX_PLUS_SIGMA_MINUS, IDX_PLUS_SIGMA_PLUS)
        } else {
            (IDX_MINUS_SIGMA_MINUS, IDX_MINUS_SIGMA_PLUS)
        };
        PolarizationKet::from_circular(self.amps[ip], self.amps[im])
    }

    /// Reduced photon density matrix in the `{H, V}` basis.
    pub fn reduced_photon_density(&self) -> [[C64; 2]; 2] {
        let mut rho = [[C64::new(0.0, 0.0); 2]; 2];
        for plus in [true, false] {
            let k = self.photon_given_atom(plus);
            let v = [k.amp_h, k.amp_v];
            for (i, vi) in v.iter().enumerate() {
                for (j, vj) in v.iter().enumerate() {
                    rho[i][j] += vi * vj.conj();
                }
            }
        }
        rho
    }

    pub fn reduced_photon_stokes(&self) -> StokesVector {
        let rho = self.reduced_photon_density();
        let tr = rho[0][0].re + rho[1][1].re;
        StokesVector {
            s1: (rho[0][0].re - rho[1][1].re) / tr,
            s2: 2.0 * rho[1][0].re / tr,
            s3: 2.0 * rho[1][0].im / tr,
        }
    }
}

/// `(|m=+1⟩|σ−⟩ + |m=−1⟩|σ+⟩)/√2`.
pub fn bell_state() -> JointAtomPhotonState {
    let r = C64::new(FRAC_1_SQRT_2, 0.0);
    let z = C64::new(0.0, 0.0);
    JointAtomPhotonState { amps: [r, z, z, r] }
}

/// Projects the photon onto `onto`; returns the outcome probability and the
/// renormalized atomic state.
pub fn project_photon(state: &JointAtomPhotonState, onto: &PolarizationKet) -> Result<(f64, AtomKet), QuantumError> {
    let sm = onto.inner(&PolarizationKet::sigma_minus());
    let sp = onto.inner(&PolarizationKet::sigma_plus());
    let a = state.amps;
    let plus = sm * a[IDX_PLUS_SIGMA_MINUS] + sp * a[IDX_PLUS_SIGMA_PLUS];
    let minus = sm * a[IDX_MINUS_SIGMA_MINUS] + sp * a[IDX_MINUS_SIGMA_PLUS];
    let p = (plus.norm_sqr() + minus.norm_sqr()) / onto.norm_sqr();
    if p < NULL_OUTCOME_THRESHOLD {
        return Err(QuantumError::NullOutcome(p));
    }
    let n = (plus.norm_sqr() + minus.norm_sqr()).sqrt();
    Ok((p.min(1.0), AtomKet { plus: plus / n, minus: minus / n }))
}

/// Ideal push-out readout: keeps the `m=−1` branch. Returns its probability
/// and the renormalized photon ket left behind.
pub fn project_atom_minus(state: &JointAtomPhotonState) -> Result<(f64, PolarizationKet), QuantumError> {
    let k = state.photon_given_atom(false);
    let p = k.norm_sqr();
    if p < NULL_OUTCOME_THRESHOLD {
        return Err(QuantumError::NullOutcome(p));
    }
    Ok((p.min(1.0), k.normalized()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn bell_amplitudes() {
        let a = bell_state().amplitudes();
        let r = FRAC_1_SQRT_2;
        let expect = [r, 0.0, 0.0, r];
        for (x, e) in a.iter().zip(expect) {
            assert_abs_diff_eq!(x.re, e, epsilon = 1e-15);
            assert_abs_diff_eq!(x.im, 0.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(bell_state().norm(), 1.0, epsilon = 1e-12);
    }

    /// Partial trace by building the full 4×4 density matrix and summing the
    /// atom blocks, with photon basis {σ−, σ+}, then converting to Stokes.
    #[test]
    fn bell_reduced_photon_is_maximally_mixed() {
        let a = bell_state().amplitudes();
        let mut full = [[c(0.0, 0.0); 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                full[i][j] = a[i] * a[j].conj();
            }
        }
        // rho_photon[p][q] = sum_m full[2m+p][2m+q]
        let mut red = [[c(0.0, 0.0); 2]; 2];
        for p in 0..2 {
            for q in 0..2 {
                red[p][q] = full[p][q] + full[2 + p][2 + q];
            }
        }
        // circular basis: s3 = rho(σ+σ+) - rho(σ−σ−); coherences carry s1, s2
        assert_abs_diff_eq!(red[1][1].re - red[0][0].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(red[0][1].norm(), 0.0, epsilon = 1e-15);

        let s = bell_state().reduced_photon_stokes();
        assert_abs_diff_eq!(s.magnitude(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sigma_plus_has_positive_s3() {
        assert_abs_diff_eq!(PolarizationKet::sigma_plus().stokes().s3, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(PolarizationKet::sigma_minus().stokes().s3, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(PolarizationKet::horizontal().stokes().s1, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn hwp_at_zero_leaves_h() {
        let out = apply_waveplate(PolarizationKet::horizontal(), WaveplateSetting::half_wave(0.0));
        assert!(out.equals_up_to_phase(&PolarizationKet::horizontal(), 1e-12));
    }

    #[test]
    fn hwp_at_eighth_turn_gives_diagonal() {
        let out = apply_waveplate(PolarizationKet::horizontal(), WaveplateSetting::half_wave(PI / 8.0));
        // explicit product: M = [[a c²+b s², (a−b)cs], ...], a=−i, b=i, θ=π/8
        let (s, co) = (PI / 8.0).sin_cos();
        let expect = PolarizationKet::new(c(0.0, -(co * co - s * s)), c(0.0, -2.0 * co * s));
        assert_abs_diff_eq!((out.amp_h - expect.amp_h).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((out.amp_v - expect.amp_v).norm(), 0.0, epsilon = 1e-12);
        let diag = PolarizationKet::new(c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0));
        assert!(out.equals_up_to_phase(&diag, 1e-12));
    }

    #[test]
    fn qwp_at_quarter_turn_makes_circular() {
        let out = apply_waveplate(PolarizationKet::horizontal(), WaveplateSetting::quarter_wave(PI / 4.0));
        assert_abs_diff_eq!(out.stokes().s3.abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn waveplate_angles_are_normalized() {
        let wp = WaveplateSetting::new(-PI / 2.0, 1.25 * PI);
        assert_abs_diff_eq!(wp.retardance, 1.5 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wp.fast_axis_angle, 0.25 * PI, epsilon = 1e-12);
    }

    #[test]
    fn analyzer_limits() {
        let (a, b) = analyzer_basis(0.0, BasisKind::Circular);
        assert!(a.equals_up_to_phase(&PolarizationKet::sigma_plus(), 1e-15));
        assert!(b.equals_up_to_phase(&PolarizationKet::sigma_minus(), 1e-15));
        let (a, b) = analyzer_basis(PI / 2.0, BasisKind::Circular);
        let sm = PolarizationKet::sigma_minus();
        let msp = PolarizationKet::sigma_plus().scale(c(-1.0, 0.0));
        assert_abs_diff_eq!((a.amp_h - sm.amp_h).norm() + (a.amp_v - sm.amp_v).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((b.amp_h - msp.amp_h).norm() + (b.amp_v - msp.amp_v).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn bell_projection_onto_sigma_plus() {
        let (p, atom) = project_photon(&bell_state(), &PolarizationKet::sigma_plus()).unwrap();
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(atom.minus.norm_sqr(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(atom.plus.norm_sqr(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn orthogonal_projection_is_null() {
        let atom = AtomKet { plus: c(0.0, 0.0), minus: c(1.0, 0.0) };
        let st = JointAtomPhotonState::product(atom, PolarizationKet::sigma_plus()).unwrap();
        assert!(matches!(project_photon(&st, &PolarizationKet::sigma_minus()), Err(QuantumError::NullOutcome(_))));
        let atom = AtomKet { plus: c(1.0, 0.0), minus: c(0.0, 0.0) };
        let st = JointAtomPhotonState::product(atom, PolarizationKet::sigma_minus()).unwrap();
        assert!(matches!(project_atom_minus(&st), Err(QuantumError::NullOutcome(_))));
    }

    #[test]
    fn atom_minus_projection_of_bell() {
        let (p, ph) = project_atom_minus(&bell_state()).unwrap();
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-15);
        assert!(ph.equals_up_to_phase(&PolarizationKet::sigma_plus(), 1e-15));
    }

    #[test]
    fn purity_reproduces_measured_vectors() {
        let cases = [((0.09, 0.00, 0.88), 0.89), ((0.09, -0.01, -0.83), 0.85), ((0.01, -0.09, -0.02), 0.50)];
        for ((a, b, cc), expect) in cases {
            let p = stokes_and_purity(StokesVector::new(a, b, cc)).unwrap();
            assert_abs_diff_eq!((p * 100.0).round() / 100.0, expect, epsilon = 1e-12);
        }
        assert!(matches!(stokes_and_purity(StokesVector::new(1.0, 0.1, 0.0)), Err(QuantumError::InvalidStokes(_))));
    }

    #[test]
    fn tilt_values() {
        assert_abs_diff_eq!(tilt_ellipticity(0.17), 0.985_584_766, epsilon = 1e-8);
        assert_abs_diff_eq!(tilt_ellipticity(0.0), 1.0);
        assert_abs_diff_eq!(tilt_ellipticity(PI / 2.0), 0.0, epsilon = 1e-15);
        // the tilted σ+ image has tan χ = cos θ: s3 = sin 2χ = 2t/(1+t²)
        let t = tilt_ellipticity(0.17);
        let (e_plus, _) = tilted_emission(0.17);
        assert_abs_diff_eq!(e_plus.stokes().s3, 2.0 * t / (1.0 + t * t), epsilon = 1e-12);
        assert_eq!(JointAtomPhotonState::tilted_bell(0.0), bell_state());
    }

    #[test]
    fn precession_keeps_z_populations() {
        let st = JointAtomPhotonState::tilted_bell(0.3).precessed(1.1, 0.37);
        let before = JointAtomPhotonState::tilted_bell(0.3).amplitudes();
        for (a, b) in st.amplitudes().iter().zip(before) {
            assert_abs_diff_eq!(a.norm_sqr(), b.norm_sqr(), epsilon = 1e-15);
        }
    }

    fn arb_ket() -> impl Strategy<Value = PolarizationKet> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("nonzero", |(a, b, c, d)| a * a + b * b + c * c + d * d > 1e-3)
            .prop_map(|(a, b, cc, d)| PolarizationKet::new(c(a, b), c(cc, d)).normalized().unwrap())
    }

    proptest! {
        #[test]
        fn waveplates_are_unitary(ret in 0.0..TAU, ang in -PI..PI, ket in arb_ket()) {
            let wp = WaveplateSetting::new(ret, ang);
            let m = wp.matrix();
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            prop_assert!((det.norm() - 1.0).abs() < 1e-12);
            prop_assert!((apply_waveplate(ket, wp).norm_sqr() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn basis_outcomes_sum_to_one(theta in -PI..PI, linear in any::<bool>(), tilt in 0.0..1.5f64) {
            let kind = if linear { BasisKind::Linear } else { BasisKind::Circular };
            let (a, b) = analyzer_basis(theta, kind);
            prop_assert!(a.inner(&b).norm() < 1e-12);
            let st = JointAtomPhotonState::tilted_bell(tilt);
            let pa = project_photon(&st, &a).map(|x| x.0).unwrap_or(0.0);
            let pb = project_photon(&st, &b).map(|x| x.0).unwrap_or(0.0);
            prop_assert!((0.0..=1.0).contains(&pa) && (0.0..=1.0).contains(&pb));
            prop_assert!((pa + pb - 1.0).abs() < 1e-12);
        }

        /// Sequential projection by explicit amplitude arithmetic:
        /// ⟨b|σ−⟩ = sinθ, ⟨b|σ+⟩ = cosθ, so the atom is (sinθ, cosθ).
        #[test]
        fn bell_fringe_is_cos_squared(theta in -PI..PI) {
            let (b, _) = analyzer_basis(theta, BasisKind::Circular);
            let (p, atom) = project_photon(&bell_state(), &b).unwrap();
            prop_assert!((p - 0.5).abs() < 1e-12);
            prop_assert!((atom.minus_probability() - theta.cos().powi(2)).abs() < 1e-12);
        }

        #[test]
        fn bell_linear_basis_is_flat(theta in -PI..PI) {
            let (b, _) = analyzer_basis(theta, BasisKind::Linear);
            let (_, atom) = project_photon(&bell_state(), &b).unwrap();
            prop_assert!((atom.minus_probability() - 0.5).abs() < 1e-12);
        }

        #[test]
        fn purity_is_bounded(s1 in -0.57..0.57f64, s2 in -0.57..0.57f64, s3 in -0.57..0.57f64) {
            let p = stokes_and_purity(StokesVector::new(s1, s2, s3)).unwrap();
            prop_assert!((0.5..=1.0).contains(&p));
        }
    }
}
