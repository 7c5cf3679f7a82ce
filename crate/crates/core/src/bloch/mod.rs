//! Two-level excitation model with branching decay.
//!
//! The driven transition couples the initialized ground state (1) to the
//! excited state (2). One third of spontaneous decay returns to (1); the other
//! two thirds leave the two-level system as a detectable σ± photon and are
//! accumulated in `rho_out`:
//!
//! ```text
//! ρ̇11   = −(iΩ/2)(ρ12 − ρ21) + (Γ/3)ρ22
//! ρ̇22   =  (iΩ/2)(ρ12 − ρ21) − Γρ22
//! ρ̇12   = (−iδ − γ)ρ12 + (iΩ/2)(ρ22 − ρ11)
//! ρ̇out  = (2Γ/3)ρ22
//! ```
//!
//! Units: ns for time, rad/ns for Ω, δ, γ and Γ. Quoted cyclic frequencies
//! are converted with [`mhz_to_rad_per_ns`].

mod fit;
mod pulse;

pub use fit::{expected_std_errors, fit_profile, initial_guess, FitParams, ProfileFit, ProfileModel, MIN_NONZERO_BINS};
pub use pulse::{measured_fwhm, pulse_envelope, Envelope, PulseKind, PulseSpec, PulseTable};

use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::lm::LmError;

/// Excited-state decay rate for a 26 ns lifetime, in 1/ns.
pub const DEFAULT_DECAY: f64 = 1.0 / 26.0;

/// Fraction of spontaneous decay that leaves as a detectable photon.
pub const BRANCH_OUT: f64 = 2.0 / 3.0;

/// Converts a cyclic frequency in MHz to an angular rate in rad/ns (Ω = 2π·f).
pub fn mhz_to_rad_per_ns(f_mhz: f64) -> f64 {
    TAU * f_mhz * 1e-3
}

#[derive(Debug, Error)]
pub enum BlochError {
    #[error("step size {dt} ns exceeds stability bound {bound} ns")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid pulse: {0}")]
    InvalidPulse(String),
    #[error("emission profile is identically zero")]
    ZeroEmission,
    #[error("requested interval [{start}, {end}] ns lies outside the trajectory")]
    OutsideTrajectory { start: f64, end: f64 },
    #[error("fit needs at least {needed} nonzero bins, got {got}")]
    TooFewBins { needed: usize, got: usize },
    #[error(transparent)]
    Fit(#[from] LmError),
}

/// How the optical coherence decays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoherenceDecay {
    /// `ρ12` decays at the dephasing rate `γ` only, as in the fitted model.
    #[default]
    DephasingOnly,
    /// `ρ12` decays at `γ + Γ/2` (Lindblad form); keeps ρ positive for any `γ ≥ 0`.
    WithRadiative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevelParams {
    pub rabi: Envelope,
    pub detuning: f64,
    pub dephasing: f64,
    pub decay: f64,
    pub coherence: CoherenceDecay,
}

impl TwoLevelParams {
    pub fn new(rabi: Envelope, detuning: f64, dephasing: f64) -> Self {
        Self { rabi, detuning, dephasing, decay: DEFAULT_DECAY, coherence: CoherenceDecay::default() }
    }

    fn coherence_rate(&self) -> f64 {
        match self.coherence {
            CoherenceDecay::DephasingOnly => self.dephasing,
            CoherenceDecay::WithRadiative => self.dephasing + 0.5 * self.decay,
        }
    }

    /// Largest step accepted by [`integrate`].
    pub fn max_step(&self) -> f64 {
        let rate = self.decay.max(self.rabi.peak()).max(self.detuning.abs());
        if rate > 0.0 {
            0.1 / rate
        } else {
            f64::INFINITY
        }
    }

    fn validate(&self) -> Result<(), BlochError> {
        if !(self.decay >= 0.0) || !(self.dephasing >= 0.0) || !self.detuning.is_finite() {
            return Err(BlochError::Config("decay and dephasing must be >= 0".into()));
        }
        Ok(())
    }

    fn derivative(&self, t: f64, y: &[f64; 5]) -> [f64; 5] {
        let [r11, r22, re, im, _] = *y;
        let om = self.rabi.eval(t);
        let g = self.decay;
        let coh = self.coherence_rate();
        // −(iΩ/2)(ρ12 − ρ21) = Ω·Im ρ12
        let pump = om * im;
        let rho12 = C64::new(re, im);
        let d12 = C64::new(-coh, -self.detuning) * rho12 + C64::new(0.0, 0.5 * om) * (r22 - r11);
        [pump + g / 3.0 * r22, -pump - g * r22, d12.re, d12.im, BRANCH_OUT * g * r22]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochState {
    pub rho11: f64,
    pub rho22: f64,
    pub rho12: C64,
    pub rho_out: f64,
}

impl BlochState {
    pub fn ground() -> Self {
        Self { rho11: 1.0, rho22: 0.0, rho12: C64::new(0.0, 0.0), rho_out: 0.0 }
    }

    pub fn excited() -> Self {
        Self { rho11: 0.0, rho22: 1.0, rho12: C64::new(0.0, 0.0), rho_out: 0.0 }
    }

    fn to_array(self) -> [f64; 5] {
        [self.rho11, self.rho22, self.rho12.re, self.rho12.im, self.rho_out]
    }

    fn from_array(a: [f64; 5]) -> Self {
        Self { rho11: a[0], rho22: a[1], rho12: C64::new(a[2], a[3]), rho_out: a[4] }
    }
}

/// Solution on a uniform time grid.
#[derive(Debug, Clone)]
pub struct BlochTrajectory {
    pub t_start: f64,
    pub dt: f64,
    pub states: Vec<BlochState>,
    decay: f64,
}

impl BlochTrajectory {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.dt * (self.states.len() - 1) as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.states.len()).map(move |i| self.t_start + i as f64 * self.dt)
    }

    /// Cumulative emitted population at `t`, by cubic Hermite interpolation
    /// using the known derivative `(2Γ/3)ρ22` at each grid point.
    pub fn rho_out_at(&self, t: f64) -> f64 {
        let n = self.states.len();
        let x = ((t - self.t_start) / self.dt).clamp(0.0, (n - 1) as f64);
        let i = (x.floor() as usize).min(n.saturating_sub(2));
        if n < 2 {
            return self.states[0].rho_out;
        }
        let u = x - i as f64;
        let (a, b) = (&self.states[i], &self.states[i + 1]);
        let (da, db) = (BRANCH_OUT * self.decay * a.rho22 * self.dt, BRANCH_OUT * self.decay * b.rho22 * self.dt);
        let (u2, u3) = (u * u, u * u * u);
        (2.0 * u3 - 3.0 * u2 + 1.0) * a.rho_out
            + (u3 - 2.0 * u2 + u) * da
            + (-2.0 * u3 + 3.0 * u2) * b.rho_out
            + (u3 - u2) * db
    }

    fn contains(&self, start: f64, end: f64) -> bool {
        let eps = 1e-9 * self.dt;
        start >= self.t_start - eps && end <= self.t_end() + eps && start <= end
    }
}

/// Classical fixed-step RK4 over `t_span`. The step actually used is
/// `span / ceil(span / dt)` so the grid ends exactly at `t_span.1`.
pub fn integrate(
    params: &TwoLevelParams,
    init: BlochState,
    t_span: (f64, f64),
    dt: f64,
) -> Result<BlochTrajectory, BlochError> {
    params.validate()?;
    let (t0, t1) = t_span;
    if !(dt > 0.0) || !(t1 > t0) {
        return Err(BlochError::Config(format!("need dt > 0 and t1 > t0, got dt={dt}, span=({t0}, {t1})")));
    }
    let bound = params.max_step();
    if dt > bound {
        return Err(BlochError::StepTooLarge { dt, bound });
    }
    let steps = ((t1 - t0) / dt - 1e-9).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;

    let mut states = Vec::with_capacity(steps + 1);
    states.push(init);
    let mut y = init.to_array();
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let k1 = params.derivative(t, &y);
        let k2 = params.derivative(t + 0.5 * h, &axpy(&y, 0.5 * h, &k1));
        let k3 = params.derivative(t + 0.5 * h, &axpy(&y, 0.5 * h, &k2));
        let k4 = params.derivative(t + h, &axpy(&y, h, &k3));
        for j in 0..5 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        states.push(BlochState::from_array(y));
    }
    Ok(BlochTrajectory { t_start: t0, dt: h, states, decay: params.decay })
}

fn axpy(y: &[f64; 5], a: f64, k: &[f64; 5]) -> [f64; 5] {
    std::array::from_fn(|j| y[j] + a * k[j])
}

/// Binned emission probabilities on a uniform time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionProfile {
    pub start_ns: f64,
    pub bin_ns: f64,
    pub weights: Vec<f64>,
}

impl EmissionProfile {
    pub fn bin_center(&self, k: usize) -> f64 {
        self.start_ns + (k as f64 + 0.5) * self.bin_ns
    }

    pub fn end_ns(&self) -> f64 {
        self.start_ns + self.bin_ns * self.weights.len() as f64
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn normalized(&self) -> Result<Self, BlochError> {
        let total = self.total();
        if !(total > 0.0) {
            return Err(BlochError::ZeroEmission);
        }
        Ok(Self { weights: self.weights.iter().map(|w| w / total).collect(), ..*self })
    }
}

/// Normalized emission histogram over `[traj start, traj start + horizon]`.
pub fn emission_profile(traj: &BlochTrajectory, bin: f64, horizon: f64) -> Result<EmissionProfile, BlochError> {
    emission_profile_between(traj, bin, traj.t_start, traj.t_start + horizon)
}

/// Normalized emission histogram with bins of `bin` ns starting at `start`.
/// Each bin holds `∫(2Γ/3)ρ22 dt` over the bin before normalization.
pub fn emission_profile_between(
    traj: &BlochTrajectory,
    bin: f64,
    start: f64,
    end: f64,
) -> Result<EmissionProfile, BlochError> {
    if !(bin > 0.0) {
        return Err(BlochError::Config("bin width must be > 0".into()));
    }
    if !traj.contains(start, end) {
        return Err(BlochError::OutsideTrajectory { start, end });
    }
    let n = ((end - start) / bin - 1e-9).ceil().max(1.0) as usize;
    let mut prev = traj.rho_out_at(start);
    let weights = (1..=n)
        .map(|k| {
            let next = traj.rho_out_at((start + k as f64 * bin).min(end));
            let w = (next - prev).max(0.0);
            prev = next;
            w
        })
        .collect();
    EmissionProfile { start_ns: start, bin_ns: bin, weights }.normalized()
}

/// Population that left as a detectable photon inside `window`.
pub fn excitation_efficiency(traj: &BlochTrajectory, window: (f64, f64)) -> Result<f64, BlochError> {
    if !traj.contains(window.0, window.1) {
        return Err(BlochError::OutsideTrajectory { start: window.0, end: window.1 });
    }
    Ok(traj.rho_out_at(window.1) - traj.rho_out_at(window.0))
}

/// Drive parameters quoted for the measured excitation: FWHM 23.26 ns,
/// Rabi frequency 21.55 MHz, dephasing 2.87 MHz, detuning −0.38 MHz, with the
/// 2π convention and a 40 ns edge.
pub fn reference_pulse(center_ns: f64) -> (PulseSpec, f64, f64) {
    let spec = PulseSpec {
        kind: PulseKind::SmoothedSquare,
        fwhm_ns: 23.26,
        rise_time_ns: 40.0,
        peak_rabi: mhz_to_rad_per_ns(21.55),
        center_ns,
        table: None,
    };
    (spec, mhz_to_rad_per_ns(-0.38), mhz_to_rad_per_ns(2.87))
}

/// Detection window of `length` ns opened at the pulse's leading half maximum.
pub fn detection_window(spec: &PulseSpec, length: f64) -> (f64, f64) {
    let open = spec.center_ns - 0.5 * spec.fwhm_ns;
    (open, open + length)
}
