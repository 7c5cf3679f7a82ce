use rand::Rng;

use crate::bloch::{
    detection_window, emission_profile_between, integrate, pulse_envelope, reference_pulse, BlochError, BlochState,
    EmissionProfile, TwoLevelParams,
};

/// Emission profile of the reference drive, binned at 1 ns over the 100 ns
/// detection window. Time zero is the window opening.
pub fn default_emission_profile() -> Result<EmissionProfile, BlochError> {
    let (spec, detuning, dephasing) = reference_pulse(0.0);
    let (open, close) = detection_window(&spec, 100.0);
    let params = TwoLevelParams::new(pulse_envelope(&spec)?, detuning, dephasing);
    let traj = integrate(&params, BlochState::ground(), (open - 80.0, close), 0.05)?;
    let p = emission_profile_between(&traj, 1.0, open, close)?;
    Ok(EmissionProfile { start_ns: 0.0, ..p })
}

/// Inverse-CDF sampler over a binned emission profile, uniform within bins.
#[derive(Debug, Clone)]
pub struct EmissionSampler {
    start_ns: f64,
    bin_ns: f64,
    cdf: Vec<f64>,
}

impl EmissionSampler {
    pub fn new(profile: &EmissionProfile) -> Result<Self, BlochError> {
        let p = profile.normalized()?;
        let mut acc = 0.0;
        let cdf = p
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self { start_ns: p.start_ns, bin_ns: p.bin_ns, cdf })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>() * self.cdf.last().copied().unwrap_or(1.0);
        let k = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        self.start_ns + (k as f64 + rng.random::<f64>()) * self.bin_ns
    }
}

/// One photon arrival time drawn from `profile`.
pub fn emission_time_sample<R: Rng + ?Sized>(profile: &EmissionProfile, rng: &mut R) -> Result<f64, BlochError> {
    Ok(EmissionSampler::new(profile)?.sample(rng))
}
