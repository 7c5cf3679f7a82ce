//! Fitting the two-level model to an observed emission histogram.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::pulse::{pulse_envelope, PulseKind, PulseSpec, PulseTable};
use super::{
    emission_profile_between, integrate, BlochError, BlochState, CoherenceDecay, EmissionProfile, TwoLevelParams,
    DEFAULT_DECAY,
};
use crate::lm::{minimize, LmConfig, Problem, TracePoint};

/// Minimum number of nonzero bins accepted by [`fit_profile`].
pub const MIN_NONZERO_BINS: usize = 50;

/// Free parameters of the profile model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub fwhm_ns: f64,
    pub peak_rabi: f64,
    pub detuning: f64,
    pub dephasing: f64,
    pub center_ns: f64,
}

impl FitParams {
    fn to_vec(self) -> Vec<f64> {
        vec![self.fwhm_ns, self.peak_rabi, self.detuning, self.dephasing, self.center_ns]
    }

    fn from_slice(x: &[f64]) -> Self {
        Self { fwhm_ns: x[0], peak_rabi: x[1], detuning: x[2], dephasing: x[3], center_ns: x[4] }
    }
}

/// Fixed parts of the model: pulse family, decay rate and integration setup.
#[derive(Debug, Clone)]
pub struct ProfileModel {
    pub kind: PulseKind,
    pub rise_time_ns: f64,
    pub table: Option<Arc<PulseTable>>,
    pub decay: f64,
    pub coherence: CoherenceDecay,
    /// Integration starts this long before the first histogram bin.
    pub lead_ns: f64,
    /// Upper bound on the RK4 step; the step is also kept commensurate with the bins.
    pub max_dt_ns: f64,
    /// Which of fwhm, peak Ω, δ, γ, t0 vary; fixed ones keep their initial value.
    pub free: [bool; 5],
}

impl ProfileModel {
    pub fn smoothed_square(rise_time_ns: f64) -> Self {
        Self {
            kind: PulseKind::SmoothedSquare,
            rise_time_ns,
            table: None,
            decay: DEFAULT_DECAY,
            coherence: CoherenceDecay::default(),
            lead_ns: 60.0,
            max_dt_ns: 0.25,
            free: [true; 5],
        }
    }

    pub fn spec(&self, p: &FitParams) -> PulseSpec {
        PulseSpec {
            kind: self.kind,
            fwhm_ns: p.fwhm_ns,
            rise_time_ns: self.rise_time_ns,
            peak_rabi: p.peak_rabi,
            center_ns: p.center_ns,
            table: self.table.clone(),
        }
    }

    /// Normalized model histogram on the bins of `start, bin, n`.
    pub fn profile(&self, p: &FitParams, start: f64, bin: f64, n: usize) -> Result<EmissionProfile, BlochError> {
        let env = pulse_envelope(&self.spec(p))?;
        let params = TwoLevelParams {
            rabi: env,
            detuning: p.detuning,
            dephasing: p.dephasing,
            decay: self.decay,
            coherence: self.coherence,
        };
        let guard = self.max_dt_ns.min(params.max_step());
        let dt = bin / (bin / guard).ceil();
        let end = start + bin * n as f64;
        let traj = integrate(&params, BlochState::ground(), (start - self.lead_ns, end), dt)?;
        emission_profile_between(&traj, bin, start, end)
    }
}

#[derive(Debug, Clone)]
pub struct ProfileFit {
    pub params: FitParams,
    pub std_errors: FitParams,
    /// Order: fwhm, peak Ω, δ, γ, t0.
    pub covariance: DMatrix<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
}

/// Deterministic starting point: `t0` at the count centroid minus one
/// lifetime, a 20 ns pulse, and Ω giving pulse area ≈ π.
pub fn initial_guess(observed: &EmissionProfile, model: &ProfileModel) -> FitParams {
    let total: f64 = observed.weights.iter().sum();
    let centroid = observed.weights.iter().enumerate().map(|(k, w)| w * observed.bin_center(k)).sum::<f64>()
        / total.max(f64::MIN_POSITIVE);
    let fwhm = 20.0;
    FitParams {
        fwhm_ns: fwhm,
        peak_rabi: PI / fwhm,
        detuning: 0.005,
        dephasing: 0.02,
        center_ns: centroid - 1.0 / model.decay,
    }
}

/// Least-squares fit of the normalized model profile to `observed` (raw
/// counts per bin). The profile depends on δ only through δ², so the sign of
/// the fitted detuning follows the initial guess (positive if zero).
pub fn fit_profile(
    observed: &EmissionProfile,
    model: &ProfileModel,
    init: Option<FitParams>,
) -> Result<ProfileFit, BlochError> {
    let nonzero = observed.weights.iter().filter(|&&w| w > 0.0).count();
    if nonzero < MIN_NONZERO_BINS {
        return Err(BlochError::TooFewBins { needed: MIN_NONZERO_BINS, got: nonzero });
    }
    let data = observed.normalized()?;
    let init = init.unwrap_or_else(|| initial_guess(observed, model));
    let (start, bin, n) = (data.start_ns, data.bin_ns, data.weights.len());

    // Internal coordinates ln fwhm, ln Ω, ln|δ|, ln γ, t0. The model sees δ
    // only through δ², so a linear δ coordinate would stall at δ = 0.
    let sign = if init.detuning < 0.0 { -1.0 } else { 1.0 };
    let u_init = [
        init.fwhm_ns.ln(),
        init.peak_rabi.ln(),
        init.detuning.abs().max(1e-12).ln(),
        init.dephasing.max(1e-12).ln(),
        init.center_ns,
    ];
    let free: Vec<usize> = (0..5).filter(|&j| model.free[j]).collect();
    let to_params = |v: &[f64]| {
        let mut u = u_init;
        for (k, &j) in free.iter().enumerate() {
            u[j] = v[k];
        }
        FitParams {
            fwhm_ns: u[0].exp(),
            peak_rabi: u[1].exp(),
            detuning: sign * u[2].exp(),
            dephasing: u[3].exp(),
            center_ns: u[4],
        }
    };
    let residuals = |v: &[f64]| -> Result<Vec<f64>, String> {
        let prof = model.profile(&to_params(v), start, bin, n).map_err(|e| e.to_string())?;
        Ok(prof.weights.iter().zip(&data.weights).map(|(m, d)| m - d).collect())
    };
    let pick = |a: [f64; 5]| free.iter().map(|&j| a[j]).collect::<Vec<f64>>();
    let problem = Problem {
        residuals,
        scale: pick([1.0; 5]),
        lower: pick([(0.5 * bin).ln(), -20.0, -30.0, -30.0, f64::NEG_INFINITY]),
        upper: pick([f64::INFINITY, 3.0, 3.0, 3.0, f64::INFINITY]),
    };
    let fit = minimize(&problem, &pick(u_init), &LmConfig::default())?;
    let params = to_params(&fit.params);
    // back to physical coordinates with ∂p/∂u; fixed parameters get zero variance
    let du = [params.fwhm_ns, params.peak_rabi, params.detuning, params.dephasing, 1.0];
    let mut covariance = DMatrix::zeros(5, 5);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            covariance[(i, j)] = fit.covariance[(a, b)] * du[i] * du[j];
        }
    }
    let se: Vec<f64> = (0..5).map(|j| covariance[(j, j)].max(0.0).sqrt()).collect();
    let trace = fit.trace.into_iter().map(|tp| TracePoint { params: to_params(&tp.params).to_vec(), ..tp }).collect();
    Ok(ProfileFit {
        params,
        std_errors: FitParams::from_slice(&se),
        covariance,
        cost: fit.cost,
        iterations: fit.iterations,
        trace,
    })
}

/// Cramér–Rao standard deviations of the free parameters for a histogram of
/// `counts` Poisson-distributed photons drawn from the model at `p`.
/// Fixed parameters report zero; an unidentifiable set reports infinity.
pub fn expected_std_errors(
    model: &ProfileModel,
    p: &FitParams,
    start: f64,
    bin: f64,
    n: usize,
    counts: f64,
) -> Result<FitParams, BlochError> {
    let base = model.profile(p, start, bin, n)?;
    let x0 = p.to_vec();
    let free: Vec<usize> = (0..5).filter(|&j| model.free[j]).collect();
    let mut grads = Vec::with_capacity(free.len());
    for &j in &free {
        let h = 1e-5 * x0[j].abs().max(1e-3);
        let (mut xp, mut xm) = (x0.clone(), x0.clone());
        xp[j] += h;
        xm[j] -= h;
        let pp = model.profile(&FitParams::from_slice(&xp), start, bin, n)?;
        let pm = model.profile(&FitParams::from_slice(&xm), start, bin, n)?;
        grads.push(pp.weights.iter().zip(&pm.weights).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>());
    }
    let k = free.len();
    let info = DMatrix::from_fn(k, k, |a, b| {
        counts
            * base
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 1e-300)
                .map(|(i, w)| grads[a][i] * grads[b][i] / w)
                .sum::<f64>()
    });
    let mut se = [0.0; 5];
    match info.try_inverse() {
        Some(cov) => {
            for (a, &j) in free.iter().enumerate() {
                se[j] = cov[(a, a)].max(0.0).sqrt();
            }
        }
        None => {
            for &j in &free {
                se[j] = f64::INFINITY;
            }
        }
    }
    Ok(FitParams::from_slice(&se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::mhz_to_rad_per_ns;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Poisson};

    fn truth() -> FitParams {
        FitParams {
            fwhm_ns: 23.26,
            peak_rabi: mhz_to_rad_per_ns(21.55),
            detuning: mhz_to_rad_per_ns(-0.38),
            dephasing: mhz_to_rad_per_ns(2.87),
            center_ns: 40.0,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn assert_close(p: &FitParams, t: &FitParams, tol: f64) {
        assert!(rel(p.fwhm_ns, t.fwhm_ns) < tol, "{p:?}");
        assert!(rel(p.peak_rabi, t.peak_rabi) < tol, "{p:?}");
        assert!(rel(p.detuning, t.detuning) < tol, "{p:?}");
        assert!(rel(p.dephasing, t.dephasing) < tol, "{p:?}");
        assert!(rel(p.center_ns, t.center_ns) < tol, "{p:?}");
    }

    #[test]
    fn noiseless_truth_is_fixed_point() {
        let model = ProfileModel::smoothed_square(40.0);
        let t = truth();
        let synth = model.profile(&t, 0.0, 1.0, 150).unwrap();
        let fit = fit_profile(&synth, &model, Some(t)).unwrap();
        assert_close(&fit.params, &t, 1e-4);
    }

    #[test]
    fn noiseless_recovery_from_offset_start() {
        // δ enters only as δ² ≈ 6e-6 here and is held at its true value
        let mut model = ProfileModel::smoothed_square(40.0);
        model.free = [true, true, false, true, true];
        let t = truth();
        let synth = model.profile(&t, 0.0, 1.0, 150).unwrap();
        let init = FitParams {
            fwhm_ns: t.fwhm_ns * 1.03,
            peak_rabi: t.peak_rabi * 0.97,
            dephasing: t.dephasing * 0.9,
            center_ns: t.center_ns + 0.5,
            ..t
        };
        let fit = fit_profile(&synth, &model, Some(init)).unwrap();
        assert_close(&fit.params, &t, 1e-4);
        assert_eq!(fit.std_errors.detuning, 0.0);
        assert!(fit.trace.len() > 1);
    }

    #[test]
    fn high_count_round_trip() {
        let mut model = ProfileModel::smoothed_square(40.0);
        model.free = [true, true, false, false, true];
        let t = truth();
        let synth = model.profile(&t, 0.0, 1.0, 150).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let weights = synth
                .weights
                .iter()
                .map(|w| if *w > 0.0 { Poisson::new(w * 1e6).unwrap().sample(&mut rng) } else { 0.0 })
                .collect();
            let counts = EmissionProfile { weights, ..synth.clone() };
            let fit = fit_profile(&counts, &model, None).unwrap();
            assert!(rel(fit.params.fwhm_ns, t.fwhm_ns) < 0.05, "{:?}", fit.params);
            assert!(rel(fit.params.peak_rabi, t.peak_rabi) < 0.10, "{:?}", fit.params);
            // reported errors are of the right size
            let se = fit.std_errors.fwhm_ns;
            assert!(se > 0.05 && se < 2.0, "se {se}");
        }
    }

    #[test]
    fn cramer_rao_scales_with_counts() {
        let mut model = ProfileModel::smoothed_square(40.0);
        model.free = [true, true, false, false, true];
        let t = truth();
        let a = expected_std_errors(&model, &t, 0.0, 1.0, 150, 1e4).unwrap();
        let b = expected_std_errors(&model, &t, 0.0, 1.0, 150, 1e6).unwrap();
        assert!((a.fwhm_ns / b.fwhm_ns - 10.0).abs() < 1e-6);
        assert_eq!(a.detuning, 0.0);
    }

    #[test]
    fn too_few_bins() {
        let prof = EmissionProfile { start_ns: 0.0, bin_ns: 1.0, weights: vec![1.0; 20] };
        let model = ProfileModel::smoothed_square(40.0);
        assert!(matches!(fit_profile(&prof, &model, None), Err(BlochError::TooFewBins { .. })));
    }
}
