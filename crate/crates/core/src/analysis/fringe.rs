use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Survival follows `cos²θ` in the analyzer angle, i.e. period π, so the
/// sinusoid is fitted in `kθ` with `k = 2`.
pub const DEFAULT_ANGLE_FACTOR: f64 = 2.0;

/// Fit of `A·sin(kθ + B) + C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub se_a: f64,
    pub se_b: f64,
    pub se_c: f64,
    pub angle_factor: f64,
    /// `|A|/C`.
    pub visibility: f64,
    pub se_visibility: f64,
    /// `2|A|`, the alternative reading.
    pub visibility_alt: f64,
    pub residual_rms: f64,
    pub chi2: f64,
    pub dof: usize,
}

impl FringeFit {
    pub fn eval(&self, theta: f64) -> f64 {
        self.a * (self.angle_factor * theta + self.b).sin() + self.c
    }
}

/// Weighted linear least squares in `(A cos B, A sin B, C)`. Weights are
/// binomial, `n/(p̃(1−p̃))` with `p̃ = (s+½)/(n+1)` so that 0 % and 100 %
/// points keep finite weight.
pub fn fit_fringe(angles: &[f64], survivals: &[(u64, u64)], angle_factor: f64) -> Result<FringeFit, AnalysisError> {
    let bad = |m: String| Err(AnalysisError::Fringe(m));
    if angles.len() != survivals.len() {
        return bad(format!("{} angles but {} survival counts", angles.len(), survivals.len()));
    }
    if !(angle_factor > 0.0) {
        return bad("angle factor must be > 0".into());
    }
    if survivals.iter().any(|&(s, n)| n == 0 || s > n) {
        return bad("every angle needs trials > 0 and successes <= trials".into());
    }
    let mut sorted: Vec<f64> = angles.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if sorted.len() < 4 {
        return bad(format!("need at least 4 distinct angles, got {}", sorted.len()));
    }
    let half_period = PI / angle_factor;
    if sorted[sorted.len() - 1] - sorted[0] < half_period - 1e-9 {
        return bad(format!("angles span less than half a period ({half_period:.4} rad)"));
    }

    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    let rows: Vec<(Vector3<f64>, f64, f64)> = angles
        .iter()
        .zip(survivals)
        .map(|(&th, &(s, n))| {
            let (sn, cs) = (angle_factor * th).sin_cos();
            let y = s as f64 / n as f64;
            let pt = (s as f64 + 0.5) / (n as f64 + 1.0);
            (Vector3::new(sn, cs, 1.0), y, n as f64 / (pt * (1.0 - pt)))
        })
        .collect();
    for (x, y, w) in &rows {
        ata += *w * x * x.transpose();
        atb += *w * *y * x;
    }
    let Some(cov) = ata.try_inverse() else {
        return bad("normal equations are singular".into());
    };
    let p = cov * atb;
    let (a1, a2, c) = (p[0], p[1], p[2]);
    let a = a1.hypot(a2);
    let b = a2.atan2(a1);
    let var = |g: Vector3<f64>| (g.transpose() * cov * g)[0].max(0.0).sqrt();
    let (se_a, se_b) = if a > 0.0 {
        (var(Vector3::new(a1 / a, a2 / a, 0.0)), var(Vector3::new(-a2 / (a * a), a1 / (a * a), 0.0)))
    } else {
        (var(Vector3::new(1.0, 0.0, 0.0)), PI)
    };
    let se_c = cov[(2, 2)].max(0.0).sqrt();
    if !(c > 0.0) {
        return bad(format!("fitted offset C = {c} is not positive"));
    }
    let visibility = a / c;
    let se_visibility = if a > 0.0 { var(Vector3::new(a1 / (a * c), a2 / (a * c), -a / (c * c))) } else { se_a / c };
    let mut chi2 = 0.0;
    let mut ss = 0.0;
    for (x, y, w) in &rows {
        let r = y - x.dot(&p);
        chi2 += w * r * r;
        ss += r * r;
    }
    Ok(FringeFit {
        a,
        b,
        c,
        se_a,
        se_b,
        se_c,
        angle_factor,
        visibility,
        se_visibility,
        visibility_alt: 2.0 * a,
        residual_rms: (ss / rows.len() as f64).sqrt(),
        chi2,
        dof: rows.len().saturating_sub(3),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Binomial, Distribution};

    use crate::rng::SeedTree;

    fn angles(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 * PI / n as f64).collect()
    }

    fn exact(th: &[f64], f: impl Fn(f64) -> f64) -> Vec<(u64, u64)> {
        // 10⁹ trials with rounded successes: effectively noiseless
        th.iter().map(|&t| ((f(t) * 1e9).round() as u64, 1_000_000_000)).collect()
    }

    #[test]
    fn cos_squared_fringe() {
        let th = angles(12);
        let fit = fit_fringe(&th, &exact(&th, |t| t.cos().powi(2)), DEFAULT_ANGLE_FACTOR).unwrap();
        assert!((fit.a - 0.5).abs() < 1e-8);
        assert!((fit.c - 0.5).abs() < 1e-8);
        assert!((fit.visibility - 1.0).abs() < 1e-7);
        assert!((fit.b - PI / 2.0).abs() < 1e-7);
    }

    #[test]
    fn reference_amplitudes() {
        // A = 0.41, C = 0.51 → |A|/C = 0.804, 2|A| = 0.82
        let th = angles(16);
        let fit = fit_fringe(&th, &exact(&th, |t| 0.41 * (2.0 * t + 0.3).sin() + 0.51), 2.0).unwrap();
        assert!((fit.visibility - 0.41 / 0.51).abs() < 1e-7);
        assert!((fit.visibility_alt - 0.82).abs() < 1e-7);
    }

    #[test]
    fn phase_covariance() {
        let th = angles(10);
        let f = |t: f64| 0.3 * (2.0 * t + 0.7).sin() + 0.5;
        let base = fit_fringe(&th, &exact(&th, f), 2.0).unwrap();
        let phi = 0.37;
        let shifted: Vec<f64> = th.iter().map(|t| t + phi).collect();
        let moved = fit_fringe(&shifted, &exact(&th, f), 2.0).unwrap();
        let d = (moved.b - (base.b - 2.0 * phi)).rem_euclid(2.0 * PI);
        assert!(d < 1e-9 || 2.0 * PI - d < 1e-9, "{d}");
        assert!((moved.a - base.a).abs() < 1e-9);
        assert!((moved.c - base.c).abs() < 1e-9);
        assert!((moved.visibility - base.visibility).abs() < 1e-9);
    }

    #[test]
    fn noisy_round_trip_within_two_sigma() {
        let (a, b, c) = (0.35, -0.8, 0.5);
        let th = angles(16);
        let seeds = SeedTree::new(77);
        let runs = 200;
        let mut inside = [0usize; 3];
        for k in 0..runs {
            let mut rng = seeds.stream("fringe", k);
            let data: Vec<(u64, u64)> = th
                .iter()
                .map(|&t| {
                    let p: f64 = a * (2.0 * t + b).sin() + c;
                    (Binomial::new(100, p).unwrap().sample(&mut rng), 100)
                })
                .collect();
            let fit = fit_fringe(&th, &data, 2.0).unwrap();
            inside[0] += ((fit.a - a).abs() < 2.0 * fit.se_a) as usize;
            inside[1] += ((fit.b - b).abs() < 2.0 * fit.se_b) as usize;
            inside[2] += ((fit.c - c).abs() < 2.0 * fit.se_c) as usize;
        }
        // 2σ coverage is 95.4 %; allow for binomial scatter over 200 runs
        for n in inside {
            assert!(n as f64 / runs as f64 > 0.9, "{inside:?}");
        }
    }

    #[test]
    fn rejects_bad_designs() {
        let few = [0.0, 0.1, 0.2];
        assert!(fit_fringe(&few, &[(1, 2); 3], 2.0).is_err());
        let narrow = [0.0, 0.1, 0.2, 0.3];
        assert!(fit_fringe(&narrow, &[(1, 2); 4], 2.0).is_err());
        assert!(fit_fringe(&angles(8), &[(1, 0); 8], 2.0).is_err());
        assert!(fit_fringe(&angles(8), &[(1, 2); 7], 2.0).is_err());
    }
}
