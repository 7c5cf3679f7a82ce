//! Tweezer-array geometry, hologram synthesis and scan grids.
//!
//! The hologram model is a single Fourier plane: an N×N phase-only mask with
//! unit amplitude is propagated to the focal plane by a unitary 2D DFT.
//! Focal-plane index `(u, v)` (with `u, v` taken in `[-N/2, N/2)`) sits at
//! `(u·pitch, v·pitch)` µm, where `pitch` is stored with the mask.

use std::f64::consts::TAU;
use std::io::{self, BufRead, Read, Write};

use num_complex::Complex64 as C64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeedTree;

#[derive(Debug, Error)]
pub enum HoloError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("target {index} at ({x}, {y}) µm lies outside the focal field")]
    TargetOutside { index: usize, x: f64, y: f64 },
    #[error("targets {0} and {1} fall on the same focal pixel")]
    TargetCollision(usize, usize),
    #[error("malformed mask file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Sites at `r_ref + i·Δr`, i = 0..n_sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteLayout {
    pub r_ref: [f64; 3],
    pub delta_r: [f64; 3],
    pub n_sites: usize,
}

impl SiteLayout {
    pub fn new(r_ref: [f64; 3], delta_r: [f64; 3], n_sites: usize) -> Result<Self, HoloError> {
        let layout = Self { r_ref, delta_r, n_sites };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<(), HoloError> {
        if self.n_sites == 0 {
            return Err(HoloError::Config("layout needs at least one site".into()));
        }
        let norm = self.delta_r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if self.n_sites > 1 && !(norm > 0.0) {
            return Err(HoloError::Config("site spacing must be nonzero".into()));
        }
        Ok(())
    }

    pub fn shifted(&self, by: [f64; 3]) -> Self {
        Self { r_ref: std::array::from_fn(|k| self.r_ref[k] + by[k]), ..*self }
    }
}

pub fn target_positions(layout: &SiteLayout) -> Vec<[f64; 3]> {
    (0..layout.n_sites).map(|i| std::array::from_fn(|k| layout.r_ref[k] + i as f64 * layout.delta_r[k])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanPlane {
    Xy,
    Z,
}

/// Rigid displacements of `base` on a centered uniform grid of full width
/// `extent`. The xy grid is ordered row-major with y as the slow index.
pub fn scan_grid(base: &SiteLayout, extent: f64, steps: usize, plane: ScanPlane) -> Vec<SiteLayout> {
    let steps = steps.max(1);
    let offset = |i: usize| if steps == 1 { 0.0 } else { -0.5 * extent + extent * i as f64 / (steps - 1) as f64 };
    match plane {
        ScanPlane::Xy => {
            (0..steps * steps).map(|k| base.shifted([offset(k % steps), offset(k / steps), 0.0])).collect()
        }
        ScanPlane::Z => (0..steps).map(|k| base.shifted([0.0, 0.0, offset(k)])).collect(),
    }
}

/// Index and value of the largest total; ties go to the lowest index.
pub fn argmax_scan(totals: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in totals.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMask {
    pub n: usize,
    /// Focal-plane µm per Fourier pixel.
    pub pitch_um: f64,
    /// Row-major phases in `[0, 2π)`; row index is v (y), column is u (x).
    pub phases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpotMetrics {
    pub intensities: Vec<f64>,
    pub uniformity: f64,
    pub efficiency: f64,
    /// Uniformity of the mask entering each iteration, then of the final mask.
    pub uniformity_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WgsConfig {
    pub grid: usize,
    pub iterations: usize,
    pub pitch_um: f64,
}

impl Default for WgsConfig {
    fn default() -> Self {
        Self { grid: 512, iterations: 50, pitch_um: 0.75 }
    }
}

/// `1 − (I_max − I_min)/(I_max + I_min)`; 1 for fewer than two spots.
pub fn uniformity(intensities: &[f64]) -> f64 {
    let max = intensities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = intensities.iter().cloned().fold(f64::INFINITY, f64::min);
    if intensities.len() < 2 || max + min <= 0.0 {
        return 1.0;
    }
    1.0 - (max - min) / (max + min)
}

/// Focal pixel `(row, col)` for each target in µm.
pub fn target_pixels(targets: &[[f64; 2]], n: usize, pitch_um: f64) -> Result<Vec<(usize, usize)>, HoloError> {
    let half = (n / 2) as i64;
    let mut px = Vec::with_capacity(targets.len());
    for (index, &[x, y]) in targets.iter().enumerate() {
        let (u, v) = ((x / pitch_um).round(), (y / pitch_um).round());
        if !u.is_finite()
            || !v.is_finite()
            || u < -(half as f64)
            || u >= half as f64
            || v < -(half as f64)
            || v >= half as f64
        {
            return Err(HoloError::TargetOutside { index, x, y });
        }
        let wrap = |k: f64| (k as i64).rem_euclid(n as i64) as usize;
        let p = (wrap(v), wrap(u));
        if let Some(j) = px.iter().position(|&q| q == p) {
            return Err(HoloError::TargetCollision(j, index));
        }
        px.push(p);
    }
    Ok(px)
}

/// Unitary 2D DFT on a square row-major grid.
struct Fft2 {
    n: usize,
    fwd: std::sync::Arc<dyn Fft<f64>>,
    inv: std::sync::Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    fn run(&self, data: &mut [C64], forward: bool) {
        let n = self.n;
        let plan = if forward { &self.fwd } else { &self.inv };
        plan.process(data);
        transpose(data, n);
        plan.process(data);
        transpose(data, n);
        let s = 1.0 / n as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }
}

fn transpose(data: &mut [C64], n: usize) {
    for r in 0..n {
        for c in r + 1..n {
            data.swap(r * n + c, c * n + r);
        }
    }
}

/// Focal field of a unit-amplitude phase mask.
pub fn focal_field(mask: &PhaseMask) -> Vec<C64> {
    let mut field: Vec<C64> = mask.phases.iter().map(|&p| C64::from_polar(1.0, p)).collect();
    Fft2::new(mask.n).run(&mut field, true);
    field
}

fn spot_metrics(field: &[C64], px: &[(usize, usize)], n: usize, history: Vec<f64>) -> SpotMetrics {
    let intensities: Vec<f64> = px.iter().map(|&(r, c)| field[r * n + c].norm_sqr()).collect();
    let total: f64 = field.iter().map(|z| z.norm_sqr()).sum();
    let efficiency = (intensities.iter().sum::<f64>() / total).clamp(0.0, 1.0);
    SpotMetrics { uniformity: uniformity(&intensities), intensities, efficiency, uniformity_history: history }
}

/// Evaluates a mask against targets by forward propagation.
pub fn evaluate_mask(mask: &PhaseMask, targets: &[[f64; 2]]) -> Result<SpotMetrics, HoloError> {
    let px = target_pixels(targets, mask.n, mask.pitch_um)?;
    Ok(spot_metrics(&focal_field(mask), &px, mask.n, Vec::new()))
}

/// Weighted Gerchberg–Saxton synthesis of a phase-only mask producing equal
/// spots at `targets` (focal-plane µm). Weights follow the amplitude ratio
/// `w ← w·mean|A|/|A_k|`; the focal constraint keeps only the target pixels.
pub fn wgs_synthesize(
    targets: &[[f64; 2]],
    cfg: &WgsConfig,
    seeds: &SeedTree,
) -> Result<(PhaseMask, SpotMetrics), HoloError> {
    let n = cfg.grid;
    if n < 2 || !n.is_power_of_two() {
        return Err(HoloError::Config(format!("grid size {n} is not a power of two")));
    }
    if !(cfg.pitch_um > 0.0) {
        return Err(HoloError::Config("focal pitch must be > 0".into()));
    }
    if targets.is_empty() {
        return Err(HoloError::Config("no targets".into()));
    }
    let px = target_pixels(targets, n, cfg.pitch_um)?;
    let fft = Fft2::new(n);
    let mut rng = seeds.stream("wgs/init", 0);
    let mut phases: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>() * TAU).collect();
    let mut weights = vec![1.0; px.len()];
    let mut history = Vec::with_capacity(cfg.iterations + 1);
    let mut field = vec![C64::new(0.0, 0.0); n * n];

    for _ in 0..cfg.iterations {
        field.iter_mut().zip(&phases).for_each(|(z, &p)| *z = C64::from_polar(1.0, p));
        fft.run(&mut field, true);
        let amps: Vec<f64> = px.iter().map(|&(r, c)| field[r * n + c].norm()).collect();
        history.push(uniformity(&amps.iter().map(|a| a * a).collect::<Vec<_>>()));
        let mean = amps.iter().sum::<f64>() / amps.len() as f64;
        let spots: Vec<C64> = px
            .iter()
            .zip(&amps)
            .zip(weights.iter_mut())
            .map(|((&(r, c), &a), w)| {
                if a > 0.0 {
                    *w *= mean / a;
                }
                C64::from_polar(*w, field[r * n + c].arg())
            })
            .collect();
        field.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for (&(r, c), s) in px.iter().zip(spots) {
            field[r * n + c] = s;
        }
        fft.run(&mut field, false);
        phases.iter_mut().zip(&field).for_each(|(p, z)| *p = z.arg());
    }
    phases.iter_mut().for_each(|p| *p = wrap_phase(*p));
    let mask = PhaseMask { n, pitch_um: cfg.pitch_um, phases };
    let final_field = focal_field(&mask);
    let mut metrics = spot_metrics(&final_field, &px, n, history);
    metrics.uniformity_history.push(metrics.uniformity);
    Ok((mask, metrics))
}

fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

const MAGIC: &[u8; 4] = b"ALPM";

impl PhaseMask {
    /// Text form: one `# N pitch` header line, then N rows of N phases.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<(), HoloError> {
        writeln!(w, "# {} {}", self.n, self.pitch_um)?;
        for row in self.phases.chunks(self.n) {
            let line: Vec<String> = row.iter().map(|p| format!("{p:.17e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self, HoloError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| HoloError::Format("empty file".into()))??;
        let mut it = header.trim_start_matches('#').split_whitespace();
        let n: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| HoloError::Format("bad header".into()))?;
        let pitch_um: f64 =
            it.next().and_then(|s| s.parse().ok()).ok_or_else(|| HoloError::Format("bad header".into()))?;
        let mut phases = Vec::with_capacity(n * n);
        for line in lines {
            for tok in line?.split_whitespace() {
                phases.push(tok.parse::<f64>().map_err(|e| HoloError::Format(e.to_string()))?);
            }
        }
        Self::checked(n, pitch_um, phases)
    }

    /// Binary form: magic `ALPM`, N as u32 LE, pitch as f64 LE, then N² f64 LE phases.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), HoloError> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&self.pitch_um.to_le_bytes())?;
        for p in &self.phases {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, HoloError> {
        let mut head = [0u8; 16];
        r.read_exact(&mut head)?;
        if &head[..4] != MAGIC {
            return Err(HoloError::Format("bad magic".into()));
        }
        let n = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes")) as usize;
        let pitch_um = f64::from_le_bytes(head[8..16].try_into().expect("8 bytes"));
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        let phases = buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        if buf.len() % 8 != 0 {
            return Err(HoloError::Format("trailing bytes".into()));
        }
        Self::checked(n, pitch_um, phases)
    }

    fn checked(n: usize, pitch_um: f64, phases: Vec<f64>) -> Result<Self, HoloError> {
        if phases.len() != n * n {
            return Err(HoloError::Format(format!("expected {} phases, found {}", n * n, phases.len())));
        }
        if phases.iter().any(|p| !(0.0..TAU).contains(p)) {
            return Err(HoloError::Format("phase outside [0, 2π)".into()));
        }
        Ok(Self { n, pitch_um, phases })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn positions_follow_layout() {
        let l = SiteLayout::new([0.0; 3], [7.5, 0.0, 0.0], 10).unwrap();
        let p = target_positions(&l);
        assert_eq!(p.len(), 10);
        assert_eq!(p[9][0], 67.5);
        for w in p.windows(2) {
            assert_eq!(w[1][0] - w[0][0], 7.5);
        }
        let one = SiteLayout::new([1.0, 2.0, 3.0], [0.0; 3], 1).unwrap();
        assert_eq!(target_positions(&one), vec![[1.0, 2.0, 3.0]]);
        assert!(SiteLayout::new([0.0; 3], [0.0; 3], 2).is_err());
        assert!(SiteLayout::new([0.0; 3], [1.0, 0.0, 0.0], 0).is_err());
    }

    #[test]
    fn scan_grids() {
        let base = SiteLayout::new([0.0; 3], [7.5, 0.0, 0.0], 10).unwrap();
        let g = scan_grid(&base, 4.0, 9, ScanPlane::Xy);
        assert_eq!(g.len(), 81);
        assert_eq!(g[0].r_ref, [-2.0, -2.0, 0.0]);
        assert_eq!(g[40].r_ref, [0.0, 0.0, 0.0]);
        assert_eq!(g[80].r_ref, [2.0, 2.0, 0.0]);
        assert_eq!(g[1].r_ref[0], -1.5);
        assert!(g.iter().all(|l| l.delta_r == base.delta_r));
        assert_eq!(scan_grid(&base, 4.0, 1, ScanPlane::Xy), vec![base]);
        let z = scan_grid(&base, 5.12, 129, ScanPlane::Z);
        for want in [-2.36, 0.0, 2.56] {
            assert!(z.iter().any(|l| (l.r_ref[2] - want).abs() < 1e-12), "{want}");
        }
    }

    #[test]
    fn argmax_rules() {
        assert_eq!(argmax_scan(&[1.0, 3.0, 2.0]), Some((1, 3.0)));
        assert_eq!(argmax_scan(&[5.0, 5.0, 5.0]), Some((0, 5.0)));
        assert_eq!(argmax_scan(&[]), None);
        let map: Vec<f64> =
            (0..81).map(|k| -(((k % 9) as f64 - 4.0).powi(2) + ((k / 9) as f64 - 4.0).powi(2))).collect();
        assert_eq!(argmax_scan(&map).unwrap().0, 40);
    }

    #[test]
    fn uniformity_definition() {
        assert_eq!(uniformity(&[2.0]), 1.0);
        assert_eq!(uniformity(&[1.0, 1.0]), 1.0);
        assert!((uniformity(&[1.0, 3.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn parseval() {
        let seeds = SeedTree::new(1);
        let mut rng = seeds.stream("test", 0);
        let n = 64;
        let phases = (0..n * n).map(|_| rng.random::<f64>() * TAU).collect();
        let mask = PhaseMask { n, pitch_um: 1.0, phases };
        let total: f64 = focal_field(&mask).iter().map(|z| z.norm_sqr()).sum();
        assert!((total - (n * n) as f64).abs() < 1e-9 * (n * n) as f64);
    }

    #[test]
    fn single_target_is_blazed_grating() {
        let cfg = WgsConfig { grid: 128, iterations: 5, pitch_um: 1.0 };
        let (mask, m) = wgs_synthesize(&[[12.0, 0.0]], &cfg, &SeedTree::new(3)).unwrap();
        assert_eq!(m.uniformity, 1.0);
        assert!(m.efficiency > 0.999);
        // unwrap the first row; expected slope 2π·12/128 per pixel
        let row = &mask.phases[..cfg.grid];
        let mut acc = row[0];
        let mut prev = row[0];
        for &p in &row[1..] {
            let mut d = p - prev;
            d -= TAU * (d / TAU).round();
            acc += d;
            prev = p;
        }
        let slope = (acc - row[0]) / (cfg.grid - 1) as f64;
        let want = TAU * 12.0 / cfg.grid as f64;
        assert!((slope / want - 1.0).abs() < 0.02, "{slope} vs {want}");
    }

    #[test]
    fn rejects_bad_requests() {
        let cfg = WgsConfig { grid: 100, iterations: 1, pitch_um: 1.0 };
        assert!(matches!(wgs_synthesize(&[[0.0, 0.0]], &cfg, &SeedTree::new(0)), Err(HoloError::Config(_))));
        let cfg = WgsConfig { grid: 64, iterations: 1, pitch_um: 1.0 };
        assert!(matches!(
            wgs_synthesize(&[[40.0, 0.0]], &cfg, &SeedTree::new(0)),
            Err(HoloError::TargetOutside { .. })
        ));
        assert!(matches!(
            wgs_synthesize(&[[1.0, 0.0], [1.2, 0.0]], &cfg, &SeedTree::new(0)),
            Err(HoloError::TargetCollision(0, 1))
        ));
    }

    #[test]
    fn four_spots_uniform_and_deterministic() {
        let targets = [[20.0, 20.0], [-20.0, 20.0], [20.0, -20.0], [-20.0, -20.0]];
        let cfg = WgsConfig { grid: 256, iterations: 50, pitch_um: 1.0 };
        let (mask, m) = wgs_synthesize(&targets, &cfg, &SeedTree::new(11)).unwrap();
        assert!(m.uniformity >= 0.95);
        let (again, _) = wgs_synthesize(&targets, &cfg, &SeedTree::new(11)).unwrap();
        assert_eq!(mask, again);
        assert!(mask.phases.iter().all(|p| (0.0..TAU).contains(p)));

        // independent direct DFT at the four target pixels
        let n = cfg.grid;
        let direct: Vec<f64> = targets
            .iter()
            .map(|t| {
                let (u, v) = (t[0] as i64, t[1] as i64);
                let mut acc = C64::new(0.0, 0.0);
                for y in 0..n {
                    for x in 0..n {
                        let arg = mask.phases[y * n + x] - 2.0 * PI * ((u * x as i64 + v * y as i64) as f64) / n as f64;
                        acc += C64::from_polar(1.0, arg);
                    }
                }
                (acc / n as f64).norm_sqr()
            })
            .collect();
        assert!((uniformity(&direct) - m.uniformity).abs() < 1e-9);
        for (a, b) in direct.iter().zip(&m.intensities) {
            assert!((a - b).abs() < 1e-9 * b.max(1.0));
        }
    }

    #[test]
    fn mask_round_trips() {
        let mut rng = SeedTree::new(5).stream("test", 0);
        let mask = PhaseMask { n: 8, pitch_um: 0.75, phases: (0..64).map(|_| rng.random::<f64>() * TAU).collect() };
        let mut bin = Vec::new();
        mask.write_binary(&mut bin).unwrap();
        assert_eq!(bin.len(), 16 + 64 * 8);
        assert_eq!(&bin[..4], b"ALPM");
        assert_eq!(PhaseMask::read_binary(&bin[..]).unwrap(), mask);
        let mut txt = Vec::new();
        mask.write_text(&mut txt).unwrap();
        assert_eq!(PhaseMask::read_text(&txt[..]).unwrap(), mask);
        assert!(PhaseMask::read_binary(&b"XXXX\0\0\0\0\0\0\0\0\0\0\0\0"[..]).is_err());
    }
}
