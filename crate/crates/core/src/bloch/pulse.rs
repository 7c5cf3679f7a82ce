//! Excitation pulse envelopes `t ↦ Ω(t)`.
//!
//! Times are in ns and Rabi frequencies in rad/ns throughout.

use std::f64::consts::LN_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::BlochError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    SmoothedSquare,
    Gaussian,
    Tabulated,
}

/// Tabulated relative envelope, e.g. a photodiode trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseTable {
    times: Vec<f64>,
    values: Vec<f64>,
    max: f64,
    /// Midpoint of the half-maximum crossings.
    center: f64,
    fwhm: f64,
}

impl PulseTable {
    pub fn new(mut samples: Vec<(f64, f64)>) -> Result<Self, BlochError> {
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        if samples.len() < 3 {
            return Err(BlochError::InvalidPulse("table needs at least 3 samples".into()));
        }
        if samples.iter().any(|s| !s.0.is_finite() || !s.1.is_finite() || s.1 < 0.0) {
            return Err(BlochError::InvalidPulse("table values must be finite and non-negative".into()));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(BlochError::InvalidPulse("table times must be strictly increasing".into()));
        }
        let (times, values): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
        let max = values.iter().cloned().fold(0.0, f64::max);
        if max <= 0.0 {
            return Err(BlochError::InvalidPulse("table is identically zero".into()));
        }
        let (lo, hi) = half_max_crossings(&times, &values)
            .ok_or_else(|| BlochError::InvalidPulse("table does not cross half maximum on both sides".into()))?;
        Ok(Self { times, values, max, center: 0.5 * (lo + hi), fwhm: hi - lo })
    }

    /// Parses two whitespace- or comma-separated columns `t_ns amplitude`.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, BlochError> {
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty());
            let mut next = || -> Result<f64, BlochError> {
                cols.next()
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| BlochError::InvalidPulse(format!("line {}: expected two numbers", lineno + 1)))
            };
            let t = next()?;
            let a = next()?;
            samples.push((t, a));
        }
        Self::new(samples)
    }

    pub fn fwhm(&self) -> f64 {
        self.fwhm
    }

    fn relative(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] || t >= self.times[n - 1] {
            return 0.0;
        }
        let i = self.times.partition_point(|&x| x <= t) - 1;
        let f = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        (self.values[i] + f * (self.values[i + 1] - self.values[i])) / self.max
    }
}

/// Pulse description. For the tabulated kind the table's own shape is
/// time-stretched so that its half-maximum width equals `fwhm_ns` and its
/// half-maximum midpoint sits at `center_ns`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSpec {
    pub kind: PulseKind,
    pub fwhm_ns: f64,
    /// 1 %–99 % transition time of each sigmoid edge (smoothed square only).
    pub rise_time_ns: f64,
    pub peak_rabi: f64,
    pub center_ns: f64,
    pub table: Option<Arc<PulseTable>>,
}

impl PulseSpec {
    pub fn validate(&self) -> Result<(), BlochError> {
        if !(self.fwhm_ns > 0.0) {
            return Err(BlochError::InvalidPulse(format!("fwhm must be > 0, got {}", self.fwhm_ns)));
        }
        if !(self.rise_time_ns >= 0.0) {
            return Err(BlochError::InvalidPulse(format!("rise time must be >= 0, got {}", self.rise_time_ns)));
        }
        if !(self.peak_rabi >= 0.0) || !self.center_ns.is_finite() {
            return Err(BlochError::InvalidPulse("peak must be >= 0 and center finite".into()));
        }
        if self.kind == PulseKind::Tabulated && self.table.is_none() {
            return Err(BlochError::InvalidPulse("tabulated pulse without a table".into()));
        }
        Ok(())
    }
}

/// Rabi-frequency envelope, evaluated with [`Envelope::eval`].
#[derive(Debug, Clone, PartialEq)]
pub enum Envelope {
    Constant(f64),
    /// Normalized product of two logistic edges `σ((t−c+a)/s)·σ((c+a−t)/s)`.
    SmoothedSquare {
        peak: f64,
        center: f64,
        half_width: f64,
        edge: f64,
        norm: f64,
    },
    Gaussian {
        peak: f64,
        center: f64,
        fwhm: f64,
    },
    Tabulated {
        peak: f64,
        center: f64,
        stretch: f64,
        table: Arc<PulseTable>,
    },
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Envelope {
    pub fn zero() -> Self {
        Envelope::Constant(0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Envelope::Constant(v) => *v,
            Envelope::SmoothedSquare { peak, center, half_width, edge, norm } => {
                let x = t - center;
                if *edge == 0.0 {
                    return if x.abs() <= *half_width { *peak } else { 0.0 };
                }
                peak * logistic((x + half_width) / edge) * logistic((half_width - x) / edge) / norm
            }
            Envelope::Gaussian { peak, center, fwhm } => {
                let x = (t - center) / fwhm;
                peak * (-4.0 * LN_2 * x * x).exp()
            }
            Envelope::Tabulated { peak, center, stretch, table } => {
                peak * table.relative(table.center + (t - center) * stretch)
            }
        }
    }

    pub fn peak(&self) -> f64 {
        match self {
            Envelope::Constant(v) => v.abs(),
            Envelope::SmoothedSquare { peak, .. }
            | Envelope::Gaussian { peak, .. }
            | Envelope::Tabulated { peak, .. } => *peak,
        }
    }
}

/// Builds the envelope for `spec`.
///
/// The smoothed square uses logistic edges with time constant
/// `s = rise/(2 ln 99)`. Its half width `a` is solved in closed form so the
/// normalized product has exactly the requested FWHM: with
/// `c = cosh(FWHM/2s)` the half-maximum condition reduces to
/// `A² + (4 − 2c)A + 1 = 0` for `A = e^{−a/s}`, so `a = s·acosh(c − 2)`. When `c < 3` the edges are
/// too slow for that FWHM and `s` is shortened to `FWHM/(2 acosh 3)`.
pub fn pulse_envelope(spec: &PulseSpec) -> Result<Envelope, BlochError> {
    spec.validate()?;
    let env = match spec.kind {
        PulseKind::Gaussian => Envelope::Gaussian { peak: spec.peak_rabi, center: spec.center_ns, fwhm: spec.fwhm_ns },
        PulseKind::SmoothedSquare => {
            let half = 0.5 * spec.fwhm_ns;
            let min_ratio = 3.0f64.acosh();
            let mut s = spec.rise_time_ns / (2.0 * 99f64.ln());
            if s > 0.0 && half / s < min_ratio {
                s = half / min_ratio;
            }
            if s == 0.0 {
                Envelope::SmoothedSquare {
                    peak: spec.peak_rabi,
                    center: spec.center_ns,
                    half_width: half,
                    edge: 0.0,
                    norm: 1.0,
                }
            } else {
                // a = s·acosh(cosh(FWHM/2s) − 2), i.e. A = 1/(d + √(d²−1))
                let x = half / s;
                let half_width = if x > 40.0 { half } else { s * (x.cosh() - 2.0).max(1.0).acosh() };
                let norm = logistic(half_width / s).powi(2);
                Envelope::SmoothedSquare { peak: spec.peak_rabi, center: spec.center_ns, half_width, edge: s, norm }
            }
        }
        PulseKind::Tabulated => {
            let table = spec.table.clone().expect("validated");
            Envelope::Tabulated {
                peak: spec.peak_rabi,
                center: spec.center_ns,
                stretch: table.fwhm / spec.fwhm_ns,
                table,
            }
        }
    };
    Ok(env)
}

/// Linear-interpolated half-maximum crossings of sampled data.
pub(crate) fn half_max_crossings(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let (imax, &ymax) = ys.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    let half = 0.5 * ymax;
    let mut lo = None;
    for i in (0..imax).rev() {
        if ys[i] < half {
            let f = (half - ys[i]) / (ys[i + 1] - ys[i]);
            lo = Some(xs[i] + f * (xs[i + 1] - xs[i]));
            break;
        }
    }
    let mut hi = None;
    for i in imax + 1..ys.len() {
        if ys[i] < half {
            let f = (ys[i - 1] - half) / (ys[i - 1] - ys[i]);
            hi = Some(xs[i - 1] + f * (xs[i] - xs[i - 1]));
            break;
        }
    }
    Some((lo?, hi?))
}

/// Samples `env` on `[t_start, t_end]` and measures its FWHM.
pub fn measured_fwhm(env: &Envelope, t_start: f64, t_end: f64, step: f64) -> Option<f64> {
    let n = ((t_end - t_start) / step).ceil() as usize + 1;
    let xs: Vec<f64> = (0..n).map(|i| t_start + i as f64 * step).collect();
    let ys: Vec<f64> = xs.iter().map(|&t| env.eval(t)).collect();
    half_max_crossings(&xs, &ys).map(|(a, b)| b - a)
}
