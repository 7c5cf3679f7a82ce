//! Time- versus spatial-multiplexing capacity arithmetic.
//!
//! Units: km for distance, µs for periods and shuttle times, µm for lengths,
//! ms for the throughput duration.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("{0} must be > 0")]
    NotPositive(&'static str),
    #[error("{0} must be a probability")]
    NotProbability(&'static str),
}

/// Time-multiplexing depth before heralding round trips dominate, `5L/τ`.
pub fn time_mux_limit_real(distance_km: f64, tau_us: f64) -> f64 {
    if tau_us.is_infinite() {
        return 0.0;
    }
    5.0 * distance_km / tau_us
}

pub fn time_mux_limit(distance_km: f64, tau_us: f64) -> u64 {
    time_mux_limit_real(distance_km, tau_us).floor() as u64
}

pub fn shuttle_time(spacing_um: f64, speed_um_per_us: f64) -> f64 {
    spacing_um / speed_um_per_us
}

pub fn spatial_capacity_real(fov_um: f64, site_spacing_um: f64) -> f64 {
    fov_um / site_spacing_um
}

pub fn spatial_capacity(fov_um: f64, site_spacing_um: f64) -> u64 {
    spatial_capacity_real(fov_um, site_spacing_um).floor() as u64
}

/// Expected pairs: `modes · (duration / period) · p`.
pub fn bell_pair_throughput(modes: f64, success_prob: f64, attempt_period_us: f64, duration_ms: f64) -> f64 {
    modes * (duration_ms * 1e3 / attempt_period_us) * success_prob
}

/// Distance below which `qubits` exceed the time-multiplexing depth,
/// `L* = qubits·τ/5`.
pub fn crossover_distance(available_qubits: f64, tau_us: f64) -> f64 {
    available_qubits * tau_us / 5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkParams {
    pub distance_km: f64,
    pub attempt_period_us: f64,
    pub shuttle_spacing_um: f64,
    pub shuttle_speed_um_per_us: f64,
    pub fov_um: f64,
    pub site_spacing_um: f64,
    pub available_qubits: f64,
    pub throughput_modes: f64,
    pub success_prob: f64,
    pub throughput_period_us: f64,
    pub duration_ms: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            distance_km: 55.0,
            attempt_period_us: 20.0,
            shuttle_spacing_um: 5.0,
            shuttle_speed_um_per_us: 0.3,
            fov_um: 1500.0,
            site_spacing_um: 7.5,
            available_qubits: 6000.0,
            throughput_modes: 100.0,
            success_prob: 0.004,
            throughput_period_us: 1.0,
            duration_ms: 2.0,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        for (name, v) in [
            ("distance_km", self.distance_km),
            ("attempt_period_us", self.attempt_period_us),
            ("shuttle_spacing_um", self.shuttle_spacing_um),
            ("shuttle_speed_um_per_us", self.shuttle_speed_um_per_us),
            ("fov_um", self.fov_um),
            ("site_spacing_um", self.site_spacing_um),
            ("available_qubits", self.available_qubits),
            ("throughput_modes", self.throughput_modes),
            ("throughput_period_us", self.throughput_period_us),
            ("duration_ms", self.duration_ms),
        ] {
            if !(v > 0.0) {
                return Err(PlanError::NotPositive(name));
            }
        }
        if !(0.0..=1.0).contains(&self.success_prob) {
            return Err(PlanError::NotProbability("success_prob"));
        }
        Ok(())
    }
}

/// One line of the planner report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanRow {
    pub quantity: &'static str,
    pub value: f64,
    pub unfloored: f64,
    pub unit: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanReport {
    pub rows: Vec<PlanRow>,
    pub footnotes: Vec<String>,
}

/// Footnote on the 55 km example.
pub const FOOTNOTE_55KM: &str = "[1] At L = 55 km and tau = 20 us, N_time = 5L/tau = 13.75 (13 modes); the Discussion quotes 30 modes for this distance.";
/// Footnote on the crossover example.
pub const FOOTNOTE_CROSSOVER: &str = "[2] With 6000 qubits and tau = 20 us, L* = qubits*tau/5 = 24000 km; the Discussion quotes L < 1e4 km, which would need tau = 8.33 us.";

pub fn plan(p: &LinkParams) -> Result<PlanReport, PlanError> {
    p.validate()?;
    let tm = time_mux_limit_real(p.distance_km, p.attempt_period_us);
    let sc = spatial_capacity_real(p.fov_um, p.site_spacing_um);
    let st = shuttle_time(p.shuttle_spacing_um, p.shuttle_speed_um_per_us);
    let bp = bell_pair_throughput(p.throughput_modes, p.success_prob, p.throughput_period_us, p.duration_ms);
    let lx = crossover_distance(p.available_qubits, p.attempt_period_us);
    let rows = vec![
        PlanRow { quantity: "time_mux_limit", value: tm.floor(), unfloored: tm, unit: "modes" },
        PlanRow { quantity: "shuttle_time", value: st, unfloored: st, unit: "us" },
        PlanRow { quantity: "spatial_capacity", value: sc.floor(), unfloored: sc, unit: "modes" },
        PlanRow { quantity: "bell_pair_throughput", value: bp, unfloored: bp, unit: "pairs" },
        PlanRow { quantity: "crossover_distance", value: lx, unfloored: lx, unit: "km" },
    ];
    Ok(PlanReport { rows, footnotes: vec![FOOTNOTE_55KM.to_string(), FOOTNOTE_CROSSOVER.to_string()] })
}

impl PlanReport {
    pub fn get(&self, quantity: &str) -> Option<&PlanRow> {
        self.rows.iter().find(|r| r.quantity == quantity)
    }

    /// Fixed-order comma-separated table followed by the footnotes.
    pub fn render(&self) -> String {
        let mut out = String::from("quantity,value,unfloored,unit\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:.6},{}", r.quantity, r.value, r.unfloored, r.unit);
        }
        out.push('\n');
        for f in &self.footnotes {
            let _ = writeln!(out, "{f}");
        }
        out
    }
}
