//! Estimators over detection records and presence flags. Nothing here reads
//! the simulation's origin tags.

mod fringe;
mod stats;
mod stokes;
mod table;

pub use fringe::{fit_fringe, FringeFit, DEFAULT_ANGLE_FACTOR};
pub use stats::{binomial_pull, binomial_within_3sigma, Estimate, THREE_SIGMA_TAIL, Z_68};
pub use stokes::{stokes_estimate, StokesComponent, StokesEstimate};
pub use table::{fringe_plotdata, profile_plotdata, table_one_csv, TABLE_ROW_LABELS};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{ChannelChain, DetectionRecord, Detector, EntanglementOutcome, SequenceOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("inconsistent input: {0}")]
    Inconsistent(String),
    #[error("detection slot of {got} ns is shorter than the {needed} ns background window")]
    SlotTooShort { needed: f64, got: f64 },
    #[error("fringe fit: {0}")]
    Fringe(String),
    #[error("division by a zero efficiency factor")]
    ZeroFactor,
}

/// Background is counted from 1 µs to 11 µs after the pulse.
pub const BACKGROUND_WINDOW_NS: (f64, f64) = (1_000.0, 11_000.0);

/// Per-channel click probabilities conditioned on the initial atom measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalProbs {
    pub present: Vec<Estimate>,
    pub absent: Vec<Estimate>,
}

struct Index<'a> {
    by_id: HashMap<u64, &'a SequenceOutcome>,
    n_channels: usize,
}

fn index(sequences: &[SequenceOutcome]) -> Result<Index<'_>, AnalysisError> {
    let n_channels = sequences.first().map_or(0, |s| s.present_initial.len());
    let mut by_id = HashMap::with_capacity(sequences.len());
    for s in sequences {
        if s.present_initial.len() != n_channels {
            return Err(AnalysisError::Inconsistent(format!(
                "sequence {} has {} sites",
                s.sequence_id,
                s.present_initial.len()
            )));
        }
        if by_id.insert(s.sequence_id, s).is_some() {
            return Err(AnalysisError::Inconsistent(format!("duplicate sequence {}", s.sequence_id)));
        }
    }
    Ok(Index { by_id, n_channels })
}

impl<'a> Index<'a> {
    fn lookup(&self, r: &DetectionRecord) -> Result<&'a SequenceOutcome, AnalysisError> {
        let s = self
            .by_id
            .get(&r.sequence_id)
            .ok_or_else(|| AnalysisError::Inconsistent(format!("record for unknown sequence {}", r.sequence_id)))?;
        if r.channel as usize >= self.n_channels || r.trial_id >= s.trials {
            return Err(AnalysisError::Inconsistent(format!(
                "record (sequence {}, trial {}, channel {}) out of range",
                r.sequence_id, r.trial_id, r.channel
            )));
        }
        Ok(s)
    }
}

fn in_window(r: &DetectionRecord, window_ns: f64) -> bool {
    r.timestamp_ns >= 0.0 && r.timestamp_ns < window_ns
}

/// Counts clicks with timestamps in `[0, window_ns)` per attempt, split by
/// whether the channel's site was occupied at the initial measurement.
pub fn conditional_probs(
    records: &[DetectionRecord],
    sequences: &[SequenceOutcome],
    window_ns: f64,
) -> Result<ConditionalProbs, AnalysisError> {
    let idx = index(sequences)?;
    let n = idx.n_channels;
    let mut present = vec![Estimate::default(); n];
    let mut absent = vec![Estimate::default(); n];
    for s in sequences {
        for (i, &a) in s.present_initial.iter().enumerate() {
            let e = if a { &mut present[i] } else { &mut absent[i] };
            e.attempts += s.trials as u64;
        }
    }
    for r in records {
        let s = idx.lookup(r)?;
        if !in_window(r, window_ns) {
            continue;
        }
        let i = r.channel as usize;
        if s.present_initial[i] {
            present[i].successes += 1;
        } else {
            absent[i].successes += 1;
        }
    }
    Ok(ConditionalProbs { present, absent })
}

/// `η_net = P / (p_init·η_ext·η_fiber·η_det)`.
pub fn infer_net_coupling(p_click: f64, chain: &ChannelChain) -> Result<f64, AnalysisError> {
    let f = chain.common_factor();
    if f == 0.0 {
        return Err(AnalysisError::ZeroFactor);
    }
    Ok(p_click / f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkEntry {
    /// `None` when the conditioning set or the diagonal is empty.
    pub value: Option<f64>,
    pub std_error: Option<f64>,
    /// Channel-`i` clicks given site `i` empty and site `j` occupied.
    pub conditional: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkMatrix {
    /// `entries[i][j]`: channel `i`, occupied site `j`.
    pub entries: Vec<Vec<CrosstalkEntry>>,
}

impl CrosstalkMatrix {
    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        self.entries[i][j].value
    }

    pub fn max_off_diagonal(&self) -> Option<f64> {
        let n = self.entries.len();
        (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .filter_map(|(i, j)| self.entries[i][j].value)
            .reduce(f64::max)
    }
}

/// `P(p_i | site i empty & site j occupied) / P(p_i | site i occupied)`.
pub fn crosstalk_matrix(
    records: &[DetectionRecord],
    sequences: &[SequenceOutcome],
    window_ns: f64,
) -> Result<CrosstalkMatrix, AnalysisError> {
    let probs = conditional_probs(records, sequences, window_ns)?;
    let idx = index(sequences)?;
    let n = idx.n_channels;
    let mut cond = vec![vec![Estimate::default(); n]; n];
    for s in sequences {
        let p = &s.present_initial;
        for i in (0..n).filter(|&i| !p[i]) {
            for j in (0..n).filter(|&j| p[j]) {
                cond[i][j].attempts += s.trials as u64;
            }
        }
    }
    for r in records {
        let s = idx.lookup(r)?;
        let i = r.channel as usize;
        if !in_window(r, window_ns) || s.present_initial[i] {
            continue;
        }
        for (j, &occ) in s.present_initial.iter().enumerate() {
            if occ {
                cond[i][j].successes += 1;
            }
        }
    }
    let entries = (0..n)
        .map(|i| {
            let diag = probs.present[i];
            (0..n)
                .map(|j| {
                    if i == j {
                        return CrosstalkEntry { value: Some(1.0), std_error: Some(0.0), conditional: diag };
                    }
                    let c = cond[i][j];
                    let (value, std_error) = match (c.value(), diag.value()) {
                        (Some(pc), Some(pd)) if pd > 0.0 => {
                            let r = pc / pd;
                            let rc = if pc > 0.0 { c.std_error().unwrap_or(0.0) / pc } else { 0.0 };
                            let rd = diag.std_error().unwrap_or(0.0) / pd;
                            let se = if pc > 0.0 { r * rc.hypot(rd) } else { 1.0 / c.attempts as f64 / pd };
                            (Some(r), Some(se))
                        }
                        _ => (None, None),
                    };
                    CrosstalkEntry { value, std_error, conditional: c }
                })
                .collect()
        })
        .collect();
    Ok(CrosstalkMatrix { entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub clicks: u64,
    pub exposure_s: f64,
}

impl RateEstimate {
    pub fn hz(&self) -> Option<f64> {
        (self.exposure_s > 0.0).then(|| self.clicks as f64 / self.exposure_s)
    }

    pub fn std_error_hz(&self) -> Option<f64> {
        (self.exposure_s > 0.0).then(|| (self.clicks as f64).sqrt() / self.exposure_s)
    }
}

/// Click rate in `[pulse + 1 µs, pulse + 11 µs)` of every trial, per channel.
/// Occupancy is ignored: the window is long after any atomic emission.
pub fn background_rate(
    records: &[DetectionRecord],
    sequences: &[SequenceOutcome],
    slot_ns: f64,
    pulse_time_ns: f64,
) -> Result<Vec<RateEstimate>, AnalysisError> {
    let (a, b) = (pulse_time_ns + BACKGROUND_WINDOW_NS.0, pulse_time_ns + BACKGROUND_WINDOW_NS.1);
    if slot_ns < b {
        return Err(AnalysisError::SlotTooShort { needed: b, got: slot_ns });
    }
    let idx = index(sequences)?;
    let trials: u64 = sequences.iter().map(|s| s.trials as u64).sum();
    let exposure_s = trials as f64 * (b - a) * 1e-9;
    let mut out = vec![RateEstimate { clicks: 0, exposure_s }; idx.n_channels];
    for r in records {
        idx.lookup(r)?;
        if r.timestamp_ns >= a && r.timestamp_ns < b {
            out[r.channel as usize].clicks += 1;
        }
    }
    Ok(out)
}

/// Survival after readout among sites heralded on `detector`.
pub fn survival_given_herald(outcomes: &[EntanglementOutcome], detector: Detector) -> Estimate {
    outcomes.iter().filter(|o| o.herald == Some(detector)).fold(Estimate::default(), |mut e, o| {
        e.attempts += 1;
        e.successes += o.survived.unwrap_or(false) as u64;
        e
    })
}

/// `(N_H, N_V)` among heralded sites whose atom survived the readout, i.e.
/// photon counts conditioned on the atom in `m = −1`.
pub fn surviving_herald_counts(outcomes: &[EntanglementOutcome]) -> (u64, u64) {
    let count = |d| outcomes.iter().filter(|o| o.herald == Some(d) && o.survived == Some(true)).count() as u64;
    (count(Detector::H), count(Detector::V))
}

/// Upper bound on the fringe-visibility loss from background at a given
/// signal-to-noise ratio. Non-positive SNR gives no bound (infinity).
pub fn visibility_degradation(snr: f64) -> f64 {
    if snr > 0.0 {
        1.0 / snr
    } else {
        f64::INFINITY
    }
}

/// Integer-valued histogram from `start` in bins of `bin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub start: f64,
    pub bin: f64,
    pub counts: Vec<u64>,
    /// Inputs that fell outside the binned range.
    pub outside: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Bins photon counts (e.g. per-exposure counts) from 0 to the maximum.
pub fn count_histogram(values: &[u32], bin_width: u32) -> Histogram {
    let w = bin_width.max(1);
    let Some(&max) = values.iter().max() else {
        return Histogram { start: 0.0, bin: w as f64, counts: Vec::new(), outside: 0 };
    };
    let mut counts = vec![0u64; (max / w) as usize + 1];
    for &v in values {
        counts[(v / w) as usize] += 1;
    }
    Histogram { start: 0.0, bin: w as f64, counts, outside: 0 }
}

/// Bins timestamps into `n_bins` bins of `bin` ns starting at `start`.
pub fn time_histogram(times: impl IntoIterator<Item = f64>, start: f64, bin: f64, n_bins: usize) -> Histogram {
    let mut counts = vec![0u64; n_bins];
    let mut outside = 0;
    for t in times {
        let k = ((t - start) / bin).floor();
        if k >= 0.0 && (k as usize) < n_bins {
            counts[k as usize] += 1;
        } else {
            outside += 1;
        }
    }
    Histogram { start, bin, counts, outside }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Detector, Origin};

    fn rec(seq: u64, trial: u32, ch: u16, t: f64) -> DetectionRecord {
        DetectionRecord {
            sequence_id: seq,
            trial_id: trial,
            channel: ch,
            detector: Detector::None,
            timestamp_ns: t,
            origin: Origin::Atom,
        }
    }

    fn seq(id: u64, present: &[bool], trials: u32) -> SequenceOutcome {
        SequenceOutcome { sequence_id: id, present_initial: present.to_vec(), present_final: present.to_vec(), trials }
    }

    #[test]
    fn hand_counted_fixture() {
        let seqs = vec![seq(0, &[true, false], 4), seq(1, &[false, true], 4), seq(2, &[true, true], 2)];
        // 10 records; two outside the window
        let recs = vec![
            rec(0, 0, 0, 10.0),
            rec(0, 1, 0, 20.0),
            rec(0, 2, 1, 30.0),
            rec(0, 3, 0, 500.0),
            rec(1, 0, 1, 5.0),
            rec(1, 1, 0, 99.9),
            rec(1, 2, 1, 100.0),
            rec(2, 0, 0, 1.0),
            rec(2, 1, 1, 2.0),
            rec(2, 1, 0, 3.0),
        ];
        let p = conditional_probs(&recs, &seqs, 100.0).unwrap();
        // channel 0: present in seq 0 (4) + seq 2 (2) = 6 attempts, clicks 0/0,0/1,2/0,2/1 → 4
        assert_eq!(p.present[0], Estimate::new(4, 6));
        assert_eq!(p.absent[0], Estimate::new(1, 4));
        assert_eq!(p.present[1], Estimate::new(2, 6));
        assert_eq!(p.absent[1], Estimate::new(1, 4));
        let x = crosstalk_matrix(&recs, &seqs, 100.0).unwrap();
        assert_eq!(x.value(0, 0), Some(1.0));
        assert!((x.value(0, 1).unwrap() - 0.25 / (4.0 / 6.0)).abs() < 1e-12);
        assert!((x.value(1, 0).unwrap() - 0.25 / (2.0 / 6.0)).abs() < 1e-12);
        // reordering leaves everything unchanged
        let mut rev = recs.clone();
        rev.reverse();
        assert_eq!(conditional_probs(&rev, &seqs, 100.0).unwrap(), p);
    }

    #[test]
    fn no_records_and_undefined_entries() {
        let seqs = vec![seq(0, &[true, false, false], 40)];
        let p = conditional_probs(&[], &seqs, 100.0).unwrap();
        assert_eq!(p.present[0].value(), Some(0.0));
        assert_eq!(p.present[1].value(), None);
        let x = crosstalk_matrix(&[], &seqs, 100.0).unwrap();
        // site 0 is never empty; sites 1, 2 never occupied
        assert_eq!(x.value(0, 1), None);
        assert_eq!(x.value(1, 2), None);
        assert_eq!(x.entries[1][0].conditional.attempts, 40);
        assert_eq!(x.value(1, 0), None);
    }

    #[test]
    fn inconsistent_ids() {
        let seqs = vec![seq(0, &[true], 2)];
        assert!(conditional_probs(&[rec(5, 0, 0, 1.0)], &seqs, 100.0).is_err());
        assert!(conditional_probs(&[rec(0, 2, 0, 1.0)], &seqs, 100.0).is_err());
        assert!(conditional_probs(&[rec(0, 0, 1, 1.0)], &seqs, 100.0).is_err());
    }

    #[test]
    fn net_coupling_back_out() {
        let chain = ChannelChain::default();
        assert!((infer_net_coupling(3.4e-3, &chain).unwrap() - 0.00881).abs() < 1e-5);
        assert!((infer_net_coupling(4.7e-3, &chain).unwrap() - 0.01218).abs() < 1e-5);
        assert_eq!(infer_net_coupling(0.0, &chain).unwrap(), 0.0);
        let zero = ChannelChain { eta_det: 0.0, ..Default::default() };
        assert_eq!(infer_net_coupling(1e-3, &zero), Err(AnalysisError::ZeroFactor));
    }

    #[test]
    fn background_window() {
        let seqs = vec![seq(0, &[false], 10)];
        let recs = vec![rec(0, 0, 0, 50.0), rec(0, 1, 0, 1_000.0), rec(0, 2, 0, 10_999.0), rec(0, 3, 0, 11_000.0)];
        let r = background_rate(&recs, &seqs, 12_000.0, 0.0).unwrap();
        assert_eq!(r[0].clicks, 2);
        assert!((r[0].hz().unwrap() - 2.0 / 1e-4).abs() < 1e-6);
        assert!(matches!(background_rate(&recs, &seqs, 10_000.0, 0.0), Err(AnalysisError::SlotTooShort { .. })));
        let empty = background_rate(&[], &seqs, 12_000.0, 0.0).unwrap();
        assert_eq!(empty[0].hz(), Some(0.0));
    }

    #[test]
    fn degradation_bound() {
        assert!((visibility_degradation(500.0) - 0.002).abs() < 1e-15);
        assert!(visibility_degradation(1e300) < 1e-299);
        assert!(visibility_degradation(0.0).is_infinite());
    }

    #[test]
    fn histograms() {
        let h = count_histogram(&[], 1);
        assert!(h.counts.is_empty());
        let h = count_histogram(&[0, 3, 3, 7, 8], 2);
        assert_eq!(h.counts, vec![1, 2, 0, 1, 1]);
        let t = time_histogram([0.5, 1.0, 149.9, 150.0, -0.1], 0.0, 1.0, 150);
        assert_eq!(t.total(), 3);
        assert_eq!(t.outside, 2);
        assert_eq!(t.counts[1], 1);
    }
}
