use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::emission::EmissionSampler;
use super::records::{DetectionRecord, Detector, Origin};
use super::{ChannelChain, CouplingMatrix, SequenceConfig, SimError};
use crate::rng::SeedTree;

/// Atom-presence bookkeeping for one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceOutcome {
    pub sequence_id: u64,
    pub present_initial: Vec<bool>,
    pub present_final: Vec<bool>,
    pub trials: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluorescenceRun {
    pub records: Vec<DetectionRecord>,
    pub sequences: Vec<SequenceOutcome>,
    pub slot_ns: f64,
    pub window_ns: f64,
    pub n_channels: usize,
}

/// Single-trial, single-channel detection: an atom click with the chain
/// probability, timestamped from the emission profile, and an independent
/// background click uniform in the window. The earlier click is kept.
pub fn sample_detection<R: Rng + ?Sized>(
    chain: &ChannelChain,
    channel: usize,
    atom_present: bool,
    sampler: &EmissionSampler,
    rng: &mut R,
) -> Option<(f64, Origin)> {
    let atom = (atom_present && rng.random::<f64>() < chain.click_probability(channel))
        .then(|| (sampler.sample(rng), Origin::Atom));
    let bg = (rng.random::<f64>() < chain.background_probability(channel))
        .then(|| (rng.random::<f64>() * chain.detection_window_ns, Origin::Background));
    earliest(atom, bg)
}

fn earliest(a: Option<(f64, Origin)>, b: Option<(f64, Origin)>) -> Option<(f64, Origin)> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.0 < x.0 { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

pub(super) fn check_shapes(
    config: &SequenceConfig,
    chain: &ChannelChain,
    coupling: &CouplingMatrix,
) -> Result<(), SimError> {
    config.validate()?;
    chain.validate()?;
    if chain.n_channels() != config.n_sites || coupling.n() != config.n_sites {
        return Err(SimError::Config(format!(
            "n_sites = {}, channels = {}, coupling = {}x{0}",
            config.n_sites,
            chain.n_channels(),
            coupling.n()
        )));
    }
    for j in 0..config.n_sites {
        let total: f64 = (0..config.n_sites).map(|i| chain.click_probability(i) * coupling.get(i, j)).sum();
        if total > 1.0 {
            return Err(SimError::Config(format!("site {j} click probabilities sum to {total}")));
        }
    }
    Ok(())
}

/// Runs `config.sequences` fluorescence sequences. Each sequence loads the
/// array, fires `trials_per_sequence` excitation pulses, and records at most
/// one click per trial and channel within a detection slot of
/// `detection_slot_us`. Background clicks are spread over the whole slot.
pub fn run_fluorescence_sequence(
    config: &SequenceConfig,
    chain: &ChannelChain,
    coupling: &CouplingMatrix,
    sampler: &EmissionSampler,
    seeds: &SeedTree,
) -> Result<FluorescenceRun, SimError> {
    check_shapes(config, chain, coupling)?;
    let per_seq: Vec<(SequenceOutcome, Vec<DetectionRecord>)> = (0..config.sequences)
        .into_par_iter()
        .map(|id| one_sequence(id, config, chain, coupling, sampler, seeds))
        .collect();
    let mut records = Vec::new();
    let mut sequences = Vec::with_capacity(per_seq.len());
    for (s, r) in per_seq {
        sequences.push(s);
        records.extend(r);
    }
    Ok(FluorescenceRun {
        records,
        sequences,
        slot_ns: config.slot_ns(),
        window_ns: chain.detection_window_ns,
        n_channels: chain.n_channels(),
    })
}

fn one_sequence(
    id: u64,
    config: &SequenceConfig,
    chain: &ChannelChain,
    coupling: &CouplingMatrix,
    sampler: &EmissionSampler,
    seeds: &SeedTree,
) -> (SequenceOutcome, Vec<DetectionRecord>) {
    let mut rng = seeds.stream("sequence", id);
    let n = config.n_sites;
    let trials = config.trials_per_sequence as usize;
    let present: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < config.loading_probability).collect();

    let mut slots: Vec<Option<(f64, Origin)>> = vec![None; trials * n];
    for t in 0..trials {
        for j in (0..n).filter(|&j| present[j]) {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for i in 0..n {
                acc += chain.click_probability(i) * coupling.get(i, j);
                if u < acc {
                    let hit = Some((sampler.sample(&mut rng), Origin::Atom));
                    slots[t * n + i] = earliest(slots[t * n + i], hit);
                    break;
                }
            }
        }
    }
    let slot_ns = config.slot_ns();
    for i in 0..n {
        let mean = chain.background_hz[i] * trials as f64 * slot_ns * 1e-9;
        let count = if mean > 0.0 { Poisson::new(mean).map(|d| d.sample(&mut rng) as u64).unwrap_or(0) } else { 0 };
        for _ in 0..count {
            let t = rng.random_range(0..trials);
            let hit = Some((rng.random::<f64>() * slot_ns, Origin::Background));
            slots[t * n + i] = earliest(slots[t * n + i], hit);
        }
    }

    let records = slots
        .iter()
        .enumerate()
        .filter_map(|(k, s)| {
            s.map(|(ts, origin)| DetectionRecord {
                sequence_id: id,
                trial_id: (k / n) as u32,
                channel: (k % n) as u16,
                detector: Detector::None,
                timestamp_ns: ts,
                origin,
            })
        })
        .collect();
    let outcome = SequenceOutcome {
        sequence_id: id,
        present_initial: present.clone(),
        present_final: present,
        trials: config.trials_per_sequence,
    };
    (outcome, records)
}
