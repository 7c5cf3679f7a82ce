use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::emission::EmissionSampler;
use super::fluorescence::{check_shapes, SequenceOutcome};
use super::records::{DetectionRecord, Detector, Origin};
use super::{ChannelChain, CouplingMatrix, SequenceConfig, SimError};
use crate::quantum::{analyzer_basis, project_photon, BasisKind, JointAtomPhotonState};
use crate::rng::SeedTree;

/// Polarization analyzer in front of the H/V detector pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analyzer {
    pub kind: BasisKind,
    pub angle_rad: f64,
}

/// What a failed optical-pumping step does to the attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitFailure {
    /// No photon is emitted.
    #[default]
    NoPhoton,
    /// A photon of random polarization is emitted; the atom ends in a random
    /// Zeeman state uncorrelated with it.
    Depolarized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Imperfections {
    /// Collection-axis tilt distorting the emitted polarizations.
    pub tilt_rad: f64,
    pub init_failure: InitFailure,
    /// Probability that the atom is lost before state readout.
    pub heating_loss: f64,
    /// Per-repetition failure of the state-selective push-out.
    pub pushout_error: f64,
    pub pushout_repeats: u32,
}

impl Default for Imperfections {
    fn default() -> Self {
        Self {
            tilt_rad: 0.17,
            init_failure: InitFailure::NoPhoton,
            heating_loss: 0.05,
            pushout_error: 0.02,
            pushout_repeats: 5,
        }
    }
}

impl Imperfections {
    pub fn ideal() -> Self {
        Self {
            tilt_rad: 0.0,
            init_failure: InitFailure::NoPhoton,
            heating_loss: 0.0,
            pushout_error: 0.0,
            pushout_repeats: 0,
        }
    }

    /// Survival probability of an atom left in `m = +1`, which the push-out
    /// should remove.
    pub fn plus_survival(&self) -> f64 {
        1.0 - (1.0 - self.pushout_error).powi(self.pushout_repeats as i32)
    }

    fn validate(&self) -> Result<(), SimError> {
        for (n, p) in [("heating_loss", self.heating_loss), ("pushout_error", self.pushout_error)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::Config(format!("{n} = {p} is not a probability")));
            }
        }
        Ok(())
    }
}

/// Result of the attempt loop on one loaded site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntanglementOutcome {
    pub sequence_id: u64,
    pub site: u16,
    /// Attempts used, including the heralded one.
    pub attempts: u32,
    pub herald: Option<Detector>,
    /// Atom found after the state-selective readout (heralded sites only).
    pub survived: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntanglementRun {
    pub records: Vec<DetectionRecord>,
    pub outcomes: Vec<EntanglementOutcome>,
    pub sequences: Vec<SequenceOutcome>,
    pub analyzer: Analyzer,
}

/// Runs `config.sequences` entanglement sequences. Every loaded site is
/// excited until its channel clicks or `max_attempts` is reached; a click
/// projects the atom through the analyzer measurement, after which the atom
/// is read out with a push-out of `m = +1`.
pub fn run_entanglement_sequence(
    config: &SequenceConfig,
    chain: &ChannelChain,
    coupling: &CouplingMatrix,
    sampler: &EmissionSampler,
    analyzer: Analyzer,
    imperfections: &Imperfections,
    seeds: &SeedTree,
) -> Result<EntanglementRun, SimError> {
    check_shapes(config, chain, coupling)?;
    imperfections.validate()?;
    let state = JointAtomPhotonState::tilted_bell(imperfections.tilt_rad);
    let (first, _) = analyzer_basis(analyzer.angle_rad, analyzer.kind);
    // probability of the H detector and P(m=−1) after each outcome
    let p_h = project_photon(&state, &first).map(|r| r.0).unwrap_or(0.0);
    let minus_after = |det: Detector| {
        let (a, b) = analyzer_basis(analyzer.angle_rad, analyzer.kind);
        let onto = if det == Detector::H { a } else { b };
        project_photon(&state, &onto).map(|(_, atom)| atom.minus_probability()).unwrap_or(0.5)
    };
    let minus_given = [minus_after(Detector::H), minus_after(Detector::V)];
    let ctx = Ctx { config, chain, coupling, sampler, imp: imperfections, p_h, minus_given };

    let per_seq: Vec<_> = (0..config.sequences).into_par_iter().map(|id| ctx.sequence(id, seeds)).collect();
    let mut run = EntanglementRun { records: Vec::new(), outcomes: Vec::new(), sequences: Vec::new(), analyzer };
    for (s, o, r) in per_seq {
        run.sequences.push(s);
        run.outcomes.extend(o);
        run.records.extend(r);
    }
    Ok(run)
}

struct Ctx<'a> {
    config: &'a SequenceConfig,
    chain: &'a ChannelChain,
    coupling: &'a CouplingMatrix,
    sampler: &'a EmissionSampler,
    imp: &'a Imperfections,
    p_h: f64,
    minus_given: [f64; 2],
}

impl Ctx<'_> {
    fn sequence(&self, id: u64, seeds: &SeedTree) -> (SequenceOutcome, Vec<EntanglementOutcome>, Vec<DetectionRecord>) {
        let mut rng = seeds.stream("sequence", id);
        let n = self.config.n_sites;
        let present: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < self.config.loading_probability).collect();
        let mut final_presence = present.clone();
        let mut outcomes = Vec::new();
        let mut records = Vec::new();
        for j in (0..n).filter(|&j| present[j]) {
            let (outcome, record) = self.site(id, j, &mut rng);
            if let Some(s) = outcome.survived {
                final_presence[j] = s;
            }
            outcomes.push(outcome);
            records.extend(record);
        }
        let seq = SequenceOutcome {
            sequence_id: id,
            present_initial: present,
            present_final: final_presence,
            trials: self.config.max_attempts,
        };
        (seq, outcomes, records)
    }

    fn site<R: Rng>(&self, id: u64, j: usize, rng: &mut R) -> (EntanglementOutcome, Option<DetectionRecord>) {
        let chain = self.chain;
        let transport = chain.eta_ext * chain.eta_net[j] * self.coupling.get(j, j) * chain.eta_fiber * chain.eta_det;
        let p_bg = chain.background_probability(j);
        for attempt in 0..self.config.max_attempts {
            let init_ok = rng.random::<f64>() < chain.p_init;
            let emits =
                (init_ok || self.imp.init_failure == InitFailure::Depolarized) && rng.random::<f64>() < transport;
            let atom_click = emits.then(|| {
                let det = if init_ok {
                    if rng.random::<f64>() < self.p_h {
                        Detector::H
                    } else {
                        Detector::V
                    }
                } else {
                    random_detector(rng)
                };
                (self.sampler.sample(rng), Origin::Atom, det)
            });
            let bg_click = (rng.random::<f64>() < p_bg)
                .then(|| (rng.random::<f64>() * chain.detection_window_ns, Origin::Background, random_detector(rng)));
            let click = match (atom_click, bg_click) {
                (Some(a), Some(b)) => Some(if b.0 < a.0 { b } else { a }),
                (a, None) => a,
                (None, b) => b,
            };
            let Some((ts, origin, det)) = click else { continue };

            let p_minus = if origin == Origin::Atom && init_ok {
                self.minus_given[if det == Detector::H { 0 } else { 1 }]
            } else {
                0.5
            };
            let minus = rng.random::<f64>() < p_minus;
            let kept = rng.random::<f64>() >= self.imp.heating_loss;
            let survived = kept && (minus || rng.random::<f64>() < self.imp.plus_survival());
            let outcome = EntanglementOutcome {
                sequence_id: id,
                site: j as u16,
                attempts: attempt + 1,
                herald: Some(det),
                survived: Some(survived),
            };
            let record = DetectionRecord {
                sequence_id: id,
                trial_id: attempt,
                channel: j as u16,
                detector: det,
                timestamp_ns: ts,
                origin,
            };
            return (outcome, Some(record));
        }
        let outcome = EntanglementOutcome {
            sequence_id: id,
            site: j as u16,
            attempts: self.config.max_attempts,
            herald: None,
            survived: None,
        };
        (outcome, None)
    }
}

fn random_detector<R: Rng>(rng: &mut R) -> Detector {
    if rng.random::<bool>() {
        Detector::H
    } else {
        Detector::V
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::EmissionProfile;

    fn sampler() -> EmissionSampler {
        EmissionSampler::new(&EmissionProfile { start_ns: 0.0, bin_ns: 1.0, weights: vec![1.0; 100] }).unwrap()
    }

    fn bright() -> ChannelChain {
        ChannelChain { eta_net: vec![0.5; 10], background_hz: vec![0.0; 10], ..Default::default() }
    }

    #[test]
    fn ideal_circular_analyzer_is_perfectly_correlated() {
        let cfg = SequenceConfig { sequences: 300, ..Default::default() };
        let an = Analyzer { kind: BasisKind::Circular, angle_rad: 0.0 };
        let run = run_entanglement_sequence(
            &cfg,
            &bright(),
            &CouplingMatrix::identity(10),
            &sampler(),
            an,
            &Imperfections::ideal(),
            &SeedTree::new(3),
        )
        .unwrap();
        let heralded: Vec<_> = run.outcomes.iter().filter(|o| o.herald.is_some()).collect();
        assert!(heralded.len() > 1000);
        for o in heralded {
            // H ↔ σ+ ↔ m = −1 kept
            assert_eq!(o.survived, Some(o.herald == Some(Detector::H)));
        }
        assert_eq!(run.records.len(), run.outcomes.iter().filter(|o| o.herald.is_some()).count());
    }

    #[test]
    fn attempts_are_capped() {
        let dark = ChannelChain { eta_net: vec![0.0; 10], background_hz: vec![0.0; 10], ..Default::default() };
        let cfg = SequenceConfig { sequences: 20, ..Default::default() };
        let an = Analyzer { kind: BasisKind::Linear, angle_rad: 0.3 };
        let run = run_entanglement_sequence(
            &cfg,
            &dark,
            &CouplingMatrix::identity(10),
            &sampler(),
            an,
            &Imperfections::default(),
            &SeedTree::new(3),
        )
        .unwrap();
        assert!(run.records.is_empty());
        assert!(run.outcomes.iter().all(|o| o.attempts == 30 && o.herald.is_none()));
    }

    #[test]
    fn plus_survival_value() {
        let p = Imperfections::default().plus_survival();
        assert!((p - 0.0961).abs() < 1e-4);
        assert_eq!(Imperfections::ideal().plus_survival(), 0.0);
    }
}
