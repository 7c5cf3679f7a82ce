//! One function per mode. Each returns its output files in memory; nothing
//! here touches the output directory.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use atomlink_core::analysis::{
    background_rate, conditional_probs, count_histogram, crosstalk_matrix, fit_fringe, fringe_plotdata,
    infer_net_coupling, profile_plotdata, survival_given_herald, table_one_csv, time_histogram, AnalysisError,
    FringeFit, Histogram,
};
use atomlink_core::bloch::{fit_profile, EmissionProfile, FitParams, ProfileModel};
use atomlink_core::holo::{argmax_scan, evaluate_mask, scan_grid, target_positions, wgs_synthesize};
use atomlink_core::planner::plan;
use atomlink_core::rng::SeedTree;
use atomlink_core::sim::{
    default_emission_profile, run_entanglement_sequence, run_fluorescence_sequence, run_scan_simulation, write_records,
    Analyzer, CouplingMatrix, DetectionRecord, Detector, EmissionSampler,
};
use rand_distr::{Distribution, Poisson};
use serde::Serialize;
use serde_json::json;

use crate::scenario::{CouplingSource, MaskFormat, Mode, Scenario};
use crate::{HarnessError, Outputs};

pub fn execute(mode: Mode, s: &Scenario, base: &Path) -> Result<Outputs, HarnessError> {
    match mode {
        Mode::Scan => scan(s),
        Mode::Fluorescence => fluorescence(s),
        Mode::Entanglement => entanglement(s),
        Mode::FitBloch => fit_bloch(s, base),
        Mode::FitFringe => fit_fringe_mode(s, base),
        Mode::Wgs => wgs(s),
        Mode::Plan => plan_mode(s),
    }
}

fn seeds(s: &Scenario) -> Result<SeedTree, HarnessError> {
    s.seed.map(SeedTree::new).ok_or_else(|| HarnessError::Schema("seed: missing".into()))
}

fn json_bytes<T: Serialize + ?Sized>(v: &T) -> Result<Vec<u8>, HarnessError> {
    let mut out = serde_json::to_vec_pretty(v).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

fn jsonl_bytes<T: Serialize>(items: &[T]) -> Result<Vec<u8>, HarnessError> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, it).map_err(|e| HarnessError::Runtime(e.to_string()))?;
        out.push(b'\n');
    }
    Ok(out)
}

fn records_bytes(records: &[DetectionRecord]) -> Result<Vec<u8>, HarnessError> {
    let mut out = Vec::new();
    write_records(&mut out, records)?;
    Ok(out)
}

fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("counts,occurrences\n");
    for (k, c) in h.counts.iter().enumerate() {
        let _ = writeln!(out, "{},{c}", h.start + k as f64 * h.bin);
    }
    out
}

fn scan(s: &Scenario) -> Result<Outputs, HarnessError> {
    let seeds = seeds(s)?;
    let b = &s.scan;
    let grid = scan_grid(&s.layout, b.extent_um, b.steps, b.plane);
    let optimum = s.layout.shifted(b.optimum_offset_um);
    let points = run_scan_simulation(&grid, &optimum, &s.optics, &b.collection(), &seeds)?;
    let totals: Vec<f64> = points.iter().map(|p| p.total as f64).collect();
    let (best, best_total) = argmax_scan(&totals).ok_or_else(|| HarnessError::Runtime("empty scan grid".into()))?;
    let planted = grid.iter().position(|l| (0..3).all(|k| (l.r_ref[k] - optimum.r_ref[k]).abs() < 1e-9));

    let mut out = Outputs::new();
    let width = (grid.len().max(1) - 1).to_string().len().max(2);
    for p in &points {
        let h = count_histogram(&p.counts, b.histogram_bin);
        out.insert(format!("histograms/layout_{:0width$}.csv", p.index), histogram_csv(&h).into_bytes());
    }
    // the xy grid is row-major with y slow; a z scan is one row
    let cols = if grid.len() == b.steps * b.steps && b.steps > 1 { b.steps } else { grid.len() };
    let mut map = String::new();
    for row in totals.chunks(cols) {
        let line: Vec<String> = row.iter().map(|t| format!("{t}")).collect();
        let _ = writeln!(map, "{}", line.join(","));
    }
    out.insert("map.csv".into(), map.into_bytes());
    let summary = json!({
        "layouts": grid.len(),
        "best_index": best,
        "best_total": best_total,
        "best_r_ref_um": grid[best].r_ref,
        "planted_index": planted,
        "planted_r_ref_um": optimum.r_ref,
        "recovered": planted == Some(best),
    });
    out.insert("summary.json".into(), json_bytes(&summary)?);
    Ok(out)
}

fn coupling(s: &Scenario) -> Result<CouplingMatrix, HarnessError> {
    let n = s.sequence.n_sites;
    let base = match s.fluorescence.coupling {
        CouplingSource::Identity => CouplingMatrix::identity(n),
        CouplingSource::Optics => CouplingMatrix::from_optics(&s.layout, &s.optics, s.fluorescence.misalignment_um),
    };
    if s.fluorescence.inject.is_empty() {
        return Ok(base);
    }
    let mut rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| base.get(i, j)).collect()).collect();
    for inj in &s.fluorescence.inject {
        rows[inj.channel][inj.site] = inj.value;
    }
    Ok(CouplingMatrix::from_rows(rows)?)
}

fn fluorescence(s: &Scenario) -> Result<Outputs, HarnessError> {
    let seeds = seeds(s)?;
    let profile = default_emission_profile()?;
    let sampler = EmissionSampler::new(&profile)?;
    let run = run_fluorescence_sequence(&s.sequence, &s.chain, &coupling(s)?, &sampler, &seeds)?;
    let probs = conditional_probs(&run.records, &run.sequences, run.window_ns)?;
    let background = match background_rate(&run.records, &run.sequences, run.slot_ns, s.fluorescence.pulse_time_ns) {
        Ok(b) => Some(b),
        Err(AnalysisError::SlotTooShort { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let xt = crosstalk_matrix(&run.records, &run.sequences, run.window_ns)?;

    let mut out = Outputs::new();
    out.insert("detections.jsonl".into(), records_bytes(&run.records)?);
    out.insert("sequences.jsonl".into(), jsonl_bytes(&run.sequences)?);
    out.insert("table1.csv".into(), table_one_csv(&probs, &s.chain, background.as_deref()).into_bytes());

    let mut xcsv = String::new();
    for row in &xt.entries {
        let line: Vec<String> = row.iter().map(|e| e.value.map(|v| format!("{v:.6e}")).unwrap_or_default()).collect();
        let _ = writeln!(xcsv, "{}", line.join(","));
    }
    out.insert("crosstalk.csv".into(), xcsv.into_bytes());

    let nb = s.fluorescence.profile_bins;
    let hist = time_histogram(run.records.iter().map(|r| r.timestamp_ns), 0.0, profile.bin_ns, nb);
    let total = hist.total() as f64;
    let model: Vec<f64> = (0..nb).map(|k| profile.weights.get(k).copied().unwrap_or(0.0) * total).collect();
    out.insert("profile.csv".into(), profile_plotdata(&hist, Some(&model)).into_bytes());

    let channels: Vec<_> = (0..run.n_channels)
        .map(|i| {
            let p = probs.present[i].value();
            json!({
                "channel": i + 1,
                "p_present": p,
                "p_present_se": probs.present[i].std_error(),
                "p_absent": probs.absent[i].value(),
                "eta_net": p.and_then(|p| infer_net_coupling(p, &s.chain).ok()),
                "background_hz": background.as_ref().and_then(|b| b[i].hz()),
            })
        })
        .collect();
    let summary = json!({
        "sequences": run.sequences.len(),
        "records": run.records.len(),
        "window_ns": run.window_ns,
        "slot_ns": run.slot_ns,
        "max_crosstalk": xt.max_off_diagonal(),
        "channels": channels,
    });
    out.insert("summary.json".into(), json_bytes(&summary)?);
    Ok(out)
}

fn entanglement(s: &Scenario) -> Result<Outputs, HarnessError> {
    let seeds = seeds(s)?;
    let sampler = EmissionSampler::new(&default_emission_profile()?)?;
    let coupling = coupling(s)?;
    let e = &s.entanglement;
    let angles: Vec<f64> = (0..e.angles).map(|k| k as f64 * PI / e.angles as f64).collect();
    let mut records = Vec::new();
    let mut h = Vec::with_capacity(angles.len());
    let mut v = Vec::with_capacity(angles.len());
    for (k, &theta) in angles.iter().enumerate() {
        let analyzer = Analyzer { kind: e.basis, angle_rad: theta };
        let child = seeds.child("angle", k as u64);
        let run =
            run_entanglement_sequence(&s.sequence, &s.chain, &coupling, &sampler, analyzer, &s.imperfections, &child)?;
        // sequence ids stay unique across the sweep
        let offset = k as u64 * s.sequence.sequences;
        records.extend(run.records.into_iter().map(|r| DetectionRecord { sequence_id: r.sequence_id + offset, ..r }));
        let sh = survival_given_herald(&run.outcomes, Detector::H);
        let sv = survival_given_herald(&run.outcomes, Detector::V);
        h.push((sh.successes, sh.attempts));
        v.push((sv.successes, sv.attempts));
    }
    let fit_h = fit_fringe(&angles, &h, e.angle_factor)?;
    let fit_v = fit_fringe(&angles, &v, e.angle_factor)?;

    let mut out = Outputs::new();
    out.insert("detections.jsonl".into(), records_bytes(&records)?);
    let mut surv = String::from("angle_rad,h_survived,h_heralds,v_survived,v_heralds\n");
    for ((t, a), b) in angles.iter().zip(&h).zip(&v) {
        let _ = writeln!(surv, "{t:.6},{},{},{},{}", a.0, a.1, b.0, b.1);
    }
    out.insert("survival.csv".into(), surv.into_bytes());
    out.insert("fringe_H.csv".into(), fringe_plotdata(&angles, &h, Some(&fit_h)).into_bytes());
    out.insert("fringe_V.csv".into(), fringe_plotdata(&angles, &v, Some(&fit_v)).into_bytes());
    let fit = json!({ "basis": e.basis, "angle_factor": e.angle_factor, "H": fit_h, "V": fit_v });
    out.insert("fit.json".into(), json_bytes(&fit)?);
    Ok(out)
}

/// Numeric columns of a small CSV; a non-numeric first line is a header.
fn read_columns(path: &Path, field: &str, ncols: usize) -> Result<Vec<Vec<f64>>, HarnessError> {
    let file = fs::File::open(path).map_err(|e| HarnessError::io(format!("reading {}", path.display()), e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::Schema(format!("{field}: {e}")))?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        let vals: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match vals {
            Ok(v) if v.len() == ncols => rows.push(v),
            // header
            Err(_) if i == 0 => continue,
            _ => return Err(HarnessError::Schema(format!("{field}: line {line}: expected {ncols} numbers"))),
        }
    }
    Ok(rows)
}

fn fit_bloch(s: &Scenario, base: &Path) -> Result<Outputs, HarnessError> {
    let b = &s.fit_bloch;
    let mut model = ProfileModel::smoothed_square(b.rise_time_ns);
    model.free = b.free;
    let observed = match &b.input {
        Some(p) => {
            let rows = read_columns(&base.join(p), "fit_bloch.input", 2)?;
            if rows.len() < 2 {
                return Err(HarnessError::Schema("fit_bloch.input: need at least two bins".into()));
            }
            // rows are bin centers on a uniform axis
            let bin = rows[1][0] - rows[0][0];
            let uniform = rows.windows(2).all(|w| ((w[1][0] - w[0][0]) - bin).abs() < 1e-6 * bin.abs().max(1.0));
            if !(bin > 0.0) || !uniform {
                return Err(HarnessError::Schema("fit_bloch.input: times must be uniformly increasing".into()));
            }
            EmissionProfile {
                start_ns: rows[0][0] - 0.5 * bin,
                bin_ns: bin,
                weights: rows.iter().map(|r| r[1]).collect(),
            }
        }
        None => {
            let truth = truth_params(b.truth_center_ns);
            let shape = model.profile(&truth, 0.0, b.bin_ns, b.n_bins)?;
            let mut rng = seeds(s)?.stream("fit-bloch/noise", 0);
            let weights = shape
                .weights
                .iter()
                .map(|w| {
                    let mean = w * b.synthetic_counts as f64;
                    if mean > 0.0 {
                        Poisson::new(mean).map(|d| d.sample(&mut rng)).unwrap_or(0.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            EmissionProfile { weights, ..shape }
        }
    };
    let fit = fit_profile(&observed, &model, None)?;
    let n = observed.weights.len();
    let best = model.profile(&fit.params, observed.start_ns, observed.bin_ns, n)?;
    let total = observed.total();

    let mut out = Outputs::new();
    let result = json!({
        "params": fit.params,
        "std_errors": fit.std_errors,
        "cost": fit.cost,
        "iterations": fit.iterations,
        "free": b.free,
        "counts": total,
        "synthetic": b.input.is_none(),
    });
    out.insert("fit.json".into(), json_bytes(&result)?);
    let hist = Histogram {
        start: observed.start_ns,
        bin: observed.bin_ns,
        counts: observed.weights.iter().map(|w| w.round().max(0.0) as u64).collect(),
        outside: 0,
    };
    let model_counts: Vec<f64> = best.weights.iter().map(|w| w * total).collect();
    out.insert("profile.csv".into(), profile_plotdata(&hist, Some(&model_counts)).into_bytes());
    let mut trace = String::from("step,cost,lambda,fwhm_ns,peak_rabi,detuning,dephasing,center_ns\n");
    for (k, tp) in fit.trace.iter().enumerate() {
        let p: Vec<String> = tp.params.iter().map(|x| format!("{x:.9e}")).collect();
        let _ = writeln!(trace, "{k},{:.9e},{:.3e},{}", tp.cost, tp.lambda, p.join(","));
    }
    out.insert("trace.csv".into(), trace.into_bytes());
    Ok(out)
}

/// Reference drive used for synthetic fit-bloch data.
pub fn truth_params(center_ns: f64) -> FitParams {
    let (spec, detuning, dephasing) = atomlink_core::bloch::reference_pulse(center_ns);
    FitParams { fwhm_ns: spec.fwhm_ns, peak_rabi: spec.peak_rabi, detuning, dephasing, center_ns }
}

fn fit_fringe_mode(s: &Scenario, base: &Path) -> Result<Outputs, HarnessError> {
    let f = &s.fit_fringe;
    let (angles, surv): (Vec<f64>, Vec<(u64, u64)>) = match &f.input {
        Some(p) => read_columns(&base.join(p), "fit_fringe.input", 3)?
            .into_iter()
            .map(|r| (r[0], (r[1].max(0.0) as u64, r[2].max(0.0) as u64)))
            .unzip(),
        None => (f.angles.clone(), f.successes.iter().copied().zip(f.trials.iter().copied()).collect()),
    };
    if surv.iter().any(|(k, n)| k > n) {
        return Err(HarnessError::Schema("fit_fringe: successes exceed trials".into()));
    }
    let fit: FringeFit = fit_fringe(&angles, &surv, f.angle_factor)?;
    let mut out = Outputs::new();
    out.insert("fit.json".into(), json_bytes(&fit)?);
    out.insert("fringe.csv".into(), fringe_plotdata(&angles, &surv, Some(&fit)).into_bytes());
    Ok(out)
}

fn wgs(s: &Scenario) -> Result<Outputs, HarnessError> {
    let seeds = seeds(s)?;
    let targets: Vec<[f64; 2]> = target_positions(&s.layout).iter().map(|r| [r[0], r[1]]).collect();
    let (mask, metrics) = wgs_synthesize(&targets, &s.wgs.config(), &seeds)?;
    // independent forward propagation of the saved mask
    let check = evaluate_mask(&mask, &targets)?;

    let mut out = Outputs::new();
    let mut buf = Vec::new();
    let name = match s.wgs.mask_format {
        MaskFormat::Text => {
            mask.write_text(&mut buf)?;
            "mask.txt"
        }
        MaskFormat::Binary => {
            mask.write_binary(&mut buf)?;
            "mask.bin"
        }
    };
    out.insert(name.into(), buf);
    let m = json!({
        "grid": mask.n,
        "pitch_um": mask.pitch_um,
        "iterations": s.wgs.iterations,
        "uniformity": check.uniformity,
        "efficiency": check.efficiency,
        "uniformity_history": metrics.uniformity_history,
    });
    out.insert("metrics.json".into(), json_bytes(&m)?);
    let mut spots = String::from("spot,x_um,y_um,intensity\n");
    for (i, (t, v)) in targets.iter().zip(&check.intensities).enumerate() {
        let _ = writeln!(spots, "{i},{},{},{v:.9e}", t[0], t[1]);
    }
    out.insert("spots.csv".into(), spots.into_bytes());
    Ok(out)
}

fn plan_mode(s: &Scenario) -> Result<Outputs, HarnessError> {
    let report = plan(&s.plan)?;
    let mut out = Outputs::new();
    out.insert("plan.csv".into(), report.render().into_bytes());
    out.insert("plan.json".into(), json_bytes(&report)?);
    Ok(out)
}
