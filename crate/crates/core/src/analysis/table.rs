use std::fmt::Write;

use super::{infer_net_coupling, ConditionalProbs, FringeFit, Histogram, RateEstimate};
use crate::sim::ChannelChain;

pub const TABLE_ROW_LABELS: [&str; 5] =
    ["P(p_i|a_i)x10^3", "eta_net", "P(p_i|~a_i)x10^6", "P(p_i|~a_i)/P(p_i|a_i)", "background_Hz"];

fn cell(v: Option<f64>, digits: usize) -> String {
    v.filter(|x| x.is_finite()).map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

/// Five-row, per-channel summary. Undefined entries are left blank.
pub fn table_one_csv(probs: &ConditionalProbs, chain: &ChannelChain, background: Option<&[RateEstimate]>) -> String {
    let n = probs.present.len();
    let mut out = String::from("quantity");
    for i in 1..=n {
        let _ = write!(out, ",ch{i}");
    }
    out.push('\n');
    if n == 0 {
        return out;
    }
    let present: Vec<Option<f64>> = probs.present.iter().map(|e| e.value()).collect();
    let absent: Vec<Option<f64>> = probs.absent.iter().map(|e| e.value()).collect();
    let rows: [Vec<String>; 5] = [
        present.iter().map(|p| cell(p.map(|p| p * 1e3), 2)).collect(),
        present.iter().map(|p| cell(p.and_then(|p| infer_net_coupling(p, chain).ok()), 4)).collect(),
        absent.iter().map(|p| cell(p.map(|p| p * 1e6), 2)).collect(),
        present
            .iter()
            .zip(&absent)
            .map(|(p, q)| cell(p.zip(*q).filter(|(p, _)| *p > 0.0).map(|(p, q)| q / p), 4))
            .collect(),
        (0..n).map(|i| cell(background.and_then(|b| b.get(i)).and_then(|r| r.hz()), 1)).collect(),
    ];
    for (label, row) in TABLE_ROW_LABELS.iter().zip(rows) {
        let _ = writeln!(out, "{label},{}", row.join(","));
    }
    out
}

/// `angle_rad,survival[,fit]` sorted by angle.
pub fn fringe_plotdata(angles: &[f64], survivals: &[(u64, u64)], fit: Option<&FringeFit>) -> String {
    let mut rows: Vec<(f64, f64)> = angles
        .iter()
        .zip(survivals)
        .filter(|(_, (_, n))| *n > 0)
        .map(|(&t, &(s, n))| (t, s as f64 / n as f64))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = String::from(if fit.is_some() { "angle_rad,survival,fit\n" } else { "angle_rad,survival\n" });
    for (t, y) in rows {
        match fit {
            Some(f) => writeln!(out, "{t:.6},{y:.6},{:.6}", f.eval(t).clamp(0.0, 1.0)),
            None => writeln!(out, "{t:.6},{y:.6}"),
        }
        .ok();
    }
    out
}

/// `time_ns,counts[,model]` at bin centers.
pub fn profile_plotdata(hist: &Histogram, model: Option<&[f64]>) -> String {
    let mut out = String::from(if model.is_some() { "time_ns,counts,model\n" } else { "time_ns,counts\n" });
    for (k, c) in hist.counts.iter().enumerate() {
        let t = hist.start + (k as f64 + 0.5) * hist.bin;
        match model.and_then(|m| m.get(k)) {
            Some(m) => writeln!(out, "{t:.3},{c},{m:.6}"),
            None if model.is_some() => writeln!(out, "{t:.3},{c},"),
            None => writeln!(out, "{t:.3},{c}"),
        }
        .ok();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::Estimate;

    #[test]
    fn layout_and_blank_cells() {
        let probs = ConditionalProbs {
            present: vec![Estimate::new(34, 10_000), Estimate::new(0, 0)],
            absent: vec![Estimate::new(1, 200_000), Estimate::new(0, 5)],
        };
        let csv = table_one_csv(&probs, &ChannelChain::default(), None);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "quantity,ch1,ch2");
        assert_eq!(lines[1], "P(p_i|a_i)x10^3,3.40,");
        assert_eq!(lines[3], "P(p_i|~a_i)x10^6,5.00,0.00");
        assert_eq!(lines[5], "background_Hz,,");
        let empty = ConditionalProbs { present: vec![], absent: vec![] };
        assert_eq!(table_one_csv(&empty, &ChannelChain::default(), None), "quantity\n");
    }

    #[test]
    fn fringe_rows_sorted() {
        let s = fringe_plotdata(&[0.5, 0.1, 0.3], &[(1, 2), (2, 2), (0, 2)], None);
        let ang: Vec<f64> = s.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert_eq!(ang, vec![0.1, 0.3, 0.5]);
    }
}
