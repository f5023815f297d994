//! Plain-text summary of a sweep.

use std::collections::BTreeSet;
use std::fmt::Write;

use smt_sim::Protocol;

use crate::experiment::AggregateResult;

/// Reference improvement band and target ratio printed in the footer.
pub const REFERENCE_IMPROVEMENT: (f64, f64) = (0.32, 1.50);
pub const REFERENCE_DELIVERY: f64 = 0.95;

fn find(agg: &[AggregateResult], p: Protocol, c: usize) -> Option<&AggregateResult> {
    agg.iter().find(|a| a.protocol == p && a.adversaries == c)
}

fn cell(a: Option<&AggregateResult>) -> String {
    match a {
        Some(a) => format!("{:.3} ± {:.3}", a.mean_delivery, a.std_delivery),
        None => "-".to_string(),
    }
}

/// Improvement of APS-SMT over NSP across the sweep, if NSP ran.
pub fn improvement_range(agg: &[AggregateResult]) -> Option<(f64, f64)> {
    let v: Vec<f64> = agg.iter().filter_map(|a| a.improvement).collect();
    if v.is_empty() {
        return None;
    }
    Some((v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
}

pub fn summarize(agg: &[AggregateResult]) -> String {
    let counts: BTreeSet<usize> = agg.iter().map(|a| a.adversaries).collect();
    let mut out = String::new();
    let _ = writeln!(out, "{:>11}  {:>15}  {:>15}  {:>11}  {:>9}", "adversaries", "APS-SMT", "NSP", "improvement", "runs");
    for c in counts {
        let aps = find(agg, Protocol::ApsSmt, c);
        let nsp = find(agg, Protocol::Nsp, c);
        let imp = aps.and_then(|a| a.improvement).map_or("N/A".to_string(), |i| format!("{:+.1}%", i * 100.0));
        let runs = aps.or(nsp).map_or(0, |a| a.runs);
        let _ = writeln!(out, "{c:>11}  {:>15}  {:>15}  {imp:>11}  {runs:>9}", cell(aps), cell(nsp));
    }
    match improvement_range(agg) {
        Some((lo, hi)) => {
            let _ = writeln!(out, "improvement over NSP: {:+.1}% .. {:+.1}%", lo * 100.0, hi * 100.0);
        }
        None => {
            let _ = writeln!(out, "improvement over NSP: N/A");
        }
    }
    let best = agg.iter().filter(|a| a.protocol == Protocol::ApsSmt).map(|a| a.mean_delivery).fold(None, |m: Option<f64>, d| {
        Some(m.map_or(d, |m| m.min(d)))
    });
    let _ = writeln!(
        out,
        "reference: improvement {:.0}%..{:.0}%, APS-SMT delivery {:.0}% (lowest observed {})",
        REFERENCE_IMPROVEMENT.0 * 100.0,
        REFERENCE_IMPROVEMENT.1 * 100.0,
        REFERENCE_DELIVERY * 100.0,
        best.map_or("N/A".to_string(), |b| format!("{:.1}%", b * 100.0)),
    );
    out
}
