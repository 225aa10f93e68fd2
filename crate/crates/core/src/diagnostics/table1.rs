use super::errors::DiagnosticsRecord;
use crate::error::{IqnError, Result};

/// Summary of the error-sum dynamics over consecutive snapshot pairs.
/// Percentages are in `[0, 100]`; `None` marks an empty denominator.
#[derive(Clone, Debug, PartialEq)]
pub struct Table1Metrics {
    pub pairs: usize,
    /// % of pairs where `CSAE(t + 1) > CSAE(t)`.
    pub pct_csae_increase: f64,
    /// Mean of `CSAE(t) − CSAE(t + 1)`.
    pub mean_csae_decrease: f64,
    /// % of pairs satisfying `eq5` for all `k` on which `eq6` holds.
    pub pct_eq6_given_eq5: Option<f64>,
    /// Decrease accumulated on all-`k` `eq5` pairs over the summed positive
    /// decreases of all pairs, in %.
    pub decrease_share_eq5: Option<f64>,
    /// % of decreasing pairs on which `eq5` holds for all `k`.
    pub count_share_eq5: Option<f64>,
    pub eq5_pairs: usize,
    /// `eq5` pairs on which `eq6` fails; non-zero only through a bug.
    pub eq5_without_eq6: usize,
}

fn percent(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| 100.0 * (num / den))
}

pub fn table1_metrics(records: &[DiagnosticsRecord]) -> Result<Table1Metrics> {
    if records.is_empty() {
        return Err(IqnError::input("CSAE metrics need at least one snapshot pair"));
    }
    let n = records.len();
    let increases = records.iter().filter(|r| r.next_csae() > r.csae()).count();
    let mean_decrease = records.iter().map(|r| r.decrease()).sum::<f64>() / n as f64;
    let eq5: Vec<&DiagnosticsRecord> = records.iter().filter(|r| r.outcome.all_eq5()).collect();
    let eq5_with_eq6 = eq5.iter().filter(|r| r.outcome.eq6).count();
    let eq5_decrease: f64 = eq5.iter().map(|r| r.decrease()).sum();
    let positive_decrease: f64 = records.iter().map(|r| r.decrease().max(0.0)).sum();
    let decreasing = records.iter().filter(|r| r.decrease() > 0.0).count();
    let decreasing_eq5 = eq5.iter().filter(|r| r.decrease() > 0.0).count();
    Ok(Table1Metrics {
        pairs: n,
        pct_csae_increase: 100.0 * increases as f64 / n as f64,
        mean_csae_decrease: mean_decrease,
        pct_eq6_given_eq5: percent(eq5_with_eq6 as f64, eq5.len() as f64),
        decrease_share_eq5: percent(eq5_decrease, positive_decrease),
        count_share_eq5: percent(decreasing_eq5 as f64, decreasing as f64),
        eq5_pairs: eq5.len(),
        eq5_without_eq6: eq5.len() - eq5_with_eq6,
    })
}
