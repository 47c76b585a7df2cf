use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnovaResult {
    pub f_statistic: f64,
    pub p_value: f64,
    pub groups: usize,
    pub observations: usize,
    pub df_between: usize,
    pub df_within: usize,
}

/// Classical one-way ANOVA: between-group over within-group mean squares, with
/// the upper-tail probability of the F distribution.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    if groups.len() < 2 || groups.iter().any(|g| g.len() < 2) {
        return Err(Error::Contract(
            "one-way ANOVA needs at least two groups of at least two observations".into(),
        ));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Contract("ANOVA input contains a non-finite value".into()));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand).powi(2);
        ssw += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let scale = groups.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if ssw <= 1e-24 * scale * scale * n as f64 {
        return Err(Error::DegenerateVariance(
            "every group has zero within-group variance".into(),
        ));
    }
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    let f = (ssb / df_between as f64) / (ssw / df_within as f64);
    let dist = FisherSnedecor::new(df_between as f64, df_within as f64)
        .map_err(|e| Error::Contract(format!("F distribution: {e}")))?;
    let p = if f > 0.0 { dist.sf(f).clamp(0.0, 1.0) } else { 1.0 };
    Ok(AnovaResult {
        f_statistic: f,
        p_value: p,
        groups: groups.len(),
        observations: n,
        df_between,
        df_within,
    })
}
