use std::collections::BTreeMap;

use serde::Serialize;

use super::anova::one_way_anova;
use super::sti::StiCategory;
use crate::stats;

/// Method name of the unprocessed baseline in reports.
pub const UNPROCESSED: &str = "unprocessed";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRecord {
    pub utterance: String,
    pub noise: String,
    pub snr_db: f64,
    pub method: String,
    pub estoi: f64,
    /// `estoi` minus the unprocessed score of the same cell.
    pub delta_estoi: f64,
    pub sti_category: StiCategory,
    /// Filled only when an external PESQ tool is configured.
    pub pesq: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

impl SummaryStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Self {
            n: s.len(),
            mean: stats::mean(&s),
            median: stats::median_sorted(&s),
            q1: stats::quantile_sorted(&s, 0.25),
            q3: stats::quantile_sorted(&s, 0.75),
            min: s[0],
            max: s[s.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub noise: String,
    pub snr_db: f64,
    pub method: String,
    pub metric: &'static str,
    pub stats: SummaryStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaRow {
    pub noise: String,
    pub snr_db: f64,
    pub metric: &'static str,
    /// `None` when the test is undefined for the cell (e.g. zero variance).
    pub f_stat: Option<f64>,
    pub p_value: Option<f64>,
}

/// Orders `f64` keys totally so records group and sort deterministically.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Snr(f64);

impl Eq for Snr {}

impl PartialOrd for Snr {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Snr {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

type Cell<'a> = (&'a str, Snr);

fn by_cell_and_method(records: &[EvalRecord]) -> BTreeMap<Cell<'_>, BTreeMap<&str, Vec<&EvalRecord>>> {
    let mut map: BTreeMap<Cell<'_>, BTreeMap<&str, Vec<&EvalRecord>>> = BTreeMap::new();
    for r in records {
        map.entry((r.noise.as_str(), Snr(r.snr_db)))
            .or_default()
            .entry(r.method.as_str())
            .or_default()
            .push(r);
    }
    map
}

/// Per (noise, SNR, method) statistics of ESTOI and ΔESTOI, sorted by noise,
/// SNR, method, metric.
pub fn summarize(records: &[EvalRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for ((noise, snr), methods) in by_cell_and_method(records) {
        for (method, recs) in methods {
            let metrics: [(&'static str, Vec<f64>); 2] = [
                ("delta_estoi", recs.iter().map(|r| r.delta_estoi).collect()),
                ("estoi", recs.iter().map(|r| r.estoi).collect()),
            ];
            for (metric, values) in metrics {
                if let Some(stats) = SummaryStats::of(&values) {
                    rows.push(SummaryRow {
                        noise: noise.to_string(),
                        snr_db: snr.0,
                        method: method.to_string(),
                        metric,
                        stats,
                    });
                }
            }
        }
    }
    rows
}

/// One-way ANOVA across methods per (noise, SNR): on ESTOI over every method,
/// and on ΔESTOI over the enhancement methods when there are at least two.
pub fn anova_rows(records: &[EvalRecord]) -> Vec<AnovaRow> {
    let mut rows = Vec::new();
    for ((noise, snr), methods) in by_cell_and_method(records) {
        let estoi: Vec<Vec<f64>> = methods.values().map(|rs| rs.iter().map(|r| r.estoi).collect()).collect();
        let delta: Vec<Vec<f64>> = methods
            .iter()
            .filter(|(m, _)| **m != UNPROCESSED)
            .map(|(_, rs)| rs.iter().map(|r| r.delta_estoi).collect())
            .collect();
        for (metric, groups) in [("delta_estoi", delta), ("estoi", estoi)] {
            if groups.len() < 2 {
                continue;
            }
            let (f_stat, p_value) = match one_way_anova(&groups) {
                Ok(r) => (Some(r.f_statistic), Some(r.p_value)),
                Err(e) => {
                    log::warn!("ANOVA on {metric} for {noise} at {} dB undefined: {e}", snr.0);
                    (None, None)
                }
            };
            rows.push(AnovaRow {
                noise: noise.to_string(),
                snr_db: snr.0,
                metric,
                f_stat,
                p_value,
            });
        }
    }
    rows
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn write_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("fields are UTF-8")
}

/// `utterance,noise,snr_db,method,estoi,delta_estoi,sti_category`, plus a
/// `pesq` column when any record carries one.
pub fn records_to_csv(records: &[EvalRecord]) -> String {
    let with_pesq = records.iter().any(|r| r.pesq.is_some());
    let mut header = vec!["utterance", "noise", "snr_db", "method", "estoi", "delta_estoi", "sti_category"];
    if with_pesq {
        header.push("pesq");
    }
    write_csv(
        &header,
        records.iter().map(|r| {
            let mut row = vec![
                r.utterance.clone(),
                r.noise.clone(),
                r.snr_db.to_string(),
                r.method.clone(),
                num(r.estoi),
                num(r.delta_estoi),
                r.sti_category.to_string(),
            ];
            if with_pesq {
                row.push(opt(r.pesq));
            }
            row
        }),
    )
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    write_csv(
        &["noise", "snr_db", "method", "metric", "n", "mean", "median", "q1", "q3", "min", "max"],
        rows.iter().map(|r| {
            let s = &r.stats;
            vec![
                r.noise.clone(),
                r.snr_db.to_string(),
                r.method.clone(),
                r.metric.to_string(),
                s.n.to_string(),
                num(s.mean),
                num(s.median),
                num(s.q1),
                num(s.q3),
                num(s.min),
                num(s.max),
            ]
        }),
    )
}

/// `noise,snr_db,metric,f_stat,p_value`; undefined tests leave both empty.
pub fn anova_to_csv(rows: &[AnovaRow]) -> String {
    write_csv(
        &["noise", "snr_db", "metric", "f_stat", "p_value"],
        rows.iter().map(|r| {
            vec![
                r.noise.clone(),
                r.snr_db.to_string(),
                r.metric.to_string(),
                opt(r.f_stat),
                opt(r.p_value),
            ]
        }),
    )
}
