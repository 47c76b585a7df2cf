//! Objective scoring: ESTOI, STI-style categories, one-way ANOVA and the
//! aggregate report tables.

mod anova;
mod estoi;
mod report;
mod sti;

pub use anova::{one_way_anova, AnovaResult};
pub use estoi::{estoi, estoi_samples, third_octave_bands, EstoiConfig, EstoiReference, EstoiScore};
pub use report::{
    anova_rows, anova_to_csv, records_to_csv, summarize, summary_to_csv, AnovaRow, EvalRecord, SummaryRow, UNPROCESSED,
    SummaryStats,
};
pub use sti::{sti_category, StiCategory};
