use std::fmt;

use serde::Serialize;

/// Intelligibility category of an ESTOI score. Boundaries are
/// lower-inclusive: 0.30, 0.45, 0.60, 0.75.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StiCategory {
    Bad,
    Poor,
    Fair,
    Good,
    Excellent,
}

impl StiCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            StiCategory::Bad => "bad",
            StiCategory::Poor => "poor",
            StiCategory::Fair => "fair",
            StiCategory::Good => "good",
            StiCategory::Excellent => "excellent",
        }
    }
}

impl fmt::Display for StiCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn sti_category(score: f64) -> StiCategory {
    if score >= 0.75 {
        StiCategory::Excellent
    } else if score >= 0.60 {
        StiCategory::Good
    } else if score >= 0.45 {
        StiCategory::Fair
    } else if score >= 0.30 {
        StiCategory::Poor
    } else {
        // NaN lands here as well
        StiCategory::Bad
    }
}
