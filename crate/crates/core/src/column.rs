//! Column semantic typing.
//!
//! A column is `date` when every non-blank cell parses as a date, `numeric`
//! when every non-blank cell parses as a number, and `index` when it is
//! numeric and its values step by exactly +1 from the first value. A column
//! of bare four-digit years is numeric: years only count as dates when the
//! column also holds at least one full calendar date.

use std::cmp::Ordering;
use std::fmt;
use std::sync::LazyLock;

use chrono::{Datelike, NaiveDate};
use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemanticType {
    Date,
    Numeric,
    Index,
    Text,
}

impl SemanticType {
    /// Date and numeric columns support min/max; index columns are row
    /// counters and are excluded.
    pub fn is_comparable(self) -> bool {
        matches!(self, SemanticType::Date | SemanticType::Numeric)
    }
}

impl fmt::Display for SemanticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SemanticType::Date => "date",
            SemanticType::Numeric => "numeric",
            SemanticType::Index => "index",
            SemanticType::Text => "text",
        })
    }
}

static NUMBER_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[+-]?(?:\d{1,3}(?:,\d{3})+|\d+)?(?:\.\d+)?$").expect("valid regex")
});
static YEAR_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d{4}$").expect("valid regex"));

const CURRENCY: &[char] = &['$', '€', '£', '¥', '₹'];

/// Parses a numeric cell: optional sign, thousands separators, decimals, and
/// one leading currency symbol. Any other text rejects the cell.
pub fn parse_number(text: &str) -> Option<f64> {
    let t = text.trim();
    let t = match t.chars().next() {
        Some(c) if CURRENCY.contains(&c) => &t[c.len_utf8()..],
        _ => t,
    };
    if t.is_empty() || !t.bytes().any(|b| b.is_ascii_digit()) || !NUMBER_RE.is_match(t) {
        return None;
    }
    t.replace(',', "").parse().ok()
}

/// Parses a full calendar date in one of the accepted formats:
/// `YYYY-MM-DD`, `Month D, YYYY`, `D Month YYYY`.
pub fn parse_full_date(text: &str) -> Option<NaiveDate> {
    let t = text.trim();
    for fmt in ["%Y-%m-%d", "%B %d, %Y", "%d %B %Y"] {
        if let Ok(d) = NaiveDate::parse_from_str(t, fmt) {
            return Some(d);
        }
    }
    None
}

/// A full date, or a bare year read as January 1.
pub fn parse_date(text: &str) -> Option<NaiveDate> {
    parse_full_date(text).or_else(|| {
        let t = text.trim();
        if YEAR_RE.is_match(t) {
            NaiveDate::from_ymd_opt(t.parse().ok()?, 1, 1)
        } else {
            None
        }
    })
}

/// Classifies a column from its cell texts. Total and deterministic.
pub fn classify_column<S: AsRef<str>>(cells: &[S]) -> SemanticType {
    let values: Vec<&str> = cells
        .iter()
        .map(|c| c.as_ref().trim())
        .filter(|c| !c.is_empty())
        .collect();
    if values.is_empty() {
        return SemanticType::Text;
    }
    let all_dates = values.iter().all(|v| parse_date(v).is_some());
    let any_full_date = values.iter().any(|v| parse_full_date(v).is_some());
    if all_dates && any_full_date {
        return SemanticType::Date;
    }
    let numbers: Option<Vec<f64>> = values.iter().map(|v| parse_number(v)).collect();
    match numbers {
        Some(nums) if is_consecutive(&nums) => SemanticType::Index,
        Some(_) => SemanticType::Numeric,
        None => SemanticType::Text,
    }
}

fn is_consecutive(nums: &[f64]) -> bool {
    nums.len() >= 2
        && nums.iter().all(|n| n.fract() == 0.0)
        && nums.windows(2).all(|w| w[1] - w[0] == 1.0)
}

/// A cell value under its column's ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TypedValue {
    Date(NaiveDate),
    Number(f64),
}

impl TypedValue {
    pub fn parse(text: &str, ty: SemanticType) -> Option<Self> {
        match ty {
            SemanticType::Date => parse_date(text).map(TypedValue::Date),
            SemanticType::Numeric | SemanticType::Index => parse_number(text).map(TypedValue::Number),
            SemanticType::Text => None,
        }
    }

    fn as_f64(self) -> f64 {
        match self {
            TypedValue::Date(d) => d.num_days_from_ce() as f64,
            TypedValue::Number(n) => n,
        }
    }
}

impl PartialOrd for TypedValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.as_f64().partial_cmp(&other.as_f64())
    }
}
