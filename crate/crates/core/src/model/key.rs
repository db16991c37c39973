//! Ground key values.
//!
//! Key fields are always known. Each key column carries one [`KeyType`] and
//! every value stored in it is the matching [`KeyValue`] variant.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use ordered_float::OrderedFloat;

use super::ModelError;

/// Type of a key column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyType {
    Text,
    Integer,
    Decimal,
    Date,
    Week,
}

impl KeyType {
    pub fn name(self) -> &'static str {
        match self {
            KeyType::Text => "text",
            KeyType::Integer => "int",
            KeyType::Decimal => "decimal",
            KeyType::Date => "date",
            KeyType::Week => "week",
        }
    }

    /// Whether values of this type can be read as a real number inside a
    /// derivation expression.
    pub fn is_numeric(self) -> bool {
        matches!(self, KeyType::Integer | KeyType::Decimal)
    }

    /// Whether `A := A ± n` is defined on this type.
    pub fn is_shiftable(self) -> bool {
        matches!(self, KeyType::Integer | KeyType::Date | KeyType::Week)
    }
}

impl fmt::Display for KeyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KeyType {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" | "string" => Ok(KeyType::Text),
            "int" | "integer" => Ok(KeyType::Integer),
            "decimal" | "real" => Ok(KeyType::Decimal),
            "date" => Ok(KeyType::Date),
            "week" => Ok(KeyType::Week),
            other => Err(ModelError::UnknownKeyType(other.to_string())),
        }
    }
}

/// ISO-8601 week: year plus week number (1..=52 or 53).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IsoWeek {
    pub year: i32,
    pub week: u32,
}

impl IsoWeek {
    pub fn new(year: i32, week: u32) -> Result<Self, ModelError> {
        NaiveDate::from_isoywd_opt(year, week, Weekday::Mon)
            .map(|_| IsoWeek { year, week })
            .ok_or_else(|| ModelError::InvalidKey(format!("{year}W{week:02}")))
    }

    fn monday(self) -> NaiveDate {
        NaiveDate::from_isoywd_opt(self.year, self.week, Weekday::Mon)
            .expect("IsoWeek is validated on construction")
    }

    /// Moves by `weeks`, rolling over ISO years (which have 52 or 53 weeks).
    pub fn shift(self, weeks: i64) -> Result<Self, ModelError> {
        let monday = self.monday();
        let moved = if weeks >= 0 {
            monday.checked_add_days(Days::new(7 * weeks as u64))
        } else {
            monday.checked_sub_days(Days::new(7 * weeks.unsigned_abs()))
        }
        .ok_or_else(|| ModelError::InvalidKey(format!("{self} shifted by {weeks}")))?;
        let iso = moved.iso_week();
        Ok(IsoWeek {
            year: iso.year(),
            week: iso.week(),
        })
    }
}

impl fmt::Display for IsoWeek {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}W{:02}", self.year, self.week)
    }
}

impl FromStr for IsoWeek {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::InvalidKey(s.to_string());
        let (y, w) = s.split_once(['W', 'w']).ok_or_else(bad)?;
        let year: i32 = y.trim_end_matches('-').parse().map_err(|_| bad())?;
        let week: u32 = w.parse().map_err(|_| bad())?;
        IsoWeek::new(year, week)
    }
}

/// A ground value of the key domain.
///
/// Equality and order are total within one variant. The derived `Ord` also
/// orders across variants (by variant) so tuples can key ordered maps;
/// predicate evaluation uses [`KeyValue::try_cmp`], which rejects mixed
/// variants.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyValue {
    Text(String),
    Integer(i64),
    Decimal(OrderedFloat<f64>),
    /// Days since 1970-01-01.
    Date(i32),
    Week(IsoWeek),
}

impl KeyValue {
    pub fn key_type(&self) -> KeyType {
        match self {
            KeyValue::Text(_) => KeyType::Text,
            KeyValue::Integer(_) => KeyType::Integer,
            KeyValue::Decimal(_) => KeyType::Decimal,
            KeyValue::Date(_) => KeyType::Date,
            KeyValue::Week(_) => KeyType::Week,
        }
    }

    pub fn text(s: impl Into<String>) -> Self {
        KeyValue::Text(s.into())
    }

    pub fn decimal(v: f64) -> Self {
        KeyValue::Decimal(OrderedFloat(v))
    }

    pub fn date(d: NaiveDate) -> Self {
        KeyValue::Date((d - epoch()).num_days() as i32)
    }

    pub fn week(year: i32, week: u32) -> Result<Self, ModelError> {
        IsoWeek::new(year, week).map(KeyValue::Week)
    }

    pub fn try_cmp(&self, other: &KeyValue) -> Result<Ordering, ModelError> {
        if self.key_type() != other.key_type() {
            return Err(ModelError::CrossTypeComparison(
                self.key_type(),
                other.key_type(),
            ));
        }
        Ok(self.cmp(other))
    }

    /// Numeric reading of integer and decimal keys.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            KeyValue::Integer(i) => Some(*i as f64),
            KeyValue::Decimal(d) => Some(d.0),
            _ => None,
        }
    }

    pub fn shift(&self, delta: i64) -> Result<KeyValue, ModelError> {
        match self {
            KeyValue::Integer(i) => i
                .checked_add(delta)
                .map(KeyValue::Integer)
                .ok_or_else(|| ModelError::InvalidKey(format!("{i} + {delta}"))),
            KeyValue::Date(d) => i32::try_from(*d as i64 + delta)
                .map(KeyValue::Date)
                .map_err(|_| ModelError::InvalidKey(format!("date {d} + {delta}"))),
            KeyValue::Week(w) => w.shift(delta).map(KeyValue::Week),
            other => Err(ModelError::NotShiftable(other.key_type())),
        }
    }

    /// Parses `raw` as a value of type `ty`.
    pub fn parse_as(ty: KeyType, raw: &str) -> Result<KeyValue, ModelError> {
        let bad = || ModelError::InvalidKey(format!("{raw:?} is not a valid {ty}"));
        match ty {
            KeyType::Text => Ok(KeyValue::Text(raw.to_string())),
            KeyType::Integer => raw.trim().parse().map(KeyValue::Integer).map_err(|_| bad()),
            KeyType::Decimal => raw.trim().parse().map(KeyValue::decimal).map_err(|_| bad()),
            KeyType::Date => NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d")
                .map(KeyValue::date)
                .map_err(|_| bad()),
            KeyType::Week => raw.trim().parse().map(KeyValue::Week),
        }
    }
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()
}

impl fmt::Display for KeyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyValue::Text(s) => f.write_str(s),
            KeyValue::Integer(i) => write!(f, "{i}"),
            KeyValue::Decimal(d) => write!(f, "{}", d.0),
            KeyValue::Date(d) => {
                let date = epoch()
                    .checked_add_signed(chrono::Duration::days(*d as i64))
                    .unwrap_or(epoch());
                write!(f, "{}", date.format("%Y-%m-%d"))
            }
            KeyValue::Week(w) => write!(f, "{w}"),
        }
    }
}
