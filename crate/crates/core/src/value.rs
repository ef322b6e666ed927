//! Scalar values and column types.

use std::fmt;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

/// The type of a column. Each type becomes one abstract sort in solver scripts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Int,
    String,
    Bool,
    Timestamp,
}

impl ColumnType {
    pub const ALL: [ColumnType; 4] = [
        ColumnType::Int,
        ColumnType::String,
        ColumnType::Bool,
        ColumnType::Timestamp,
    ];

    /// Whether `<` candidate atoms are generated for variables of this type.
    pub fn is_ordered(self) -> bool {
        matches!(self, ColumnType::Int | ColumnType::Timestamp)
    }

    pub fn name(self) -> &'static str {
        match self {
            ColumnType::Int => "int",
            ColumnType::String => "string",
            ColumnType::Bool => "bool",
            ColumnType::Timestamp => "timestamp",
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A constant stored in a database cell or written in a query.
///
/// Timestamps are seconds since the Unix epoch. The derived ordering is only
/// used for deterministic container ordering; SQL comparisons go through
/// [`Value::sql_lt`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Str(String),
    Time(i64),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot use {value} as a {ty} value")]
pub struct CoercionError {
    pub value: String,
    pub ty: ColumnType,
}

const TIME_FORMATS: [&str; 4] = [
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%dT%H:%M",
];

pub fn parse_timestamp(text: &str) -> Option<i64> {
    let text = text.trim();
    for fmt in TIME_FORMATS {
        if let Ok(t) = NaiveDateTime::parse_from_str(text, fmt) {
            return Some(t.and_utc().timestamp());
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(text, "%Y-%m-%d") {
        return d.and_hms_opt(0, 0, 0).map(|t| t.and_utc().timestamp());
    }
    text.parse::<i64>().ok()
}

pub fn format_timestamp(secs: i64) -> String {
    match DateTime::from_timestamp(secs, 0) {
        Some(t) => t.naive_utc().format("%Y-%m-%d %H:%M:%S").to_string(),
        None => secs.to_string(),
    }
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// The type of a non-NULL value.
    pub fn column_type(&self) -> Option<ColumnType> {
        match self {
            Value::Null => None,
            Value::Bool(_) => Some(ColumnType::Bool),
            Value::Int(_) => Some(ColumnType::Int),
            Value::Str(_) => Some(ColumnType::String),
            Value::Time(_) => Some(ColumnType::Timestamp),
        }
    }

    /// Converts a literal to the given column type, e.g. a string literal
    /// compared against a timestamp column.
    pub fn coerce(self, ty: ColumnType) -> Result<Value, CoercionError> {
        let fail = |v: &Value| CoercionError { value: v.to_string(), ty };
        match (self, ty) {
            (Value::Null, _) => Ok(Value::Null),
            (v @ Value::Int(_), ColumnType::Int) => Ok(v),
            (v @ Value::Str(_), ColumnType::String) => Ok(v),
            (v @ Value::Bool(_), ColumnType::Bool) => Ok(v),
            (v @ Value::Time(_), ColumnType::Timestamp) => Ok(v),
            (Value::Int(i), ColumnType::Timestamp) => Ok(Value::Time(i)),
            (Value::Int(i), ColumnType::Bool) if i == 0 || i == 1 => Ok(Value::Bool(i == 1)),
            (Value::Str(s), ColumnType::Timestamp) => match parse_timestamp(&s) {
                Some(t) => Ok(Value::Time(t)),
                None => Err(fail(&Value::Str(s))),
            },
            (v, _) => Err(fail(&v)),
        }
    }

    /// SQL equality under two-valued semantics: false if either side is NULL.
    pub fn sql_eq(&self, other: &Value) -> bool {
        !self.is_null() && !other.is_null() && self == other
    }

    /// SQL `<` under two-valued semantics. Values of different types never compare.
    pub fn sql_lt(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a < b,
            (Value::Time(a), Value::Time(b)) => a < b,
            (Value::Str(a), Value::Str(b)) => a < b,
            (Value::Bool(a), Value::Bool(b)) => a < b,
            _ => false,
        }
    }

    /// Renders the value as a SQL literal.
    pub fn to_sql(&self) -> String {
        match self {
            Value::Null => "NULL".to_string(),
            Value::Bool(b) => if *b { "TRUE" } else { "FALSE" }.to_string(),
            Value::Int(i) => i.to_string(),
            Value::Str(s) => format!("'{}'", s.replace('\'', "''")),
            Value::Time(t) => format!("'{}'", format_timestamp(*t)),
        }
    }

    /// Untyped conversion from JSON; pair with [`Value::coerce`].
    pub fn from_json(v: &serde_json::Value) -> Option<Value> {
        match v {
            serde_json::Value::Null => Some(Value::Null),
            serde_json::Value::Bool(b) => Some(Value::Bool(*b)),
            serde_json::Value::Number(n) => n.as_i64().map(Value::Int),
            serde_json::Value::String(s) => Some(Value::Str(s.clone())),
            _ => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Null => serde_json::Value::Null,
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::Int(i) => serde_json::Value::from(*i),
            Value::Str(s) => serde_json::Value::String(s.clone()),
            Value::Time(t) => serde_json::Value::String(format_timestamp(*t)),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => write!(f, "\"{s}\""),
            Value::Time(t) => write!(f, "\"{}\"", format_timestamp(*t)),
        }
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}
