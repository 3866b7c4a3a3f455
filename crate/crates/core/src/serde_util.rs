//! JSON helpers: row-major matrices and infinite bounds.
//!
//! Infinite bounds are held in memory as the `±1e308` sentinels and written
//! as the strings `"inf"` / `"-inf"`.

use nalgebra::{DMatrix, DVector};
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const POS_INF_BOUND: f64 = 1e308;
pub const NEG_INF_BOUND: f64 = -1e308;

/// Anything at or beyond `±1e300` is treated as an infinite bound.
pub fn is_pos_inf(x: f64) -> bool {
    x >= 1e300
}

pub fn is_neg_inf(x: f64) -> bool {
    x <= -1e300
}

pub fn to_sentinel(x: f64) -> f64 {
    if is_pos_inf(x) {
        POS_INF_BOUND
    } else if is_neg_inf(x) {
        NEG_INF_BOUND
    } else {
        x
    }
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn matrix_from_rows(
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
    what: &'static str,
) -> Result<DMatrix<f64>> {
    if rows.len() != nrows {
        return Err(Error::DimensionMismatch {
            what,
            expected: nrows,
            found: rows.len(),
        });
    }
    for r in rows {
        if r.len() != ncols {
            return Err(Error::DimensionMismatch {
                what,
                expected: ncols,
                found: r.len(),
            });
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn vector_from(v: &[f64], len: usize, what: &'static str) -> Result<DVector<f64>> {
    if v.len() != len {
        return Err(Error::DimensionMismatch {
            what,
            expected: len,
            found: v.len(),
        });
    }
    Ok(DVector::from_column_slice(v))
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BoundRepr {
    Num(f64),
    Text(String),
}

/// Serde adapter for a single possibly-infinite bound (`#[serde(with = "bound")]`).
pub mod bound {
    use super::*;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if is_pos_inf(*x) {
            s.serialize_str("inf")
        } else if is_neg_inf(*x) {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match BoundRepr::deserialize(d)? {
            BoundRepr::Num(x) => Ok(to_sentinel(x)),
            BoundRepr::Text(t) => parse_bound(&t).map_err(de::Error::custom),
        }
    }
}

/// Serde adapter for a vector of possibly-infinite bounds.
pub mod bounds {
    use super::*;

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for x in xs {
            if is_pos_inf(*x) {
                seq.serialize_element("inf")?;
            } else if is_neg_inf(*x) {
                seq.serialize_element("-inf")?;
            } else {
                seq.serialize_element(x)?;
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        let raw = Vec::<BoundRepr>::deserialize(d)?;
        raw.into_iter()
            .map(|b| match b {
                BoundRepr::Num(x) => Ok(to_sentinel(x)),
                BoundRepr::Text(t) => parse_bound(&t).map_err(de::Error::custom),
            })
            .collect()
    }
}

fn parse_bound(t: &str) -> std::result::Result<f64, String> {
    match t.trim() {
        "inf" | "+inf" | "Infinity" => Ok(POS_INF_BOUND),
        "-inf" | "-Infinity" => Ok(NEG_INF_BOUND),
        other => other
            .parse::<f64>()
            .map(to_sentinel)
            .map_err(|_| format!("invalid bound {other:?}")),
    }
}
