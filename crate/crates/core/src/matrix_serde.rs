//! Dense matrices serialized as explicit arrays of rows.

use ndarray::{Array1, Array2};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn serialize<T, S>(m: &Array2<T>, serializer: S) -> Result<S::Ok, S::Error>
where
    T: Serialize,
    S: Serializer,
{
    let rows: Vec<Vec<&T>> = m.outer_iter().map(|r| r.into_iter().collect()).collect();
    rows.serialize(serializer)
}

pub fn deserialize<'de, T, D>(deserializer: D) -> Result<Array2<T>, D::Error>
where
    T: Deserialize<'de> + Clone,
    D: Deserializer<'de>,
{
    let rows: Vec<Vec<T>> = Vec::deserialize(deserializer)?;
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(D::Error::custom("ragged matrix rows"));
    }
    let flat: Vec<T> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((nrows, ncols), flat).map_err(D::Error::custom)
}

/// Vectors serialized as plain arrays.
pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Array1<f64>, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Array1<f64>, D::Error> {
        Ok(Array1::from(Vec::<f64>::deserialize(deserializer)?))
    }
}
