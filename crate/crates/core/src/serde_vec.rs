//! Serialize `Array1<f64>` as a flat sequence.

use ndarray::Array1;
use serde::{Deserialize, Deserializer, Serializer};

pub fn serialize<S: Serializer>(v: &Array1<f64>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array1<f64>, D::Error> {
    Vec::<f64>::deserialize(d).map(Array1::from)
}
