//! The shared ranking order: score descending, then timestamp ascending, then
//! id ascending.

use std::cmp::Ordering;

/// Compares two ranked entries. Scores are compared with `total_cmp`, so the
/// order is total even for signed zeros.
pub fn ranked((a_score, a_ts, a_id): (f64, i64, &str), (b_score, b_ts, b_id): (f64, i64, &str)) -> Ordering {
    b_score.total_cmp(&a_score).then(a_ts.cmp(&b_ts)).then_with(|| a_id.cmp(b_id))
}

/// Rounds to the 6-decimal grid used for persisted scores.
///
/// The result formats with `{:.6}` and parses back to the identical `f64`.
pub fn quantize6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Serde adapter writing an `f64` as a JSON number with exactly six
/// decimals (`0.700000`). Reading accepts any JSON number.
pub mod decimal6 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use serde_json::value::RawValue;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if !x.is_finite() {
            return Err(serde::ser::Error::custom("non-finite score"));
        }
        let raw = RawValue::from_string(format!("{x:.6}")).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        f64::deserialize(d)
    }
}
