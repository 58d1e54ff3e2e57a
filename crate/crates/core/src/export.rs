//! Number formatting shared by every CSV writer.

/// Formats a float with 17 significant digits, `.` as decimal separator and
/// no grouping. 17 digits round-trip any `f64` exactly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        return "NaN".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".to_string();
    }
    format!("{v:.16e}")
}
