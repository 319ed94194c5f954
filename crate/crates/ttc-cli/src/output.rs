//! File output helpers: float formatting, CSV assembly, and writes with
//! path context on errors.

use std::path::Path;

use anyhow::{Context, Result};

/// Formats with 17 significant digits, enough to round-trip an f64 exactly.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// An optional float as a CSV field: missing values become empty fields.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

/// A JSON number carrying the full 17-digit rendering of `x`.
pub fn json_num(x: f64) -> serde_json::Value {
    let text = fmt_float(x);
    let number: serde_json::Number = text
        .parse()
        .unwrap_or_else(|_| panic!("{text} is not a JSON number"));
    serde_json::Value::Number(number)
}

/// Like [`json_num`], with `None` as JSON null.
pub fn json_opt(x: Option<f64>) -> serde_json::Value {
    x.map(json_num).unwrap_or(serde_json::Value::Null)
}

/// Writes `content`, creating parent directories as needed.
pub fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

/// Serializes `value` with 2-space indentation and a trailing newline.
pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    text.push('\n');
    write_file(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_their_rendering() {
        for x in [0.0, 0.5, 1.0 / 3.0, 2.0 / 3.0, 1e-300, f64::MAX, 9.125e8] {
            let text = fmt_float(x);
            assert_eq!(text.parse::<f64>().unwrap(), x, "{text}");
        }
    }

    #[test]
    fn json_numbers_keep_the_literal_digits() {
        let x = 2.0 / 3.0;
        let v = json_num(x);
        assert_eq!(v.to_string(), fmt_float(x));
        assert_eq!(v.to_string().parse::<f64>().unwrap(), x);
    }

    #[test]
    fn missing_values_render_as_empty_and_null() {
        assert_eq!(fmt_opt(None), "");
        assert_eq!(json_opt(None), serde_json::Value::Null);
    }
}
