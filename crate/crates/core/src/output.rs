//! Machine-readable output formatting. Every float prints with 15
//! significant digits in scientific notation so emitted JSON is
//! byte-deterministic and diffable across runs.

use serde_json::Value;

/// Render a JSON value with deterministic key order (serde_json's map is
/// ordered) and all floats at 15 significant digits. Non-finite floats
/// become `null`.
pub fn to_json_string(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, 0, &mut out);
    out.push('\n');
    out
}

fn write_value(value: &Value, indent: usize, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(num) => {
            if let Some(i) = num.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = num.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let f = num.as_f64().unwrap_or(f64::NAN);
                out.push_str(&format_float(f));
            }
        }
        Value::String(s) => out.push_str(&escape(s)),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                push_indent(indent + 1, out);
                write_value(item, indent + 1, out);
            }
            out.push('\n');
            push_indent(indent, out);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (i, (key, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                push_indent(indent + 1, out);
                out.push_str(&escape(key));
                out.push_str(": ");
                write_value(item, indent + 1, out);
            }
            out.push('\n');
            push_indent(indent, out);
            out.push('}');
        }
    }
}

/// 15 significant digits: one leading digit plus 14 decimals in
/// scientific notation.
pub fn format_float(f: f64) -> String {
    if !f.is_finite() {
        return "null".to_string();
    }
    format!("{f:.14e}")
}

fn push_indent(indent: usize, out: &mut String) {
    for _ in 0..indent {
        out.push_str("  ");
    }
}

fn escape(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_carry_fifteen_significant_digits() {
        assert_eq!(format_float(0.25), "2.50000000000000e-1");
        assert_eq!(format_float(1.0 / 3.0), "3.33333333333333e-1");
        assert_eq!(format_float(0.014436898715822), "1.44368987158220e-2");
    }

    #[test]
    fn rendering_is_deterministic_and_parseable() {
        let v = json!({"b": [1, 0.5], "a": {"x": true, "y": null}});
        let s1 = to_json_string(&v);
        let s2 = to_json_string(&v);
        assert_eq!(s1, s2);
        let back: serde_json::Value = serde_json::from_str(&s1).unwrap();
        assert_eq!(back["b"][1], serde_json::json!(0.5));
    }

    #[test]
    fn non_finite_floats_become_null() {
        assert_eq!(format_float(f64::NAN), "null");
        assert_eq!(format_float(f64::INFINITY), "null");
    }
}
