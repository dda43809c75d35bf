//! Minimal JSON document builder with deterministic output.
//!
//! Result files must be byte-identical across repeated runs and worker
//! counts, so keys keep their insertion order and every finite float is
//! rendered with 17 significant digits, enough to round-trip an f64
//! exactly. Non-finite floats have no JSON representation and render as
//! null.

use std::fmt::Write;

#[derive(Debug, Clone)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Array(Vec<Json>),
    Object(Vec<(&'static str, Json)>),
}

impl Json {
    pub fn float_array(values: &[f64]) -> Json {
        Json::Array(values.iter().map(|&v| Json::Float(v)).collect())
    }

    pub fn opt_str(value: &Option<String>) -> Json {
        match value {
            Some(s) => Json::Str(s.clone()),
            None => Json::Null,
        }
    }

    pub fn opt_float(value: Option<f64>) -> Json {
        match value {
            Some(v) => Json::Float(v),
            None => Json::Null,
        }
    }

    /// Pretty form with two-space indentation and a trailing newline.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.write_pretty(&mut out, 0);
        out.push('\n');
        out
    }

    /// Single-line form for log streams.
    pub fn render_compact(&self) -> String {
        let mut out = String::new();
        self.write_compact(&mut out);
        out
    }

    fn is_scalar(&self) -> bool {
        !matches!(self, Json::Array(_) | Json::Object(_))
    }

    fn write_scalar(&self, out: &mut String) {
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Int(v) => {
                let _ = write!(out, "{v}");
            }
            Json::Float(v) => {
                if v.is_finite() {
                    let _ = write!(out, "{v:.16e}");
                } else {
                    out.push_str("null");
                }
            }
            Json::Str(s) => write_escaped(out, s),
            _ => unreachable!("write_scalar called on a container"),
        }
    }

    fn write_pretty(&self, out: &mut String, indent: usize) {
        match self {
            Json::Array(items) => {
                if items.is_empty() {
                    out.push_str("[]");
                } else if items.iter().all(Json::is_scalar) {
                    out.push('[');
                    for (k, item) in items.iter().enumerate() {
                        if k > 0 {
                            out.push_str(", ");
                        }
                        item.write_scalar(out);
                    }
                    out.push(']');
                } else {
                    out.push_str("[\n");
                    for (k, item) in items.iter().enumerate() {
                        if k > 0 {
                            out.push_str(",\n");
                        }
                        push_indent(out, indent + 1);
                        item.write_pretty(out, indent + 1);
                    }
                    out.push('\n');
                    push_indent(out, indent);
                    out.push(']');
                }
            }
            Json::Object(fields) => {
                if fields.is_empty() {
                    out.push_str("{}");
                } else {
                    out.push_str("{\n");
                    for (k, (key, value)) in fields.iter().enumerate() {
                        if k > 0 {
                            out.push_str(",\n");
                        }
                        push_indent(out, indent + 1);
                        write_escaped(out, key);
                        out.push_str(": ");
                        value.write_pretty(out, indent + 1);
                    }
                    out.push('\n');
                    push_indent(out, indent);
                    out.push('}');
                }
            }
            scalar => scalar.write_scalar(out),
        }
    }

    fn write_compact(&self, out: &mut String) {
        match self {
            Json::Array(items) => {
                out.push('[');
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        out.push(',');
                    }
                    item.write_compact(out);
                }
                out.push(']');
            }
            Json::Object(fields) => {
                out.push('{');
                for (k, (key, value)) in fields.iter().enumerate() {
                    if k > 0 {
                        out.push(',');
                    }
                    write_escaped(out, key);
                    out.push(':');
                    value.write_compact(out);
                }
                out.push('}');
            }
            scalar => scalar.write_scalar(out),
        }
    }
}

fn push_indent(out: &mut String, indent: usize) {
    for _ in 0..indent {
        out.push_str("  ");
    }
}

fn write_escaped(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_render_with_seventeen_significant_digits() {
        assert_eq!(Json::Float(0.1).render_compact(), "1.0000000000000001e-1");
        assert_eq!(Json::Float(-2.0).render_compact(), "-2.0000000000000000e0");
        let parsed: f64 = "1.0000000000000001e-1".parse().unwrap();
        assert_eq!(parsed, 0.1);
    }

    #[test]
    fn non_finite_floats_become_null() {
        assert_eq!(Json::Float(f64::NAN).render_compact(), "null");
        assert_eq!(Json::Float(f64::INFINITY).render_compact(), "null");
    }

    #[test]
    fn strings_are_escaped() {
        let s = Json::Str("a\"b\\c\nd\u{1}".into());
        assert_eq!(s.render_compact(), "\"a\\\"b\\\\c\\nd\\u0001\"");
    }

    #[test]
    fn pretty_layout_is_stable() {
        let doc = Json::Object(vec![
            ("name", Json::Str("run".into())),
            ("values", Json::float_array(&[1.0, 2.0])),
            (
                "rows",
                Json::Array(vec![Json::Object(vec![("id", Json::Int(0))])]),
            ),
            ("empty", Json::Array(Vec::new())),
        ]);
        let expected = "{\n  \"name\": \"run\",\n  \"values\": [1.0000000000000000e0, 2.0000000000000000e0],\n  \"rows\": [\n    {\n      \"id\": 0\n    }\n  ],\n  \"empty\": []\n}\n";
        assert_eq!(doc.render(), expected);
        assert_eq!(doc.render(), doc.render());
    }
}
