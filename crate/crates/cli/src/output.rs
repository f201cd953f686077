//! Artifact formatting: floats always carry 17 significant digits.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::Value;

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

struct SciFormatter;

impl Formatter for SciFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub enum Artifact {
    Json(Value),
    Csv(Csv),
}

impl Artifact {
    pub fn json<T: Serialize>(value: &T) -> Self {
        Artifact::Json(serde_json::to_value(value).expect("serializable artifact"))
    }

    pub fn render(&self) -> String {
        match self {
            Artifact::Json(v) => {
                let mut buf = Vec::new();
                let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter);
                v.serialize(&mut ser).expect("in-memory write");
                buf.push(b'\n');
                String::from_utf8(buf).expect("JSON is UTF-8")
            }
            Artifact::Csv(c) => c.render(),
        }
    }
}

pub struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(fmt_f64(0.25), "2.5000000000000000e-1");
        assert_eq!(fmt_f64(f64::NAN), "");
        let a = Artifact::json(&serde_json::json!({"q": 0.1, "n": 3}));
        assert_eq!(a.render(), "{\"n\":3,\"q\":1.0000000000000001e-1}\n");
    }

    #[test]
    fn json_floats_round_trip() {
        let x: f64 = 0.1 + 0.2;
        let s = Artifact::json(&serde_json::json!([x])).render();
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back[0].to_bits(), x.to_bits());
    }
}
