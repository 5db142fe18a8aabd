//! Structured-text reports: a schema line followed by `key = value`
//! pairs in insertion order. Floats are printed with six fixed decimals
//! so output bytes are stable across runs and platforms.

pub const SCHEMA: &str = "fsqkit.report.v1";

#[derive(Debug, Default)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new(kind: &str) -> Self {
        let mut r = Report::default();
        r.push("schema", SCHEMA);
        r.push("report", kind);
        r
    }

    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.lines.push((key.to_string(), value.into()));
    }

    pub fn push_f64(&mut self, key: &str, value: f64) {
        let text = if value.is_finite() {
            format!("{value:.6}")
        } else if value.is_nan() {
            "nan".to_string()
        } else if value > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
        self.push(key, text);
    }

    pub fn push_usize(&mut self, key: &str, value: usize) {
        self.push(key, value.to_string());
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_in_order_with_fixed_floats() {
        let mut r = Report::new("test");
        r.push_f64("value", 1.0 / 3.0);
        r.push_usize("count", 7);
        r.push_f64("inf", f64::NEG_INFINITY);
        assert_eq!(
            r.render(),
            "schema = fsqkit.report.v1\nreport = test\nvalue = 0.333333\ncount = 7\ninf = -inf\n"
        );
    }
}
