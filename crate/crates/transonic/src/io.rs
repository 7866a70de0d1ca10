//! Deterministic number formatting and CSV writing.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

/// Shortest round-trip decimal; exponent form outside `[1e-4, 1e15)`.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".to_string()
    } else if !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Builds a CSV document from a header and numeric rows.
pub struct Csv {
    buf: String,
    width: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Self { buf, width: header.len() }
    }

    pub fn row(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.width);
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            let _ = write!(self.buf, "{}", fmt_num(*v));
        }
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }

    pub fn write_to(self, path: &Path) -> Result<()> {
        std::fs::write(path, self.buf)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-9, 6.02e23, 12345.678, 1e-4, 0.0] {
            let s = fmt_num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_num(1.5), "1.5");
        assert_eq!(fmt_num(2.5e-9), "2.5e-9");
    }

    #[test]
    fn csv_layout() {
        let mut c = Csv::new(&["a", "b"]);
        c.row(&[1.0, 0.25]);
        assert_eq!(c.finish(), "a,b\n1,0.25\n");
    }
}
