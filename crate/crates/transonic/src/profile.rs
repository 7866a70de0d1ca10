//! Analytic boundary profiles: sums of constants, harmonics and compact bumps.
//!
//! Text form, used by configuration files:
//!
//! ```text
//! cos(theta) + 0.5*sin(3*theta) - 0.1
//! 2*bump(0, 1.5)          # bump(center, width), compactly supported
//! ```

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numerics::bump;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    Const(f64),
    Cos { amp: f64, k: f64 },
    Sin { amp: f64, k: f64 },
    Bump { amp: f64, center: f64, width: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Profile {
    pub terms: Vec<Term>,
}

fn bump_derivative(x: f64, amp: f64, center: f64, width: f64) -> f64 {
    let s = (x - center) / width;
    if s.abs() >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - s * s;
    bump(x, amp, center, width) * (-2.0 * s / (q * q)) / width
}

impl Profile {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn cos(k: f64) -> Self {
        Self { terms: vec![Term::Cos { amp: 1.0, k }] }
    }

    pub fn sin(k: f64) -> Self {
        Self { terms: vec![Term::Sin { amp: 1.0, k }] }
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: vec![Term::Const(c)] }
    }

    pub fn bump(amp: f64, center: f64, width: f64) -> Self {
        Self { terms: vec![Term::Bump { amp, center, width }] }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| match *t {
            Term::Const(c) => c == 0.0,
            Term::Cos { amp, .. } | Term::Sin { amp, .. } | Term::Bump { amp, .. } => amp == 0.0,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| match *t {
                Term::Const(c) => c,
                Term::Cos { amp, k } => amp * (k * x).cos(),
                Term::Sin { amp, k } => amp * (k * x).sin(),
                Term::Bump { amp, center, width } => bump(x, amp, center, width),
            })
            .sum()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| match *t {
                Term::Const(_) => 0.0,
                Term::Cos { amp, k } => -amp * k * (k * x).sin(),
                Term::Sin { amp, k } => amp * k * (k * x).cos(),
                Term::Bump { amp, center, width } => bump_derivative(x, amp, center, width),
            })
            .sum()
    }

    pub fn sample(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }

    /// Half-width of the smallest interval around 0 outside which the profile vanishes, if any.
    pub fn support_radius(&self) -> Option<f64> {
        let mut r = 0.0f64;
        for t in &self.terms {
            match *t {
                Term::Bump { amp, center, width } if amp != 0.0 => r = r.max(center.abs() + width.abs()),
                Term::Bump { .. } => {}
                Term::Const(0.0) => {}
                Term::Cos { amp, .. } | Term::Sin { amp, .. } if amp == 0.0 => {}
                _ => return None,
            }
        }
        Some(r)
    }

    /// True when every harmonic has an integer wavenumber, so the profile is 2pi-periodic.
    pub fn is_periodic(&self) -> bool {
        self.terms.iter().all(|t| match *t {
            Term::Cos { k, .. } | Term::Sin { k, .. } => k.fract() == 0.0,
            Term::Bump { amp, .. } => amp == 0.0,
            Term::Const(_) => true,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Parser { s: text.as_bytes(), pos: 0, src: text }.profile()
    }
}

fn fmt_f(v: f64) -> String {
    crate::io::fmt_num(v)
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            let (amp, body) = match *t {
                Term::Const(c) => (c, None),
                Term::Cos { amp, k } => (amp, Some(format!("cos({}*theta)", fmt_f(k)))),
                Term::Sin { amp, k } => (amp, Some(format!("sin({}*theta)", fmt_f(k)))),
                Term::Bump { amp, center, width } => (amp, Some(format!("bump({}, {})", fmt_f(center), fmt_f(width)))),
            };
            let sign = if amp < 0.0 { "-" } else { "+" };
            if i == 0 {
                if amp < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            match body {
                None => write!(f, "{}", fmt_f(amp.abs()))?,
                Some(b) if amp.abs() == 1.0 => write!(f, "{b}")?,
                Some(b) => write!(f, "{}*{b}", fmt_f(amp.abs()))?,
            }
        }
        Ok(())
    }
}

impl Serialize for Profile {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parameter(format!("profile '{}': {msg} at column {}", self.src, self.pos + 1))
    }

    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.ws();
        let start = self.pos;
        if matches!(self.s.get(self.pos), Some(b'-') | Some(b'+')) {
            self.pos += 1;
        }
        while self.pos < self.s.len() {
            let c = self.s[self.pos];
            let exp_sign = matches!(c, b'-' | b'+') && matches!(self.s[self.pos - 1], b'e' | b'E');
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let txt = &self.src[start..self.pos];
        let v: f64 = txt.parse().map_err(|_| self.err("expected a number"))?;
        if !v.is_finite() {
            return Err(self.err("number is not finite"));
        }
        Ok(v)
    }

    fn ident(&mut self) -> String {
        self.ws();
        let start = self.pos;
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_') {
            self.pos += 1;
        }
        self.src[start..self.pos].to_ascii_lowercase()
    }

    /// `theta`, `x`, `x3`, or `k*theta`.
    fn harmonic_arg(&mut self) -> Result<f64> {
        let k = if matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == b'.') {
            let k = self.number()?;
            self.expect(b'*')?;
            k
        } else {
            1.0
        };
        match self.ident().as_str() {
            "theta" | "t" | "x" | "x3" => Ok(k),
            _ => Err(self.err("expected the variable name theta")),
        }
    }

    fn term(&mut self, sign: f64) -> Result<Term> {
        let mut amp = sign;
        if matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == b'.') {
            let v = self.number()?;
            if !self.eat(b'*') {
                return Ok(Term::Const(sign * v));
            }
            amp *= v;
        }
        let name = self.ident();
        self.expect(b'(')?;
        let t = match name.as_str() {
            "cos" => Term::Cos { amp, k: self.harmonic_arg()? },
            "sin" => Term::Sin { amp, k: self.harmonic_arg()? },
            "bump" => {
                let center = self.number()?;
                self.expect(b',')?;
                let width = self.number()?;
                if !(width > 0.0) {
                    return Err(self.err("bump width must be positive"));
                }
                Term::Bump { amp, center, width }
            }
            "" => return Err(self.err("expected a term")),
            other => return Err(self.err(&format!("unknown function '{other}'"))),
        };
        self.expect(b')')?;
        Ok(t)
    }

    fn profile(&mut self) -> Result<Profile> {
        let mut terms = Vec::new();
        if self.peek().is_none() {
            return Err(self.err("empty profile"));
        }
        let mut sign = if self.eat(b'-') { -1.0 } else { self.eat(b'+'); 1.0 };
        loop {
            terms.push(self.term(sign)?);
            match self.peek() {
                None => break,
                Some(b'+') => {
                    self.pos += 1;
                    sign = 1.0;
                }
                Some(b'-') => {
                    self.pos += 1;
                    sign = -1.0;
                }
                Some(_) => return Err(self.err("unexpected character")),
            }
        }
        let terms = terms
            .into_iter()
            .filter(|t| !matches!(t, Term::Const(c) if *c == 0.0))
            .collect();
        Ok(Profile { terms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_harmonic_sums() {
        let p = Profile::parse("cos(theta) + 0.5*sin(3*theta) - 0.25").unwrap();
        let x = 0.7f64;
        assert!((p.eval(x) - (x.cos() + 0.5 * (3.0 * x).sin() - 0.25)).abs() < 1e-15);
        assert!((p.derivative(x) - (-x.sin() + 1.5 * (3.0 * x).cos())).abs() < 1e-15);
        assert!(p.is_periodic());
        assert_eq!(p.support_radius(), None);
        assert!(Profile::parse("0").unwrap().is_zero());
    }

    #[test]
    fn bump_support_and_derivative() {
        let p = Profile::parse("2*bump(0.5, 1.5)").unwrap();
        assert_eq!(p.support_radius(), Some(2.0));
        assert_eq!(p.eval(2.0), 0.0);
        assert!((p.eval(0.5) - 2.0).abs() < 1e-15);
        let (x, h) = (0.9, 1e-6);
        let fd = (p.eval(x + h) - p.eval(x - h)) / (2.0 * h);
        assert!((fd - p.derivative(x)).abs() < 1e-8);
    }

    #[test]
    fn rejects_garbage() {
        for s in ["", "cos(", "tan(theta)", "cos(theta) cos(theta)", "bump(0, -1)", "2*"] {
            assert!(Profile::parse(s).is_err(), "{s}");
        }
    }

    proptest! {
        #[test]
        fn display_round_trips(a in -5.0f64..5.0, k in 1u32..6, c in -2.0f64..2.0, w in 0.1f64..3.0) {
            let p = Profile {
                terms: vec![
                    Term::Cos { amp: a, k: k as f64 },
                    Term::Sin { amp: 1.0, k: 2.0 },
                    Term::Bump { amp: -a, center: c, width: w },
                    Term::Const(c),
                ],
            };
            let q = Profile::parse(&p.to_string()).unwrap();
            for x in [-1.0, 0.0, 0.3, 2.0] {
                prop_assert!((p.eval(x) - q.eval(x)).abs() < 1e-12);
            }
        }
    }
}
