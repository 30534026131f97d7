//! Flat textual configuration.
//!
//! Job-size laws are written as `name(key=value, ...)`:
//!
//! ```text
//! exp(rate=1)            hexp(scv=20,f=0.5)       hexp(p=0.5,mu1=2,mu2=0.5)
//! erlang(k=2)            det(c=1)                 powerlaw(beta=2,smin=1)
//! ph(alpha=[1,0],A=[[-2,2],[0,-2]])               detph(tau=0.05,inner=hexp(scv=4,f=0.5))
//! ```
//!
//! Config files hold one `key = value` pair per line; `#` starts a comment.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::jobsize::{fit_hyperexp, HexpFitSpec, JobSizeLaw, PhRep};

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Num(f64),
    List(Vec<Value>),
    Call(String, Vec<(String, Value)>),
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn error(&self, msg: &str) -> Error {
        let text = String::from_utf8_lossy(self.src);
        Error::Parse(format!("{msg} at offset {} in {text:?}", self.pos))
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected a name"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn value(&mut self) -> Result<Value> {
        match self.peek() {
            Some(b'[') => {
                self.pos += 1;
                let mut items = Vec::new();
                if self.peek() == Some(b']') {
                    self.pos += 1;
                    return Ok(Value::List(items));
                }
                loop {
                    items.push(self.value()?);
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b']') => {
                            self.pos += 1;
                            return Ok(Value::List(items));
                        }
                        _ => return Err(self.error("expected ',' or ']'")),
                    }
                }
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let name = self.ident()?;
                let args = if self.peek() == Some(b'(') {
                    self.args()?
                } else {
                    Vec::new()
                };
                Ok(Value::Call(name, args))
            }
            Some(_) => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && matches!(self.src[self.pos], b'0'..=b'9' | b'.' | b'-' | b'+' | b'e' | b'E')
                {
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                text.parse()
                    .map(Value::Num)
                    .map_err(|_| self.error(&format!("bad number {text:?}")))
            }
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn args(&mut self) -> Result<Vec<(String, Value)>> {
        self.expect(b'(')?;
        let mut out = Vec::new();
        if self.peek() == Some(b')') {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            let key = self.ident()?;
            self.expect(b'=')?;
            out.push((key, self.value()?));
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b')') => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => return Err(self.error("expected ',' or ')'")),
            }
        }
    }
}

struct Args {
    law: String,
    map: BTreeMap<String, Value>,
}

impl Args {
    fn new(law: &str, list: Vec<(String, Value)>, allowed: &[&str]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, v) in list {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Parse(format!("unknown parameter {k:?} for {law}")));
            }
            if map.insert(k.clone(), v).is_some() {
                return Err(Error::Parse(format!("duplicate parameter {k:?} for {law}")));
            }
        }
        Ok(Self {
            law: law.to_string(),
            map,
        })
    }

    fn num(&self, key: &str) -> Result<Option<f64>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(Value::Num(x)) => Ok(Some(*x)),
            Some(_) => Err(Error::Parse(format!("{}: {key} must be a number", self.law))),
        }
    }

    fn num_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.num(key)?.unwrap_or(default))
    }

    fn required(&self, key: &str) -> Result<f64> {
        self.num(key)?
            .ok_or_else(|| Error::Parse(format!("{}: missing parameter {key}", self.law)))
    }
}

fn numbers(v: &Value) -> Result<Vec<f64>> {
    match v {
        Value::List(items) => items
            .iter()
            .map(|x| match x {
                Value::Num(n) => Ok(*n),
                _ => Err(Error::Parse("expected a list of numbers".into())),
            })
            .collect(),
        _ => Err(Error::Parse("expected a list".into())),
    }
}

fn build(v: Value) -> Result<JobSizeLaw> {
    let Value::Call(name, list) = v else {
        return Err(Error::Parse("expected a law such as exp(rate=1)".into()));
    };
    match name.as_str() {
        "exp" => {
            let a = Args::new("exp", list, &["rate", "mean"])?;
            let rate = match a.num("mean")? {
                Some(m) => 1.0 / m,
                None => a.num_or("rate", 1.0)?,
            };
            JobSizeLaw::exponential(rate)
        }
        "hexp" => {
            let a = Args::new("hexp", list, &["scv", "f", "mean", "p", "mu1", "mu2"])?;
            if a.num("p")?.is_some() {
                JobSizeLaw::hyperexp(a.required("p")?, a.required("mu1")?, a.required("mu2")?)
            } else {
                fit_hyperexp(HexpFitSpec {
                    mean: a.num_or("mean", 1.0)?,
                    scv: a.required("scv")?,
                    f: a.num_or("f", 0.5)?,
                })
            }
        }
        "erlang" => {
            let a = Args::new("erlang", list, &["k", "rate"])?;
            let k = a.required("k")?;
            if k < 1.0 || k.fract() != 0.0 {
                return Err(Error::Parse(format!("erlang: k must be a positive integer, got {k}")));
            }
            JobSizeLaw::erlang(k as u32, a.num_or("rate", k)?)
        }
        "det" => {
            let a = Args::new("det", list, &["c"])?;
            JobSizeLaw::deterministic(a.num_or("c", 1.0)?)
        }
        "powerlaw" => {
            let a = Args::new("powerlaw", list, &["beta", "smin"])?;
            JobSizeLaw::power_law(a.num_or("beta", 2.0)?, a.num_or("smin", 1.0)?)
        }
        "ph" => {
            let a = Args::new("ph", list, &["alpha", "A"])?;
            let alpha = numbers(
                a.map
                    .get("alpha")
                    .ok_or_else(|| Error::Parse("ph: missing alpha".into()))?,
            )?;
            let rows = match a.map.get("A") {
                Some(Value::List(rows)) => rows.iter().map(numbers).collect::<Result<Vec<_>>>()?,
                _ => return Err(Error::Parse("ph: A must be a list of rows".into())),
            };
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(Error::Parse("ph: A must be square".into()));
            }
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            Ok(JobSizeLaw::PhaseType(PhRep::new(
                alpha,
                DMatrix::from_row_slice(n, n, &flat),
            )?))
        }
        "detph" => {
            let mut tau = None;
            let mut inner = None;
            for (k, v) in list {
                match (k.as_str(), v) {
                    ("tau", Value::Num(x)) => tau = Some(x),
                    ("inner", v @ Value::Call(..)) => inner = Some(build(v)?),
                    (k, _) => return Err(Error::Parse(format!("detph: bad parameter {k:?}"))),
                }
            }
            let inner = inner.ok_or_else(|| Error::Parse("detph: missing inner law".into()))?;
            JobSizeLaw::det_plus_ph(tau.unwrap_or(0.0), inner.as_ph()?)
        }
        other => Err(Error::Parse(format!("unknown law {other:?}"))),
    }
}

/// Parses a job-size law such as `hexp(scv=20,f=0.5)`.
pub fn parse_law(text: &str) -> Result<JobSizeLaw> {
    let mut p = Parser::new(text);
    let v = p.value()?;
    if p.peek().is_some() {
        return Err(p.error("trailing input"));
    }
    build(v)
}

/// Parses `key = value` lines. Keys are lower-cased; later keys override earlier ones.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", i + 1)))?;
        out.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_family() {
        assert_eq!(parse_law("exp(rate=1)").unwrap(), JobSizeLaw::Exponential { rate: 1.0 });
        assert_eq!(parse_law("exp").unwrap(), JobSizeLaw::Exponential { rate: 1.0 });
        let h = parse_law("hexp(scv=20,f=0.5)").unwrap();
        assert!((h.scv() - 20.0).abs() < 1e-9);
        assert_eq!(
            parse_law("erlang(k=2)").unwrap(),
            JobSizeLaw::ErlangK { k: 2, rate: 2.0 }
        );
        assert_eq!(parse_law("det(c=1)").unwrap(), JobSizeLaw::Deterministic { c: 1.0 });
        assert_eq!(
            parse_law("powerlaw(beta=2,smin=1)").unwrap(),
            JobSizeLaw::PowerLaw { beta: 2.0, smin: 1.0 }
        );
        let ph = parse_law("ph(alpha=[1,0],A=[[-2,2],[0,-2]])").unwrap();
        assert!((ph.mean() - 1.0).abs() < 1e-12);
        let dp = parse_law("detph(tau=0.05, inner=hexp(scv=4,f=0.5))").unwrap();
        assert!((dp.mean() - 1.05).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_law("exp(rate=1").is_err());
        assert!(parse_law("gamma(k=2)").is_err());
        assert!(parse_law("exp(speed=1)").is_err());
        assert!(parse_law("hexp(scv=0.5,f=0.5)").is_err());
        assert!(parse_law("detph(tau=0.1,inner=det(c=1))").is_err());
        assert!(parse_law("erlang(k=2.5)").is_err());
    }

    #[test]
    fn config_lines() {
        let cfg = parse_config("# run\njobsize = hexp(scv=20, f=0.5)\nLambda=0.9 # load\n\nd = 2\n").unwrap();
        assert_eq!(cfg["jobsize"], "hexp(scv=20, f=0.5)");
        assert_eq!(cfg["lambda"], "0.9");
        assert_eq!(cfg["d"], "2");
        assert!(parse_config("novalue").is_err());
    }
}
