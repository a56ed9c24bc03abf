//! Method files: UTF-8 `key = value` lines, `#` comments.
//!
//! ```text
//! name = essprk33
//! s = 3
//! k = 2
//! order = 3
//! D = 0 1  0 1  0 1
//! Ahat = 0 0 0
//! A = 0 0 0  1 0 0  0.25 0.25 0
//! theta = 0 1
//! bhat = 0
//! b = 0.16666666666666666 0.16666666666666666 0.66666666666666663
//! certified_C = 1
//! ```
//!
//! Arrays are row-major and whitespace-separated. `D` is `s × k`, `Ahat` is
//! `s × (k−1)`, `A` is `s × s`, `theta` has `k` entries, `bhat` `k−1` and `b`
//! `s`. Numbers are written with 17 significant digits, so a save and load
//! round-trips every coefficient exactly.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use sspif_core::densemat::DenseMatrix;
use sspif_core::tableau::TsrkCoefficients;

use crate::{Error, Result};

/// Seed and start count of the optimizer run that produced a method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    pub starts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodFile {
    pub name: String,
    pub order: usize,
    pub method: TsrkCoefficients,
    pub certified_c: Option<f64>,
    pub provenance: Option<Provenance>,
}

const REQUIRED: [&str; 10] = ["name", "s", "k", "order", "D", "Ahat", "A", "theta", "bhat", "b"];
const OPTIONAL: [&str; 3] = ["certified_C", "seed", "starts"];

fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(" ")
}

impl MethodFile {
    pub fn new(name: &str, order: usize, method: TsrkCoefficients) -> Self {
        Self {
            name: name.to_string(),
            order,
            method,
            certified_c: None,
            provenance: None,
        }
    }

    pub fn to_text(&self) -> String {
        let m = &self.method;
        let mut out = String::new();
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "s = {}", m.stages());
        let _ = writeln!(out, "k = {}", m.steps());
        let _ = writeln!(out, "order = {}", self.order);
        let _ = writeln!(out, "D = {}", join(m.d().as_slice()));
        let _ = writeln!(out, "Ahat = {}", join(m.a_hat().as_slice()));
        let _ = writeln!(out, "A = {}", join(m.a().as_slice()));
        let _ = writeln!(out, "theta = {}", join(m.theta()));
        let _ = writeln!(out, "bhat = {}", join(m.b_hat()));
        let _ = writeln!(out, "b = {}", join(m.b()));
        if let Some(c) = self.certified_c {
            let _ = writeln!(out, "certified_C = {}", fmt_num(c));
        }
        if let Some(p) = self.provenance {
            let _ = writeln!(out, "seed = {}", p.seed);
            let _ = writeln!(out, "starts = {}", p.starts);
        }
        out
    }

    /// Parse file contents; `path` is only used in diagnostics.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, field: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            field: field.to_string(),
            message,
        };
        let fields = key_values(text, path, &REQUIRED, &OPTIONAL)?;
        let last = text.lines().count().max(1);
        let int = |key: &str| -> Result<usize> {
            let (line, v) = &fields[key];
            v.parse().map_err(|_| err(*line, key, format!("expected a nonnegative integer, got {v:?}")))
        };
        let nums = |key: &str, len: usize| -> Result<Vec<f64>> {
            let (line, v) = &fields[key];
            let out: Vec<f64> = v
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| err(*line, key, format!("bad number {t:?}"))))
                .collect::<Result<_>>()?;
            if out.len() != len {
                return Err(err(*line, key, format!("expected {len} numbers, found {}", out.len())));
            }
            if let Some(x) = out.iter().find(|x| !x.is_finite()) {
                return Err(err(*line, key, format!("non-finite value {x}")));
            }
            Ok(out)
        };
        let (s, k, order) = (int("s")?, int("k")?, int("order")?);
        if s == 0 || k == 0 {
            return Err(err(fields["s"].0, "s", "s and k must be positive".into()));
        }
        let mat = |key: &str, rows: usize, cols: usize| -> Result<DenseMatrix> {
            DenseMatrix::from_vec(rows, cols, nums(key, rows * cols)?).map_err(|e| err(fields[key].0, key, e.to_string()))
        };
        let method = TsrkCoefficients::new(
            mat("D", s, k)?,
            mat("Ahat", s, k - 1)?,
            mat("A", s, s)?,
            nums("theta", k)?,
            nums("bhat", k - 1)?,
            nums("b", s)?,
        )
        .map_err(|e| err(fields["A"].0, "method", e.to_string()))?;
        let certified_c = match fields.get("certified_C") {
            Some((line, v)) => Some(
                v.parse::<f64>()
                    .ok()
                    .filter(|c| c.is_finite() && *c >= 0.0)
                    .ok_or_else(|| err(*line, "certified_C", format!("bad value {v:?}")))?,
            ),
            None => None,
        };
        let provenance = match (fields.contains_key("seed"), fields.contains_key("starts")) {
            (true, true) => {
                let (line, v) = &fields["seed"];
                let seed = v.parse().map_err(|_| err(*line, "seed", format!("bad seed {v:?}")))?;
                Some(Provenance {
                    seed,
                    starts: int("starts")?,
                })
            }
            (false, false) => None,
            _ => return Err(err(last, "seed", "seed and starts must appear together".into())),
        };
        Ok(Self {
            name: fields["name"].1.clone(),
            order,
            method,
            certified_c,
            provenance,
        })
    }
}

/// An explicit linear multistep method `u^{n+1} = Σ αₗ u^{n−k+l} + Δt βₗ F(u^{n−k+l})`,
/// stored in `.lmm` files with fields `name`, `k`, `alpha`, `beta` and optional
/// `certified_C`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmmFile {
    pub name: String,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub certified_c: Option<f64>,
}

impl LmmFile {
    pub fn steps(&self) -> usize {
        self.alphas.len()
    }

    /// `min αₗ/βₗ` over `βₗ > 0`, or 0 when some weight is negative.
    pub fn ssp_coefficient(&self) -> f64 {
        if self.alphas.iter().chain(&self.betas).any(|v| *v < 0.0) {
            return 0.0;
        }
        self.alphas
            .iter()
            .zip(&self.betas)
            .filter(|(_, b)| **b > 0.0)
            .map(|(a, b)| a / b)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "k = {}", self.steps());
        let _ = writeln!(out, "alpha = {}", join(&self.alphas));
        let _ = writeln!(out, "beta = {}", join(&self.betas));
        if let Some(c) = self.certified_c {
            let _ = writeln!(out, "certified_C = {}", fmt_num(c));
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let fields = key_values(text, path, &["name", "k", "alpha", "beta"], &["certified_C"])?;
        let err = |line: usize, field: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            field: field.to_string(),
            message,
        };
        let (kline, kv) = &fields["k"];
        let k: usize = kv
            .parse()
            .ok()
            .filter(|k| *k > 0)
            .ok_or_else(|| err(*kline, "k", format!("expected a positive integer, got {kv:?}")))?;
        let nums = |key: &str| -> Result<Vec<f64>> {
            let (line, v) = &fields[key];
            let out: Vec<f64> = v
                .split_whitespace()
                .map(|t| t.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<_>>()
                .ok_or_else(|| err(*line, key, format!("bad numbers {v:?}")))?;
            if out.len() != k {
                return Err(err(*line, key, format!("expected {k} numbers, found {}", out.len())));
            }
            Ok(out)
        };
        let alphas = nums("alpha")?;
        let betas = nums("beta")?;
        let sum: f64 = alphas.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(err(fields["alpha"].0, "alpha", format!("weights sum to {sum}, expected 1")));
        }
        let certified_c = match fields.get("certified_C") {
            Some((line, v)) => Some(
                v.parse::<f64>()
                    .ok()
                    .filter(|c| c.is_finite() && *c >= 0.0)
                    .ok_or_else(|| err(*line, "certified_C", format!("bad value {v:?}")))?,
            ),
            None => None,
        };
        Ok(Self {
            name: fields["name"].1.clone(),
            alphas,
            betas,
            certified_c,
        })
    }
}

type Fields = HashMap<String, (usize, String)>;

/// Split `key = value` lines, rejecting unknown, duplicate and missing keys.
fn key_values(text: &str, path: &Path, required: &[&str], optional: &[&str]) -> Result<Fields> {
    let err = |line: usize, field: &str, message: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        field: field.to_string(),
        message: message.to_string(),
    };
    let mut fields = Fields::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(i + 1, line, "expected `key = value`"))?;
        let key = key.trim();
        if !required.contains(&key) && !optional.contains(&key) {
            return Err(err(i + 1, key, "unknown field"));
        }
        if fields.insert(key.to_string(), (i + 1, value.trim().to_string())).is_some() {
            return Err(err(i + 1, key, "duplicate field"));
        }
    }
    let last = text.lines().count().max(1);
    for key in required {
        if !fields.contains_key(*key) {
            return Err(err(last, key, "missing"));
        }
    }
    Ok(fields)
}

pub fn load_lmm(path: &Path) -> Result<LmmFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LmmFile::parse(&text, path)
}

pub fn load_method(path: &Path) -> Result<MethodFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MethodFile::parse(&text, path)
}

pub fn save_method(file: &MethodFile, path: &Path) -> Result<()> {
    std::fs::write(path, file.to_text()).map_err(|e| Error::io(path, e))
}
