//! Run descriptions: `key = value` lines with `#` comments.
//!
//! Recognized keys: `m`, `steps`, `lambda_min`, `lambda_max`, `lambda_step`,
//! `threshold`, `a`, `example`, `seed`, `starts`, `threads`, `dts`
//! (whitespace-separated). Command-line flags override file values.

use std::path::Path;

use sspif_core::harness::{DEFAULT_THRESHOLD, VDP_DTS};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub m: Option<usize>,
    pub steps: Option<usize>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_step: f64,
    pub threshold: f64,
    pub a: f64,
    pub example: Option<String>,
    pub seed: u64,
    pub starts: Option<usize>,
    /// 0 means one thread per available core.
    pub threads: usize,
    pub dts: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            m: None,
            steps: None,
            lambda_min: 0.02,
            lambda_max: 8.0,
            lambda_step: 0.02,
            threshold: DEFAULT_THRESHOLD,
            a: 0.0,
            example: None,
            seed: 0,
            starts: None,
            threads: 0,
            dts: VDP_DTS.to_vec(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |field: &str, message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                field: field.to_string(),
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line, "expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let real = || -> Result<f64> {
                value
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(key, format!("expected a number, got {value:?}")))
            };
            let int = || -> Result<usize> {
                value.parse().map_err(|_| err(key, format!("expected an integer, got {value:?}")))
            };
            match key {
                "m" => cfg.m = Some(int()?),
                "steps" => cfg.steps = Some(int()?),
                "lambda_min" => cfg.lambda_min = real()?,
                "lambda_max" => cfg.lambda_max = real()?,
                "lambda_step" => cfg.lambda_step = real()?,
                "threshold" => cfg.threshold = real()?,
                "a" => cfg.a = real()?,
                "example" => cfg.example = Some(value.to_string()),
                "seed" => cfg.seed = value.parse().map_err(|_| err(key, format!("bad seed {value:?}")))?,
                "starts" => cfg.starts = Some(int()?),
                "threads" => cfg.threads = int()?,
                "dts" => {
                    cfg.dts = value
                        .split_whitespace()
                        .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite() && *v > 0.0))
                        .collect::<Option<_>>()
                        .ok_or_else(|| err(key, format!("bad step list {value:?}")))?
                }
                _ => return Err(err(key, "unknown key".into())),
            }
        }
        Ok(cfg)
    }

    /// The λ grid `lambda_min, lambda_min + lambda_step, …` up to `lambda_max`.
    pub fn lambdas(&self) -> Result<Vec<f64>> {
        if !(self.lambda_min > 0.0 && self.lambda_step > 0.0 && self.lambda_max >= self.lambda_min) {
            return Err(Error::Usage(format!(
                "invalid lambda range [{}, {}] step {}",
                self.lambda_min, self.lambda_max, self.lambda_step
            )));
        }
        let n = ((self.lambda_max - self.lambda_min) / self.lambda_step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.lambda_min + i as f64 * self.lambda_step).collect())
    }
}
