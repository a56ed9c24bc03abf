//! CSV and plot-data writers, and a threaded λ sweep.

use std::fmt::Write as _;
use std::path::Path;

use sspif_core::harness::{ConvergenceRecord, SweepRecord, Sweeper};

use crate::{Error, Result};

/// A record that can be written as two numeric columns.
pub trait Columns {
    fn to_csv(&self) -> String;
    /// Whitespace-separated columns under `#` comment lines, for plotting tools.
    fn to_plotdata(&self) -> String;
}

impl Columns for SweepRecord {
    fn to_csv(&self) -> String {
        SweepRecord::to_csv(self)
    }

    fn to_plotdata(&self) -> String {
        let mut out = format!(
            "# method {} example {} a {} m {} steps {}\n# lambda max_tv_rise\n",
            self.method,
            self.example.name(),
            self.a,
            self.m,
            self.steps
        );
        for (l, r) in self.lambdas.iter().zip(&self.rises) {
            let _ = writeln!(out, "{l:.16e} {r:.16e}");
        }
        out
    }
}

impl Columns for ConvergenceRecord {
    fn to_csv(&self) -> String {
        ConvergenceRecord::to_csv(self)
    }

    fn to_plotdata(&self) -> String {
        let mut out = format!("# method {} slope {:.6}\n# dt error\n", self.method, self.slope);
        for (d, e) in self.dts.iter().zip(&self.errors) {
            let _ = writeln!(out, "{d:.16e} {e:.16e}");
        }
        out
    }
}

pub fn emit_csv(record: &impl Columns, path: &Path) -> Result<()> {
    std::fs::write(path, record.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn emit_plotdata(record: &impl Columns, path: &Path) -> Result<()> {
    std::fs::write(path, record.to_plotdata()).map_err(|e| Error::io(path, e))
}

/// Worker count for `threads`, where 0 means all available cores.
pub fn thread_count(threads: usize) -> usize {
    match threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
}

/// Evaluate `f` at every λ on `threads` workers; results keep the input order.
pub fn par_map(lambdas: &[f64], threads: usize, f: impl Fn(f64) -> f64 + Sync) -> Vec<f64> {
    let threads = thread_count(threads).min(lambdas.len()).max(1);
    let mut out = vec![0.0; lambdas.len()];
    let chunk = lambdas.len().div_ceil(threads).max(1);
    std::thread::scope(|s| {
        for (ls, os) in lambdas.chunks(chunk).zip(out.chunks_mut(chunk)) {
            let f = &f;
            s.spawn(move || {
                for (l, o) in ls.iter().zip(os) {
                    *o = f(*l);
                }
            });
        }
    });
    out
}

/// [`Sweeper::sweep`] with the λ points spread over threads.
pub fn parallel_sweep(sweeper: &Sweeper, lambdas: &[f64], threads: usize) -> Result<SweepRecord> {
    // The sequential sweep validates the grid and fills the metadata.
    let mut rec = sweeper.sweep(&[])?;
    if lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) || lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Usage("lambdas must be positive and strictly increasing".into()));
    }
    rec.rises = par_map(lambdas, threads, |l| sweeper.rise_at(l));
    rec.lambdas = lambdas.to_vec();
    Ok(rec)
}
