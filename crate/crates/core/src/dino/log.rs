//! Per-step training log, stored as tab-separated text without a header:
//! `step  loss  teacher_entropy  center_norm`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogEntry {
    pub step: u64,
    pub loss: f64,
    pub teacher_entropy: f64,
    pub center_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub entries: Vec<LogEntry>,
}

/// Loss at the start and end of a run, plus the late teacher entropy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogSummary {
    pub steps: usize,
    pub window: usize,
    pub first_mean_loss: f64,
    pub last_mean_loss: f64,
    pub tail_entropy: f64,
}

impl TrainingLog {
    pub fn push(&mut self, e: LogEntry) {
        self.entries.push(e);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.loss).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", e.step, e.loss, e.teacher_entropy, e.center_norm);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut log = TrainingLog::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Decode(format!("training log line {}: {what}", n + 1));
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(bad(&format!("expected 4 fields, found {}", fields.len())));
            }
            let step = fields[0].trim().parse::<u64>().map_err(|_| bad("step is not an integer"))?;
            let mut nums = [0.0f64; 3];
            for (slot, f) in nums.iter_mut().zip(&fields[1..]) {
                *slot = f.trim().parse::<f64>().map_err(|_| bad("value is not a number"))?;
                if !slot.is_finite() {
                    return Err(bad("non-finite value"));
                }
            }
            log.push(LogEntry { step, loss: nums[0], teacher_entropy: nums[1], center_norm: nums[2] });
        }
        Ok(log)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text)
    }

    /// Means over the first and last `window` steps (clamped to the run
    /// length) and the mean teacher entropy over the last 50 steps.
    pub fn summary(&self, window: usize) -> Option<LogSummary> {
        let n = self.entries.len();
        if n == 0 || window == 0 {
            return None;
        }
        let w = window.min(n);
        let mean = |xs: &[LogEntry], f: fn(&LogEntry) -> f64| xs.iter().map(f).sum::<f64>() / xs.len() as f64;
        Some(LogSummary {
            steps: n,
            window: w,
            first_mean_loss: mean(&self.entries[..w], |e| e.loss),
            last_mean_loss: mean(&self.entries[n - w..], |e| e.loss),
            tail_entropy: mean(&self.entries[n - 50.min(n)..], |e| e.teacher_entropy),
        })
    }
}

impl LogSummary {
    pub fn render(&self, prototype_dim: Option<usize>) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "steps                {}", self.steps);
        let _ = writeln!(s, "loss, first {:<3} mean  {:.6}", self.window, self.first_mean_loss);
        let _ = writeln!(s, "loss, last {:<3} mean   {:.6}", self.window, self.last_mean_loss);
        let _ = writeln!(s, "loss decreased       {}", self.last_mean_loss < self.first_mean_loss);
        let _ = write!(s, "teacher entropy, last 50 mean  {:.6}", self.tail_entropy);
        if let Some(k) = prototype_dim {
            let _ = write!(s, " ({:.3} of ln K)", self.tail_entropy / (k as f64).ln());
        }
        s.push('\n');
        s
    }
}
