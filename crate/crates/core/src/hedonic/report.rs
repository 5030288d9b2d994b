use std::fmt::Write as _;

use super::AlphaSweepResult;
use crate::error::{Error, Result};

const CSV_HEADER: &str = "architecture,train_rmse,val_rmse,test_rmse,alpha,improvement_pct";

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub name: String,
    pub train_rmse: f64,
    pub val_rmse: f64,
    pub test_rmse: f64,
    pub alpha: f64,
    pub improvement_pct: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

fn alpha_text(a: f64) -> String {
    let s = format!("{a:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

impl EvalReport {
    /// Aligned table: Architecture, Train-RMSE, Val-RMSE, Test-RMSE, Alpha,
    /// Improvement over Baseline. RMSEs are in dollars per square foot.
    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max("Architecture".len());
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>10}  {:>10}  {:>10}  {:>10}  {:>25}",
            "Architecture", "Train-RMSE", "Val-RMSE", "Test-RMSE", "Alpha", "Improvement over Baseline"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$}  {:>10}  {:>10}  {:>10}  {:>10}  {:>25}",
                r.name,
                format!("${:.2}", r.train_rmse),
                format!("${:.2}", r.val_rmse),
                format!("${:.2}", r.test_rmse),
                alpha_text(r.alpha),
                format!("{:.2}%", r.improvement_pct),
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.name, r.train_rmse, r.val_rmse, r.test_rmse, r.alpha, r.improvement_pct
            );
        }
        s
    }

    /// Reads the output of [`EvalReport::to_csv`].
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(Error::InvalidArgument("report CSV has an unexpected header".into()));
        }
        let rows = lines
            .enumerate()
            .map(|(i, line)| {
                let bad = || Error::InvalidArgument(format!("report CSV line {}: {line:?}", i + 2));
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 6 {
                    return Err(bad());
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
                Ok(EvalRow {
                    name: f[0].to_string(),
                    train_rmse: num(f[1])?,
                    val_rmse: num(f[2])?,
                    test_rmse: num(f[3])?,
                    alpha: num(f[4])?,
                    improvement_pct: num(f[5])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }
}

/// `alpha,train_rmse,val_rmse`; alphas that could not be fitted have empty
/// RMSE fields.
pub fn sweep_csv(sweep: &AlphaSweepResult) -> String {
    let mut s = String::from("alpha,train_rmse,val_rmse\n");
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for p in &sweep.points {
        let _ = writeln!(s, "{},{},{}", p.alpha, opt(p.train_rmse), opt(p.val_rmse));
    }
    s
}
