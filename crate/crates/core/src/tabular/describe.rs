use std::fmt::Write as _;

use super::record::{PropertyRecord, CATEGORICAL_LEVELS, DUMMY_COLUMNS, NUMERIC_COLUMNS};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct NumericSummary {
    pub column: String,
    pub count: usize,
    pub missing: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor n − 1; 0 for a single value).
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// `100 · std / mean`, or 0 when the spread is 0.
    pub cv_pct: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelSummary {
    pub variable: String,
    pub level: String,
    pub count: usize,
    pub pct: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Description {
    pub records: usize,
    pub numeric: Vec<NumericSummary>,
    pub categorical: Vec<LevelSummary>,
}

/// Relative standard deviation in percent.
pub fn coefficient_of_variation(mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        100.0 * std / mean
    }
}

fn summarize(column: &str, values: &[f64], missing: usize) -> NumericSummary {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let std = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
    NumericSummary {
        column: column.to_string(),
        count: n,
        missing,
        mean,
        std,
        min: values.iter().cloned().fold(f64::INFINITY, f64::min),
        max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        cv_pct: coefficient_of_variation(mean, std),
    }
}

/// Summary statistics of every numeric column (plus the $/sqft target)
/// and level frequencies of every dummy and categorical variable.
pub fn describe(records: &[PropertyRecord]) -> Result<Description> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("nothing to describe".into()));
    }
    let mut numeric = Vec::new();
    for col in NUMERIC_COLUMNS {
        let mut values = Vec::with_capacity(records.len());
        for r in records {
            if let Some(v) = r.numeric(col)? {
                values.push(v);
            }
        }
        if !values.is_empty() {
            numeric.push(summarize(col, &values, records.len() - values.len()));
        }
    }
    let per_sqft: Vec<f64> = records.iter().map(PropertyRecord::price_per_sqft).collect::<Result<_>>()?;
    numeric.push(summarize("price_per_sqft", &per_sqft, 0));

    let n = records.len() as f64;
    let mut categorical = Vec::new();
    let mut level = |variable: &str, level: &str, count: usize| {
        categorical.push(LevelSummary {
            variable: variable.to_string(),
            level: level.to_string(),
            count,
            pct: 100.0 * count as f64 / n,
        })
    };
    for col in DUMMY_COLUMNS {
        let values: Vec<Option<u8>> = records.iter().map(|r| r.dummy(col)).collect::<Result<_>>()?;
        level(col, "No", values.iter().filter(|v| **v == Some(0)).count());
        level(col, "Yes", values.iter().filter(|v| **v == Some(1)).count());
        let missing = values.iter().filter(|v| v.is_none()).count();
        if missing > 0 {
            level(col, "missing", missing);
        }
    }
    for (var, levels) in CATEGORICAL_LEVELS {
        let values: Vec<String> = records.iter().map(|r| r.category(var)).collect::<Result<_>>()?;
        for l in levels {
            level(var, l, values.iter().filter(|v| v.as_str() == *l).count());
        }
    }
    Ok(Description { records: records.len(), numeric, categorical })
}

impl Description {
    /// Fixed-width text rendering.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "records: {}", self.records);
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<20} {:>6} {:>7} {:>16} {:>16} {:>14} {:>14} {:>8}",
            "variable", "n", "missing", "mean", "std", "min", "max", "cv%"
        );
        for r in &self.numeric {
            let _ = writeln!(
                s,
                "{:<20} {:>6} {:>7} {:>16.3} {:>16.3} {:>14.3} {:>14.3} {:>8.2}",
                r.column, r.count, r.missing, r.mean, r.std, r.min, r.max, r.cv_pct
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<20} {:<14} {:>6} {:>8}", "variable", "level", "count", "pct");
        for l in &self.categorical {
            let _ = writeln!(s, "{:<20} {:<14} {:>6} {:>8.2}", l.variable, l.level, l.count, l.pct);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::record::sample_record;

    #[test]
    fn table_price_cv() {
        let cv = coefficient_of_variation(896_332.0, 679_195.8);
        assert_eq!(cv.round(), 76.0);
        assert!((cv - 75.775).abs() < 1e-3);
    }

    #[test]
    fn constant_column_has_zero_cv() {
        let rs: Vec<PropertyRecord> = (0..4).map(|i| sample_record(&format!("p{i}"))).collect();
        let d = describe(&rs).unwrap();
        let age = d.numeric.iter().find(|r| r.column == "age").unwrap();
        assert_eq!((age.std, age.cv_pct, age.min, age.max), (0.0, 0.0, 30.0, 30.0));
        assert!(describe(&[]).is_err());
    }

    #[test]
    fn matches_two_pass_loop_oracle() {
        let mut rng = crate::rng::Rng::new(17);
        let rs: Vec<PropertyRecord> = (0..57)
            .map(|i| PropertyRecord { age: rng.uniform_range(0.0, 120.0), ..sample_record(&format!("p{i}")) })
            .collect();
        let d = describe(&rs).unwrap();
        let got = d.numeric.iter().find(|r| r.column == "age").unwrap();
        let mut mean = 0.0;
        for r in &rs {
            mean += r.age;
        }
        mean /= rs.len() as f64;
        let mut ss = 0.0;
        for r in &rs {
            ss += (r.age - mean) * (r.age - mean);
        }
        let std = (ss / (rs.len() - 1) as f64).sqrt();
        assert!(((got.mean - mean) / mean).abs() < 1e-9);
        assert!(((got.std - std) / std).abs() < 1e-9);
        assert!(((got.cv_pct - 100.0 * std / mean) / got.cv_pct).abs() < 1e-9);
    }

    #[test]
    fn level_counts() {
        let mut rs: Vec<PropertyRecord> = (0..4).map(|i| sample_record(&format!("p{i}"))).collect();
        rs[0].region = "Rural".into();
        rs[1].pool_sauna = None;
        let d = describe(&rs).unwrap();
        let find = |v: &str, l: &str| d.categorical.iter().find(|x| x.variable == v && x.level == l).unwrap().count;
        assert_eq!(find("region", "Rural"), 1);
        assert_eq!(find("region", "North"), 3);
        assert_eq!(find("pool_sauna", "missing"), 1);
        assert_eq!(find("pool_sauna", "No"), 3);
        assert!(d.render().contains("price_per_sqft"));
    }
}
