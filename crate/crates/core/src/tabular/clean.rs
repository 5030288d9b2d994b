use serde::{Deserialize, Serialize};

use super::record::{PropertyRecord, DUMMY_COLUMNS};
use crate::error::{Error, Result};

/// Fill-in values for the columns that may be missing.
#[derive(Clone, Debug, PartialEq)]
pub struct ImputeStats {
    pub lot_area_mean: f64,
    /// Modes of `pool_sauna` and `solar`, in [`DUMMY_COLUMNS`] order.
    pub dummy_modes: [u8; 2],
}

impl ImputeStats {
    /// Mean of observed `lot_area`; mode of each dummy with ties going to 0.
    pub fn fit<'a>(records: impl IntoIterator<Item = &'a PropertyRecord> + Clone) -> Result<Self> {
        let observed: Vec<f64> = records.clone().into_iter().filter_map(|r| r.lot_area).collect();
        if observed.is_empty() {
            return Err(Error::InvalidArgument("lot_area is missing for every record".into()));
        }
        let lot_area_mean = observed.iter().sum::<f64>() / observed.len() as f64;
        let mut dummy_modes = [0u8; 2];
        for (slot, col) in dummy_modes.iter_mut().zip(DUMMY_COLUMNS) {
            let mut counts = [0usize; 2];
            for r in records.clone() {
                if let Some(v) = r.dummy(col)? {
                    counts[v as usize] += 1;
                }
            }
            if counts == [0, 0] {
                return Err(Error::InvalidArgument(format!("{col} is missing for every record")));
            }
            *slot = u8::from(counts[1] > counts[0]);
        }
        Ok(Self { lot_area_mean, dummy_modes })
    }

    pub fn apply(&self, records: &[PropertyRecord]) -> Result<Vec<PropertyRecord>> {
        let mut out = records.to_vec();
        for r in &mut out {
            r.lot_area.get_or_insert(self.lot_area_mean);
            for (col, &mode) in DUMMY_COLUMNS.iter().zip(&self.dummy_modes) {
                r.dummy_mut(col)?.get_or_insert(mode);
            }
        }
        Ok(out)
    }
}

/// Mean/mode imputation with statistics taken from `records` themselves.
pub fn impute(records: &[PropertyRecord]) -> Result<Vec<PropertyRecord>> {
    ImputeStats::fit(records)?.apply(records)
}

/// Percentile of sorted data by linear interpolation between closest
/// ranks: position `(n − 1)·pct/100`.
pub fn percentile(sorted: &[f64], pct: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::InvalidArgument("percentile of an empty column".into()));
    }
    if !(0.0..=100.0).contains(&pct) {
        return Err(Error::InvalidArgument(format!("percentile {pct} outside [0, 100]")));
    }
    let h = (sorted.len() - 1) as f64 * pct / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Which columns to clamp and at which percentiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WinsorizeSpec {
    pub lower: f64,
    pub upper: f64,
    pub columns: Vec<String>,
}

impl Default for WinsorizeSpec {
    fn default() -> Self {
        Self {
            lower: 1.0,
            upper: 99.0,
            columns: ["sale_price", "lot_area", "living_area", "hoa_fees"].map(String::from).to_vec(),
        }
    }
}

impl WinsorizeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.lower && self.lower < self.upper && self.upper <= 100.0) {
            return Err(Error::InvalidArgument(format!(
                "winsorize limits need 0 <= lower < upper <= 100, got ({}, {})",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    /// Parses `lower,upper` percentiles, optionally followed by
    /// `:col1,col2,...`; the default columns are kept when none are given.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("winsorize spec {text:?} is not lower,upper[:columns]"));
        let (limits, cols) = match text.split_once(':') {
            Some((l, c)) => (l, Some(c)),
            None => (text, None),
        };
        let (lo, hi) = limits.split_once(',').ok_or_else(bad)?;
        let lower = lo.trim().parse().map_err(|_| bad())?;
        let upper = hi.trim().parse().map_err(|_| bad())?;
        let columns = match cols {
            Some(cols) => cols.split(',').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect(),
            None => Self::default().columns,
        };
        let spec = Self { lower, upper, columns };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WinsorizeThresholds {
    pub bounds: Vec<(String, f64, f64)>,
}

impl WinsorizeThresholds {
    pub fn fit<'a>(records: impl IntoIterator<Item = &'a PropertyRecord> + Clone, spec: &WinsorizeSpec) -> Result<Self> {
        spec.validate()?;
        let mut bounds = Vec::with_capacity(spec.columns.len());
        for col in &spec.columns {
            let mut values = Vec::new();
            for r in records.clone() {
                if let Some(v) = r.numeric(col)? {
                    values.push(v);
                }
            }
            if values.is_empty() {
                return Err(Error::InvalidArgument(format!("cannot winsorize empty column {col}")));
            }
            values.sort_by(f64::total_cmp);
            bounds.push((col.clone(), percentile(&values, spec.lower)?, percentile(&values, spec.upper)?));
        }
        Ok(Self { bounds })
    }

    pub fn apply(&self, records: &[PropertyRecord]) -> Result<Vec<PropertyRecord>> {
        let mut out = records.to_vec();
        for r in &mut out {
            for (col, lo, hi) in &self.bounds {
                if r.numeric(col)?.is_some() {
                    let v = r.numeric_mut(col)?;
                    *v = v.clamp(*lo, *hi);
                }
            }
        }
        Ok(out)
    }
}

/// Clamps each listed column to its own `[lower, upper]` percentiles.
pub fn winsorize(records: &[PropertyRecord], lower: f64, upper: f64, columns: &[&str]) -> Result<Vec<PropertyRecord>> {
    let spec = WinsorizeSpec { lower, upper, columns: columns.iter().map(|c| c.to_string()).collect() };
    WinsorizeThresholds::fit(records, &spec)?.apply(records)
}
