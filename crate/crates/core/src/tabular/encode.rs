use std::collections::BTreeMap;

use super::record::{PropertyRecord, CATEGORICAL_LEVELS, DUMMY_COLUMNS, NUMERIC_COLUMNS};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnKind {
    /// Standardized with training statistics.
    Continuous,
    /// 0/1 column, left as is.
    Indicator,
}

/// Column-major table of named f64 columns over a fixed list of row ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub ids: Vec<String>,
    pub names: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    pub columns: Vec<Vec<f64>>,
}

impl Frame {
    pub fn empty(ids: Vec<String>) -> Self {
        Self { ids, names: Vec::new(), kinds: Vec::new(), columns: Vec::new() }
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn push(&mut self, name: impl Into<String>, kind: ColumnKind, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.rows() {
            return Err(Error::Shape(format!("column {name} has {} rows, frame {}", values.len(), self.rows())));
        }
        if self.names.contains(&name) {
            return Err(Error::InvalidArgument(format!("duplicate column {name}")));
        }
        self.names.push(name);
        self.kinds.push(kind);
        self.columns.push(values);
        Ok(())
    }

    /// Appends the columns of `other`, which must cover the same rows.
    pub fn extend(&mut self, other: Frame) -> Result<()> {
        if other.ids != self.ids {
            return Err(Error::Shape("frames cover different rows".into()));
        }
        for ((name, kind), col) in other.names.into_iter().zip(other.kinds).zip(other.columns) {
            self.push(name, kind, col)?;
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }
}

fn ids_of(records: &[PropertyRecord]) -> Vec<String> {
    records.iter().map(|r| r.id.clone()).collect()
}

/// Continuous regressors: every numeric column except the sale price.
pub fn numeric_frame(records: &[PropertyRecord]) -> Result<Frame> {
    let mut f = Frame::empty(ids_of(records));
    for col in NUMERIC_COLUMNS.iter().filter(|&&c| c != "sale_price") {
        let values = records
            .iter()
            .map(|r| r.numeric(col)?.ok_or_else(|| Error::InvalidArgument(format!("{col} of {} is missing", r.id))))
            .collect::<Result<_>>()?;
        f.push(*col, ColumnKind::Continuous, values)?;
    }
    Ok(f)
}

pub fn dummy_frame(records: &[PropertyRecord]) -> Result<Frame> {
    let mut f = Frame::empty(ids_of(records));
    for col in DUMMY_COLUMNS {
        let values = records
            .iter()
            .map(|r| {
                r.dummy(col)?
                    .map(f64::from)
                    .ok_or_else(|| Error::InvalidArgument(format!("{col} of {} is missing", r.id)))
            })
            .collect::<Result<_>>()?;
        f.push(col, ColumnKind::Indicator, values)?;
    }
    Ok(f)
}

/// One indicator column per declared level, named `variable.level`.
pub fn one_hot(records: &[PropertyRecord]) -> Result<Frame> {
    let mut f = Frame::empty(ids_of(records));
    for (var, levels) in CATEGORICAL_LEVELS {
        let observed: Vec<String> = records.iter().map(|r| r.category(var)).collect::<Result<_>>()?;
        if let Some((r, bad)) = records.iter().zip(&observed).find(|(_, l)| !levels.contains(&l.as_str())) {
            return Err(Error::InvalidArgument(format!("property {}: unseen level {bad:?} of {var}", r.id)));
        }
        for level in levels {
            let col = observed.iter().map(|l| if l == level { 1.0 } else { 0.0 }).collect();
            f.push(format!("{var}.{level}"), ColumnKind::Indicator, col)?;
        }
    }
    Ok(f)
}

/// Image feature columns `img.0 … img.{D−1}` in the order of `ids`.
pub fn feature_frame(ids: &[String], features: &BTreeMap<String, Vec<f32>>) -> Result<Frame> {
    let mut rows = Vec::with_capacity(ids.len());
    for id in ids {
        rows.push(features.get(id).ok_or_else(|| Error::InvalidArgument(format!("no image features for {id}")))?);
    }
    let dim = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Shape("image features of different lengths".into()));
    }
    let mut f = Frame::empty(ids.to_vec());
    for j in 0..dim {
        f.push(format!("img.{j}"), ColumnKind::Continuous, rows.iter().map(|r| r[j] as f64).collect())?;
    }
    Ok(f)
}

/// `yᵢ = sale_priceᵢ / living_areaᵢ` in dollars per square foot.
pub fn make_target(records: &[PropertyRecord]) -> Result<Vec<f64>> {
    records.iter().map(PropertyRecord::price_per_sqft).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnStats {
    pub name: String,
    pub kind: ColumnKind,
    pub mean: f64,
    pub std: f64,
    pub keep: bool,
}

/// Column statistics from training rows. Continuous columns with zero
/// training spread are dropped, as are indicator columns that are constant
/// over every row.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub stats: Vec<ColumnStats>,
}

impl Standardizer {
    pub fn fit(frame: &Frame, train_rows: &[usize]) -> Result<Self> {
        if train_rows.is_empty() {
            return Err(Error::InvalidArgument("standardize needs at least one training row".into()));
        }
        let n = train_rows.len() as f64;
        let mut stats = Vec::with_capacity(frame.width());
        for ((name, &kind), col) in frame.names.iter().zip(&frame.kinds).zip(&frame.columns) {
            let s = match kind {
                ColumnKind::Continuous => {
                    let mean = train_rows.iter().map(|&i| col[i]).sum::<f64>() / n;
                    let var = train_rows.iter().map(|&i| (col[i] - mean).powi(2)).sum::<f64>() / n;
                    let std = var.sqrt();
                    ColumnStats { name: name.clone(), kind, mean, std, keep: std > 0.0 }
                }
                ColumnKind::Indicator => {
                    let constant = col.iter().all(|&v| v == col[0]);
                    ColumnStats { name: name.clone(), kind, mean: 0.0, std: 1.0, keep: !constant }
                }
            };
            stats.push(s);
        }
        Ok(Self { stats })
    }

    pub fn kept_names(&self) -> Vec<String> {
        self.stats.iter().filter(|s| s.keep).map(|s| s.name.clone()).collect()
    }

    /// Kept columns, continuous ones as `(x − mean)/std`.
    pub fn transform(&self, frame: &Frame) -> Result<Frame> {
        if frame.names.len() != self.stats.len() || frame.names.iter().zip(&self.stats).any(|(n, s)| *n != s.name) {
            return Err(Error::Shape("frame columns differ from the fitted ones".into()));
        }
        let mut out = Frame::empty(frame.ids.clone());
        for (s, col) in self.stats.iter().zip(&frame.columns) {
            if !s.keep {
                continue;
            }
            let values = match s.kind {
                ColumnKind::Continuous => col.iter().map(|&v| (v - s.mean) / s.std).collect(),
                ColumnKind::Indicator => col.clone(),
            };
            out.push(s.name.clone(), s.kind, values)?;
        }
        Ok(out)
    }

    /// Undoes [`transform`](Self::transform) on the kept columns.
    pub fn inverse(&self, frame: &Frame) -> Result<Frame> {
        let kept: Vec<&ColumnStats> = self.stats.iter().filter(|s| s.keep).collect();
        if frame.names.len() != kept.len() || frame.names.iter().zip(&kept).any(|(n, s)| *n != s.name) {
            return Err(Error::Shape("frame columns differ from the kept ones".into()));
        }
        let mut out = Frame::empty(frame.ids.clone());
        for (s, col) in kept.into_iter().zip(&frame.columns) {
            let values = match s.kind {
                ColumnKind::Continuous => col.iter().map(|&v| v * s.std + s.mean).collect(),
                ColumnKind::Indicator => col.clone(),
            };
            out.push(s.name.clone(), s.kind, values)?;
        }
        Ok(out)
    }
}

/// Regression inputs for one subset of properties.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    pub ids: Vec<String>,
    pub columns: Vec<String>,
    /// `n × p`
    pub values: Tensor,
    /// `n`, dollars per square foot.
    pub target: Tensor,
}

impl DesignMatrix {
    /// Selects `rows` of `frame` and the matching targets.
    pub fn from_frame(frame: &Frame, rows: &[usize], target: &[f64]) -> Result<Self> {
        if frame.width() == 0 || rows.is_empty() {
            return Err(Error::Shape("design matrix needs at least one row and one column".into()));
        }
        if target.len() != frame.rows() {
            return Err(Error::Shape(format!("{} targets for {} rows", target.len(), frame.rows())));
        }
        let p = frame.width();
        let mut data = Vec::with_capacity(rows.len() * p);
        for &i in rows {
            data.extend(frame.columns.iter().map(|c| c[i] as f32));
        }
        Ok(Self {
            ids: rows.iter().map(|&i| frame.ids[i].clone()).collect(),
            columns: frame.names.clone(),
            values: Tensor::matrix(rows.len(), p, data)?,
            target: Tensor::vector(rows.iter().map(|&i| target[i] as f32).collect())?,
        })
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }
}
