//! Listing records: ingest, cleaning, encoding and the train/validation/test
//! split that feeds the regression.

mod clean;
mod describe;
mod encode;
mod record;
mod split;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use clean::{impute, percentile, winsorize, ImputeStats, WinsorizeSpec, WinsorizeThresholds};
pub use describe::{coefficient_of_variation, describe, Description, LevelSummary, NumericSummary};
pub use encode::{
    dummy_frame, feature_frame, make_target, numeric_frame, one_hot, ColumnKind, ColumnStats, DesignMatrix, Frame,
    Standardizer,
};
pub use record::{
    ingest, manifest_to_json, parse_manifest, write_manifest, Manifest, PropertyRecord, CATEGORICAL_LEVELS,
    DUMMY_COLUMNS, NUMERIC_COLUMNS,
};
pub use split::{split_random, SplitIndices, SplitRatios, DEFAULT_SPLIT_SEED};

#[cfg(test)]
pub(crate) use record::sample_record;

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    pub winsorize: WinsorizeSpec,
    pub split: SplitRatios,
    pub seed: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self { winsorize: WinsorizeSpec::default(), split: SplitRatios::default(), seed: DEFAULT_SPLIT_SEED }
    }
}

/// Output of [`prepare`]: the three design matrices and every statistic
/// that was fitted to produce them.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub split: SplitIndices,
    pub impute: ImputeStats,
    pub winsorize: WinsorizeThresholds,
    pub standardizer: Standardizer,
    pub train: DesignMatrix,
    pub validation: DesignMatrix,
    pub test: DesignMatrix,
}

/// Impute, winsorize, encode and standardize `records`, optionally joined
/// with per-property image features, and partition them.
///
/// The split is drawn first so that imputation values, winsorization
/// thresholds and standardization statistics come from training rows only;
/// they are then applied to every row.
pub fn prepare(
    records: &[PropertyRecord],
    features: Option<&BTreeMap<String, Vec<f32>>>,
    opts: &PipelineOptions,
) -> Result<PreparedData> {
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let split = split_random(&ids, opts.split, &mut Rng::new(opts.seed))?;
    if split.validation.is_empty() || split.test.is_empty() {
        return Err(Error::Split(format!(
            "{} records leave an empty validation or test set",
            records.len()
        )));
    }
    let position: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let rows_of = |part: &[String]| -> Vec<usize> { part.iter().map(|id| position[id.as_str()]).collect() };
    let (train_rows, val_rows, test_rows) = (rows_of(&split.train), rows_of(&split.validation), rows_of(&split.test));
    let train_records = || train_rows.iter().map(|&i| &records[i]);

    let impute = ImputeStats::fit(train_records())?;
    let records = impute.apply(records)?;
    let train_records = || train_rows.iter().map(|&i| &records[i]);
    let winsorize = WinsorizeThresholds::fit(train_records(), &opts.winsorize)?;
    let records = winsorize.apply(&records)?;

    let mut frame = numeric_frame(&records)?;
    frame.extend(dummy_frame(&records)?)?;
    frame.extend(one_hot(&records)?)?;
    if let Some(f) = features {
        frame.extend(feature_frame(&ids, f)?)?;
    }
    let standardizer = Standardizer::fit(&frame, &train_rows)?;
    let frame = standardizer.transform(&frame)?;
    let target = make_target(&records)?;

    Ok(PreparedData {
        train: DesignMatrix::from_frame(&frame, &train_rows, &target)?,
        validation: DesignMatrix::from_frame(&frame, &val_rows, &target)?,
        test: DesignMatrix::from_frame(&frame, &test_rows, &target)?,
        split,
        impute,
        winsorize,
        standardizer,
    })
}
