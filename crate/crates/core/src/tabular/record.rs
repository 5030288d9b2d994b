use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One listing. Missing values are `None` and appear as `null` in the
/// manifest; `images` are paths relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyRecord {
    pub id: String,
    pub sale_price: f64,
    pub lot_area: Option<f64>,
    pub living_area: f64,
    pub age: f64,
    pub full_bath: f64,
    pub half_bath: f64,
    pub three_quarter_bath: f64,
    pub parking: f64,
    pub hoa_fees: f64,
    pub drive_cbd: f64,
    pub walk_eschool: f64,
    pub walk_mschool: f64,
    pub walk_hschool: f64,
    pub married_pct: f64,
    pub median_income: f64,
    pub population: f64,
    pub pool_sauna: Option<u8>,
    pub solar: Option<u8>,
    pub eschool_rank: String,
    pub mschool_rank: String,
    pub hschool_rank: String,
    pub region: String,
    pub bedrooms: u8,
    pub property_type: String,
    pub crime_level: u8,
    #[serde(default)]
    pub images: Vec<String>,
}

/// Continuous columns, in design-matrix order. `sale_price` is described
/// and winsorized but never used as a regressor.
pub const NUMERIC_COLUMNS: [&str; 16] = [
    "sale_price",
    "lot_area",
    "living_area",
    "age",
    "full_bath",
    "half_bath",
    "three_quarter_bath",
    "parking",
    "hoa_fees",
    "drive_cbd",
    "walk_eschool",
    "walk_mschool",
    "walk_hschool",
    "married_pct",
    "median_income",
    "population",
];

/// Binary columns that may be missing.
pub const DUMMY_COLUMNS: [&str; 2] = ["pool_sauna", "solar"];

/// Categorical variables and their admissible levels.
pub const CATEGORICAL_LEVELS: [(&str, &[&str]); 7] = [
    ("eschool_rank", &["A", "B", "C"]),
    ("mschool_rank", &["A", "B", "C"]),
    ("hschool_rank", &["A"]),
    ("region", &["Central", "North", "South", "East", "Gunbarrel", "Rural"]),
    ("bedrooms", &["0", "1", "2", "3", "4", "5", "6", "7"]),
    ("property_type", &["Condominium", "Town-Home", "Single-Family"]),
    ("crime_level", &["1", "2", "3"]),
];

impl PropertyRecord {
    pub fn numeric(&self, column: &str) -> Result<Option<f64>> {
        Ok(Some(match column {
            "sale_price" => self.sale_price,
            "lot_area" => return Ok(self.lot_area),
            "living_area" => self.living_area,
            "age" => self.age,
            "full_bath" => self.full_bath,
            "half_bath" => self.half_bath,
            "three_quarter_bath" => self.three_quarter_bath,
            "parking" => self.parking,
            "hoa_fees" => self.hoa_fees,
            "drive_cbd" => self.drive_cbd,
            "walk_eschool" => self.walk_eschool,
            "walk_mschool" => self.walk_mschool,
            "walk_hschool" => self.walk_hschool,
            "married_pct" => self.married_pct,
            "median_income" => self.median_income,
            "population" => self.population,
            other => return Err(Error::InvalidArgument(format!("unknown numeric column {other:?}"))),
        }))
    }

    pub fn numeric_mut(&mut self, column: &str) -> Result<&mut f64> {
        Ok(match column {
            "sale_price" => &mut self.sale_price,
            "lot_area" => {
                return self
                    .lot_area
                    .as_mut()
                    .ok_or_else(|| Error::InvalidArgument(format!("lot_area of {} is missing", self.id)))
            }
            "living_area" => &mut self.living_area,
            "age" => &mut self.age,
            "full_bath" => &mut self.full_bath,
            "half_bath" => &mut self.half_bath,
            "three_quarter_bath" => &mut self.three_quarter_bath,
            "parking" => &mut self.parking,
            "hoa_fees" => &mut self.hoa_fees,
            "drive_cbd" => &mut self.drive_cbd,
            "walk_eschool" => &mut self.walk_eschool,
            "walk_mschool" => &mut self.walk_mschool,
            "walk_hschool" => &mut self.walk_hschool,
            "married_pct" => &mut self.married_pct,
            "median_income" => &mut self.median_income,
            "population" => &mut self.population,
            other => return Err(Error::InvalidArgument(format!("unknown numeric column {other:?}"))),
        })
    }

    pub fn dummy(&self, column: &str) -> Result<Option<u8>> {
        match column {
            "pool_sauna" => Ok(self.pool_sauna),
            "solar" => Ok(self.solar),
            other => Err(Error::InvalidArgument(format!("unknown dummy column {other:?}"))),
        }
    }

    pub(crate) fn dummy_mut(&mut self, column: &str) -> Result<&mut Option<u8>> {
        match column {
            "pool_sauna" => Ok(&mut self.pool_sauna),
            "solar" => Ok(&mut self.solar),
            other => Err(Error::InvalidArgument(format!("unknown dummy column {other:?}"))),
        }
    }

    /// Level of a categorical variable, as text.
    pub fn category(&self, variable: &str) -> Result<String> {
        Ok(match variable {
            "eschool_rank" => self.eschool_rank.clone(),
            "mschool_rank" => self.mschool_rank.clone(),
            "hschool_rank" => self.hschool_rank.clone(),
            "region" => self.region.clone(),
            "bedrooms" => self.bedrooms.to_string(),
            "property_type" => self.property_type.clone(),
            "crime_level" => self.crime_level.to_string(),
            other => return Err(Error::InvalidArgument(format!("unknown categorical variable {other:?}"))),
        })
    }

    /// Checks value domains: positive price and living area, non-negative
    /// finite numbers, 0/1 dummies and declared category levels.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Manifest(format!("property {}: {m}", self.id)));
        if self.id.is_empty() || self.id.contains([',', '\n', '\r']) || self.id.trim() != self.id {
            return bad("id must be non-empty with no surrounding whitespace, comma or newline".into());
        }
        for col in NUMERIC_COLUMNS {
            if let Some(v) = self.numeric(col)? {
                if !v.is_finite() || v < 0.0 {
                    return bad(format!("{col} = {v} must be finite and non-negative"));
                }
            }
        }
        if !(self.sale_price > 0.0) {
            return bad("sale_price must be positive".into());
        }
        if !(self.living_area > 0.0) {
            return bad("living_area must be positive".into());
        }
        for col in DUMMY_COLUMNS {
            if let Some(v) = self.dummy(col)? {
                if v > 1 {
                    return bad(format!("{col} = {v} must be 0 or 1"));
                }
            }
        }
        for (var, levels) in CATEGORICAL_LEVELS {
            let level = self.category(var)?;
            if !levels.contains(&level.as_str()) {
                return bad(format!("{var} = {level:?} is not one of {levels:?}"));
            }
        }
        let distinct: BTreeSet<&String> = self.images.iter().collect();
        if distinct.len() != self.images.len() {
            return bad("image paths must be distinct".into());
        }
        Ok(())
    }

    /// Price per square foot of living area.
    pub fn price_per_sqft(&self) -> Result<f64> {
        if !(self.living_area > 0.0) {
            return Err(Error::InvalidArgument(format!("property {}: living area must be positive", self.id)));
        }
        Ok(self.sale_price / self.living_area)
    }
}

/// Parsed manifest with the directory its image paths are relative to.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub records: Vec<PropertyRecord>,
}

impl Manifest {
    pub fn image_path(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }
}

/// Parses a JSON array of records and validates each one.
pub fn parse_manifest(text: &str) -> Result<Vec<PropertyRecord>> {
    let records: Vec<PropertyRecord> =
        serde_json::from_str(text).map_err(|e| Error::Manifest(format!("malformed manifest: {e}")))?;
    let mut seen = BTreeSet::new();
    for r in &records {
        r.validate()?;
        if !seen.insert(r.id.as_str()) {
            return Err(Error::Manifest(format!("duplicate property id {:?}", r.id)));
        }
    }
    Ok(records)
}

pub fn ingest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let records = parse_manifest(&text)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Manifest { root, records })
}

pub fn manifest_to_json(records: &[PropertyRecord]) -> String {
    let mut s = serde_json::to_string_pretty(records).expect("records serialize");
    s.push('\n');
    s
}

pub fn write_manifest(path: &Path, records: &[PropertyRecord]) -> Result<()> {
    std::fs::write(path, manifest_to_json(records)).map_err(|e| Error::file(path, e))
}

#[cfg(test)]
pub(crate) fn sample_record(id: &str) -> PropertyRecord {
    PropertyRecord {
        id: id.to_string(),
        sale_price: 650_000.0,
        lot_area: Some(6_000.0),
        living_area: 2_000.0,
        age: 30.0,
        full_bath: 2.0,
        half_bath: 1.0,
        three_quarter_bath: 0.0,
        parking: 2.0,
        hoa_fees: 0.0,
        drive_cbd: 12.0,
        walk_eschool: 15.0,
        walk_mschool: 25.0,
        walk_hschool: 30.0,
        married_pct: 48.0,
        median_income: 85_000.0,
        population: 12_000.0,
        pool_sauna: Some(0),
        solar: Some(0),
        eschool_rank: "A".into(),
        mschool_rank: "B".into(),
        hschool_rank: "A".into(),
        region: "North".into(),
        bedrooms: 3,
        property_type: "Single-Family".into(),
        crime_level: 2,
        images: vec!["img/a.png".into()],
    }
}
