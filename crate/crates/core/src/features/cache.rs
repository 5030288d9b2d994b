use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const CACHE_MAGIC: &str = "VHFC1";

/// Pooled feature per property, bound to the backbone that produced it.
///
/// Text format: a header `VHFC1 <backbone-id> <dim>`, then one line per
/// property `id,v1,...,vD` with nine significant digits, which is enough
/// to round-trip every f32.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCache {
    backbone_id: String,
    dim: usize,
    vectors: BTreeMap<String, Vec<f32>>,
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(',') || id.chars().any(char::is_control) {
        return Err(Error::Cache(format!("property id {id:?} cannot be stored")));
    }
    Ok(())
}

impl FeatureCache {
    pub fn new(backbone_id: &str, dim: usize) -> Result<Self> {
        if backbone_id.is_empty() || backbone_id.chars().any(char::is_whitespace) {
            return Err(Error::Cache(format!("backbone id {backbone_id:?} must be non-empty without spaces")));
        }
        if dim == 0 {
            return Err(Error::Cache("dimension must be positive".into()));
        }
        Ok(Self { backbone_id: backbone_id.to_string(), dim, vectors: BTreeMap::new() })
    }

    pub fn backbone_id(&self) -> &str {
        &self.backbone_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn vectors(&self) -> &BTreeMap<String, Vec<f32>> {
        &self.vectors
    }

    pub fn insert(&mut self, id: String, v: Vec<f32>) -> Result<()> {
        check_id(&id)?;
        if v.len() != self.dim {
            return Err(Error::Shape(format!("cache dimension {} but vector of {} for {id}", self.dim, v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("feature of property {id}")));
        }
        if self.vectors.contains_key(&id) {
            return Err(Error::Cache(format!("duplicate property id {id:?}")));
        }
        self.vectors.insert(id, v);
        Ok(())
    }

    /// Refuses a cache built by a different backbone.
    pub fn expect_backbone(&self, id: &str) -> Result<()> {
        if self.backbone_id != id {
            return Err(Error::Cache(format!("built by {} but the run uses {id}", self.backbone_id)));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{CACHE_MAGIC} {} {}\n", self.backbone_id, self.dim);
        for (id, v) in &self.vectors {
            s.push_str(id);
            for x in v {
                let _ = write!(s, ",{x:.8e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Cache("empty file".into()))?;
        let fields: Vec<&str> = header.split(' ').collect();
        if fields.len() != 3 || fields[0] != CACHE_MAGIC {
            return Err(Error::Cache(format!("bad header {header:?}")));
        }
        let dim: usize = fields[2].parse().map_err(|_| Error::Cache(format!("bad dimension {:?}", fields[2])))?;
        let mut cache = Self::new(fields[1], dim)?;
        for (i, line) in lines.enumerate() {
            let mut parts = line.split(',');
            let id = parts.next().unwrap_or_default();
            let mut v = Vec::new();
            for p in parts {
                if v.len() == dim {
                    return Err(Error::Cache(format!("line {}: more than {dim} values", i + 2)));
                }
                v.push(p.parse::<f32>().map_err(|_| Error::Cache(format!("line {}: bad value {p:?}", i + 2)))?);
            }
            cache.insert(id.to_string(), v).map_err(|e| Error::Cache(format!("line {}: {e}", i + 2)))?;
        }
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text)
    }
}

/// One property id per line; blank lines are ignored.
pub fn parse_exclusions(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect()
}
