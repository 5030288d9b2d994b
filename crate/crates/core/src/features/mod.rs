//! Per-property image features: every photo goes through the backbone, the
//! per-image CLS features are averaged, and the pooled vectors are cached.

mod cache;

use std::path::PathBuf;

use rayon::prelude::*;

pub use cache::{parse_exclusions, FeatureCache, CACHE_MAGIC};

use crate::error::{Error, Result};
use crate::image_io::{load_image, preprocess};
use crate::tabular::Manifest;
use crate::tensor::Tensor;
use crate::vit::{Backbone, FeatureVector};

/// The photos of one property, in manifest order.
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyImageSet {
    pub id: String,
    pub paths: Vec<PathBuf>,
}

pub fn image_sets(manifest: &Manifest) -> Vec<PropertyImageSet> {
    manifest
        .records
        .iter()
        .map(|r| PropertyImageSet { id: r.id.clone(), paths: r.images.iter().map(|p| manifest.image_path(p)).collect() })
        .collect()
}

/// One feature per decodable image. Images that fail to load are logged and
/// skipped; the call fails only when none succeed.
pub fn extract_property_features(set: &PropertyImageSet, backbone: &Backbone) -> Result<Vec<FeatureVector>> {
    if set.paths.is_empty() {
        return Err(Error::InvalidArgument(format!("property {} has no images", set.id)));
    }
    let input = backbone.config().input_size;
    let mut out = Vec::with_capacity(set.paths.len());
    let mut last_err = None;
    for path in &set.paths {
        let feature = load_image(path).and_then(|img| preprocess(&img, input)).and_then(|t| backbone.forward(&t));
        match feature {
            Ok(mut f) => {
                f.source = path.display().to_string();
                out.push(f);
            }
            Err(e) => {
                log::warn!("property {}: skipping {}: {e}", set.id, path.display());
                last_err = Some(e);
            }
        }
    }
    match (out.is_empty(), last_err) {
        (true, Some(e)) => Err(Error::Decode(format!("property {}: no usable image ({e})", set.id))),
        _ => Ok(out),
    }
}

/// Elementwise mean. Each coordinate is summed in f64 over the values sorted
/// by magnitude, so the result does not depend on the order of `vectors`.
pub fn pool_average(vectors: &[FeatureVector]) -> Result<FeatureVector> {
    let first = vectors.first().ok_or_else(|| Error::InvalidArgument("pooling an empty list".into()))?;
    let d = first.dim();
    if let Some(v) = vectors.iter().find(|v| v.dim() != d) {
        return Err(Error::Shape(format!("pooling vectors of dimension {d} and {}", v.dim())));
    }
    let n = vectors.len();
    let mut column = vec![0.0f32; n];
    let mut pooled = Vec::with_capacity(d);
    for j in 0..d {
        for (c, v) in column.iter_mut().zip(vectors) {
            *c = v.values.data()[j];
        }
        column.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
        let sum: f64 = column.iter().map(|&v| v as f64).sum();
        pooled.push((sum / n as f64) as f32);
    }
    Ok(FeatureVector { source: String::new(), values: Tensor::vector(pooled)? })
}

/// Result of [`build_cache`].
#[derive(Clone, Debug, PartialEq)]
pub struct CacheBuild {
    pub cache: FeatureCache,
    /// Properties listed with no images.
    pub excluded: Vec<String>,
    /// Properties whose images all failed, with the reason.
    pub failed: Vec<(String, String)>,
}

/// Pooled feature for every property with at least one decodable image.
pub fn build_cache(manifest: &Manifest, backbone: &Backbone, backbone_id: &str) -> Result<CacheBuild> {
    let sets = image_sets(manifest);
    let results: Vec<(String, Option<Result<FeatureVector>>)> = sets
        .par_iter()
        .map(|set| {
            if set.paths.is_empty() {
                return (set.id.clone(), None);
            }
            let pooled = extract_property_features(set, backbone).and_then(|fs| pool_average(&fs));
            (set.id.clone(), Some(pooled))
        })
        .collect();
    let mut cache = FeatureCache::new(backbone_id, backbone.config().dim)?;
    let mut excluded = Vec::new();
    let mut failed = Vec::new();
    for (id, r) in results {
        match r {
            None => excluded.push(id),
            Some(Ok(f)) => cache.insert(id, f.values.data().to_vec())?,
            Some(Err(e)) => {
                log::warn!("property {id}: {e}");
                failed.push((id, e.to_string()));
            }
        }
    }
    if cache.is_empty() {
        return Err(Error::NoFeatures);
    }
    Ok(CacheBuild { cache, excluded, failed })
}
