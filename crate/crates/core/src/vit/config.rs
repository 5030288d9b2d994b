use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::LAYER_NORM_EPS;

/// Architecture hyperparameters of a Vision Transformer backbone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViTConfig {
    pub name: String,
    pub patch_size: usize,
    pub depth: usize,
    pub dim: usize,
    pub heads: usize,
    pub mlp_ratio: f32,
    pub input_size: usize,
    pub ln_eps: f32,
}

/// Preset names accepted by [`preset`].
pub const PRESETS: [&str; 5] = ["vit-s/16", "vit-s/8", "vit-b/16", "vit-b/8", "vit-mini/8"];

/// Looks up a named architecture.
///
/// | preset     | blocks | dim | heads | tokens |
/// |------------|--------|-----|-------|--------|
/// | vit-s/16   | 12     | 384 | 6     | 197    |
/// | vit-s/8    | 12     | 384 | 6     | 785    |
/// | vit-b/16   | 12     | 768 | 12    | 197    |
/// | vit-b/8    | 12     | 768 | 12    | 785    |
/// | vit-mini/8 | 2      | 64  | 4     | 17     |
///
/// `vit-mini/8` takes 32-pixel inputs and exists for desk-scale training.
pub fn preset(name: &str) -> Result<ViTConfig> {
    let (depth, dim, heads, patch, input) = match name {
        "vit-s/16" => (12, 384, 6, 16, 224),
        "vit-s/8" => (12, 384, 6, 8, 224),
        "vit-b/16" => (12, 768, 12, 16, 224),
        "vit-b/8" => (12, 768, 12, 8, 224),
        "vit-mini/8" => (2, 64, 4, 8, 32),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown preset {other:?} (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    let cfg = ViTConfig {
        name: name.to_string(),
        patch_size: patch,
        depth,
        dim,
        heads,
        mlp_ratio: 4.0,
        input_size: input,
        ln_eps: LAYER_NORM_EPS,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl ViTConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.depth == 0 || self.dim == 0 || self.heads == 0 {
            return Err(Error::InvalidArgument(format!("degenerate config {self:?}")));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "dim {} not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if self.input_size % self.patch_size != 0 {
            return Err(Error::InvalidArgument(format!(
                "input size {} not divisible by patch size {}",
                self.input_size, self.patch_size
            )));
        }
        if !(self.mlp_ratio > 0.0) || self.mlp_hidden() == 0 {
            return Err(Error::InvalidArgument("mlp_ratio must be positive".into()));
        }
        Ok(())
    }

    /// Patches per side at the native input size.
    pub fn grid(&self) -> usize {
        self.input_size / self.patch_size
    }

    /// Patch tokens plus the CLS token.
    pub fn token_count(&self) -> usize {
        self.grid() * self.grid() + 1
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn mlp_hidden(&self) -> usize {
        (self.mlp_ratio * self.dim as f32).round() as usize
    }

    pub fn patch_features(&self) -> usize {
        3 * self.patch_size * self.patch_size
    }

    /// Every backbone parameter with its shape, in initialisation order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (d, h) = (self.dim, self.mlp_hidden());
        let mut out = vec![
            ("patch_embed.proj.weight".to_string(), vec![self.patch_features(), d]),
            ("patch_embed.proj.bias".to_string(), vec![d]),
            ("cls_token".to_string(), vec![1, d]),
            ("pos_embed".to_string(), vec![self.token_count(), d]),
        ];
        for b in 0..self.depth {
            let p = |s: &str| format!("blocks.{b}.{s}");
            out.extend([
                (p("norm1.weight"), vec![d]),
                (p("norm1.bias"), vec![d]),
                (p("attn.qkv.weight"), vec![d, 3 * d]),
                (p("attn.qkv.bias"), vec![3 * d]),
                (p("attn.proj.weight"), vec![d, d]),
                (p("attn.proj.bias"), vec![d]),
                (p("norm2.weight"), vec![d]),
                (p("norm2.bias"), vec![d]),
                (p("mlp.fc1.weight"), vec![d, h]),
                (p("mlp.fc1.bias"), vec![h]),
                (p("mlp.fc2.weight"), vec![h, d]),
                (p("mlp.fc2.bias"), vec![d]),
            ]);
        }
        out.push(("norm.weight".to_string(), vec![d]));
        out.push(("norm.bias".to_string(), vec![d]));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_table() {
        let s16 = preset("vit-s/16").unwrap();
        assert_eq!((s16.depth, s16.dim, s16.heads, s16.token_count()), (12, 384, 6, 197));
        let b8 = preset("vit-b/8").unwrap();
        assert_eq!((b8.depth, b8.dim, b8.heads, b8.token_count()), (12, 768, 12, 785));
        assert_eq!(preset("vit-s/8").unwrap().token_count(), 785);
        assert_eq!(preset("vit-mini/8").unwrap().token_count(), 17);
        assert!(preset("resnet-50").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = preset("vit-mini/8").unwrap();
        cfg.heads = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = preset("vit-mini/8").unwrap();
        cfg.input_size = 30;
        assert!(cfg.validate().is_err());
    }
}
