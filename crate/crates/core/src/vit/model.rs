//! Inference path of the Vision Transformer.
//!
//! Pre-norm encoder blocks: `x + MHSA(LN(x))` followed by
//! `x + W₂·gelu(W₁·LN(x) + b₁) + b₂`. The image feature is the CLS row of
//! the final layer norm.

use crate::error::{Error, Result};
use crate::image_io::ImageTensor;
use crate::tensor::{self, add_row_vector, layer_norm, matmul, matmul_nt, softmax_last_dim, Tensor};

use super::{ViTConfig, WeightStore};

/// One image's feature: the final-norm CLS token.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub source: String,
    pub values: Tensor,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Borrowed parameters of one encoder block. Matrices are stored
/// `in × out`, so a linear layer is `x · W + b`.
pub struct BlockParams<'a> {
    pub norm1_weight: &'a Tensor,
    pub norm1_bias: &'a Tensor,
    pub qkv_weight: &'a Tensor,
    pub qkv_bias: &'a Tensor,
    pub proj_weight: &'a Tensor,
    pub proj_bias: &'a Tensor,
    pub norm2_weight: &'a Tensor,
    pub norm2_bias: &'a Tensor,
    pub fc1_weight: &'a Tensor,
    pub fc1_bias: &'a Tensor,
    pub fc2_weight: &'a Tensor,
    pub fc2_bias: &'a Tensor,
}

impl<'a> BlockParams<'a> {
    pub fn from_store(ws: &'a WeightStore, block: usize) -> Result<Self> {
        let g = |s: &str| ws.get(&format!("blocks.{block}.{s}"));
        Ok(Self {
            norm1_weight: g("norm1.weight")?,
            norm1_bias: g("norm1.bias")?,
            qkv_weight: g("attn.qkv.weight")?,
            qkv_bias: g("attn.qkv.bias")?,
            proj_weight: g("attn.proj.weight")?,
            proj_bias: g("attn.proj.bias")?,
            norm2_weight: g("norm2.weight")?,
            norm2_bias: g("norm2.bias")?,
            fc1_weight: g("mlp.fc1.weight")?,
            fc1_bias: g("mlp.fc1.bias")?,
            fc2_weight: g("mlp.fc2.weight")?,
            fc2_bias: g("mlp.fc2.bias")?,
        })
    }
}

pub(crate) fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut y = matmul(x, w)?;
    add_row_vector(&mut y, b)?;
    Ok(y)
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Exact (erf-based) GELU.
pub fn gelu(x: f32) -> f32 {
    let x = x as f64;
    (0.5 * x * (1.0 + libm::erf(x / SQRT_2))) as f32
}

pub(crate) fn gelu_derivative(x: f32) -> f32 {
    let x = x as f64;
    let cdf = 0.5 * (1.0 + libm::erf(x / SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    (cdf + x * pdf) as f32
}

pub(crate) fn gelu_tensor(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = gelu(*v));
    y
}

/// Splits a `3×H×W` image into non-overlapping `N×N` patches. Row
/// `r·(W/N) + c` holds patch `(r, c)` flattened channel-major.
pub fn patchify(img: &ImageTensor, cfg: &ViTConfig) -> Result<Tensor> {
    let n = cfg.patch_size;
    let (h, w) = (img.height(), img.width());
    if h % n != 0 || w % n != 0 {
        return Err(Error::Shape(format!("image {h}x{w} is not divisible into {n}x{n} patches")));
    }
    let (gh, gw) = (h / n, w / n);
    let src = img.tensor().data();
    let mut out = Vec::with_capacity(3 * h * w);
    for r in 0..gh {
        for c in 0..gw {
            for ch in 0..3 {
                for dy in 0..n {
                    let start = ch * h * w + (r * n + dy) * w + c * n;
                    out.extend_from_slice(&src[start..start + n]);
                }
            }
        }
    }
    Tensor::matrix(gh * gw, 3 * n * n, out)
}

fn interp_1d(g_in: usize, g_out: usize) -> Vec<f64> {
    let mut m = vec![0.0; g_out * g_in];
    let scale = g_in as f64 / g_out as f64;
    for o in 0..g_out {
        let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (g_in - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(g_in - 1);
        let f = s - i0 as f64;
        m[o * g_in + i0] += 1.0 - f;
        m[o * g_in + i1] += f;
    }
    m
}

/// Bilinear resampling matrix (`g_out² × g_in²`) for a square grid of
/// positional embeddings, half-pixel aligned like the image resize.
pub(crate) fn pos_interp_matrix(g_in: usize, g_out: usize) -> Result<Tensor> {
    let m = interp_1d(g_in, g_out);
    let (ni, no) = (g_in * g_in, g_out * g_out);
    let mut data = vec![0.0f32; no * ni];
    for oy in 0..g_out {
        for ox in 0..g_out {
            for iy in 0..g_in {
                let wy = m[oy * g_in + iy];
                if wy == 0.0 {
                    continue;
                }
                for ix in 0..g_in {
                    data[(oy * g_out + ox) * ni + iy * g_in + ix] = (wy * m[ox * g_in + ix]) as f32;
                }
            }
        }
    }
    Tensor::matrix(no, ni, data)
}

pub(crate) fn square_grid(patch_rows: usize) -> Result<usize> {
    let g = (patch_rows as f64).sqrt().round() as usize;
    if g * g != patch_rows {
        return Err(Error::Shape(format!("{patch_rows} patches do not form a square grid")));
    }
    Ok(g)
}

/// Positional embeddings for the patch tokens of a `g×g` grid, resampled
/// from the native grid when the sizes differ. Returns the interpolation
/// matrix alongside when one was used.
pub(crate) fn patch_positions(pos: &Tensor, cfg: &ViTConfig, g: usize) -> Result<(Tensor, Option<Tensor>)> {
    let native = pos.slice_rows(1, pos.dims2()?.0)?;
    if g == cfg.grid() {
        return Ok((native, None));
    }
    let m = pos_interp_matrix(cfg.grid(), g)?;
    Ok((matmul(&m, &native)?, Some(m)))
}

/// Token matrix: row 0 is `cls + pos₀`, row `i ≥ 1` is `patchᵢ·W + b + posᵢ`.
pub fn embed(patches: &Tensor, ws: &WeightStore, cfg: &ViTConfig) -> Result<Tensor> {
    let (n, _) = patches.dims2()?;
    let g = square_grid(n)?;
    let proj = linear(patches, ws.get("patch_embed.proj.weight")?, ws.get("patch_embed.proj.bias")?)?;
    let pos = ws.get("pos_embed")?;
    let cls = ws.get("cls_token")?;
    if pos.shape() != [cfg.token_count(), cfg.dim] || cls.shape() != [1, cfg.dim] {
        return Err(Error::Weights(format!(
            "cls {:?} / pos {:?} do not match config",
            cls.shape(),
            pos.shape()
        )));
    }
    let (patch_pos, _) = patch_positions(pos, cfg, g)?;
    let d = cfg.dim;
    let mut out = Vec::with_capacity((n + 1) * d);
    out.extend(cls.data().iter().zip(pos.row(0)).map(|(a, b)| a + b));
    out.extend(proj.data().iter().zip(patch_pos.data()).map(|(a, b)| a + b));
    let t = Tensor::matrix(n + 1, d, out)?;
    tensor::ensure_finite(t.data(), "embed")?;
    Ok(t)
}

/// Copies columns `[start, start + width)` of a matrix.
pub(crate) fn columns(x: &Tensor, start: usize, width: usize) -> Tensor {
    let (r, c) = x.dims2().expect("matrix");
    let mut out = Vec::with_capacity(r * width);
    for i in 0..r {
        out.extend_from_slice(&x.data()[i * c + start..i * c + start + width]);
    }
    Tensor::matrix(r, width, out).expect("finite")
}

pub(crate) fn set_columns(dst: &mut Tensor, start: usize, src: &Tensor) {
    let (r, c) = dst.dims2().expect("matrix");
    let w = src.last_dim();
    for i in 0..r {
        dst.data_mut()[i * c + start..i * c + start + w].copy_from_slice(src.row(i));
    }
}

/// Observer of attention probabilities: `(block, head, T×T probabilities)`.
pub type AttentionObserver<'o> = dyn FnMut(usize, usize, &Tensor) + 'o;

/// Multi-head attention over a packed `T × 3D` projection (`[Q | K | V]`).
/// Returns the concatenated head outputs and, when asked, the per-head
/// probability matrices.
pub(crate) fn attention_heads(
    qkv: &Tensor,
    cfg: &ViTConfig,
    keep_probs: bool,
    block: usize,
    mut observer: Option<&mut AttentionObserver<'_>>,
) -> Result<(Tensor, Vec<Tensor>)> {
    let (t, _) = qkv.dims2()?;
    let (d, dh) = (cfg.dim, cfg.head_dim());
    let scale = 1.0 / (dh as f32).sqrt();
    let mut concat = Tensor::zeros(&[t, d]);
    let mut kept = Vec::new();
    for h in 0..cfg.heads {
        let q = columns(qkv, h * dh, dh);
        let k = columns(qkv, d + h * dh, dh);
        let v = columns(qkv, 2 * d + h * dh, dh);
        let scores = matmul_nt(&q, &k)?.scale(scale)?;
        let probs = softmax_last_dim(&scores, 1.0)?;
        if let Some(obs) = observer.as_deref_mut() {
            obs(block, h, &probs);
        }
        let out = matmul(&probs, &v)?;
        set_columns(&mut concat, h * dh, &out);
        if keep_probs {
            kept.push(probs);
        }
    }
    Ok((concat, kept))
}

fn attention_block_observed(
    x: &Tensor,
    p: &BlockParams<'_>,
    cfg: &ViTConfig,
    block: usize,
    observer: Option<&mut AttentionObserver<'_>>,
) -> Result<Tensor> {
    let h = layer_norm(x, p.norm1_weight, p.norm1_bias, cfg.ln_eps)?;
    let qkv = linear(&h, p.qkv_weight, p.qkv_bias)?;
    let (concat, _) = attention_heads(&qkv, cfg, false, block, observer)?;
    let branch = linear(&concat, p.proj_weight, p.proj_bias)?;
    x.add(&branch)
}

/// `x + proj(MHSA(LN(x)))` with scores `QKᵀ/√(D/heads)`.
pub fn attention_block(x: &Tensor, p: &BlockParams<'_>, cfg: &ViTConfig) -> Result<Tensor> {
    attention_block_observed(x, p, cfg, 0, None)
}

/// `x + W₂·gelu(W₁·LN(x) + b₁) + b₂`, row-wise.
pub fn mlp_block(x: &Tensor, p: &BlockParams<'_>, cfg: &ViTConfig) -> Result<Tensor> {
    let h = layer_norm(x, p.norm2_weight, p.norm2_bias, cfg.ln_eps)?;
    let u = linear(&h, p.fc1_weight, p.fc1_bias)?;
    let branch = linear(&gelu_tensor(&u), p.fc2_weight, p.fc2_bias)?;
    x.add(&branch)
}

/// Runs the encoder blocks and the final layer norm over a token matrix.
pub fn encode(
    tokens: &Tensor,
    ws: &WeightStore,
    cfg: &ViTConfig,
    mut observer: Option<&mut AttentionObserver<'_>>,
) -> Result<Tensor> {
    let (t, d) = tokens.dims2()?;
    if d != cfg.dim {
        return Err(Error::Shape(format!("tokens of width {d} for dim {}", cfg.dim)));
    }
    let mut x = tokens.clone();
    for b in 0..cfg.depth {
        let p = BlockParams::from_store(ws, b)?;
        x = attention_block_observed(&x, &p, cfg, b, observer.as_deref_mut())
            .and_then(|x| mlp_block(&x, &p, cfg))
            .map_err(|e| match e {
                Error::NonFinite(what) => Error::NonFinite(format!("block {b}: {what}")),
                other => other,
            })?;
        debug_assert_eq!(x.shape(), [t, d]);
    }
    layer_norm(&x, ws.get("norm.weight")?, ws.get("norm.bias")?, cfg.ln_eps)
}

/// A weight store validated against a configuration.
#[derive(Clone, Debug)]
pub struct Backbone {
    cfg: ViTConfig,
    weights: WeightStore,
}

impl Backbone {
    pub fn new(cfg: ViTConfig, weights: WeightStore) -> Result<Self> {
        cfg.validate()?;
        weights.check_exact(&cfg.parameter_shapes())?;
        Ok(Self { cfg, weights })
    }

    pub fn config(&self) -> &ViTConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &WeightStore {
        &self.weights
    }

    pub fn forward(&self, img: &ImageTensor) -> Result<FeatureVector> {
        self.forward_observed(img, None)
    }

    pub fn forward_observed(
        &self,
        img: &ImageTensor,
        observer: Option<&mut AttentionObserver<'_>>,
    ) -> Result<FeatureVector> {
        let patches = patchify(img, &self.cfg)?;
        let tokens = embed(&patches, &self.weights, &self.cfg)?;
        let out = encode(&tokens, &self.weights, &self.cfg, observer)?;
        Ok(FeatureVector { source: String::new(), values: Tensor::vector(out.row(0).to_vec())? })
    }
}

/// Image feature of dimension `cfg.dim`: embed, encoder blocks, final norm,
/// CLS row.
pub fn forward(img: &ImageTensor, weights: &WeightStore, cfg: &ViTConfig) -> Result<FeatureVector> {
    weights.check_exact(&cfg.parameter_shapes())?;
    let patches = patchify(img, cfg)?;
    let tokens = embed(&patches, weights, cfg)?;
    let out = encode(&tokens, weights, cfg, None)?;
    Ok(FeatureVector { source: String::new(), values: Tensor::vector(out.row(0).to_vec())? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_io::{normalize, RasterImage};
    use crate::rng::Rng;
    use crate::vit::{init_backbone, preset};

    fn mini() -> ViTConfig {
        preset("vit-mini/8").unwrap()
    }

    fn random_image(rng: &mut Rng, size: usize) -> ImageTensor {
        normalize(&RasterImage::from_fn(size, size, |_, _| {
            [rng.below(256) as u8, rng.below(256) as u8, rng.below(256) as u8]
        }))
    }

    fn randomize(ws: &mut WeightStore, rng: &mut Rng, std: f32) {
        for (_, t) in ws.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = rng.normal() as f32 * std);
        }
    }

    #[test]
    fn patchify_quadrants() {
        let mut cfg = mini();
        cfg.patch_size = 112;
        cfg.input_size = 224;
        let t = Tensor::from_fn(&[3, 224, 224], |i| (i % 1009) as f32);
        let img = ImageTensor::from_tensor(t.clone()).unwrap();
        let p = patchify(&img, &cfg).unwrap();
        assert_eq!(p.shape(), &[4, 3 * 112 * 112]);
        for (q, (r0, c0)) in [(0, 0), (0, 112), (112, 0), (112, 112)].into_iter().enumerate() {
            let row = p.row(q);
            let mut k = 0;
            for ch in 0..3 {
                for y in 0..112 {
                    for x in 0..112 {
                        assert_eq!(row[k], t.data()[ch * 224 * 224 + (r0 + y) * 224 + c0 + x]);
                        k += 1;
                    }
                }
            }
        }
    }

    #[test]
    fn patchify_constant_and_inverse_tiling() {
        let cfg = mini();
        let flat = normalize(&RasterImage::from_fn(32, 32, |_, _| [9, 99, 199]));
        let p = patchify(&flat, &cfg).unwrap();
        assert!((1..16).all(|r| p.row(r) == p.row(0)));

        let mut rng = Rng::new(1);
        let img = random_image(&mut rng, 32);
        let p = patchify(&img, &cfg).unwrap();
        let (n, g) = (8, 4);
        let mut rebuilt = vec![f32::NAN; 3 * 32 * 32];
        for r in 0..g {
            for c in 0..g {
                let row = p.row(r * g + c);
                for ch in 0..3 {
                    for dy in 0..n {
                        for dx in 0..n {
                            rebuilt[ch * 1024 + (r * n + dy) * 32 + c * n + dx] = row[ch * 64 + dy * 8 + dx];
                        }
                    }
                }
            }
        }
        assert_eq!(rebuilt.as_slice(), img.tensor().data());

        let odd = normalize(&RasterImage::from_fn(30, 32, |_, _| [0, 0, 0]));
        assert!(patchify(&odd, &cfg).is_err());
    }

    #[test]
    fn embed_examples() {
        let cfg = mini();
        let mut rng = Rng::new(2);
        let mut ws = init_backbone(&cfg, &mut rng).unwrap();
        let patches = Tensor::from_fn(&[16, 192], |_| rng.normal() as f32);

        // zero projection: rows equal positional embeddings (+cls on row 0)
        *ws.get_mut("patch_embed.proj.weight").unwrap() = Tensor::zeros(&[192, 64]);
        let e = embed(&patches, &ws, &cfg).unwrap();
        let pos = ws.get("pos_embed").unwrap();
        let cls = ws.get("cls_token").unwrap();
        for j in 0..64 {
            assert_eq!(e.row(0)[j], cls.data()[j] + pos.row(0)[j]);
        }
        assert_eq!(&e.data()[64..], &pos.data()[64..]);

        // random: per-row oracle
        randomize(&mut ws, &mut rng, 0.1);
        let e = embed(&patches, &ws, &cfg).unwrap();
        let w = ws.get("patch_embed.proj.weight").unwrap();
        let b = ws.get("patch_embed.proj.bias").unwrap();
        let pos = ws.get("pos_embed").unwrap();
        for i in 0..16 {
            for j in 0..64 {
                let mut acc = b.data()[j] as f64 + pos.row(i + 1)[j] as f64;
                for k in 0..192 {
                    acc += patches.row(i)[k] as f64 * w.data()[k * 64 + j] as f64;
                }
                assert!((e.row(i + 1)[j] as f64 - acc).abs() < 1e-6 * acc.abs().max(1.0));
            }
        }

        // all-zero everything
        let zero = ws.zeros_like();
        let e = embed(&Tensor::zeros(&[16, 192]), &zero, &cfg).unwrap();
        assert_eq!(e.max_abs(), 0.0);
    }

    #[test]
    fn interpolation_preserves_constants_and_identity() {
        let m = pos_interp_matrix(4, 4).unwrap();
        assert_eq!(m, Tensor::eye(16));
        let m = pos_interp_matrix(14, 6).unwrap();
        for r in 0..36 {
            let s: f32 = m.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_branches_are_identity() {
        let cfg = mini();
        let mut rng = Rng::new(4);
        let mut ws = init_backbone(&cfg, &mut rng).unwrap();
        for name in ["attn.qkv.weight", "attn.proj.weight", "mlp.fc2.weight"] {
            let t = ws.get_mut(&format!("blocks.0.{name}")).unwrap();
            *t = Tensor::zeros(t.shape());
        }
        let p = BlockParams::from_store(&ws, 0).unwrap();
        let x = Tensor::from_fn(&[17, 64], |_| rng.normal() as f32);
        assert_eq!(attention_block(&x, &p, &cfg).unwrap(), x);
        assert_eq!(mlp_block(&x, &p, &cfg).unwrap(), x);

        // gelu(0) = 0: zero input with zero biases and beta stays zero
        let z = Tensor::zeros(&[17, 64]);
        let ws0 = init_backbone(&cfg, &mut rng).unwrap();
        let p0 = BlockParams::from_store(&ws0, 1).unwrap();
        assert_eq!(mlp_block(&z, &p0, &cfg).unwrap(), z);
        assert_eq!(gelu(0.0), 0.0);
    }

    #[test]
    fn single_token_attention_passes_values_through() {
        let cfg = mini();
        let mut rng = Rng::new(5);
        let mut ws = init_backbone(&cfg, &mut rng).unwrap();
        randomize(&mut ws, &mut rng, 0.2);
        let p = BlockParams::from_store(&ws, 0).unwrap();
        let x = Tensor::from_fn(&[1, 64], |_| rng.normal() as f32);
        let got = attention_block(&x, &p, &cfg).unwrap();
        let h = layer_norm(&x, p.norm1_weight, p.norm1_bias, cfg.ln_eps).unwrap();
        let qkv = linear(&h, p.qkv_weight, p.qkv_bias).unwrap();
        let v = columns(&qkv, 128, 64);
        let expect = x.add(&linear(&v, p.proj_weight, p.proj_bias).unwrap()).unwrap();
        assert!(got.sub(&expect).unwrap().max_abs() < 1e-6);
    }

    fn loop_layer_norm(x: &[f64], g: &[f32], b: &[f32], eps: f64) -> Vec<f64> {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        x.iter().enumerate().map(|(j, v)| (v - mean) / (var + eps).sqrt() * g[j] as f64 + b[j] as f64).collect()
    }

    fn loop_linear(x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
        let (i_dim, o_dim) = w.dims2().unwrap();
        (0..o_dim)
            .map(|o| b.data()[o] as f64 + (0..i_dim).map(|i| x[i] * w.data()[i * o_dim + o] as f64).sum::<f64>())
            .collect()
    }

    #[test]
    fn single_head_attention_matches_loop_oracle() {
        let mut cfg = mini();
        cfg.heads = 1;
        let mut rng = Rng::new(6);
        let mut ws = init_backbone(&cfg, &mut rng).unwrap();
        randomize(&mut ws, &mut rng, 0.15);
        let p = BlockParams::from_store(&ws, 0).unwrap();
        let (t, d) = (4, 64);
        let x = Tensor::from_fn(&[t, d], |_| rng.normal() as f32);
        let got = attention_block(&x, &p, &cfg).unwrap();

        let rows: Vec<Vec<f64>> = (0..t)
            .map(|i| {
                let xi: Vec<f64> = x.row(i).iter().map(|&v| v as f64).collect();
                let h = loop_layer_norm(&xi, p.norm1_weight.data(), p.norm1_bias.data(), cfg.ln_eps as f64);
                loop_linear(&h, p.qkv_weight, p.qkv_bias)
            })
            .collect();
        for i in 0..t {
            let scores: Vec<f64> = (0..t)
                .map(|j| (0..d).map(|k| rows[i][k] * rows[j][d + k]).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
            let mut o = vec![0.0; d];
            for j in 0..t {
                let a = (scores[j] - m).exp() / z;
                for k in 0..d {
                    o[k] += a * rows[j][2 * d + k];
                }
            }
            let proj = loop_linear(&o, p.proj_weight, p.proj_bias);
            for k in 0..d {
                let expect = x.row(i)[k] as f64 + proj[k];
                assert!((got.row(i)[k] as f64 - expect).abs() < 1e-5, "({i},{k})");
            }
        }
    }

    #[test]
    fn mlp_matches_loop_oracle() {
        let cfg = mini();
        let mut rng = Rng::new(7);
        let mut ws = init_backbone(&cfg, &mut rng).unwrap();
        randomize(&mut ws, &mut rng, 0.1);
        let p = BlockParams::from_store(&ws, 1).unwrap();
        let x = Tensor::from_fn(&[3, 64], |_| rng.normal() as f32);
        let got = mlp_block(&x, &p, &cfg).unwrap();
        for i in 0..3 {
            let xi: Vec<f64> = x.row(i).iter().map(|&v| v as f64).collect();
            let h = loop_layer_norm(&xi, p.norm2_weight.data(), p.norm2_bias.data(), cfg.ln_eps as f64);
            let u: Vec<f64> = loop_linear(&h, p.fc1_weight, p.fc1_bias)
                .into_iter()
                .map(|v| 0.5 * v * (1.0 + libm::erf(v / SQRT_2)))
                .collect();
            let y = loop_linear(&u, p.fc2_weight, p.fc2_bias);
            for k in 0..64 {
                assert!((got.row(i)[k] as f64 - (xi[k] + y[k])).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn forward_shapes_and_identity_composition() {
        let cfg = mini();
        let mut rng = Rng::new(8);
        let mut ws = init_backbone(&cfg, &mut rng).unwrap();
        let img = random_image(&mut rng, 32);
        let f = forward(&img, &ws, &cfg).unwrap();
        assert_eq!(f.dim(), 64);
        // determinism
        assert_eq!(forward(&img, &ws, &cfg).unwrap(), f);

        for b in 0..cfg.depth {
            for name in ["attn.proj.weight", "attn.proj.bias", "mlp.fc2.weight", "mlp.fc2.bias"] {
                let t = ws.get_mut(&format!("blocks.{b}.{name}")).unwrap();
                *t = Tensor::zeros(t.shape());
            }
        }
        let f = forward(&img, &ws, &cfg).unwrap();
        let cls0 = ws.get("cls_token").unwrap().add(&ws.get("pos_embed").unwrap().slice_rows(0, 1).unwrap()).unwrap();
        let expect = layer_norm(&cls0, ws.get("norm.weight").unwrap(), ws.get("norm.bias").unwrap(), cfg.ln_eps).unwrap();
        assert!(f.values.data().iter().zip(expect.data()).all(|(a, b)| (a - b).abs() < 1e-6));
    }

    #[test]
    fn forward_rejects_incomplete_weights() {
        let cfg = mini();
        let ws = init_backbone(&cfg, &mut Rng::new(0)).unwrap();
        let img = random_image(&mut Rng::new(1), 32);
        let partial = ws.filtered(|n| !n.starts_with("blocks.1."));
        assert!(matches!(forward(&img, &partial, &cfg), Err(Error::Weights(_))));
        assert!(Backbone::new(cfg.clone(), partial).is_err());
    }

    #[test]
    fn local_views_use_interpolated_positions() {
        let cfg = mini();
        let mut rng = Rng::new(9);
        let ws = init_backbone(&cfg, &mut rng).unwrap();
        let small = random_image(&mut rng, 16);
        let f = forward(&small, &ws, &cfg).unwrap();
        assert_eq!(f.dim(), 64);
    }
}
