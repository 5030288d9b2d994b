//! Forward pass with saved activations, and the matching backward pass.
//! Gradients accumulate into a [`WeightStore`] keyed like the parameters.

use crate::error::Result;
use crate::image_io::ImageTensor;
use crate::tensor::{
    layer_norm_cached, matmul, matmul_nt, matmul_tn, sum_rows, LayerNormCache, Tensor,
};

use super::model::{
    attention_heads, columns, gelu_derivative, gelu_tensor, linear, patch_positions, patchify,
    set_columns, square_grid, BlockParams,
};
use super::{ViTConfig, WeightStore};

struct BlockCache {
    ln1: LayerNormCache,
    h1: Tensor,
    qkv: Tensor,
    probs: Vec<Tensor>,
    concat: Tensor,
    ln2: LayerNormCache,
    h2: Tensor,
    pre_act: Tensor,
    act: Tensor,
}

/// Activations of one image needed to backpropagate into the backbone.
pub struct ForwardCache {
    patches: Tensor,
    interp: Option<Tensor>,
    blocks: Vec<BlockCache>,
    final_ln: LayerNormCache,
}

/// Backward of `y = γ·x̂ + β` with `x̂` the row-normalised input.
/// Returns `dx` and accumulates `dγ`, `dβ`.
pub(crate) fn layer_norm_backward(
    dy: &Tensor,
    cache: &LayerNormCache,
    gamma: &Tensor,
    dgamma: &mut Tensor,
    dbeta: &mut Tensor,
) -> Tensor {
    let c = dy.last_dim();
    let rows = dy.len() / c;
    let mut dx = Tensor::zeros(dy.shape());
    let g = gamma.data();
    for r in 0..rows {
        let dyr = &dy.data()[r * c..(r + 1) * c];
        let xh = &cache.normalized.data()[r * c..(r + 1) * c];
        let mut mean_d = 0.0f64;
        let mut mean_dx = 0.0f64;
        for j in 0..c {
            let dxh = dyr[j] as f64 * g[j] as f64;
            mean_d += dxh;
            mean_dx += dxh * xh[j] as f64;
            dgamma.data_mut()[j] += dyr[j] * xh[j];
            dbeta.data_mut()[j] += dyr[j];
        }
        mean_d /= c as f64;
        mean_dx /= c as f64;
        let rstd = cache.inv_std[r] as f64;
        let out = &mut dx.data_mut()[r * c..(r + 1) * c];
        for j in 0..c {
            let dxh = dyr[j] as f64 * g[j] as f64;
            out[j] = (rstd * (dxh - mean_d - xh[j] as f64 * mean_dx)) as f32;
        }
    }
    dx
}

fn accumulate(grads: &mut WeightStore, name: &str, g: &Tensor) -> Result<()> {
    grads.get_mut(name)?.axpy(1.0, g)
}

/// Backward of `y = x·W + b`: accumulates `dW`, `db`, returns `dx`.
pub(crate) fn linear_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    grads: &mut WeightStore,
    weight_name: &str,
    bias_name: &str,
) -> Result<Tensor> {
    accumulate(grads, weight_name, &matmul_tn(x, dy)?)?;
    accumulate(grads, bias_name, &sum_rows(dy)?)?;
    matmul_nt(dy, w)
}

/// Forward pass that records every activation the backward pass needs.
/// Returns the CLS feature (length `dim`).
pub fn forward_train(img: &ImageTensor, ws: &WeightStore, cfg: &ViTConfig) -> Result<(Tensor, ForwardCache)> {
    let patches = patchify(img, cfg)?;
    let g = square_grid(patches.dims2()?.0)?;
    let proj = linear(&patches, ws.get("patch_embed.proj.weight")?, ws.get("patch_embed.proj.bias")?)?;
    let pos = ws.get("pos_embed")?;
    let (patch_pos, interp) = patch_positions(pos, cfg, g)?;
    let cls = ws.get("cls_token")?.add(&pos.slice_rows(0, 1)?)?;
    let mut rows = cls.data().to_vec();
    rows.extend(proj.add(&patch_pos)?.into_data());
    let mut x = Tensor::matrix(g * g + 1, cfg.dim, rows)?;

    let mut blocks = Vec::with_capacity(cfg.depth);
    for b in 0..cfg.depth {
        let p = BlockParams::from_store(ws, b)?;
        let (h1, ln1) = layer_norm_cached(&x, p.norm1_weight, p.norm1_bias, cfg.ln_eps)?;
        let qkv = linear(&h1, p.qkv_weight, p.qkv_bias)?;
        let (concat, probs) = attention_heads(&qkv, cfg, true, b, None)?;
        let x_mid = x.add(&linear(&concat, p.proj_weight, p.proj_bias)?)?;
        let (h2, ln2) = layer_norm_cached(&x_mid, p.norm2_weight, p.norm2_bias, cfg.ln_eps)?;
        let pre_act = linear(&h2, p.fc1_weight, p.fc1_bias)?;
        let act = gelu_tensor(&pre_act);
        x = x_mid.add(&linear(&act, p.fc2_weight, p.fc2_bias)?)?;
        blocks.push(BlockCache { ln1, h1, qkv, probs, concat, ln2, h2, pre_act, act });
    }
    let cls_row = x.slice_rows(0, 1)?;
    let (feature, final_ln) = layer_norm_cached(&cls_row, ws.get("norm.weight")?, ws.get("norm.bias")?, cfg.ln_eps)?;
    let feature = feature.reshape(vec![cfg.dim])?;
    Ok((feature, ForwardCache { patches, interp, blocks, final_ln }))
}

/// Accumulates into `grads` the gradient of a scalar loss whose derivative
/// with respect to the CLS feature is `d_feature`.
pub fn backward(
    cache: &ForwardCache,
    d_feature: &Tensor,
    ws: &WeightStore,
    cfg: &ViTConfig,
    grads: &mut WeightStore,
) -> Result<()> {
    let d = cfg.dim;
    let t = cache.patches.dims2()?.0 + 1;
    let d_row = d_feature.clone().reshape(vec![1, d])?;

    let (mut dgn, mut dbn) = (Tensor::zeros(&[d]), Tensor::zeros(&[d]));
    let d_cls = layer_norm_backward(&d_row, &cache.final_ln, ws.get("norm.weight")?, &mut dgn, &mut dbn);
    accumulate(grads, "norm.weight", &dgn)?;
    accumulate(grads, "norm.bias", &dbn)?;
    let mut dx = Tensor::zeros(&[t, d]);
    dx.row_mut(0).copy_from_slice(d_cls.data());

    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f32).sqrt();
    for b in (0..cfg.depth).rev() {
        let p = BlockParams::from_store(ws, b)?;
        let c = &cache.blocks[b];
        let name = |s: &str| format!("blocks.{b}.{s}");

        // MLP branch: x_out = x_mid + fc2(gelu(fc1(LN2(x_mid))))
        let d_act = linear_backward(&c.act, p.fc2_weight, &dx, grads, &name("mlp.fc2.weight"), &name("mlp.fc2.bias"))?;
        let mut d_pre = d_act;
        for (g, &u) in d_pre.data_mut().iter_mut().zip(c.pre_act.data()) {
            *g *= gelu_derivative(u);
        }
        let d_h2 = linear_backward(&c.h2, p.fc1_weight, &d_pre, grads, &name("mlp.fc1.weight"), &name("mlp.fc1.bias"))?;
        let (mut dg, mut db) = (Tensor::zeros(&[d]), Tensor::zeros(&[d]));
        let d_mid_ln = layer_norm_backward(&d_h2, &c.ln2, p.norm2_weight, &mut dg, &mut db);
        accumulate(grads, &name("norm2.weight"), &dg)?;
        accumulate(grads, &name("norm2.bias"), &db)?;
        let d_mid = dx.add(&d_mid_ln)?;

        // Attention branch: x_mid = x_in + proj(MHSA(LN1(x_in)))
        let d_concat =
            linear_backward(&c.concat, p.proj_weight, &d_mid, grads, &name("attn.proj.weight"), &name("attn.proj.bias"))?;
        let mut d_qkv = Tensor::zeros(&[t, 3 * d]);
        for h in 0..cfg.heads {
            let q = columns(&c.qkv, h * dh, dh);
            let k = columns(&c.qkv, d + h * dh, dh);
            let v = columns(&c.qkv, 2 * d + h * dh, dh);
            let probs = &c.probs[h];
            let d_out = columns(&d_concat, h * dh, dh);
            let d_v = matmul_tn(probs, &d_out)?;
            let d_probs = matmul_nt(&d_out, &v)?;
            // softmax backward, row-wise: dS = P ⊙ (dP − Σ_j dP⊙P)
            let mut d_scores = d_probs;
            for r in 0..t {
                let pr = probs.row(r);
                let dr = d_scores.row_mut(r);
                let dot: f64 = pr.iter().zip(dr.iter()).map(|(&a, &b)| a as f64 * b as f64).sum();
                for (g, &pv) in dr.iter_mut().zip(pr) {
                    *g = (pv as f64 * (*g as f64 - dot)) as f32 * scale;
                }
            }
            let d_q = matmul(&d_scores, &k)?;
            let d_k = matmul_tn(&d_scores, &q)?;
            set_columns(&mut d_qkv, h * dh, &d_q);
            set_columns(&mut d_qkv, d + h * dh, &d_k);
            set_columns(&mut d_qkv, 2 * d + h * dh, &d_v);
        }
        let d_h1 = linear_backward(&c.h1, p.qkv_weight, &d_qkv, grads, &name("attn.qkv.weight"), &name("attn.qkv.bias"))?;
        let (mut dg, mut db) = (Tensor::zeros(&[d]), Tensor::zeros(&[d]));
        let d_in_ln = layer_norm_backward(&d_h1, &c.ln1, p.norm1_weight, &mut dg, &mut db);
        accumulate(grads, &name("norm1.weight"), &dg)?;
        accumulate(grads, &name("norm1.bias"), &db)?;
        dx = d_mid.add(&d_in_ln)?;
    }

    // Embedding: row 0 = cls + pos₀, rows 1.. = patches·W + b + M·pos₁..
    let d_cls_row = dx.slice_rows(0, 1)?;
    accumulate(grads, "cls_token", &d_cls_row)?;
    let d_patch_tokens = dx.slice_rows(1, t)?;
    linear_backward_params_only(&cache.patches, &d_patch_tokens, grads)?;
    let d_pos_patches = match &cache.interp {
        Some(m) => matmul_tn(m, &d_patch_tokens)?,
        None => d_patch_tokens,
    };
    let mut d_pos = d_cls_row.into_data();
    d_pos.extend(d_pos_patches.into_data());
    accumulate(grads, "pos_embed", &Tensor::matrix(cfg.token_count(), d, d_pos)?)?;
    Ok(())
}

fn linear_backward_params_only(x: &Tensor, dy: &Tensor, grads: &mut WeightStore) -> Result<()> {
    accumulate(grads, "patch_embed.proj.weight", &matmul_tn(x, dy)?)?;
    accumulate(grads, "patch_embed.proj.bias", &sum_rows(dy)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_io::{normalize, RasterImage};
    use crate::rng::Rng;
    use crate::tensor::finite_difference_gradient;
    use crate::vit::{forward, init_backbone, preset};

    fn setup(seed: u64, size: usize) -> (ViTConfig, WeightStore, ImageTensor, Tensor) {
        let mut cfg = preset("vit-mini/8").unwrap();
        cfg.depth = 1;
        cfg.dim = 16;
        cfg.heads = 2;
        let mut rng = Rng::new(seed);
        let mut ws = init_backbone(&cfg, &mut rng).unwrap();
        for (_, t) in ws.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng.normal() as f32 * 0.3);
        }
        let img = normalize(&RasterImage::from_fn(size, size, |_, _| {
            [rng.below(256) as u8, rng.below(256) as u8, rng.below(256) as u8]
        }));
        let probe = Tensor::from_fn(&[cfg.dim], |_| rng.normal() as f32);
        (cfg, ws, img, probe)
    }

    /// Loss = probe · feature, evaluated through the inference path.
    fn loss(ws: &WeightStore, cfg: &ViTConfig, img: &ImageTensor, probe: &Tensor) -> f64 {
        let f = forward(img, ws, cfg).unwrap();
        f.values.data().iter().zip(probe.data()).map(|(&a, &b)| a as f64 * b as f64).sum()
    }

    fn check_against_finite_differences(size: usize) {
        let (cfg, ws, img, probe) = setup(21, size);
        let (feature, cache) = forward_train(&img, &ws, &cfg).unwrap();
        assert_eq!(feature, forward(&img, &ws, &cfg).unwrap().values);
        let mut grads = ws.zeros_like();
        backward(&cache, &probe, &ws, &cfg, &mut grads).unwrap();

        for (name, _) in cfg.parameter_shapes() {
            let base = ws.get(&name).unwrap().clone();
            let fd = finite_difference_gradient(
                |t| {
                    let mut w = ws.clone();
                    *w.get_mut(&name).unwrap() = t.clone();
                    Ok(loss(&w, &cfg, &img, &probe))
                },
                &base,
                1e-2,
            )
            .unwrap();
            let an = grads.get(&name).unwrap();
            let diff = an.sub(&fd).unwrap().norm_l2();
            let scale = fd.norm_l2().max(an.norm_l2()).max(1e-3);
            assert!(diff / scale < 2e-2, "{name}: relative error {}", diff / scale);
        }
    }

    #[test]
    fn backbone_gradient_matches_finite_differences() {
        check_against_finite_differences(32);
    }

    #[test]
    fn gradient_through_interpolated_positions() {
        check_against_finite_differences(16);
    }
}
