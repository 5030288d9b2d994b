//! Projection head: linear layers with GELU between them, mapping backbone
//! features to `K` prototype logits. Parameters live in the same
//! [`WeightStore`] as the backbone under `head.{i}.weight` / `head.{i}.bias`.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::vit::{gelu_derivative, gelu_tensor, init_tensor, linear, linear_backward, WeightStore};

pub const HEAD_PREFIX: &str = "head.";

/// Parameter names and shapes of a head `dim → hidden → … → out`.
pub fn head_shapes(dim: usize, hidden: usize, out: usize, layers: usize) -> Vec<(String, Vec<usize>)> {
    let mut shapes = Vec::with_capacity(2 * layers);
    for i in 0..layers {
        let fan_in = if i == 0 { dim } else { hidden };
        let fan_out = if i + 1 == layers { out } else { hidden };
        shapes.push((format!("head.{i}.weight"), vec![fan_in, fan_out]));
        shapes.push((format!("head.{i}.bias"), vec![fan_out]));
    }
    shapes
}

/// Adds a random head to `ws`. With `gain > 0` every weight matrix is drawn
/// from a truncated normal of std `gain/√fan_in`; with `gain = 0` the
/// backbone's σ = 0.02 rule is used.
pub fn init_head(
    ws: &mut WeightStore,
    dim: usize,
    hidden: usize,
    out: usize,
    layers: usize,
    gain: f64,
    rng: &mut Rng,
) -> Result<()> {
    if layers == 0 || hidden == 0 || out == 0 {
        return Err(Error::InvalidArgument("projection head needs at least one layer and non-zero widths".into()));
    }
    for (name, shape) in head_shapes(dim, hidden, out, layers) {
        let t = if gain > 0.0 && shape.len() == 2 {
            let std = gain / (shape[0] as f64).sqrt();
            Tensor::from_fn(&shape, |_| rng.truncated_normal(std) as f32)
        } else {
            init_tensor(&name, &shape, rng)
        };
        ws.insert(name, t);
    }
    Ok(())
}

/// Number of linear layers stored in `ws`.
pub fn head_layers(ws: &WeightStore) -> usize {
    (0..).take_while(|i| ws.contains(&format!("head.{i}.weight"))).count()
}

/// Saved activations: inputs to each layer, and pre-activations of hidden layers.
pub struct HeadCache {
    inputs: Vec<Tensor>,
    pre_act: Vec<Tensor>,
}

pub fn head_forward(x: &Tensor, ws: &WeightStore) -> Result<Tensor> {
    head_forward_cached(x, ws).map(|(y, _)| y)
}

pub fn head_forward_cached(x: &Tensor, ws: &WeightStore) -> Result<(Tensor, HeadCache)> {
    let layers = head_layers(ws);
    if layers == 0 {
        return Err(Error::Weights("no projection head in weight store".into()));
    }
    let mut cache = HeadCache { inputs: Vec::with_capacity(layers), pre_act: Vec::with_capacity(layers - 1) };
    let mut h = x.clone();
    for i in 0..layers {
        let y = linear(&h, ws.get(&format!("head.{i}.weight"))?, ws.get(&format!("head.{i}.bias"))?)?;
        cache.inputs.push(h);
        if i + 1 < layers {
            h = gelu_tensor(&y);
            cache.pre_act.push(y);
        } else {
            h = y;
        }
    }
    Ok((h, cache))
}

/// Accumulates head gradients into `grads` and returns the gradient with
/// respect to the head input.
pub fn head_backward(cache: &HeadCache, d_out: &Tensor, ws: &WeightStore, grads: &mut WeightStore) -> Result<Tensor> {
    let layers = cache.inputs.len();
    let mut dy = d_out.clone();
    for i in (0..layers).rev() {
        let w = ws.get(&format!("head.{i}.weight"))?;
        let mut dx = linear_backward(
            &cache.inputs[i],
            w,
            &dy,
            grads,
            &format!("head.{i}.weight"),
            &format!("head.{i}.bias"),
        )?;
        if i > 0 {
            for (g, &u) in dx.data_mut().iter_mut().zip(cache.pre_act[i - 1].data()) {
                *g *= gelu_derivative(u);
            }
        }
        dy = dx;
    }
    Ok(dy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_chain() {
        let s = head_shapes(64, 128, 32, 3);
        assert_eq!(s.len(), 6);
        assert_eq!(s[0].1, vec![64, 128]);
        assert_eq!(s[2].1, vec![128, 128]);
        assert_eq!(s[4].1, vec![128, 32]);
        assert_eq!(head_shapes(8, 5, 4, 1)[0].1, vec![8, 4]);
    }

    #[test]
    fn forward_matches_manual_composition() {
        let mut rng = Rng::new(3);
        let mut ws = WeightStore::new();
        init_head(&mut ws, 6, 5, 4, 2, 0.0, &mut rng).unwrap();
        assert_eq!(head_layers(&ws), 2);
        let x = Tensor::from_fn(&[3, 6], |i| (i as f32 * 0.37).sin());
        let y = head_forward(&x, &ws).unwrap();
        assert_eq!(y.shape(), &[3, 4]);
        let w0 = ws.get("head.0.weight").unwrap();
        let w1 = ws.get("head.1.weight").unwrap();
        for r in 0..3 {
            for k in 0..4 {
                let mut acc = 0.0f64;
                for j in 0..5 {
                    let mut a = 0.0f64;
                    for i in 0..6 {
                        a += x.data()[r * 6 + i] as f64 * w0.data()[i * 5 + j] as f64;
                    }
                    acc += crate::vit::gelu(a as f32) as f64 * w1.data()[j * 4 + k] as f64;
                }
                assert!((acc - y.data()[r * 4 + k] as f64).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn missing_head_is_an_error() {
        assert!(head_forward(&Tensor::zeros(&[1, 2]), &WeightStore::new()).is_err());
    }
}
