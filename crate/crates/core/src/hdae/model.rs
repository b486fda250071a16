use ndarray::{Array1, Array2, Axis};

use super::loss::{hybrid_loss, hybrid_loss_grad, LossParts};
use super::noise::apply_noise;
use super::params::{Activation, Layer, ModelParams};
use crate::error::{Error, Result};
use crate::Scalar;

pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Lower bound on the latent norm inside the head's ℓ2 normalization.
pub const L2_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Apply feature noise (seeded) before the encoder.
    Train { seed: u64 },
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    pub recon: Array2<T>,
    pub logits: Array1<T>,
    pub latent: Array2<T>,
}

struct LayerCache<T> {
    input: Array2<T>,
    /// Normalized pre-activations and per-row reciprocal std, when the
    /// layer has a layer norm.
    normed: Option<(Array2<T>, Array1<T>)>,
    /// Value fed into the activation.
    act_in: Array2<T>,
}

struct Cache<T> {
    encoder: Vec<LayerCache<T>>,
    decoder: Vec<LayerCache<T>>,
    latent: Array2<T>,
    latent_norms: Array1<T>,
    unit_latent: Array2<T>,
    head_hidden: LayerCache<T>,
    head_output: LayerCache<T>,
}

fn check_finite<T: Scalar>(a: &Array2<T>, layer: usize) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer })
    }
}

fn layer_forward<T: Scalar>(
    layer: &Layer<T>,
    input: Array2<T>,
    index: usize,
) -> Result<(Array2<T>, LayerCache<T>)> {
    let mut pre = input.dot(&layer.weight.t());
    pre += &layer.bias;
    let (act_in, normed) = match &layer.norm {
        Some(norm) => {
            let width = T::from_usize_lossy(pre.ncols());
            let eps = T::lit(LAYER_NORM_EPS);
            let mut xhat = pre;
            let mut rstd = Array1::zeros(xhat.nrows());
            for (mut row, r) in xhat.outer_iter_mut().zip(rstd.iter_mut()) {
                let mean = row.sum() / width;
                let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / width;
                *r = T::one() / (var + eps).sqrt();
                let rs = *r;
                row.mapv_inplace(|v| (v - mean) * rs);
            }
            let mut out = &xhat * &norm.gain;
            out += &norm.shift;
            (out, Some((xhat, rstd)))
        }
        None => (pre, None),
    };
    // checked before the activation: ReLU via `max` would swallow NaN
    check_finite(&act_in, index)?;
    let output = match layer.activation {
        Activation::Relu => act_in.mapv(|v| v.max(T::zero())),
        Activation::Identity => act_in.clone(),
    };
    Ok((
        output,
        LayerCache {
            input,
            normed,
            act_in,
        },
    ))
}

/// Returns the gradient with respect to the layer input and writes the
/// parameter gradients into `grad`.
fn layer_backward<T: Scalar>(
    layer: &Layer<T>,
    cache: &LayerCache<T>,
    d_out: Array2<T>,
    grad: &mut Layer<T>,
) -> Array2<T> {
    let mut d_act = d_out;
    if layer.activation == Activation::Relu {
        ndarray::Zip::from(&mut d_act)
            .and(&cache.act_in)
            .for_each(|d, &a| {
                if a <= T::zero() {
                    *d = T::zero();
                }
            });
    }
    let d_pre = match (&layer.norm, &cache.normed) {
        (Some(norm), Some((xhat, rstd))) => {
            let gnorm = grad.norm.as_mut().expect("gradient mirrors layer norm");
            gnorm.gain += &(&d_act * xhat).sum_axis(Axis(0));
            gnorm.shift += &d_act.sum_axis(Axis(0));
            let width = T::from_usize_lossy(d_act.ncols());
            let mut dxhat = d_act * &norm.gain;
            for ((mut row, xrow), &r) in dxhat.outer_iter_mut().zip(xhat.outer_iter()).zip(rstd) {
                let mean_d = row.sum() / width;
                let mean_dx = row.iter().zip(xrow).map(|(&a, &b)| a * b).sum::<T>() / width;
                ndarray::Zip::from(&mut row)
                    .and(&xrow)
                    .for_each(|d, &x| *d = r * (*d - mean_d - x * mean_dx));
            }
            dxhat
        }
        _ => d_act,
    };
    grad.weight += &d_pre.t().dot(&cache.input);
    grad.bias += &d_pre.sum_axis(Axis(0));
    d_pre.dot(&layer.weight)
}

fn forward_cached<T: Scalar>(params: &ModelParams<T>, input: &Array2<T>) -> Result<(ForwardOutput<T>, Cache<T>)> {
    if input.ncols() != params.config.input_dim {
        return Err(Error::Shape(format!(
            "model expects {} input columns, got {}",
            params.config.input_dim,
            input.ncols()
        )));
    }
    let mut index = 0;
    let mut h = input.clone();
    let mut encoder = Vec::with_capacity(params.encoder.len());
    for layer in &params.encoder {
        let (out, cache) = layer_forward(layer, h, index)?;
        encoder.push(cache);
        h = out;
        index += 1;
    }
    let latent = h;

    let mut decoder = Vec::with_capacity(params.decoder.len());
    let mut r = latent.clone();
    for layer in &params.decoder {
        let (out, cache) = layer_forward(layer, r, index)?;
        decoder.push(cache);
        r = out;
        index += 1;
    }

    let guard = T::lit(L2_GUARD);
    let latent_norms: Array1<T> = latent
        .outer_iter()
        .map(|row| row.iter().map(|&v| v * v).sum::<T>().sqrt())
        .collect();
    let mut unit_latent = latent.clone();
    for (mut row, &n) in unit_latent.outer_iter_mut().zip(&latent_norms) {
        let denom = n.max(guard);
        row.mapv_inplace(|v| v / denom);
    }
    let (hidden, head_hidden) = layer_forward(&params.head_hidden, unit_latent.clone(), index)?;
    let (logit_col, head_output) = layer_forward(&params.head_output, hidden, index + 1)?;
    let logits = logit_col.column(0).to_owned();

    Ok((
        ForwardOutput {
            recon: r,
            logits,
            latent: latent.clone(),
        },
        Cache {
            encoder,
            decoder,
            latent,
            latent_norms,
            unit_latent,
            head_hidden,
            head_output,
        },
    ))
}

/// Eval-mode encoder only: the latent codes of `x`.
pub(crate) fn encode_batch<T: Scalar>(params: &ModelParams<T>, x: &Array2<T>) -> Result<Array2<T>> {
    if x.ncols() != params.config.input_dim {
        return Err(Error::Shape(format!(
            "model expects {} input columns, got {}",
            params.config.input_dim,
            x.ncols()
        )));
    }
    let mut h = x.clone();
    for (index, layer) in params.encoder.iter().enumerate() {
        h = layer_forward(layer, h, index)?.0;
    }
    Ok(h)
}

/// Full forward pass. In training mode the encoder sees a noise-perturbed
/// copy of `x`; reconstruction targets stay the clean `x`.
pub fn forward<T: Scalar>(params: &ModelParams<T>, x: &Array2<T>, mode: Mode) -> Result<ForwardOutput<T>> {
    let input = match mode {
        Mode::Train { seed } => apply_noise(x, params.config.noise_prob, params.config.noise_std, seed),
        Mode::Eval => x.clone(),
    };
    forward_cached(params, &input).map(|(out, _)| out)
}

/// Hybrid loss of reconstructing `target` from `input` and its exact
/// gradient with respect to every parameter tensor.
pub fn loss_and_gradients<T: Scalar>(
    params: &ModelParams<T>,
    input: &Array2<T>,
    target: &Array2<T>,
    labels: &[bool],
) -> Result<(LossParts<T>, ModelParams<T>)> {
    if target.dim() != input.dim() || labels.len() != input.nrows() {
        return Err(Error::Shape(format!(
            "input {:?}, target {:?}, {} labels",
            input.dim(),
            target.dim(),
            labels.len()
        )));
    }
    let cfg = &params.config;
    let (out, cache) = forward_cached(params, input)?;
    let loss = hybrid_loss(&out.recon, target, &out.logits, labels, cfg.lambda_cls, cfg.pos_weight);
    let (d_recon, d_logits) =
        hybrid_loss_grad(&out.recon, target, &out.logits, labels, cfg.lambda_cls, cfg.pos_weight);

    let mut grads = params.zeros_like();

    let mut d = d_recon;
    for ((layer, c), g) in params
        .decoder
        .iter()
        .zip(&cache.decoder)
        .zip(grads.decoder.iter_mut())
        .rev()
    {
        d = layer_backward(layer, c, d, g);
    }
    let mut d_latent = d;

    let d_logit_col = d_logits.insert_axis(Axis(1));
    let d_hidden = layer_backward(&params.head_output, &cache.head_output, d_logit_col, &mut grads.head_output);
    let d_unit = layer_backward(&params.head_hidden, &cache.head_hidden, d_hidden, &mut grads.head_hidden);
    let guard = T::lit(L2_GUARD);
    for (((mut dz, du), u), &n) in d_latent
        .outer_iter_mut()
        .zip(d_unit.outer_iter())
        .zip(cache.unit_latent.outer_iter())
        .zip(&cache.latent_norms)
    {
        if n > guard {
            let proj = du.iter().zip(u).map(|(&a, &b)| a * b).sum::<T>();
            ndarray::Zip::from(&mut dz)
                .and(&du)
                .and(&u)
                .for_each(|z, &a, &b| *z += (a - b * proj) / n);
        } else {
            ndarray::Zip::from(&mut dz).and(&du).for_each(|z, &a| *z += a / guard);
        }
    }
    debug_assert_eq!(cache.latent.dim(), d_latent.dim());

    for ((layer, c), g) in params
        .encoder
        .iter()
        .zip(&cache.encoder)
        .zip(grads.encoder.iter_mut())
        .rev()
    {
        d_latent = layer_backward(layer, c, d_latent, g);
    }
    Ok((loss, grads))
}

/// Parameter gradients of the hybrid loss; see [`loss_and_gradients`].
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    input: &Array2<T>,
    target: &Array2<T>,
    labels: &[bool],
) -> Result<ModelParams<T>> {
    loss_and_gradients(params, input, target, labels).map(|(_, g)| g)
}
