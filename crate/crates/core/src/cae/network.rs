//! Network definition, forward/backward passes, and the loss.

use crate::error::{Error, Result};
use crate::nn::{
    conv2d, conv2d_backward, fill_he_normal, fill_uniform_symmetric, prelu, prelu_backward,
    transposed_conv2d, transposed_conv2d_backward, KERNEL_SIZE,
};
use crate::tensor::{Scalar, Tensor};
use rand_chacha::ChaCha8Rng;

/// Filter counts N1..N6 and the square patch extent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaeArchitecture {
    pub filter_counts: [usize; 6],
    pub patch_size: usize,
}

impl Default for CaeArchitecture {
    fn default() -> Self {
        CaeArchitecture {
            filter_counts: [32, 32, 64, 64, 64, 32],
            patch_size: 128,
        }
    }
}

impl CaeArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 8 || self.patch_size % 8 != 0 {
            return Err(Error::invalid(
                "CaeArchitecture",
                format!(
                    "patch_size must be a multiple of 8 and at least 8 (three stride-2 stages), got {}",
                    self.patch_size
                ),
            ));
        }
        if self.filter_counts.iter().any(|&n| n == 0) {
            return Err(Error::invalid("CaeArchitecture", "filter counts must be positive"));
        }
        Ok(())
    }

    /// Number of latent channels (N6).
    pub fn latent_channels(&self) -> usize {
        self.filter_counts[5]
    }

    /// Latent spatial extent (patch_size / 8).
    pub fn latent_extent(&self) -> usize {
        self.patch_size / 8
    }

    /// Encoder layer plan: (in_channels, out_channels, stride) per layer.
    /// Units are [conv stride 2, conv stride 1], three times.
    pub fn encoder_plan(&self) -> [(usize, usize, usize); 6] {
        let n = &self.filter_counts;
        let mut plan = [(0, 0, 0); 6];
        for (i, slot) in plan.iter_mut().enumerate() {
            let cin = if i == 0 { 1 } else { n[i - 1] };
            let stride = if i % 2 == 0 { 2 } else { 1 };
            *slot = (cin, n[i], stride);
        }
        plan
    }

    /// Decoder layer plan mirroring the encoder: layer j inverts encoder
    /// layer 5-j, so units come out as [stride 1, stride 2], three times.
    pub fn decoder_plan(&self) -> [(usize, usize, usize); 6] {
        let enc = self.encoder_plan();
        let mut plan = [(0, 0, 0); 6];
        for (j, slot) in plan.iter_mut().enumerate() {
            let (e_in, e_out, e_stride) = enc[5 - j];
            *slot = (e_out, e_in, e_stride);
        }
        plan
    }
}

/// One convolutional layer: 3x3 kernels, padding 1, optional PReLU.
/// Encoder layers store kernels (out, in, 3, 3); decoder layers store
/// (in, out, 3, 3) — the layout the transposed direction reads.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T: Scalar> {
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
    pub prelu_slope: Option<Tensor<T>>,
    pub stride: usize,
}

/// All learnable parameters of the autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeParams<T: Scalar> {
    pub arch: CaeArchitecture,
    pub encoder: Vec<ConvLayer<T>>,
    pub decoder: Vec<ConvLayer<T>>,
    /// Hash of the learnable tensors; refreshed by checkpoint save/load.
    pub(crate) model_id: Option<u64>,
}

const PRELU_INIT: f64 = 0.25;

impl<T: Scalar> CaeParams<T> {
    /// Kernels ~ N(0, sqrt(2/fan_in)), biases 0, PReLU slopes 0.25.
    pub fn init(arch: &CaeArchitecture, rng: &mut ChaCha8Rng) -> Result<Self> {
        arch.validate()?;
        let mut encoder = Vec::with_capacity(6);
        for (cin, cout, stride) in arch.encoder_plan() {
            let mut kernels = Tensor::zeros(&[cout, cin, KERNEL_SIZE, KERNEL_SIZE]);
            fill_he_normal(&mut kernels, cin * KERNEL_SIZE * KERNEL_SIZE, rng);
            encoder.push(ConvLayer {
                kernels,
                bias: Tensor::zeros(&[cout]),
                prelu_slope: Some(Tensor::filled(&[cout], T::from_f64(PRELU_INIT))),
                stride,
            });
        }
        let mut decoder = Vec::with_capacity(6);
        for (j, (cin, cout, stride)) in arch.decoder_plan().into_iter().enumerate() {
            let mut kernels = Tensor::zeros(&[cin, cout, KERNEL_SIZE, KERNEL_SIZE]);
            fill_he_normal(&mut kernels, cin * KERNEL_SIZE * KERNEL_SIZE, rng);
            let is_last = j == 5;
            decoder.push(ConvLayer {
                kernels,
                bias: Tensor::zeros(&[cout]),
                prelu_slope: (!is_last).then(|| Tensor::filled(&[cout], T::from_f64(PRELU_INIT))),
                stride,
            });
        }
        Ok(CaeParams {
            arch: arch.clone(),
            encoder,
            decoder,
            model_id: None,
        })
    }

    pub fn cast<U: Scalar>(&self) -> CaeParams<U> {
        let conv = |l: &ConvLayer<T>| ConvLayer {
            kernels: l.kernels.cast(),
            bias: l.bias.cast(),
            prelu_slope: l.prelu_slope.as_ref().map(Tensor::cast),
            stride: l.stride,
        };
        CaeParams {
            arch: self.arch.clone(),
            encoder: self.encoder.iter().map(conv).collect(),
            decoder: self.decoder.iter().map(conv).collect(),
            model_id: self.model_id,
        }
    }

    /// Learnable tensors in canonical order, named for the optimizer, the
    /// checkpoint format, and error messages.
    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (side, layers) in [("enc", &self.encoder), ("dec", &self.decoder)] {
            for (i, layer) in layers.iter().enumerate() {
                out.push((format!("{side}{i}.kernels"), &layer.kernels));
                out.push((format!("{side}{i}.bias"), &layer.bias));
                if let Some(slope) = &layer.prelu_slope {
                    out.push((format!("{side}{i}.prelu"), slope));
                }
            }
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (side, layers) in [("enc", &mut self.encoder), ("dec", &mut self.decoder)] {
            for (i, layer) in layers.iter_mut().enumerate() {
                out.push((format!("{side}{i}.kernels"), &mut layer.kernels));
                out.push((format!("{side}{i}.bias"), &mut layer.bias));
                if let Some(slope) = &mut layer.prelu_slope {
                    out.push((format!("{side}{i}.prelu"), slope));
                }
            }
        }
        out
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.named_params()
            .iter()
            .map(|(_, t)| t.shape().to_vec())
            .collect()
    }

    /// FNV-1a over the canonical f64 serialization of the learnables.
    pub fn model_id(&self) -> u64 {
        self.model_id.unwrap_or_else(|| self.compute_model_id())
    }

    pub(crate) fn compute_model_id(&self) -> u64 {
        let mut hash = fnv1a64_init();
        for (name, tensor) in self.named_params() {
            hash = fnv1a64_update(hash, name.as_bytes());
            for &e in tensor.shape() {
                hash = fnv1a64_update(hash, &(e as u32).to_le_bytes());
            }
            for &v in tensor.data() {
                hash = fnv1a64_update(hash, &v.to_f64_val().to_le_bytes());
            }
        }
        hash
    }
}

pub(crate) fn fnv1a64_init() -> u64 {
    0xcbf2_9ce4_8422_2325
}

pub(crate) fn fnv1a64_update(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Per-layer cache kept by the forward pass for the backward pass.
pub struct LayerCache<T: Scalar> {
    input: Tensor<T>,
    preact: Option<Tensor<T>>,
}

#[derive(Debug, Clone)]
pub struct LayerGrads<T: Scalar> {
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
    pub prelu: Option<Tensor<T>>,
}

#[derive(Debug, Clone)]
pub struct CaeGrads<T: Scalar> {
    pub encoder: Vec<LayerGrads<T>>,
    pub decoder: Vec<LayerGrads<T>>,
}

impl<T: Scalar> CaeGrads<T> {
    /// Tensors in the same canonical order as `CaeParams::named_params`.
    pub fn flat(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for side in [&self.encoder, &self.decoder] {
            for g in side {
                out.push(&g.kernels);
                out.push(&g.bias);
                if let Some(p) = &g.prelu {
                    out.push(p);
                }
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &CaeGrads<T>, scale: T) -> Result<()> {
        let pairs = |a: &mut Vec<LayerGrads<T>>, b: &Vec<LayerGrads<T>>| -> Result<()> {
            for (ga, gb) in a.iter_mut().zip(b.iter()) {
                ga.kernels.add_scaled(&gb.kernels, scale)?;
                ga.bias.add_scaled(&gb.bias, scale)?;
                if let (Some(pa), Some(pb)) = (&mut ga.prelu, &gb.prelu) {
                    pa.add_scaled(pb, scale)?;
                }
            }
            Ok(())
        };
        pairs(&mut self.encoder, &other.encoder)?;
        pairs(&mut self.decoder, &other.decoder)
    }

    pub fn zeros_like(params: &CaeParams<T>) -> CaeGrads<T> {
        let zero = |layers: &Vec<ConvLayer<T>>| {
            layers
                .iter()
                .map(|l| LayerGrads {
                    kernels: Tensor::zeros(l.kernels.shape()),
                    bias: Tensor::zeros(l.bias.shape()),
                    prelu: l.prelu_slope.as_ref().map(|s| Tensor::zeros(s.shape())),
                })
                .collect()
        };
        CaeGrads {
            encoder: zero(&params.encoder),
            decoder: zero(&params.decoder),
        }
    }
}

fn check_patch_shape<T: Scalar>(params: &CaeParams<T>, patch: &Tensor<T>) -> Result<()> {
    let p = params.arch.patch_size;
    if patch.rank() != 4 || patch.shape()[1] != 1 || patch.shape()[2] != p || patch.shape()[3] != p
    {
        return Err(Error::shape(
            "cae::encode",
            format!("(B, 1, {p}, {p})"),
            format!("{:?}", patch.shape()),
        ));
    }
    Ok(())
}

fn check_latent_shape<T: Scalar>(params: &CaeParams<T>, latent: &Tensor<T>) -> Result<()> {
    let (c, e) = (params.arch.latent_channels(), params.arch.latent_extent());
    if latent.rank() != 4
        || latent.shape()[1] != c
        || latent.shape()[2] != e
        || latent.shape()[3] != e
    {
        return Err(Error::shape(
            "cae::decode",
            format!("(B, {c}, {e}, {e})"),
            format!("{:?}", latent.shape()),
        ));
    }
    Ok(())
}

/// Analysis transform: patch (B, 1, P, P) -> latent (B, N6, P/8, P/8).
pub fn encode<T: Scalar>(params: &CaeParams<T>, patch: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(encode_cached(params, patch)?.0)
}

pub fn encode_cached<T: Scalar>(
    params: &CaeParams<T>,
    patch: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<LayerCache<T>>)> {
    check_patch_shape(params, patch)?;
    let mut x = patch.clone();
    let mut caches = Vec::with_capacity(6);
    for layer in &params.encoder {
        let preact = conv2d(&x, &layer.kernels, Some(&layer.bias), layer.stride)?;
        let slope = layer.prelu_slope.as_ref().expect("encoder layers use PReLU");
        let out = prelu(&preact, slope)?;
        caches.push(LayerCache {
            input: x,
            preact: Some(preact),
        });
        x = out;
    }
    Ok((x, caches))
}

/// Synthesis transform: latent (B, N6, P/8, P/8) -> plane (B, 1, P, P).
/// No clamping here; values are clamped only when emitting an image.
pub fn decode<T: Scalar>(params: &CaeParams<T>, latent: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(decode_cached(params, latent)?.0)
}

pub fn decode_cached<T: Scalar>(
    params: &CaeParams<T>,
    latent: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<LayerCache<T>>)> {
    check_latent_shape(params, latent)?;
    let mut x = latent.clone();
    let mut caches = Vec::with_capacity(6);
    for layer in &params.decoder {
        let preact = transposed_conv2d(&x, &layer.kernels, Some(&layer.bias), layer.stride)?;
        let (out, cached_preact) = match &layer.prelu_slope {
            Some(slope) => (prelu(&preact, slope)?, Some(preact)),
            None => (preact, None),
        };
        caches.push(LayerCache { input: x, preact: cached_preact });
        x = out;
    }
    Ok((x, caches))
}

fn backward_decoder<T: Scalar>(
    params: &CaeParams<T>,
    caches: &[LayerCache<T>],
    grad_out: Tensor<T>,
) -> Result<(Tensor<T>, Vec<LayerGrads<T>>)> {
    let mut grad = grad_out;
    let mut grads: Vec<LayerGrads<T>> = Vec::with_capacity(6);
    for (layer, cache) in params.decoder.iter().zip(caches.iter()).rev() {
        let grad_preact = match (&layer.prelu_slope, &cache.preact) {
            (Some(slope), Some(preact)) => {
                let (g, gs) = prelu_backward(preact, slope, &grad)?;
                grads.push(LayerGrads {
                    kernels: Tensor::zeros(layer.kernels.shape()),
                    bias: Tensor::zeros(layer.bias.shape()),
                    prelu: Some(gs),
                });
                g
            }
            _ => {
                grads.push(LayerGrads {
                    kernels: Tensor::zeros(layer.kernels.shape()),
                    bias: Tensor::zeros(layer.bias.shape()),
                    prelu: None,
                });
                grad
            }
        };
        let (gin, gk, gb) =
            transposed_conv2d_backward(&cache.input, &layer.kernels, &grad_preact, layer.stride)?;
        let slot = grads.last_mut().expect("just pushed");
        slot.kernels = gk;
        slot.bias = gb;
        grad = gin;
    }
    grads.reverse();
    Ok((grad, grads))
}

fn backward_encoder<T: Scalar>(
    params: &CaeParams<T>,
    caches: &[LayerCache<T>],
    grad_latent: Tensor<T>,
) -> Result<Vec<LayerGrads<T>>> {
    let mut grad = grad_latent;
    let mut grads: Vec<LayerGrads<T>> = Vec::with_capacity(6);
    for (layer, cache) in params.encoder.iter().zip(caches.iter()).rev() {
        let slope = layer.prelu_slope.as_ref().expect("encoder layers use PReLU");
        let preact = cache.preact.as_ref().expect("encoder caches preact");
        let (grad_preact, gs) = prelu_backward(preact, slope, &grad)?;
        let (gin, gk, gb) = conv2d_backward(&cache.input, &layer.kernels, &grad_preact, layer.stride)?;
        grads.push(LayerGrads {
            kernels: gk,
            bias: gb,
            prelu: Some(gs),
        });
        grad = gin;
    }
    grads.reverse();
    Ok(grads)
}

#[derive(Debug, Clone)]
pub struct LossOutput<T: Scalar> {
    pub j: f64,
    pub mse_term: f64,
    pub rate_term: f64,
    pub grads: CaeGrads<T>,
}

/// Loss and full parameter gradients with an explicit noise tensor
/// (congruent with the latent). Deterministic given its inputs.
pub fn loss_with_noise<T: Scalar>(
    params: &CaeParams<T>,
    patch: &Tensor<T>,
    lambda: f64,
    noise: &Tensor<T>,
) -> Result<LossOutput<T>> {
    let (latent, enc_caches) = encode_cached(params, patch)?;
    if !latent.same_shape(noise) {
        return Err(Error::shape(
            "cae::loss",
            format!("noise of shape {:?}", latent.shape()),
            format!("{:?}", noise.shape()),
        ));
    }
    let mut noisy = latent.clone();
    noisy.add_scaled(noise, T::one())?;
    let (recon, dec_caches) = decode_cached(params, &noisy)?;

    let n_pix = T::from_f64(recon.numel() as f64);
    let n_lat = T::from_f64(latent.numel() as f64);
    let diff = recon.sub(patch)?;
    let mse = (diff.sum_squares() / n_pix).to_f64_val();
    let rate = (latent.sum_squares() / n_lat).to_f64_val();
    let j = mse + lambda * rate;
    if !j.is_finite() {
        return Err(Error::NonFinite {
            context: "cae::loss",
            detail: Some(format!("mse={mse}, rate={rate}")),
        });
    }

    // d(mse)/d(recon) = 2 (recon - x) / n_pix
    let grad_recon = diff.scaled(T::from_f64(2.0) / n_pix);
    let (grad_noisy, dec_grads) = backward_decoder(params, &dec_caches, grad_recon)?;
    // The noise addition is an identity for gradients; the rate term adds
    // 2 lambda y / n_lat directly at the latent.
    let mut grad_latent = grad_noisy;
    grad_latent.add_scaled(&latent, T::from_f64(2.0 * lambda) / n_lat)?;
    let enc_grads = backward_encoder(params, &enc_caches, grad_latent)?;

    Ok(LossOutput {
        j,
        mse_term: mse,
        rate_term: rate,
        grads: CaeGrads {
            encoder: enc_grads,
            decoder: dec_grads,
        },
    })
}

/// Loss with noise drawn from `rng`: i.i.d. uniform on
/// [-noise_halfwidth, +noise_halfwidth], filled in row-major latent order.
pub fn loss<T: Scalar>(
    params: &CaeParams<T>,
    patch: &Tensor<T>,
    lambda: f64,
    noise_halfwidth: f64,
    rng: &mut ChaCha8Rng,
) -> Result<LossOutput<T>> {
    check_patch_shape(params, patch)?;
    let batch = patch.shape()[0];
    let (c, e) = (params.arch.latent_channels(), params.arch.latent_extent());
    let mut noise = Tensor::zeros(&[batch, c, e, e]);
    fill_uniform_symmetric(&mut noise, noise_halfwidth, rng);
    loss_with_noise(params, patch, lambda, &noise)
}
