//! Text and video encoders: mean pooling over feature sequences, an optional
//! self-attention stack on the video side, a context-gated projection into
//! the shared space, and L2 normalization.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Shape};
use crate::kernel::{
    self, layer_norm_rows, layer_norm_rows_backward, linear, linear_backward, matmul,
    matmul_backward, matmul_nt, matmul_nt_backward, relu, relu_backward, softmax_rows,
    softmax_rows_backward, GradRecord, LayerNormCache, ParamSet, Tensor2D,
};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"C2KM";
pub const CHECKPOINT_VERSION: u16 = 1;

const FLAG_FROZEN: u32 = 1;
const FLAG_ATTENTION: u32 = 1 << 1;

/// Architecture settings shared by both heads of one encoder pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub max_tokens: usize,
    pub max_frames: usize,
    pub attention: Option<AttentionConfig>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 512,
            max_tokens: 40,
            max_frames: 30,
            attention: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttentionConfig {
    pub layers: usize,
    pub heads: usize,
    /// Hidden width of the position-wise feed-forward block.
    pub ff_dim: usize,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 4,
            ff_dim: 64,
        }
    }
}

fn uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor2D {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor2D::new(rows, cols, data).expect("length matches shape")
}

/// Linear projection followed by a multiplicative sigmoid gate:
/// `y = W_p x + b_p`, `out = y ⊙ σ(W_g y + b_g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedProjection {
    pub weight: Tensor2D,
    pub bias: Tensor2D,
    pub gate_weight: Tensor2D,
    pub gate_bias: Tensor2D,
}

#[derive(Debug, Clone)]
pub struct GatedProjectionCache {
    input: Tensor2D,
    projected: Tensor2D,
    gate: Tensor2D,
}

impl GatedProjection {
    pub fn init(input_dim: usize, embed_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: uniform(embed_dim, input_dim, input_dim, rng),
            bias: uniform(1, embed_dim, input_dim, rng),
            gate_weight: uniform(embed_dim, embed_dim, embed_dim, rng),
            gate_bias: uniform(1, embed_dim, embed_dim, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Tensor2D::zeros(self.weight.rows(), self.weight.cols()),
            bias: Tensor2D::zeros(1, self.bias.cols()),
            gate_weight: Tensor2D::zeros(self.gate_weight.rows(), self.gate_weight.cols()),
            gate_bias: Tensor2D::zeros(1, self.gate_bias.cols()),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn embed_dim(&self) -> usize {
        self.weight.rows()
    }

    /// Row-batched forward pass; returns the gated (unnormalized) output.
    pub fn forward(&self, x: &Tensor2D) -> Result<(Tensor2D, GatedProjectionCache)> {
        let projected = linear(x, &self.weight, &self.bias)?;
        let (out, gate) = gate_rows(&projected, &self.gate_weight, &self.gate_bias)?;
        Ok((
            out,
            GatedProjectionCache {
                input: x.clone(),
                projected,
                gate,
            },
        ))
    }

    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, cache: &GatedProjectionCache, g: &Tensor2D) -> Result<(Self, Tensor2D)> {
        let y = &cache.projected;
        let s = &cache.gate;
        let mut grad_y = g.hadamard(s)?;
        // d out / d z = y ⊙ σ'(z)
        let mut grad_z = g.hadamard(y)?;
        for (gz, &sv) in grad_z.data_mut().iter_mut().zip(s.data()) {
            *gz *= sv * (1.0 - sv);
        }
        let (grad_y_gate, grad_gw, grad_gb) = linear_backward(y, &self.gate_weight, &grad_z)?;
        grad_y.add_assign(&grad_y_gate)?;
        let (grad_x, grad_w, grad_b) = linear_backward(&cache.input, &self.weight, &grad_y)?;
        Ok((
            Self {
                weight: grad_w,
                bias: grad_b,
                gate_weight: grad_gw,
                gate_bias: grad_gb,
            },
            grad_x,
        ))
    }

    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor2D)>) {
        out.push((format!("{prefix}.proj.weight"), &self.weight));
        out.push((format!("{prefix}.proj.bias"), &self.bias));
        out.push((format!("{prefix}.gate.weight"), &self.gate_weight));
        out.push((format!("{prefix}.gate.bias"), &self.gate_bias));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor2D)>) {
        out.push((format!("{prefix}.proj.weight"), &mut self.weight));
        out.push((format!("{prefix}.proj.bias"), &mut self.bias));
        out.push((format!("{prefix}.gate.weight"), &mut self.gate_weight));
        out.push((format!("{prefix}.gate.bias"), &mut self.gate_bias));
    }
}

/// `out = x ⊙ σ(x Wᵀ + b)` row-wise; also returns the gate activations.
fn gate_rows(x: &Tensor2D, weight: &Tensor2D, bias: &Tensor2D) -> Result<(Tensor2D, Tensor2D)> {
    let gate = linear(x, weight, bias)?.map(kernel::sigmoid);
    Ok((x.hadamard(&gate)?, gate))
}

/// Applies the context gate to one already-projected vector:
/// `out_i = x_i · σ((W_g x + b_g)_i)`.
pub fn context_gate(x: &[f64], gate_weight: &Tensor2D, gate_bias: &Tensor2D) -> Result<Vec<f64>> {
    let (out, _) = gate_rows(&Tensor2D::row_vector(x), gate_weight, gate_bias)?;
    Ok(out.into_data())
}

/// Mean over the first `max_len` rows of a feature sequence.
pub fn mean_pool(seq: &Tensor2D, max_len: usize) -> Result<Vec<f64>> {
    if seq.rows() == 0 {
        return Err(Error::Input("empty feature sequence".into()));
    }
    let n = seq.rows().min(max_len.max(1));
    Ok(seq.slice_rows(0, n).mean_rows().into_data())
}

/// Weights of one post-norm transformer encoder layer.
///
/// The key projection has no bias: a shared offset on every key shifts all
/// of a query's scores equally and cancels in the softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayer {
    pub query_weight: Tensor2D,
    pub query_bias: Tensor2D,
    pub key_weight: Tensor2D,
    pub value_weight: Tensor2D,
    pub value_bias: Tensor2D,
    pub output_weight: Tensor2D,
    pub output_bias: Tensor2D,
    pub norm1_gain: Tensor2D,
    pub norm1_bias: Tensor2D,
    pub ff1_weight: Tensor2D,
    pub ff1_bias: Tensor2D,
    pub ff2_weight: Tensor2D,
    pub ff2_bias: Tensor2D,
    pub norm2_gain: Tensor2D,
    pub norm2_bias: Tensor2D,
}

#[derive(Debug, Clone)]
pub struct AttentionLayerCache {
    input: Tensor2D,
    query: Tensor2D,
    key: Tensor2D,
    value: Tensor2D,
    weights: Vec<Tensor2D>,
    concat: Tensor2D,
    norm1: LayerNormCache,
    hidden: Tensor2D,
    ff_pre: Tensor2D,
    ff_act: Tensor2D,
    norm2: LayerNormCache,
}

impl AttentionLayer {
    pub fn init(width: usize, ff_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            query_weight: uniform(width, width, width, rng),
            query_bias: uniform(1, width, width, rng),
            key_weight: uniform(width, width, width, rng),
            value_weight: uniform(width, width, width, rng),
            value_bias: uniform(1, width, width, rng),
            output_weight: uniform(width, width, width, rng),
            output_bias: uniform(1, width, width, rng),
            norm1_gain: Tensor2D::filled(1, width, 1.0),
            norm1_bias: Tensor2D::zeros(1, width),
            ff1_weight: uniform(ff_dim, width, width, rng),
            ff1_bias: uniform(1, ff_dim, width, rng),
            ff2_weight: uniform(width, ff_dim, ff_dim, rng),
            ff2_bias: uniform(1, width, ff_dim, rng),
            norm2_gain: Tensor2D::filled(1, width, 1.0),
            norm2_bias: Tensor2D::zeros(1, width),
        }
    }

    pub fn width(&self) -> usize {
        self.query_weight.rows()
    }

    pub fn ff_dim(&self) -> usize {
        self.ff1_weight.rows()
    }

    fn tensors(&self) -> [(&'static str, &Tensor2D); 15] {
        [
            ("query.weight", &self.query_weight),
            ("query.bias", &self.query_bias),
            ("key.weight", &self.key_weight),
            ("value.weight", &self.value_weight),
            ("value.bias", &self.value_bias),
            ("output.weight", &self.output_weight),
            ("output.bias", &self.output_bias),
            ("norm1.gain", &self.norm1_gain),
            ("norm1.bias", &self.norm1_bias),
            ("ff1.weight", &self.ff1_weight),
            ("ff1.bias", &self.ff1_bias),
            ("ff2.weight", &self.ff2_weight),
            ("ff2.bias", &self.ff2_bias),
            ("norm2.gain", &self.norm2_gain),
            ("norm2.bias", &self.norm2_bias),
        ]
    }

    fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor2D); 15] {
        [
            ("query.weight", &mut self.query_weight),
            ("query.bias", &mut self.query_bias),
            ("key.weight", &mut self.key_weight),
            ("value.weight", &mut self.value_weight),
            ("value.bias", &mut self.value_bias),
            ("output.weight", &mut self.output_weight),
            ("output.bias", &mut self.output_bias),
            ("norm1.gain", &mut self.norm1_gain),
            ("norm1.bias", &mut self.norm1_bias),
            ("ff1.weight", &mut self.ff1_weight),
            ("ff1.bias", &mut self.ff1_bias),
            ("ff2.weight", &mut self.ff2_weight),
            ("ff2.bias", &mut self.ff2_bias),
            ("norm2.gain", &mut self.norm2_gain),
            ("norm2.bias", &mut self.norm2_bias),
        ]
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        z
    }

    fn accumulate(&mut self, other: &Self) -> Result<()> {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    /// Multi-head scaled dot-product self-attention with residual and layer
    /// norm, then a ReLU feed-forward block with residual and layer norm.
    pub fn forward(&self, x: &Tensor2D, heads: usize) -> Result<(Tensor2D, AttentionLayerCache)> {
        let width = self.width();
        check_heads(width, heads)?;
        if x.cols() != width {
            return Err(Error::Dimension {
                op: "self_attention_block",
                left: x.shape(),
                right: Shape(x.rows(), width),
            });
        }
        let head_dim = width / heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let query = linear(x, &self.query_weight, &self.query_bias)?;
        let key = matmul_nt(x, &self.key_weight)?;
        let value = linear(x, &self.value_weight, &self.value_bias)?;

        let mut concat = Tensor2D::zeros(x.rows(), width);
        let mut weights = Vec::with_capacity(heads);
        for h in 0..heads {
            let (lo, hi) = (h * head_dim, (h + 1) * head_dim);
            let scores = matmul_nt(&query.slice_cols(lo, hi), &key.slice_cols(lo, hi))?.scale(scale);
            let attn = softmax_rows(&scores, 1.0)?;
            concat.set_cols(lo, &matmul(&attn, &value.slice_cols(lo, hi))?);
            weights.push(attn);
        }
        let attended = linear(&concat, &self.output_weight, &self.output_bias)?;
        let (hidden, norm1) = layer_norm_rows(&x.add(&attended)?, &self.norm1_gain, &self.norm1_bias)?;
        let ff_pre = linear(&hidden, &self.ff1_weight, &self.ff1_bias)?;
        let ff_act = relu(&ff_pre);
        let ff_out = linear(&ff_act, &self.ff2_weight, &self.ff2_bias)?;
        let (out, norm2) = layer_norm_rows(&hidden.add(&ff_out)?, &self.norm2_gain, &self.norm2_bias)?;
        Ok((
            out,
            AttentionLayerCache {
                input: x.clone(),
                query,
                key,
                value,
                weights,
                concat,
                norm1,
                hidden,
                ff_pre,
                ff_act,
                norm2,
            },
        ))
    }

    pub fn backward(&self, cache: &AttentionLayerCache, g: &Tensor2D) -> Result<(Self, Tensor2D)> {
        let width = self.width();
        let heads = cache.weights.len();
        let head_dim = width / heads;
        let scale = 1.0 / (head_dim as f64).sqrt();

        let (grad_r2, grad_n2g, grad_n2b) = layer_norm_rows_backward(&cache.norm2, &self.norm2_gain, g)?;
        let (grad_act, grad_ff2w, grad_ff2b) = linear_backward(&cache.ff_act, &self.ff2_weight, &grad_r2)?;
        let grad_pre = relu_backward(&cache.ff_pre, &grad_act)?;
        let (mut grad_hidden, grad_ff1w, grad_ff1b) =
            linear_backward(&cache.hidden, &self.ff1_weight, &grad_pre)?;
        grad_hidden.add_assign(&grad_r2)?;

        let (grad_r1, grad_n1g, grad_n1b) =
            layer_norm_rows_backward(&cache.norm1, &self.norm1_gain, &grad_hidden)?;
        let (grad_concat, grad_ow, grad_ob) = linear_backward(&cache.concat, &self.output_weight, &grad_r1)?;

        let t = cache.input.rows();
        let mut grad_q = Tensor2D::zeros(t, width);
        let mut grad_k = Tensor2D::zeros(t, width);
        let mut grad_v = Tensor2D::zeros(t, width);
        for (h, attn) in cache.weights.iter().enumerate() {
            let (lo, hi) = (h * head_dim, (h + 1) * head_dim);
            let qh = cache.query.slice_cols(lo, hi);
            let kh = cache.key.slice_cols(lo, hi);
            let vh = cache.value.slice_cols(lo, hi);
            let (grad_attn, grad_vh) = matmul_backward(attn, &vh, &grad_concat.slice_cols(lo, hi))?;
            let grad_scores = softmax_rows_backward(attn, &grad_attn, 1.0)?.scale(scale);
            let (grad_qh, grad_kh) = matmul_nt_backward(&qh, &kh, &grad_scores)?;
            grad_q.set_cols(lo, &grad_qh);
            grad_k.set_cols(lo, &grad_kh);
            grad_v.set_cols(lo, &grad_vh);
        }
        let (gx_q, grad_qw, grad_qb) = linear_backward(&cache.input, &self.query_weight, &grad_q)?;
        let (gx_k, grad_kw, _) = linear_backward(&cache.input, &self.key_weight, &grad_k)?;
        let (gx_v, grad_vw, grad_vb) = linear_backward(&cache.input, &self.value_weight, &grad_v)?;
        let mut grad_x = grad_r1;
        grad_x.add_assign(&gx_q)?;
        grad_x.add_assign(&gx_k)?;
        grad_x.add_assign(&gx_v)?;

        Ok((
            Self {
                query_weight: grad_qw,
                query_bias: grad_qb,
                key_weight: grad_kw,
                value_weight: grad_vw,
                value_bias: grad_vb,
                output_weight: grad_ow,
                output_bias: grad_ob,
                norm1_gain: grad_n1g,
                norm1_bias: grad_n1b,
                ff1_weight: grad_ff1w,
                ff1_bias: grad_ff1b,
                ff2_weight: grad_ff2w,
                ff2_bias: grad_ff2b,
                norm2_gain: grad_n2g,
                norm2_bias: grad_n2b,
            },
            grad_x,
        ))
    }
}

fn check_heads(width: usize, heads: usize) -> Result<()> {
    if heads == 0 || width % heads != 0 {
        return Err(Error::config(
            "model.attention.heads",
            format!("head count {heads} does not divide model width {width}"),
        ));
    }
    Ok(())
}

/// One self-attention encoder layer applied to a `T×d` sequence.
pub fn self_attention_block(x: &Tensor2D, layer: &AttentionLayer, heads: usize) -> Result<Tensor2D> {
    layer.forward(x, heads).map(|(out, _)| out)
}

/// Stack of attention layers applied to video frames before pooling.
/// There are no positional parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStack {
    pub heads: usize,
    pub layers: Vec<AttentionLayer>,
}

impl AttentionStack {
    fn forward(&self, x: &Tensor2D) -> Result<(Tensor2D, Vec<AttentionLayerCache>)> {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, cache) = layer.forward(&h, self.heads)?;
            caches.push(cache);
            h = out;
        }
        Ok((h, caches))
    }

    fn backward(&self, caches: &[AttentionLayerCache], g: &Tensor2D) -> Result<Vec<AttentionLayer>> {
        let mut grad = g.clone();
        let mut grads = Vec::with_capacity(self.layers.len());
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            let (lg, gx) = layer.backward(cache, &grad)?;
            grads.push(lg);
            grad = gx;
        }
        grads.reverse();
        Ok(grads)
    }
}

/// Text encoder `f`: mean-pool tokens, gated projection, L2 normalize.
#[derive(Debug, Clone, PartialEq)]
pub struct TextHead {
    pub max_tokens: usize,
    pub projection: GatedProjection,
}

#[derive(Debug, Clone)]
pub struct TextCache {
    projection: GatedProjectionCache,
    gated: Tensor2D,
    embeddings: Tensor2D,
}

impl TextHead {
    pub fn init(input_dim: usize, config: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        Self {
            max_tokens: config.max_tokens,
            projection: GatedProjection::init(input_dim, config.embed_dim, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.projection.input_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.projection.embed_dim()
    }

    fn pool(&self, seqs: &[&Tensor2D]) -> Result<Tensor2D> {
        let mut pooled = Tensor2D::zeros(seqs.len(), self.input_dim());
        for (i, seq) in seqs.iter().enumerate() {
            if seq.cols() != self.input_dim() {
                return Err(Error::Dimension {
                    op: "embed_text",
                    left: seq.shape(),
                    right: Shape(seq.rows(), self.input_dim()),
                });
            }
            pooled.row_mut(i).copy_from_slice(&mean_pool(seq, self.max_tokens)?);
        }
        Ok(pooled)
    }

    pub fn forward_batch(&self, seqs: &[&Tensor2D]) -> Result<(Tensor2D, TextCache)> {
        let pooled = self.pool(seqs)?;
        let (gated, projection) = self.projection.forward(&pooled)?;
        let embeddings = kernel::l2_normalize_rows(&gated)?;
        Ok((
            embeddings.clone(),
            TextCache {
                projection,
                gated,
                embeddings,
            },
        ))
    }

    pub fn embed_batch(&self, seqs: &[&Tensor2D]) -> Result<Tensor2D> {
        self.forward_batch(seqs).map(|(e, _)| e)
    }

    pub fn backward(&self, cache: &TextCache, grad_embeddings: &Tensor2D) -> Result<TextHead> {
        let grad_gated =
            kernel::l2_normalize_rows_backward(&cache.gated, &cache.embeddings, grad_embeddings)?;
        let (projection, _) = self.projection.backward(&cache.projection, &grad_gated)?;
        Ok(TextHead {
            max_tokens: self.max_tokens,
            projection,
        })
    }

    fn zeros_like(&self) -> Self {
        Self {
            max_tokens: self.max_tokens,
            projection: self.projection.zeros_like(),
        }
    }
}

/// Video encoder `g`: optional attention stack, mean-pool frames, gated
/// projection, L2 normalize.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoHead {
    pub max_frames: usize,
    pub attention: Option<AttentionStack>,
    pub projection: GatedProjection,
}

#[derive(Debug, Clone)]
pub struct VideoCache {
    frames: Vec<Option<(usize, Vec<AttentionLayerCache>)>>,
    projection: GatedProjectionCache,
    gated: Tensor2D,
    embeddings: Tensor2D,
}

impl VideoHead {
    pub fn init(input_dim: usize, config: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let attention = match config.attention {
            Some(a) => {
                check_heads(input_dim, a.heads)?;
                Some(AttentionStack {
                    heads: a.heads,
                    layers: (0..a.layers)
                        .map(|_| AttentionLayer::init(input_dim, a.ff_dim, rng))
                        .collect(),
                })
            }
            None => None,
        };
        Ok(Self {
            max_frames: config.max_frames,
            attention,
            projection: GatedProjection::init(input_dim, config.embed_dim, rng),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.projection.input_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.projection.embed_dim()
    }

    fn encode_sequence(
        &self,
        seq: &Tensor2D,
        keep_cache: bool,
    ) -> Result<(Vec<f64>, Option<(usize, Vec<AttentionLayerCache>)>)> {
        if seq.rows() == 0 {
            return Err(Error::Input("empty frame sequence".into()));
        }
        if seq.cols() != self.input_dim() {
            return Err(Error::Dimension {
                op: "embed_video",
                left: seq.shape(),
                right: Shape(seq.rows(), self.input_dim()),
            });
        }
        match &self.attention {
            None => Ok((mean_pool(seq, self.max_frames)?, None)),
            Some(stack) => {
                let n = seq.rows().min(self.max_frames.max(1));
                let (out, caches) = stack.forward(&seq.slice_rows(0, n))?;
                let cache = keep_cache.then_some((n, caches));
                Ok((out.mean_rows().into_data(), cache))
            }
        }
    }

    fn forward_impl(&self, seqs: &[&Tensor2D], keep_cache: bool) -> Result<(Tensor2D, VideoCache)> {
        let encoded: Vec<_> = if self.attention.is_some() {
            seqs.par_iter()
                .map(|s| self.encode_sequence(s, keep_cache))
                .collect::<Result<_>>()?
        } else {
            seqs.iter()
                .map(|s| self.encode_sequence(s, keep_cache))
                .collect::<Result<_>>()?
        };
        let mut pooled = Tensor2D::zeros(seqs.len(), self.input_dim());
        let mut frames = Vec::with_capacity(seqs.len());
        for (i, (row, cache)) in encoded.into_iter().enumerate() {
            pooled.row_mut(i).copy_from_slice(&row);
            frames.push(cache);
        }
        let (gated, projection) = self.projection.forward(&pooled)?;
        let embeddings = kernel::l2_normalize_rows(&gated)?;
        Ok((
            embeddings.clone(),
            VideoCache {
                frames,
                projection,
                gated,
                embeddings,
            },
        ))
    }

    pub fn forward_batch(&self, seqs: &[&Tensor2D]) -> Result<(Tensor2D, VideoCache)> {
        self.forward_impl(seqs, true)
    }

    pub fn embed_batch(&self, seqs: &[&Tensor2D]) -> Result<Tensor2D> {
        self.forward_impl(seqs, false).map(|(e, _)| e)
    }

    pub fn backward(&self, cache: &VideoCache, grad_embeddings: &Tensor2D) -> Result<VideoHead> {
        let grad_gated =
            kernel::l2_normalize_rows_backward(&cache.gated, &cache.embeddings, grad_embeddings)?;
        let (projection, grad_pooled) = self.projection.backward(&cache.projection, &grad_gated)?;
        let attention = match &self.attention {
            None => None,
            Some(stack) => {
                let per_example: Vec<Vec<AttentionLayer>> = cache
                    .frames
                    .par_iter()
                    .enumerate()
                    .map(|(i, entry)| {
                        let (n, caches) = entry
                            .as_ref()
                            .ok_or_else(|| Error::Internal("video cache missing attention state".into()))?;
                        let row: Vec<f64> = grad_pooled.row(i).iter().map(|v| v / *n as f64).collect();
                        let g = Tensor2D::from_rows(&vec![row; *n])?;
                        stack.backward(caches, &g)
                    })
                    .collect::<Result<_>>()?;
                // Fixed example order keeps accumulation deterministic.
                let mut total: Vec<AttentionLayer> = stack.layers.iter().map(|l| l.zeros_like()).collect();
                for grads in &per_example {
                    for (acc, g) in total.iter_mut().zip(grads) {
                        acc.accumulate(g)?;
                    }
                }
                Some(AttentionStack {
                    heads: stack.heads,
                    layers: total,
                })
            }
        };
        Ok(VideoHead {
            max_frames: self.max_frames,
            attention,
            projection,
        })
    }

    fn zeros_like(&self) -> Self {
        Self {
            max_frames: self.max_frames,
            attention: self.attention.as_ref().map(|s| AttentionStack {
                heads: s.heads,
                layers: s.layers.iter().map(|l| l.zeros_like()).collect(),
            }),
            projection: self.projection.zeros_like(),
        }
    }
}

/// Embeds one caption.
pub fn embed_text(tokens: &Tensor2D, head: &TextHead) -> Result<Vec<f64>> {
    Ok(head.embed_batch(&[tokens])?.into_data())
}

/// Embeds one video.
pub fn embed_video(frames: &Tensor2D, head: &VideoHead) -> Result<Vec<f64>> {
    Ok(head.embed_batch(&[frames])?.into_data())
}

fn head_params<'a>(text: &'a TextHead, video: &'a VideoHead) -> Vec<(String, &'a Tensor2D)> {
    let mut out = Vec::new();
    text.projection.params("text", &mut out);
    if let Some(stack) = &video.attention {
        for (i, layer) in stack.layers.iter().enumerate() {
            for (name, t) in layer.tensors() {
                out.push((format!("video.attn.{i}.{name}"), t));
            }
        }
    }
    video.projection.params("video", &mut out);
    out
}

fn head_params_mut<'a>(text: &'a mut TextHead, video: &'a mut VideoHead) -> Vec<(String, &'a mut Tensor2D)> {
    let mut out = Vec::new();
    text.projection.params_mut("text", &mut out);
    if let Some(stack) = &mut video.attention {
        for (i, layer) in stack.layers.iter_mut().enumerate() {
            for (name, t) in layer.tensors_mut() {
                out.push((format!("video.attn.{i}.{name}"), t));
            }
        }
    }
    video.projection.params_mut("video", &mut out);
    out
}

/// All weights of one text/video encoder pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub text_head: TextHead,
    pub video_head: VideoHead,
    pub frozen: bool,
}

/// Gradients with the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub text_head: TextHead,
    pub video_head: VideoHead,
}

impl ModelParams {
    /// Seeded uniform initialization in `±1/√fan_in`.
    pub fn init(text_dim: usize, video_dim: usize, config: &ModelConfig, seed: u64) -> Result<Self> {
        if config.embed_dim == 0 || text_dim == 0 || video_dim == 0 {
            return Err(Error::config("model.embed_dim", "all dimensions must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let text_head = TextHead::init(text_dim, config, &mut rng);
        let video_head = VideoHead::init(video_dim, config, &mut rng)?;
        Ok(Self {
            text_head,
            video_head,
            frozen: false,
        })
    }

    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn embed_dim(&self) -> usize {
        self.text_head.embed_dim()
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            text_head: self.text_head.zeros_like(),
            video_head: self.video_head.zeros_like(),
        }
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            embed_dim: self.embed_dim(),
            max_tokens: self.text_head.max_tokens,
            max_frames: self.video_head.max_frames,
            attention: self.video_head.attention.as_ref().map(|s| AttentionConfig {
                layers: s.layers.len(),
                heads: s.heads,
                ff_dim: s.layers.first().map_or(0, |l| l.ff_dim()),
            }),
        }
    }

    /// Serializes to the `C2KM` checkpoint layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let cfg = self.config();
        let mut flags = 0u32;
        if self.frozen {
            flags |= FLAG_FROZEN;
        }
        if cfg.attention.is_some() {
            flags |= FLAG_ATTENTION;
        }
        let mut put = |v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        put(flags as usize);
        put(self.text_head.input_dim());
        put(self.video_head.input_dim());
        put(cfg.embed_dim);
        put(cfg.max_tokens);
        put(cfg.max_frames);
        if let Some(a) = cfg.attention {
            put(a.layers);
            put(a.heads);
            put(a.ff_dim);
        }
        for (_, t) in self.named_params() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad checkpoint magic".into(),
            });
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported checkpoint version {version}"),
            });
        }
        let flags = r.u32()?;
        let text_dim = r.u32()? as usize;
        let video_dim = r.u32()? as usize;
        let mut config = ModelConfig {
            embed_dim: r.u32()? as usize,
            max_tokens: r.u32()? as usize,
            max_frames: r.u32()? as usize,
            attention: None,
        };
        if flags & FLAG_ATTENTION != 0 {
            config.attention = Some(AttentionConfig {
                layers: r.u32()? as usize,
                heads: r.u32()? as usize,
                ff_dim: r.u32()? as usize,
            });
        }
        let header_end = r.pos as u64;
        let expected = expected_param_count(text_dim, video_dim, &config)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Format {
                offset: header_end,
                message: "header dimensions overflow".into(),
            })?;
        if bytes.len() - r.pos != expected {
            return Err(Error::Format {
                offset: header_end,
                message: format!(
                    "weight block is {} bytes, header implies {expected}",
                    bytes.len() - r.pos
                ),
            });
        }
        let mut params = ModelParams::init(text_dim, video_dim, &config, 0).map_err(|e| Error::Format {
            offset: header_end,
            message: format!("invalid header: {e}"),
        })?;
        for (_, t) in params.named_params_mut() {
            for v in t.data_mut() {
                *v = r.f64()?;
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos as u64,
                message: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        params.frozen = flags & FLAG_FROZEN != 0;
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn expected_param_count(text_dim: usize, video_dim: usize, config: &ModelConfig) -> Option<usize> {
    let e = config.embed_dim;
    let projection = |d: usize| -> Option<usize> { e.checked_mul(d)?.checked_add(e.checked_mul(e)?)?.checked_add(2 * e) };
    let mut total = projection(text_dim)?.checked_add(projection(video_dim)?)?;
    if let Some(a) = config.attention {
        let w = video_dim;
        let f = a.ff_dim;
        let layer = w
            .checked_mul(w)?
            .checked_add(w)?
            .checked_mul(4)?
            .checked_sub(w)?
            .checked_add(4 * w)?
            .checked_add(f.checked_mul(w)?.checked_add(f)?)?
            .checked_add(w.checked_mul(f)?.checked_add(w)?)?;
        total = total.checked_add(layer.checked_mul(a.layers)?)?;
    }
    Some(total)
}

impl ParamSet for ModelParams {
    fn named_params(&self) -> Vec<(String, &Tensor2D)> {
        head_params(&self.text_head, &self.video_head)
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor2D)> {
        head_params_mut(&mut self.text_head, &mut self.video_head)
    }

    fn is_frozen(&self) -> bool {
        self.frozen
    }
}

impl ParamSet for ModelGrads {
    fn named_params(&self) -> Vec<(String, &Tensor2D)> {
        head_params(&self.text_head, &self.video_head)
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor2D)> {
        head_params_mut(&mut self.text_head, &mut self.video_head)
    }
}

impl ModelGrads {
    pub fn add_text(&mut self, text: &TextHead) -> Result<()> {
        add_into(&mut self.text_head.projection, &text.projection)
    }

    pub fn add_video(&mut self, video: &VideoHead) -> Result<()> {
        add_into(&mut self.video_head.projection, &video.projection)?;
        if let (Some(acc), Some(g)) = (&mut self.video_head.attention, &video.attention) {
            for (a, b) in acc.layers.iter_mut().zip(&g.layers) {
                a.accumulate(b)?;
            }
        }
        Ok(())
    }

    pub fn into_records(self) -> Vec<GradRecord> {
        self.named_params()
            .into_iter()
            .map(|(name, grad)| GradRecord {
                name,
                grad: grad.clone(),
            })
            .collect()
    }
}

fn add_into(acc: &mut GatedProjection, g: &GatedProjection) -> Result<()> {
    acc.weight.add_assign(&g.weight)?;
    acc.bias.add_assign(&g.bias)?;
    acc.gate_weight.add_assign(&g.gate_weight)?;
    acc.gate_bias.add_assign(&g.gate_bias)
}

pub(crate) struct ByteReader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("truncated: needed {n} bytes, {} remain", self.bytes.len() - self.pos),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::grad_check;

    fn t(rows: &[&[f64]]) -> Tensor2D {
        Tensor2D::from_rows(rows).unwrap()
    }

    fn sig(z: f64) -> f64 {
        1.0 / (1.0 + (-z).exp())
    }

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn projection(weight: Tensor2D, bias: &[f64], gate_weight: Tensor2D, gate_bias: &[f64]) -> GatedProjection {
        GatedProjection {
            weight,
            bias: Tensor2D::row_vector(bias),
            gate_weight,
            gate_bias: Tensor2D::row_vector(gate_bias),
        }
    }

    #[test]
    fn gate_limits() {
        let x = [0.3, -1.2, 4.0];
        let zero = context_gate(&x, &Tensor2D::zeros(3, 3), &Tensor2D::zeros(1, 3)).unwrap();
        assert_eq!(zero, vec![0.15, -0.6, 2.0]);
        let open = context_gate(&x, &Tensor2D::zeros(3, 3), &Tensor2D::filled(1, 3, 50.0)).unwrap();
        for (o, v) in open.iter().zip(x) {
            assert!((o - v).abs() < 1e-12);
        }
    }

    #[test]
    fn gate_hand_example() {
        // z = W_g x + b_g = [0.5·1, 1·1 + 1·(−2) + 1] = [0.5, 0]
        let out = context_gate(&[1.0, -2.0], &t(&[&[0.5, 0.0], &[1.0, 1.0]]), &Tensor2D::row_vector(&[0.0, 1.0])).unwrap();
        assert!((out[0] - 0.622_459_331_201_854_6).abs() < 1e-15);
        assert_eq!(out[1], -1.0);
    }

    fn text_head(max_tokens: usize) -> TextHead {
        // σ(ln 3) = 3/4 on the first coordinate, 1/2 on the second
        TextHead {
            max_tokens,
            projection: projection(
                t(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, -1.0]]),
                &[0.0, 0.5],
                Tensor2D::zeros(2, 2),
                &[3f64.ln(), 0.0],
            ),
        }
    }

    #[test]
    fn text_hand_example() {
        // mean = [2, 1, 1]; y = [2, 0.5]; gated = [1.5, 0.25]
        let e = embed_text(&t(&[&[1.0, 0.0, 2.0], &[3.0, 2.0, 0.0]]), &text_head(40)).unwrap();
        let n = (1.5f64 * 1.5 + 0.25 * 0.25).sqrt();
        assert!((e[0] - 1.5 / n).abs() < 1e-15);
        assert!((e[1] - 0.25 / n).abs() < 1e-15);
    }

    #[test]
    fn text_pooling_reductions() {
        let head = text_head(40);
        let tok = [0.4, -0.7, 1.9];
        let one = embed_text(&t(&[&tok]), &head).unwrap();
        let two = embed_text(&t(&[&tok, &tok]), &head).unwrap();
        assert_eq!(one, two);
        // single token: the pipeline on the raw vector
        let y = [0.4, -0.7 - 1.9 + 0.5];
        let g = [y[0] * 0.75, y[1] * 0.5];
        let n = norm(&g);
        assert!((one[0] - g[0] / n).abs() < 1e-15 && (one[1] - g[1] / n).abs() < 1e-15);
        // tokens beyond max_tokens are ignored
        let short = embed_text(&t(&[&tok, &[9.0, 9.0, -9.0]]), &text_head(1)).unwrap();
        assert_eq!(short, one);
        assert!(matches!(
            embed_text(&Tensor2D::zeros(0, 3), &head),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn degenerate_gate_output_is_reported() {
        let head = TextHead {
            max_tokens: 40,
            projection: projection(Tensor2D::zeros(2, 3), &[0.0, 0.0], Tensor2D::zeros(2, 2), &[0.0, 0.0]),
        };
        assert!(matches!(
            embed_text(&t(&[&[1.0, 2.0, 3.0]]), &head),
            Err(Error::DegenerateEmbedding { .. })
        ));
    }

    #[test]
    fn video_hand_example() {
        // mean = [2, 2]; y = [2, 2]; z = [2, −2]
        let head = VideoHead {
            max_frames: 30,
            attention: None,
            projection: projection(Tensor2D::identity(2), &[0.0, 0.0], t(&[&[1.0, 0.0], &[0.0, -1.0]]), &[0.0, 0.0]),
        };
        let e = embed_video(&t(&[&[1.0, 3.0], &[3.0, 1.0]]), &head).unwrap();
        let g = [2.0 * sig(2.0), 2.0 * sig(-2.0)];
        let n = norm(&g);
        assert!((e[0] - g[0] / n).abs() < 1e-15 && (e[1] - g[1] / n).abs() < 1e-15);
    }

    #[test]
    fn video_without_attention_matches_text_path() {
        let cfg = ModelConfig { embed_dim: 6, ..ModelConfig::default() };
        let mut m = ModelParams::init(4, 4, &cfg, 3).unwrap();
        m.video_head.projection = m.text_head.projection.clone();
        let frame = t(&[&[0.2, -0.5, 1.1, 0.0]]);
        assert_eq!(
            embed_video(&frame, &m.video_head).unwrap(),
            embed_text(&frame, &m.text_head).unwrap()
        );
    }

    fn attention_model(seed: u64) -> ModelParams {
        let cfg = ModelConfig {
            embed_dim: 5,
            attention: Some(AttentionConfig { layers: 2, heads: 2, ff_dim: 6 }),
            ..ModelConfig::default()
        };
        ModelParams::init(3, 4, &cfg, seed).unwrap()
    }

    fn random_seq(rows: usize, cols: usize, seed: u64) -> Tensor2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        uniform(rows, cols, 1, &mut rng)
    }

    #[test]
    fn attention_is_frame_permutation_invariant() {
        let m = attention_model(11);
        let seq = random_seq(5, 4, 2);
        let base = embed_video(&seq, &m.video_head).unwrap();
        for perm in [[4, 3, 2, 1, 0], [1, 0, 3, 4, 2], [2, 4, 0, 1, 3]] {
            let rows: Vec<&[f64]> = perm.iter().map(|&i| seq.row(i)).collect();
            let e = embed_video(&t(&rows), &m.video_head).unwrap();
            for (a, b) in e.iter().zip(&base) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn embeddings_have_unit_norm() {
        let m = attention_model(5);
        for s in 0..20 {
            let text = embed_text(&random_seq(1 + s % 7, 3, s as u64), &m.text_head).unwrap();
            let video = embed_video(&random_seq(1 + s % 5, 4, 100 + s as u64), &m.video_head).unwrap();
            assert!((norm(&text) - 1.0).abs() < 1e-10);
            assert!((norm(&video) - 1.0).abs() < 1e-10);
        }
    }

    fn plain_layer(ff_dim: usize) -> AttentionLayer {
        AttentionLayer {
            query_weight: Tensor2D::zeros(2, 2),
            query_bias: Tensor2D::zeros(1, 2),
            key_weight: Tensor2D::zeros(2, 2),
            value_weight: Tensor2D::identity(2),
            value_bias: Tensor2D::zeros(1, 2),
            output_weight: Tensor2D::identity(2),
            output_bias: Tensor2D::zeros(1, 2),
            norm1_gain: Tensor2D::filled(1, 2, 1.0),
            norm1_bias: Tensor2D::zeros(1, 2),
            ff1_weight: Tensor2D::zeros(ff_dim, 2),
            ff1_bias: Tensor2D::zeros(1, ff_dim),
            ff2_weight: Tensor2D::zeros(2, ff_dim),
            ff2_bias: Tensor2D::zeros(1, 2),
            norm2_gain: Tensor2D::filled(1, 2, 1.0),
            norm2_bias: Tensor2D::zeros(1, 2),
        }
    }

    #[test]
    fn attention_hand_example() {
        // Q = K = 0 ⇒ uniform weights; every position attends to mean(x) = [1.5, 1.5].
        // Residual rows [2.5, 4.5] and [3.5, 1.5]; two-wide layer norm maps
        // [a, b] to ±(a−b)/2 / √(((a−b)/2)² + ε). The feed-forward block is zero.
        let out = self_attention_block(&t(&[&[1.0, 3.0], &[2.0, 0.0]]), &plain_layer(3), 1).unwrap();
        let eps = crate::kernel::LAYER_NORM_EPS;
        let h = 1.0 / (1.0 + eps).sqrt();
        let o = h / (h * h + eps).sqrt();
        let expected = [[-o, o], [o, -o]];
        for (r, row) in expected.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert!((out.get(r, c) - v).abs() < 1e-14, "({r},{c})");
            }
        }
    }

    #[test]
    fn attention_degenerate_inputs() {
        let m = attention_model(8);
        let layer = &m.video_head.attention.as_ref().unwrap().layers[0];
        let single = random_seq(1, 4, 1);
        let (out, cache) = layer.forward(&single, 2).unwrap();
        assert!(cache.weights.iter().all(|w| w.data() == [1.0]));
        assert_eq!(out.rows(), 1);
        let row = single.row(0);
        let same = self_attention_block(&t(&[row, row, row]), layer, 2).unwrap();
        assert_eq!(same.row(0), same.row(1));
        assert_eq!(same.row(1), same.row(2));
        for (a, b) in same.row(0).iter().zip(out.row(0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn head_count_must_divide_width() {
        let layer = plain_layer(2);
        assert!(matches!(
            self_attention_block(&Tensor2D::zeros(2, 2), &layer, 3),
            Err(Error::Config { .. })
        ));
        let cfg = ModelConfig {
            attention: Some(AttentionConfig { layers: 1, heads: 3, ff_dim: 4 }),
            ..ModelConfig::default()
        };
        assert!(matches!(ModelParams::init(3, 4, &cfg, 0), Err(Error::Config { .. })));
    }

    #[test]
    fn no_positional_parameters() {
        let m = attention_model(0);
        assert!(m.named_params().iter().all(|(n, _)| !n.contains("pos")));
        assert_eq!(
            m.named_params().iter().map(|(_, t)| t.len()).sum::<usize>(),
            expected_param_count(3, 4, &m.config()).unwrap()
        );
    }

    /// Σ c ⊙ E over both encoders, with fixed random coefficients `c`.
    fn probe_loss(m: &ModelParams, texts: &[Tensor2D], videos: &[Tensor2D]) -> Result<(f64, Vec<GradRecord>)> {
        let tr: Vec<&Tensor2D> = texts.iter().collect();
        let vr: Vec<&Tensor2D> = videos.iter().collect();
        let (te, tc) = m.text_head.forward_batch(&tr)?;
        let (ve, vc) = m.video_head.forward_batch(&vr)?;
        let ct = random_seq(te.rows(), te.cols(), 91);
        let cv = random_seq(ve.rows(), ve.cols(), 92);
        let loss = te.hadamard(&ct)?.sum() + ve.hadamard(&cv)?.sum();
        let mut grads = m.zero_grads();
        grads.add_text(&m.text_head.backward(&tc, &ct)?)?;
        grads.add_video(&m.video_head.backward(&vc, &cv)?)?;
        Ok((loss, grads.into_records()))
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let texts: Vec<_> = (0..3).map(|i| random_seq(2 + i, 3, 40 + i as u64)).collect();
        let videos: Vec<_> = (0..3).map(|i| random_seq(3 + i, 4, 50 + i as u64)).collect();
        for m in [attention_model(21), ModelParams::init(3, 4, &ModelConfig { embed_dim: 5, ..Default::default() }, 4).unwrap()] {
            let report = grad_check(&m, |p| probe_loss(p, &texts, &videos), 1e-5).unwrap();
            assert!(report.max_rel_error < 1e-4, "{report:?}");
            assert_eq!(report.entries_checked, m.param_count());
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for m in [attention_model(1).freeze(), ModelParams::init(7, 5, &ModelConfig { embed_dim: 3, ..Default::default() }, 2).unwrap()] {
            let bytes = m.to_bytes();
            assert_eq!(ModelParams::from_bytes(&bytes).unwrap(), m);
            let path = dir.path().join("m.c2km");
            m.save(&path).unwrap();
            assert_eq!(ModelParams::load(&path).unwrap(), m);
            assert_eq!(std::fs::read(&path).unwrap(), bytes);
        }
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let bytes = attention_model(1).to_bytes();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(ModelParams::from_bytes(&bad_magic), Err(Error::Format { offset: 0, .. })));
        let mut bad_version = bytes.clone();
        bad_version[4] = 9;
        assert!(matches!(ModelParams::from_bytes(&bad_version), Err(Error::Format { offset: 4, .. })));
        assert!(matches!(ModelParams::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format { .. })));
        assert!(matches!(ModelParams::from_bytes(&bytes[..10]), Err(Error::Format { .. })));
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(ModelParams::from_bytes(&trailing).is_err());
    }

    #[test]
    fn same_seed_same_weights() {
        assert_eq!(attention_model(3), attention_model(3));
        assert_ne!(attention_model(3), attention_model(4));
    }
}
