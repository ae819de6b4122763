use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::params::{ParamCounts, ParamGrads, ParamId, ParamKind, ParamStore};
use crate::error::{shape_err, GrrnError, Result};
use crate::layers::{
    batch_norm_backward, batch_norm_forward, bilinear_upsample, bottleneck_width, channel_attention,
    channel_attention_backward, pixel_shuffle, pixel_unshuffle, prelu, prelu_backward, AttentionCache,
    AttentionParams, BnCache, BnMode, BnParams, BnStatUpdate, Renorm, PRELU_INIT,
};
use crate::tensor::{conv2d, conv2d_backward, conv3d, conv3d_backward, ConvSpec, Real, Tensor};

/// Input frames are divided by this before entering the network and the
/// output is multiplied by it on the way out.
pub const INPUT_SCALE: f64 = 25.5;

/// Initial `gamma` of the last batch norm in every block and every group.
pub const FINAL_GAMMA_INIT: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics (unless frozen); no clamping.
    Train,
    /// Moving statistics; no clamping.
    Eval,
    /// Moving statistics; output clamped to `[0, 255]`.
    Inference,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ConvRef {
    spec: ConvSpec,
    w: ParamId,
    b: Option<ParamId>,
}

/// Ids of one batch-norm layer's tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BnRef {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub mean: ParamId,
    pub var: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct AttnRef {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
enum Op {
    Conv(ConvRef),
    PRelu(ParamId),
    Bn(BnRef),
    Attn(AttnRef),
    /// `y = x + seq(x)`
    Residual(Vec<Op>),
}

#[derive(Clone, Debug)]
enum OpCache<T: Real> {
    Conv(Tensor<T>),
    PRelu(Tensor<T>),
    Bn(BnCache<T>),
    Attn(Tensor<T>, AttentionCache<T>),
    Residual(Vec<OpCache<T>>),
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    /// `[conv3d 3x3x1, PReLU]`, then `n` chains `[conv3d 3x3x3, PReLU]`.
    feature_chains: Vec<Vec<Op>>,
    compress: Vec<Op>,
    /// Groups (or blocks when the nested structure is disabled) under the long skip.
    body: Vec<Op>,
    upsample: Vec<Op>,
}

struct Builder {
    store: ParamStore<f64>,
    rng: ChaCha8Rng,
}

impl Builder {
    fn conv(&mut self, name: &str, spec: ConvSpec) -> Result<ConvRef> {
        spec.validate()?;
        let bound = (6.0 / spec.fan_in() as f64).sqrt();
        let w = Tensor::random_uniform(&spec.weight_shape(), -bound, bound, &mut self.rng);
        let w = self.store.add(format!("{name}.w"), ParamKind::Trainable, w)?;
        let b = if spec.has_bias {
            Some(self.store.add(
                format!("{name}.b"),
                ParamKind::Trainable,
                Tensor::zeros(&[spec.out_channels]),
            )?)
        } else {
            None
        };
        Ok(ConvRef { spec, w, b })
    }

    fn prelu(&mut self, name: &str, channels: usize) -> Result<Op> {
        let a = self.store.add(
            format!("{name}.a"),
            ParamKind::Trainable,
            Tensor::full(&[channels], PRELU_INIT),
        )?;
        Ok(Op::PRelu(a))
    }

    fn bn(&mut self, name: &str, channels: usize, gamma: f64) -> Result<Op> {
        let c = [channels];
        Ok(Op::Bn(BnRef {
            gamma: self.store.add(format!("{name}.gamma"), ParamKind::BatchNorm, Tensor::full(&c, gamma))?,
            beta: self.store.add(format!("{name}.beta"), ParamKind::BatchNorm, Tensor::zeros(&c))?,
            mean: self.store.add(format!("{name}.mean"), ParamKind::Statistic, Tensor::zeros(&c))?,
            var: self.store.add(format!("{name}.var"), ParamKind::Statistic, Tensor::full(&c, 1.0))?,
        }))
    }

    fn fc(&mut self, name: &str, inputs: usize, outputs: usize) -> Result<(ParamId, ParamId)> {
        let bound = (6.0 / inputs as f64).sqrt();
        let w = Tensor::random_uniform(&[inputs, outputs], -bound, bound, &mut self.rng);
        Ok((
            self.store.add(format!("{name}.w"), ParamKind::Trainable, w)?,
            self.store.add(format!("{name}.b"), ParamKind::Trainable, Tensor::zeros(&[outputs]))?,
        ))
    }

    fn attn(&mut self, name: &str, channels: usize, reduction: usize) -> Result<Op> {
        let h = bottleneck_width(channels, reduction);
        let (w1, b1) = self.fc(&format!("{name}.fc1"), channels, h)?;
        let (w2, b2) = self.fc(&format!("{name}.fc2"), h, channels)?;
        Ok(Op::Attn(AttnRef { w1, b1, w2, b2 }))
    }

    fn block(&mut self, name: &str, cfg: &ModelConfig) -> Result<Op> {
        let c = cfg.body_channels;
        let pw = ConvSpec::pointwise(c, c).with_groups(cfg.pw_groups);
        let dw = ConvSpec::depthwise(c, 3);
        let mut ops = vec![
            self.bn(&format!("{name}.bn_in"), c, 1.0)?,
            Op::Conv(self.conv(&format!("{name}.pw_in"), pw)?),
            self.prelu(&format!("{name}.act_in"), c)?,
            Op::Conv(self.conv(&format!("{name}.dw1"), dw)?),
            self.prelu(&format!("{name}.act_dw1"), c)?,
            Op::Conv(self.conv(&format!("{name}.dw2"), dw)?),
            self.prelu(&format!("{name}.act_dw2"), c)?,
            Op::Conv(self.conv(&format!("{name}.pw_out"), pw)?),
            self.bn(&format!("{name}.bn_out"), c, FINAL_GAMMA_INIT)?,
        ];
        if cfg.use_channel_attention {
            ops.push(self.attn(&format!("{name}.ca"), c, cfg.reduction_r)?);
        }
        Ok(Op::Residual(ops))
    }

    fn group(&mut self, name: &str, cfg: &ModelConfig) -> Result<Op> {
        let c = cfg.body_channels;
        let mut ops = vec![Op::Conv(self.conv(&format!("{name}.pw_in"), ConvSpec::pointwise(c, c))?)];
        for b in 0..cfg.blocks {
            ops.push(self.block(&format!("{name}.b{b}"), cfg)?);
        }
        ops.push(Op::Conv(self.conv(&format!("{name}.pw_out"), ConvSpec::pointwise(c, c))?));
        ops.push(self.bn(&format!("{name}.bn"), c, FINAL_GAMMA_INIT)?);
        Ok(Op::Residual(ops))
    }

    fn layout(&mut self, cfg: &ModelConfig) -> Result<Layout> {
        let s = cfg.feat_channels;
        let mut feature_chains = vec![vec![
            Op::Conv(self.conv("fe.conv0", ConvSpec::new(3, s, 3))?),
            self.prelu("fe.act0", s)?,
        ]];
        for k in 1..=cfg.radius {
            feature_chains.push(vec![
                Op::Conv(self.conv(&format!("fe.conv{k}"), ConvSpec::new(s, s, 3).with_temporal(3))?),
                self.prelu(&format!("fe.act{k}"), s)?,
            ]);
        }
        let compress = vec![Op::Conv(self.conv(
            "fe.compress",
            ConvSpec::pointwise(cfg.concat_channels(), cfg.body_channels),
        )?)];
        let body = if cfg.use_rir {
            (0..cfg.groups)
                .map(|g| self.group(&format!("body.g{g}"), cfg))
                .collect::<Result<Vec<_>>>()?
        } else {
            (0..cfg.total_blocks())
                .map(|b| self.block(&format!("body.b{b}"), cfg))
                .collect::<Result<Vec<_>>>()?
        };
        let u = cfg.up_channels;
        let upsample = vec![
            Op::Conv(self.conv("up.compress", ConvSpec::pointwise(cfg.body_channels, u))?),
            Op::Conv(self.conv("up.conv1", ConvSpec::new(u, u, 3))?),
            self.prelu("up.act1", u)?,
            Op::Conv(self.conv("up.conv2", ConvSpec::new(u, u, 3))?),
            self.prelu("up.act2", u)?,
            Op::Conv(self.conv("up.final", ConvSpec::new(u, 3 * cfg.scale_r * cfg.scale_r, 3))?),
        ];
        Ok(Layout {
            feature_chains,
            compress,
            body,
            upsample,
        })
    }
}

fn collect_bn(ops: &[Op], out: &mut Vec<BnRef>) {
    for op in ops {
        match op {
            Op::Bn(b) => out.push(*b),
            Op::Residual(inner) => collect_bn(inner, out),
            _ => {}
        }
    }
}

/// Per-stage output shapes of one forward pass.
pub type ShapeLedger = Vec<(String, Vec<usize>)>;

/// Everything a forward pass produced.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T: Real> {
    pub output: Tensor<T>,
    pub ledger: ShapeLedger,
    /// Moving statistics computed by unfrozen training-mode batch norms.
    pub bn_updates: Vec<(BnRef, BnStatUpdate<T>)>,
    /// `body_in`, `body` and `residual` activations, kept only when retained.
    pub activations: Vec<(String, Tensor<T>)>,
    caches: Option<TraceCaches<T>>,
    mode: Mode,
    squeezed: bool,
}

impl<T: Real> ForwardTrace<T> {
    pub fn is_retained(&self) -> bool {
        self.caches.is_some()
    }

    pub fn stage(&self, name: &str) -> Option<&[usize]> {
        self.ledger
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s.as_slice())
    }

    pub fn activation(&self, name: &str) -> Option<&Tensor<T>> {
        self.activations.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

#[derive(Clone, Debug)]
struct TraceCaches<T: Real> {
    feature_chains: Vec<Vec<OpCache<T>>>,
    feature_shapes: Vec<Vec<usize>>,
    compress: Vec<OpCache<T>>,
    body: Vec<OpCache<T>>,
    upsample: Vec<OpCache<T>>,
}

struct Ctx<'a, T: Real> {
    params: &'a ParamStore<T>,
    config: &'a ModelConfig,
    bn_mode: BnMode,
    frozen: bool,
    renorm: Renorm,
    retain: bool,
    updates: Vec<(BnRef, BnStatUpdate<T>)>,
}

impl<T: Real> Ctx<'_, T> {
    fn run(&mut self, ops: &[Op], mut x: Tensor<T>, caches: &mut Vec<OpCache<T>>) -> Result<Tensor<T>> {
        for op in ops {
            x = self.run_op(op, x, caches)?;
        }
        Ok(x)
    }

    fn run_op(&mut self, op: &Op, x: Tensor<T>, caches: &mut Vec<OpCache<T>>) -> Result<Tensor<T>> {
        let p = self.params;
        let y = match op {
            Op::Conv(c) => {
                let w = p.get(c.w);
                let b = c.b.map(|id| p.get(id));
                let y = if c.spec.kernel_t > 1 || x.rank() == 5 {
                    conv3d(&x, &c.spec, w, b)?
                } else {
                    conv2d(&x, &c.spec, w, b)?
                };
                if self.retain {
                    caches.push(OpCache::Conv(x));
                }
                y
            }
            Op::PRelu(a) => {
                let y = prelu(&x, p.get(*a))?;
                if self.retain {
                    caches.push(OpCache::PRelu(x));
                }
                y
            }
            Op::Bn(b) => {
                let bp = BnParams {
                    gamma: p.get(b.gamma),
                    beta: p.get(b.beta),
                    mov_mean: p.get(b.mean),
                    mov_var: p.get(b.var),
                };
                let (y, cache, update) =
                    batch_norm_forward(&x, &bp, &self.config.bn, self.bn_mode, self.frozen, self.renorm)?;
                if let Some(u) = update {
                    self.updates.push((*b, u));
                }
                if self.retain {
                    caches.push(OpCache::Bn(cache));
                }
                y
            }
            Op::Attn(a) => {
                let (y, cache) = channel_attention(&x, &attn_params(p, a))?;
                if self.retain {
                    caches.push(OpCache::Attn(x, cache));
                }
                y
            }
            Op::Residual(inner) => {
                let mut sub = Vec::new();
                let mut y = self.run(inner, x.clone(), &mut sub)?;
                y.add_assign(&x)?;
                if self.retain {
                    caches.push(OpCache::Residual(sub));
                }
                y
            }
        };
        Ok(y)
    }
}

fn attn_params<'a, T: Real>(p: &'a ParamStore<T>, a: &AttnRef) -> AttentionParams<'a, T> {
    AttentionParams {
        w1: p.get(a.w1),
        b1: p.get(a.b1),
        w2: p.get(a.w2),
        b2: p.get(a.b2),
    }
}

fn back_seq<T: Real>(
    ops: &[Op],
    caches: &[OpCache<T>],
    mut g: Tensor<T>,
    p: &ParamStore<T>,
    grads: &mut ParamGrads<T>,
) -> Result<Tensor<T>> {
    for (op, cache) in ops.iter().zip(caches).rev() {
        g = back_op(op, cache, g, p, grads)?;
    }
    Ok(g)
}

fn back_op<T: Real>(
    op: &Op,
    cache: &OpCache<T>,
    g: Tensor<T>,
    p: &ParamStore<T>,
    grads: &mut ParamGrads<T>,
) -> Result<Tensor<T>> {
    match (op, cache) {
        (Op::Conv(c), OpCache::Conv(x)) => {
            let w = p.get(c.w);
            let cg = if c.spec.kernel_t > 1 || x.rank() == 5 {
                conv3d_backward(x, &c.spec, w, &g)?
            } else {
                conv2d_backward(x, &c.spec, w, &g)?
            };
            grads.accumulate(c.w, &cg.weights)?;
            if let (Some(id), Some(gb)) = (c.b, cg.bias.as_ref()) {
                grads.accumulate(id, gb)?;
            }
            Ok(cg.input)
        }
        (Op::PRelu(a), OpCache::PRelu(x)) => {
            let (gx, ga) = prelu_backward(x, p.get(*a), &g)?;
            grads.accumulate(*a, &ga)?;
            Ok(gx)
        }
        (Op::Bn(b), OpCache::Bn(cache)) => {
            let bg = batch_norm_backward(cache, p.get(b.gamma), &g)?;
            grads.accumulate(b.gamma, &bg.gamma)?;
            grads.accumulate(b.beta, &bg.beta)?;
            Ok(bg.input)
        }
        (Op::Attn(a), OpCache::Attn(x, cache)) => {
            let ag = channel_attention_backward(x, &attn_params(p, a), cache, &g)?;
            grads.accumulate(a.w1, &ag.w1)?;
            grads.accumulate(a.b1, &ag.b1)?;
            grads.accumulate(a.w2, &ag.w2)?;
            grads.accumulate(a.b2, &ag.b2)?;
            Ok(ag.input)
        }
        (Op::Residual(inner), OpCache::Residual(sub)) => {
            let mut gx = back_seq(inner, sub, g.clone(), p, grads)?;
            gx.add_assign(&g)?;
            Ok(gx)
        }
        _ => Err(GrrnError::State("trace does not match the network layout".into())),
    }
}

/// The full video super-resolution network with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Grrn<T: Real = f32> {
    config: ModelConfig,
    params: ParamStore<T>,
    layout: Layout,
    bn_frozen: bool,
}

impl<T: Real> Grrn<T> {
    /// Build and initialize from `seed`. Initialization draws in f64, so
    /// models of different precision built from one seed agree up to rounding.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut b = Builder {
            store: ParamStore::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let layout = b.layout(&config)?;
        Ok(Grrn {
            config,
            params: b.store.cast(),
            layout,
            bn_frozen: false,
        })
    }

    /// Rebuild from stored tensors. Every name and shape must match the layout.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>, bn_frozen: bool) -> Result<Self> {
        let mut model = Grrn::<T>::new(config, 0)?;
        if params.len() != model.params.len() {
            return Err(shape_err!(
                "expected {} parameter tensors, got {}",
                model.params.len(),
                params.len()
            ));
        }
        for (want, got) in model.params.entries().iter().zip(params.entries()) {
            if want.name != got.name || want.kind != got.kind || want.value.shape() != got.value.shape() {
                return Err(shape_err!(
                    "parameter mismatch: expected {} {:?} {:?}, got {} {:?} {:?}",
                    want.name,
                    want.kind,
                    want.value.shape(),
                    got.name,
                    got.kind,
                    got.value.shape()
                ));
            }
        }
        model.params = params;
        model.bn_frozen = bn_frozen;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn counts(&self) -> ParamCounts {
        self.params.counts()
    }

    pub fn is_bn_frozen(&self) -> bool {
        self.bn_frozen
    }

    /// Switch every batch norm to moving statistics for good.
    pub fn freeze_batch_norm(&mut self) {
        self.bn_frozen = true;
    }

    pub fn cast<U: Real>(&self) -> Grrn<U> {
        Grrn {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
            bn_frozen: self.bn_frozen,
        }
    }

    /// All batch-norm layers in network order.
    pub fn bn_layers(&self) -> Vec<BnRef> {
        let mut out = Vec::new();
        collect_bn(&self.layout.body, &mut out);
        out
    }

    /// Forward in evaluation or inference mode without keeping activations.
    pub fn forward(&self, frames: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        Ok(self.forward_with(frames, mode, Renorm::PLAIN, false)?.output)
    }

    /// Forward over `[N, H, W, 2n+1, 3]` frames in `0..=255` (a rank-4 input
    /// is one clip). Returns `[N, rH, rW, 3]` (or `[rH, rW, 3]`).
    ///
    /// Training-mode batch-norm updates are returned in the trace, not
    /// applied; see [`Grrn::apply_stat_updates`].
    pub fn forward_with(&self, frames: &Tensor<T>, mode: Mode, renorm: Renorm, retain: bool) -> Result<ForwardTrace<T>> {
        let cfg = &self.config;
        let squeezed = frames.rank() == 4;
        let frames = if squeezed {
            let mut s = vec![1];
            s.extend_from_slice(frames.shape());
            frames.clone().reshape(&s)?
        } else {
            frames.clone()
        };
        let shape = frames.shape().to_vec();
        if shape.len() != 5 || shape[3] != cfg.frames() || shape[4] != 3 {
            return Err(shape_err!(
                "expected frames [N, H, W, {}, 3], got {:?}",
                cfg.frames(),
                shape
            ));
        }
        if let Some(v) = frames
            .data()
            .iter()
            .find(|v| !(v.as_f64() >= 0.0 && v.as_f64() <= 255.0))
        {
            return Err(GrrnError::Validation(format!("frame value {v} outside [0, 255]")));
        }
        let (n, h, w) = (shape[0], shape[1], shape[2]);
        let mut ledger: ShapeLedger = vec![("input".into(), shape.clone())];
        let mut ctx = Ctx {
            params: &self.params,
            config: cfg,
            bn_mode: if mode == Mode::Train { BnMode::Train } else { BnMode::Eval },
            frozen: self.bn_frozen,
            renorm,
            retain,
            updates: Vec::new(),
        };
        let inv = T::lit(1.0 / INPUT_SCALE);
        let x = frames.scale(inv);

        // Feature extraction: shared per-frame conv, then valid temporal convs.
        let mut chain_caches = Vec::new();
        let mut feats: Vec<Tensor<T>> = Vec::new();
        let mut cur = x.clone();
        for (k, chain) in self.layout.feature_chains.iter().enumerate() {
            let mut cc = Vec::new();
            cur = ctx.run(chain, cur, &mut cc)?;
            ledger.push((format!("f{k}"), cur.shape().to_vec()));
            feats.push(cur.clone());
            chain_caches.push(cc);
        }
        let feature_shapes: Vec<Vec<usize>> = feats.iter().map(|f| f.shape().to_vec()).collect();
        let merged: Vec<Tensor<T>> = feats
            .into_iter()
            .map(|f| {
                let c = f.shape()[3] * f.shape()[4];
                f.reshape(&[n, h, w, c])
            })
            .collect::<Result<_>>()?;
        let concat = Tensor::concat_channels(&merged.iter().collect::<Vec<_>>())?;
        ledger.push(("concat".into(), concat.shape().to_vec()));
        let mut compress_cache = Vec::new();
        let body_in = ctx.run(&self.layout.compress, concat, &mut compress_cache)?;
        ledger.push(("body_in".into(), body_in.shape().to_vec()));

        // Body under the long skip.
        let mut body_cache = Vec::new();
        let mut y = body_in.clone();
        let unit = if cfg.use_rir { "group" } else { "block" };
        for (i, op) in self.layout.body.iter().enumerate() {
            y = ctx.run_op(op, y, &mut body_cache)?;
            ledger.push((format!("{unit}{i}"), y.shape().to_vec()));
        }
        y.add_assign(&body_in)?;
        ledger.push(("body".into(), y.shape().to_vec()));
        let mut activations = Vec::new();
        if retain {
            activations.push(("body_in".to_string(), body_in.clone()));
            activations.push(("body".to_string(), y.clone()));
        }

        let mut up_cache = Vec::new();
        let z = ctx.run(&self.layout.upsample, y, &mut up_cache)?;
        ledger.push(("upsample_features".into(), z.shape().to_vec()));
        let residual = pixel_shuffle(&z, cfg.scale_r)?;
        ledger.push(("residual".into(), residual.shape().to_vec()));
        if retain {
            activations.push(("residual".to_string(), residual.clone()));
        }

        let mid = middle_frame(&x, cfg.radius)?;
        let mut out = bilinear_upsample(&mid, cfg.scale_r)?;
        out.add_assign(&residual)?;
        let k = T::lit(INPUT_SCALE);
        let lim = T::lit(255.0);
        let clamp = mode == Mode::Inference;
        out.data_mut().iter_mut().for_each(|v| {
            *v *= k;
            if clamp {
                *v = v.max(T::zero()).min(lim);
            }
        });
        ledger.push(("output".into(), out.shape().to_vec()));
        if squeezed {
            let s = out.shape()[1..].to_vec();
            out = out.reshape(&s)?;
        }
        let updates = std::mem::take(&mut ctx.updates);
        Ok(ForwardTrace {
            output: out,
            ledger,
            bn_updates: updates,
            activations,
            caches: retain.then_some(TraceCaches {
                feature_chains: chain_caches,
                feature_shapes,
                compress: compress_cache,
                body: body_cache,
                upsample: up_cache,
            }),
            mode,
            squeezed,
        })
    }

    /// Gradients of `sum(grad_output * output)` with respect to every stored
    /// tensor. Moving statistics always get zero gradient.
    pub fn backward(&self, trace: &ForwardTrace<T>, grad_output: &Tensor<T>) -> Result<ParamGrads<T>> {
        let caches = trace
            .caches
            .as_ref()
            .ok_or_else(|| GrrnError::State("backward needs a forward run with retained activations".into()))?;
        if trace.mode == Mode::Inference {
            return Err(GrrnError::State("inference-mode output is clamped and has no gradient".into()));
        }
        grad_output.expect_shape(trace.output.shape())?;
        let mut g = grad_output.scale(T::lit(INPUT_SCALE));
        if trace.squeezed {
            let mut s = vec![1];
            s.extend_from_slice(g.shape());
            g = g.reshape(&s)?;
        }
        let p = &self.params;
        let mut grads = ParamGrads::zeros_like(p);

        let gz = pixel_unshuffle(&g, self.config.scale_r)?;
        let g_body = back_seq(&self.layout.upsample, &caches.upsample, gz, p, &mut grads)?;
        let mut g_body_in = back_seq(&self.layout.body, &caches.body, g_body.clone(), p, &mut grads)?;
        g_body_in.add_assign(&g_body)?;
        let g_concat = back_seq(&self.layout.compress, &caches.compress, g_body_in, p, &mut grads)?;

        let widths: Vec<usize> = caches.feature_shapes.iter().map(|s| s[3] * s[4]).collect();
        let mut parts: Vec<Tensor<T>> = g_concat
            .split_channels(&widths)?
            .into_iter()
            .zip(&caches.feature_shapes)
            .map(|(t, s)| t.reshape(s))
            .collect::<Result<_>>()?;
        let mut g_feat = parts.pop().expect("at least one feature map");
        for (chain, cc) in self.layout.feature_chains.iter().zip(&caches.feature_chains).rev() {
            let g_prev = back_seq(chain, cc, g_feat, p, &mut grads)?;
            g_feat = match parts.pop() {
                Some(mut skip) => {
                    skip.add_assign(&g_prev)?;
                    skip
                }
                None => g_prev,
            };
        }
        Ok(grads)
    }

    /// Install moving statistics from a training-mode forward. Ignored once
    /// batch norm is frozen.
    pub fn apply_stat_updates(&mut self, updates: Vec<(BnRef, BnStatUpdate<T>)>) -> Result<()> {
        if self.bn_frozen {
            return Ok(());
        }
        for (b, u) in updates {
            self.params.set(b.mean, u.mov_mean)?;
            self.params.set(b.var, u.mov_var)?;
        }
        Ok(())
    }
}

/// Frame `n` of `[N, H, W, 2n+1, C]` as `[N, H, W, C]`.
pub fn middle_frame<T: Real>(frames: &Tensor<T>, radius: usize) -> Result<Tensor<T>> {
    let s = frames.shape();
    if s.len() != 5 || s[3] <= radius {
        return Err(shape_err!("no middle frame {radius} in {s:?}"));
    }
    let (t, c) = (s[3], s[4]);
    let mut out = Vec::with_capacity(frames.len() / t);
    for px in frames.data().chunks(t * c) {
        out.extend_from_slice(&px[radius * c..(radius + 1) * c]);
    }
    Tensor::new(&[s[0], s[1], s[2], c], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preset;

    fn nano() -> ModelConfig {
        Preset::Nano.config()
    }

    fn run_single(model: &Grrn<f64>, op: &Op, x: &Tensor<f64>) -> Tensor<f64> {
        let mut ctx = Ctx {
            params: &model.params,
            config: &model.config,
            bn_mode: BnMode::Train,
            frozen: false,
            renorm: Renorm::PLAIN,
            retain: false,
            updates: Vec::new(),
        };
        ctx.run_op(op, x.clone(), &mut Vec::new()).unwrap()
    }

    fn first_block(model: &Grrn<f64>) -> &Op {
        match &model.layout.body[0] {
            Op::Residual(ops) => &ops[1],
            _ => unreachable!(),
        }
    }

    #[test]
    fn block_channel_groups_stay_isolated() {
        let mut cfg = nano();
        cfg.use_channel_attention = false;
        let model = Grrn::<f64>::new(cfg, 3).unwrap();
        let block = first_block(&model);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Tensor::random_uniform(&[2, 5, 4, 16], -1.0, 1.0, &mut rng);
        let mut b = a.clone();
        for px in b.data_mut().chunks_mut(16) {
            px[8..].iter_mut().for_each(|v| *v = 0.0);
        }
        let ya = run_single(&model, block, &a);
        let yb = run_single(&model, block, &b);
        let mut changed = false;
        for (pa, pb) in ya.data().chunks(16).zip(yb.data().chunks(16)) {
            assert_eq!(pa[..8], pb[..8]);
            changed |= pa[8..] != pb[8..];
        }
        assert!(changed);
    }

    #[test]
    fn group_pointwise_mixes_all_channels() {
        let model = Grrn::<f64>::new(nano(), 4).unwrap();
        let group = &model.layout.body[0];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Tensor::random_uniform(&[2, 3, 3, 16], -1.0, 1.0, &mut rng);
        let mut b = a.clone();
        b.data_mut()[0] += 0.5;
        let ya = run_single(&model, group, &a);
        let yb = run_single(&model, group, &b);
        let mut touched = [false; 16];
        for (pa, pb) in ya.data().chunks(16).zip(yb.data().chunks(16)) {
            for ch in 0..16 {
                touched[ch] |= pa[ch] != pb[ch];
            }
        }
        assert!(touched.iter().all(|&t| t), "{touched:?}");
    }

    #[test]
    fn zero_gamma_block_is_identity() {
        let mut model = Grrn::<f64>::new(nano(), 5).unwrap();
        for id in model.params.ids().collect::<Vec<_>>() {
            let name = &model.params.entry(id).name;
            if name.ends_with("bn_out.gamma") {
                model.params.get_mut(id).fill(0.0);
            }
        }
        let block = first_block(&model).clone();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Tensor::random_uniform(&[2, 4, 4, 16], -2.0, 2.0, &mut rng);
        assert_eq!(run_single(&model, &block, &x), x);
    }

    #[test]
    fn batch_norm_layers_enumerated() {
        let cfg = nano();
        let model = Grrn::<f32>::new(cfg.clone(), 0).unwrap();
        assert_eq!(model.bn_layers().len(), cfg.groups * (2 * cfg.blocks + 1));
    }
}
