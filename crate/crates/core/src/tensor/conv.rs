use rayon::prelude::*;

use super::{split_batch, Real, Tensor};
use crate::error::{config_err, shape_err, Result};

/// Spatial padding mode. The temporal axis of 3-D convolutions is always valid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding that preserves spatial extents (odd kernels only).
    Same,
    Valid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    /// Temporal taps; 1 for plain 2-D convolution.
    pub kernel_t: usize,
    pub groups: usize,
    pub padding: Padding,
    pub has_bias: bool,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            kernel_t: 1,
            groups: 1,
            padding: Padding::Same,
            has_bias: true,
        }
    }

    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self::new(in_channels, out_channels, 1)
    }

    pub fn depthwise(channels: usize, kernel: usize) -> Self {
        Self::new(channels, channels, kernel).with_groups(channels)
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_temporal(mut self, kernel_t: usize) -> Self {
        self.kernel_t = kernel_t;
        self
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn without_bias(mut self) -> Self {
        self.has_bias = false;
        self
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.in_channels && self.groups == self.out_channels
    }

    pub fn is_pointwise(&self) -> bool {
        self.kernel_h == 1 && self.kernel_w == 1 && self.kernel_t == 1
    }

    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    pub fn taps(&self) -> usize {
        self.kernel_h * self.kernel_w * self.kernel_t
    }

    /// Weight tensor shape: `[kh, kw, (kt,) Cin/g, Cout]`.
    pub fn weight_shape(&self) -> Vec<usize> {
        if self.kernel_t == 1 {
            vec![self.kernel_h, self.kernel_w, self.in_per_group(), self.out_channels]
        } else {
            vec![
                self.kernel_h,
                self.kernel_w,
                self.kernel_t,
                self.in_per_group(),
                self.out_channels,
            ]
        }
    }

    pub fn weight_count(&self) -> usize {
        self.taps() * self.in_channels * self.out_channels / self.groups
    }

    pub fn bias_count(&self) -> usize {
        if self.has_bias {
            self.out_channels
        } else {
            0
        }
    }

    pub fn fan_in(&self) -> usize {
        self.taps() * self.in_per_group()
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.groups == 0 {
            return Err(config_err!("zero channel or group count in {self:?}"));
        }
        if self.kernel_h == 0 || self.kernel_w == 0 || self.kernel_t == 0 {
            return Err(config_err!("zero kernel extent in {self:?}"));
        }
        if !self.in_channels.is_multiple_of(self.groups) || !self.out_channels.is_multiple_of(self.groups) {
            return Err(config_err!(
                "channels {}->{} not divisible by groups {}",
                self.in_channels,
                self.out_channels,
                self.groups
            ));
        }
        if self.padding == Padding::Same && (self.kernel_h.is_multiple_of(2) || self.kernel_w.is_multiple_of(2)) {
            return Err(config_err!("same padding needs odd kernels, got {self:?}"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T: Real> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

/// Resolved extents of one convolution call over a `[B, H, W, T, C]` view.
#[derive(Clone, Copy, Debug)]
struct Geometry {
    batch: usize,
    h: usize,
    w: usize,
    t: usize,
    cin: usize,
    ho: usize,
    wo: usize,
    to: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    kt: usize,
    pad_h: usize,
    pad_w: usize,
    groups: usize,
    cig: usize,
    cog: usize,
}

impl Geometry {
    fn new(batch: usize, dims: [usize; 4], spec: &ConvSpec) -> Result<Self> {
        spec.validate()?;
        let [h, w, t, cin] = dims;
        if cin != spec.in_channels {
            return Err(shape_err!(
                "input has {cin} channels, conv expects {}",
                spec.in_channels
            ));
        }
        if spec.kernel_t > t {
            return Err(shape_err!(
                "temporal kernel {} exceeds {} input frames",
                spec.kernel_t,
                t
            ));
        }
        let (pad_h, pad_w, ho, wo) = match spec.padding {
            Padding::Same => ((spec.kernel_h - 1) / 2, (spec.kernel_w - 1) / 2, h, w),
            Padding::Valid => {
                if spec.kernel_h > h || spec.kernel_w > w {
                    return Err(shape_err!(
                        "kernel {}x{} larger than input {h}x{w} under valid padding",
                        spec.kernel_h,
                        spec.kernel_w
                    ));
                }
                (0, 0, h - spec.kernel_h + 1, w - spec.kernel_w + 1)
            }
        };
        Ok(Geometry {
            batch,
            h,
            w,
            t,
            cin,
            ho,
            wo,
            to: t - spec.kernel_t + 1,
            cout: spec.out_channels,
            kh: spec.kernel_h,
            kw: spec.kernel_w,
            kt: spec.kernel_t,
            pad_h,
            pad_w,
            groups: spec.groups,
            cig: spec.in_per_group(),
            cog: spec.out_per_group(),
        })
    }

    fn depthwise(&self) -> bool {
        self.cig == 1 && self.cog == 1
    }

    fn in_index(&self, b: usize, y: usize, x: usize, t: usize) -> usize {
        (((b * self.h + y) * self.w + x) * self.t + t) * self.cin
    }

    fn out_index(&self, b: usize, y: usize, x: usize, t: usize) -> usize {
        (((b * self.ho + y) * self.wo + x) * self.to + t) * self.cout
    }

    fn tap_stride(&self) -> usize {
        self.cig * self.cout
    }

    fn tap(&self, ky: usize, kx: usize, dt: usize) -> usize {
        ((ky * self.kw + kx) * self.kt + dt) * self.tap_stride()
    }

    /// Input row for output row `y` and kernel row `ky`, if inside the image.
    fn src(&self, o: usize, k: usize, pad: usize, extent: usize) -> Option<usize> {
        (o + k).checked_sub(pad).filter(|&i| i < extent)
    }

    fn rows_out(&self) -> usize {
        self.batch * self.ho
    }
}

fn check_params<T: Real>(spec: &ConvSpec, weights: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<()> {
    spec.validate()?;
    weights.expect_shape(&spec.weight_shape())?;
    match (spec.has_bias, bias) {
        (true, Some(b)) => b.expect_shape(&[spec.out_channels]),
        (false, None) => Ok(()),
        (true, None) => Err(shape_err!("conv declares a bias but none was given")),
        (false, Some(_)) => Err(shape_err!("conv declares no bias but one was given")),
    }
}

#[inline]
fn axpy<T: Real>(acc: &mut [T], a: T, x: &[T]) {
    for (o, &v) in acc.iter_mut().zip(x) {
        *o += a * v;
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

fn forward_kernel<T: Real>(g: &Geometry, input: &[T], weights: &[T], bias: Option<&[T]>) -> Vec<T> {
    let row_len = g.wo * g.to * g.cout;
    let mut out = vec![T::zero(); g.rows_out() * row_len];
    out.par_chunks_mut(row_len).enumerate().for_each(|(row, dst)| {
        let (b, y) = (row / g.ho, row % g.ho);
        for x in 0..g.wo {
            for t in 0..g.to {
                let o = (x * g.to + t) * g.cout;
                let acc = &mut dst[o..o + g.cout];
                if let Some(bias) = bias {
                    acc.copy_from_slice(bias);
                }
                for ky in 0..g.kh {
                    let Some(iy) = g.src(y, ky, g.pad_h, g.h) else { continue };
                    for kx in 0..g.kw {
                        let Some(ix) = g.src(x, kx, g.pad_w, g.w) else { continue };
                        for dt in 0..g.kt {
                            let i0 = g.in_index(b, iy, ix, t + dt);
                            let xin = &input[i0..i0 + g.cin];
                            let w0 = g.tap(ky, kx, dt);
                            let wt = &weights[w0..w0 + g.tap_stride()];
                            if g.depthwise() {
                                for ((a, &v), &k) in acc.iter_mut().zip(xin).zip(wt) {
                                    *a += v * k;
                                }
                                continue;
                            }
                            for grp in 0..g.groups {
                                let co0 = grp * g.cog;
                                for ci in 0..g.cig {
                                    let v = xin[grp * g.cig + ci];
                                    let wr = &wt[ci * g.cout + co0..ci * g.cout + co0 + g.cog];
                                    axpy(&mut acc[co0..co0 + g.cog], v, wr);
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

fn input_grad_kernel<T: Real>(g: &Geometry, grad_out: &[T], weights: &[T]) -> Vec<T> {
    let row_len = g.w * g.t * g.cin;
    let mut gin = vec![T::zero(); g.batch * g.h * row_len];
    gin.par_chunks_mut(row_len).enumerate().for_each(|(row, dst)| {
        let (b, iy) = (row / g.h, row % g.h);
        for ix in 0..g.w {
            for it in 0..g.t {
                let o = (ix * g.t + it) * g.cin;
                let acc = &mut dst[o..o + g.cin];
                for ky in 0..g.kh {
                    // output row y reads input row iy through tap ky when y + ky - pad = iy
                    let Some(y) = (iy + g.pad_h).checked_sub(ky).filter(|&y| y < g.ho) else { continue };
                    for kx in 0..g.kw {
                        let Some(x) = (ix + g.pad_w).checked_sub(kx).filter(|&x| x < g.wo) else { continue };
                        for dt in 0..g.kt {
                            let Some(t) = it.checked_sub(dt).filter(|&t| t < g.to) else { continue };
                            let o0 = g.out_index(b, y, x, t);
                            let gv = &grad_out[o0..o0 + g.cout];
                            let w0 = g.tap(ky, kx, dt);
                            let wt = &weights[w0..w0 + g.tap_stride()];
                            if g.depthwise() {
                                for ((a, &v), &k) in acc.iter_mut().zip(gv).zip(wt) {
                                    *a += v * k;
                                }
                                continue;
                            }
                            for grp in 0..g.groups {
                                let co0 = grp * g.cog;
                                for ci in 0..g.cig {
                                    let wr = &wt[ci * g.cout + co0..ci * g.cout + co0 + g.cog];
                                    acc[grp * g.cig + ci] += dot(&gv[co0..co0 + g.cog], wr);
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    gin
}

/// Number of partial sums used for parameter-gradient reductions. Fixed so the
/// summation tree does not depend on the worker count.
const REDUCTION_CHUNKS: usize = 8;

fn param_grad_kernel<T: Real>(
    g: &Geometry,
    input: &[T],
    grad_out: &[T],
    with_bias: bool,
) -> (Vec<T>, Option<Vec<T>>) {
    let wlen = g.kh * g.kw * g.kt * g.tap_stride();
    let rows = g.rows_out();
    let chunk = rows.div_ceil(REDUCTION_CHUNKS).max(1);
    let partials: Vec<(Vec<T>, Vec<T>)> = (0..rows.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut gw = vec![T::zero(); wlen];
            let mut gb = vec![T::zero(); if with_bias { g.cout } else { 0 }];
            for row in c * chunk..((c + 1) * chunk).min(rows) {
                let (b, y) = (row / g.ho, row % g.ho);
                for x in 0..g.wo {
                    for t in 0..g.to {
                        let o0 = g.out_index(b, y, x, t);
                        let gv = &grad_out[o0..o0 + g.cout];
                        if with_bias {
                            for (a, &v) in gb.iter_mut().zip(gv) {
                                *a += v;
                            }
                        }
                        for ky in 0..g.kh {
                            let Some(iy) = g.src(y, ky, g.pad_h, g.h) else { continue };
                            for kx in 0..g.kw {
                                let Some(ix) = g.src(x, kx, g.pad_w, g.w) else { continue };
                                for dt in 0..g.kt {
                                    let i0 = g.in_index(b, iy, ix, t + dt);
                                    let xin = &input[i0..i0 + g.cin];
                                    let w0 = g.tap(ky, kx, dt);
                                    let wt = &mut gw[w0..w0 + g.tap_stride()];
                                    if g.depthwise() {
                                        for ((a, &v), &d) in wt.iter_mut().zip(xin).zip(gv) {
                                            *a += v * d;
                                        }
                                        continue;
                                    }
                                    for grp in 0..g.groups {
                                        let co0 = grp * g.cog;
                                        for ci in 0..g.cig {
                                            let v = xin[grp * g.cig + ci];
                                            let r0 = ci * g.cout + co0;
                                            axpy(&mut wt[r0..r0 + g.cog], v, &gv[co0..co0 + g.cog]);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            (gw, gb)
        })
        .collect();
    let mut gw = vec![T::zero(); wlen];
    let mut gb = vec![T::zero(); if with_bias { g.cout } else { 0 }];
    for (pw, pb) in &partials {
        axpy(&mut gw, T::one(), pw);
        axpy(&mut gb, T::one(), pb);
    }
    (gw, with_bias.then_some(gb))
}

fn geometry_2d<T: Real>(input: &Tensor<T>, spec: &ConvSpec) -> Result<(Geometry, Vec<usize>)> {
    if spec.kernel_t != 1 {
        return Err(config_err!("conv2d called with temporal kernel {}", spec.kernel_t));
    }
    let (batch, inner) = split_batch(input.shape(), 3)?;
    let g = Geometry::new(batch, [inner[0], inner[1], 1, inner[2]], spec)?;
    let mut out_shape = input.shape()[..input.rank() - 3].to_vec();
    out_shape.extend_from_slice(&[g.ho, g.wo, g.cout]);
    Ok((g, out_shape))
}

fn geometry_3d<T: Real>(input: &Tensor<T>, spec: &ConvSpec) -> Result<(Geometry, Vec<usize>)> {
    let (batch, inner) = split_batch(input.shape(), 4)?;
    let g = Geometry::new(batch, [inner[0], inner[1], inner[2], inner[3]], spec)?;
    let mut out_shape = input.shape()[..input.rank() - 4].to_vec();
    out_shape.extend_from_slice(&[g.ho, g.wo, g.to, g.cout]);
    Ok((g, out_shape))
}

/// Grouped 2-D convolution over `[.., H, W, Cin]` with weights `[kh, kw, Cin/g, Cout]`.
///
/// Output channel `o` of group `k` reads only input channels of group `k`.
pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    check_params(spec, weights, bias)?;
    let (g, shape) = geometry_2d(input, spec)?;
    let out = forward_kernel(&g, input.data(), weights.data(), bias.map(|b| b.data()));
    Tensor::new(&shape, out)
}

pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    spec.validate()?;
    weights.expect_shape(&spec.weight_shape())?;
    let (g, shape) = geometry_2d(input, spec)?;
    grad_out.expect_shape(&shape)?;
    conv_backward(&g, input, spec, weights, grad_out)
}

/// 3-D convolution over `[.., H, W, T, Cin]`: same spatial padding (per `spec`),
/// valid temporal padding, so `T' = T - kt + 1`.
pub fn conv3d<T: Real>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    check_params(spec, weights, bias)?;
    let (g, shape) = geometry_3d(input, spec)?;
    let out = forward_kernel(&g, input.data(), weights.data(), bias.map(|b| b.data()));
    Tensor::new(&shape, out)
}

pub fn conv3d_backward<T: Real>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    spec.validate()?;
    weights.expect_shape(&spec.weight_shape())?;
    let (g, shape) = geometry_3d(input, spec)?;
    grad_out.expect_shape(&shape)?;
    conv_backward(&g, input, spec, weights, grad_out)
}

fn conv_backward<T: Real>(
    g: &Geometry,
    input: &Tensor<T>,
    spec: &ConvSpec,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let gin = input_grad_kernel(g, grad_out.data(), weights.data());
    let (gw, gb) = param_grad_kernel(g, input.data(), grad_out.data(), spec.has_bias);
    Ok(ConvGrads {
        input: Tensor::new(input.shape(), gin)?,
        weights: Tensor::new(weights.shape(), gw)?,
        bias: gb.map(|b| Tensor::new(&[spec.out_channels], b)).transpose()?,
    })
}
