//! Batch normalization with batch-renormalization correction and a freeze switch.
//!
//! In unfrozen training the batch statistics are corrected toward the moving
//! statistics by the clipped factors `r = sigma_B / sigma_mov` and
//! `d = (mu_B - mu_mov) / sigma_mov`. Both factors are treated as constants in
//! the backward pass. Evaluation, and any forward after freezing, normalizes
//! with the moving statistics and leaves all state untouched.

use crate::error::{config_err, shape_err, Result};
use crate::tensor::{Real, Tensor};

pub const DEFAULT_MOMENTUM: f64 = 0.99;
pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Hyperparameters shared by all normalization layers of a model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BnSettings {
    pub momentum: f64,
    pub epsilon: f64,
}

impl Default for BnSettings {
    fn default() -> Self {
        BnSettings {
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Clip bounds for the renormalization factors at the current step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Renorm {
    pub r_max: f64,
    pub d_max: f64,
}

impl Renorm {
    /// `r_max = 1, d_max = 0`: plain batch normalization.
    pub const PLAIN: Renorm = Renorm { r_max: 1.0, d_max: 0.0 };

    /// Linear ramp from plain batch norm to `(r_max_final, d_max_final)` as
    /// `progress` goes from 0 to 1.
    pub fn ramp(progress: f64, r_max_final: f64, d_max_final: f64) -> Self {
        let p = progress.clamp(0.0, 1.0);
        Renorm {
            r_max: 1.0 + (r_max_final - 1.0) * p,
            d_max: d_max_final * p,
        }
    }
}

/// Default end points of the renorm ramp.
pub const RENORM_R_MAX: f64 = 3.0;
pub const RENORM_D_MAX: f64 = 5.0;

/// Borrowed view of one layer's tensors, all of shape `[C]`.
#[derive(Clone, Copy, Debug)]
pub struct BnParams<'a, T: Real> {
    pub gamma: &'a Tensor<T>,
    pub beta: &'a Tensor<T>,
    pub mov_mean: &'a Tensor<T>,
    pub mov_var: &'a Tensor<T>,
}

/// New moving statistics produced by a training-mode forward.
#[derive(Clone, Debug, PartialEq)]
pub struct BnStatUpdate<T: Real> {
    pub mov_mean: Tensor<T>,
    pub mov_var: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct BnCache<T: Real> {
    /// `(x - mu) / sigma` for whichever statistics were used.
    norm: Tensor<T>,
    inv_std: Vec<T>,
    /// Renorm factors `(r, d)`; `None` when moving statistics were used.
    correction: Option<(Vec<T>, Vec<T>)>,
}

#[derive(Clone, Debug)]
pub struct BnGrads<T: Real> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

fn check<T: Real>(x: &Tensor<T>, p: &BnParams<'_, T>) -> Result<usize> {
    if x.rank() < 2 {
        return Err(shape_err!("batch norm needs a leading batch axis, got {:?}", x.shape()));
    }
    let c = x.channels();
    for (name, t) in [("gamma", p.gamma), ("beta", p.beta), ("mean", p.mov_mean), ("var", p.mov_var)] {
        if t.shape() != [c] {
            return Err(shape_err!("batch norm {name} {:?} vs {c} channels", t.shape()));
        }
    }
    Ok(c)
}

/// Per-channel mean and biased variance, accumulated in f64.
fn batch_moments<T: Real>(x: &Tensor<T>, c: usize) -> (Vec<f64>, Vec<f64>) {
    let m = (x.len() / c) as f64;
    let mut mean = vec![0.0; c];
    for px in x.data().chunks(c) {
        for (a, v) in mean.iter_mut().zip(px) {
            *a += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|a| *a /= m);
    let mut var = vec![0.0; c];
    for px in x.data().chunks(c) {
        for ((a, v), mu) in var.iter_mut().zip(px).zip(&mean) {
            let d = v.as_f64() - mu;
            *a += d * d;
        }
    }
    var.iter_mut().for_each(|a| *a /= m);
    (mean, var)
}

fn affine<T: Real>(xhat: &Tensor<T>, p: &BnParams<'_, T>, c: usize) -> Tensor<T> {
    let mut y = xhat.clone();
    for px in y.data_mut().chunks_mut(c) {
        for ((v, &g), &b) in px.iter_mut().zip(p.gamma.data()).zip(p.beta.data()) {
            *v = g * *v + b;
        }
    }
    y
}

fn forward_moving<T: Real>(x: &Tensor<T>, p: &BnParams<'_, T>, settings: &BnSettings, c: usize) -> (Tensor<T>, BnCache<T>) {
    let inv_std: Vec<T> = p
        .mov_var
        .data()
        .iter()
        .map(|v| T::lit(1.0 / (v.as_f64() + settings.epsilon).sqrt()))
        .collect();
    let mut xhat = x.clone();
    for px in xhat.data_mut().chunks_mut(c) {
        for ((v, &mu), &k) in px.iter_mut().zip(p.mov_mean.data()).zip(&inv_std) {
            *v = (*v - mu) * k;
        }
    }
    let y = affine(&xhat, p, c);
    (
        y,
        BnCache {
            norm: xhat,
            inv_std,
            correction: None,
        },
    )
}

/// Train-mode normalization with explicitly supplied correction factors.
///
/// Exposed so gradient checks can hold `r` and `d` fixed, matching the way
/// the backward pass treats them.
pub fn batch_norm_train_with_correction<T: Real>(
    x: &Tensor<T>,
    p: &BnParams<'_, T>,
    settings: &BnSettings,
    r: &[T],
    d: &[T],
) -> Result<(Tensor<T>, BnCache<T>, Vec<f64>, Vec<f64>)> {
    let c = check(x, p)?;
    if r.len() != c || d.len() != c {
        return Err(shape_err!("renorm factors must have {c} entries"));
    }
    let (mean, var) = batch_moments(x, c);
    let inv_std: Vec<T> = var
        .iter()
        .map(|v| T::lit(1.0 / (v + settings.epsilon).sqrt()))
        .collect();
    let mu: Vec<T> = mean.iter().map(|&m| T::lit(m)).collect();
    let mut norm = x.clone();
    for px in norm.data_mut().chunks_mut(c) {
        for ch in 0..c {
            px[ch] = (px[ch] - mu[ch]) * inv_std[ch];
        }
    }
    let mut xhat = norm.clone();
    for px in xhat.data_mut().chunks_mut(c) {
        for ch in 0..c {
            px[ch] = px[ch] * r[ch] + d[ch];
        }
    }
    let y = affine(&xhat, p, c);
    Ok((
        y,
        BnCache {
            norm,
            inv_std,
            correction: Some((r.to_vec(), d.to_vec())),
        },
        mean,
        var,
    ))
}

/// Forward pass. Returns the output, the backward cache and, for unfrozen
/// training, the moving statistics to install afterwards.
pub fn batch_norm_forward<T: Real>(
    x: &Tensor<T>,
    p: &BnParams<'_, T>,
    settings: &BnSettings,
    mode: BnMode,
    frozen: bool,
    renorm: Renorm,
) -> Result<(Tensor<T>, BnCache<T>, Option<BnStatUpdate<T>>)> {
    let c = check(x, p)?;
    if mode == BnMode::Eval || frozen {
        let (y, cache) = forward_moving(x, p, settings, c);
        return Ok((y, cache, None));
    }
    if x.shape()[0] < 2 {
        return Err(config_err!(
            "batch norm training needs a minibatch of at least 2, got {}",
            x.shape()[0]
        ));
    }
    let (mean, var) = batch_moments(x, c);
    let mut r = Vec::with_capacity(c);
    let mut d = Vec::with_capacity(c);
    for ch in 0..c {
        let sigma_b = (var[ch] + settings.epsilon).sqrt();
        let sigma_mov = (p.mov_var.data()[ch].as_f64() + settings.epsilon).sqrt();
        let mu_mov = p.mov_mean.data()[ch].as_f64();
        r.push(T::lit((sigma_b / sigma_mov).clamp(1.0 / renorm.r_max, renorm.r_max)));
        d.push(T::lit(((mean[ch] - mu_mov) / sigma_mov).clamp(-renorm.d_max, renorm.d_max)));
    }
    let (y, cache, mean, var) = batch_norm_train_with_correction(x, p, settings, &r, &d)?;
    let m = settings.momentum;
    let update = BnStatUpdate {
        mov_mean: Tensor::from_fn(&[c], |ch| {
            T::lit(m * p.mov_mean.data()[ch].as_f64() + (1.0 - m) * mean[ch])
        }),
        mov_var: Tensor::from_fn(&[c], |ch| {
            T::lit(m * p.mov_var.data()[ch].as_f64() + (1.0 - m) * var[ch])
        }),
    };
    Ok((y, cache, Some(update)))
}

pub fn batch_norm_backward<T: Real>(
    cache: &BnCache<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<BnGrads<T>> {
    grad_out.expect_shape(cache.norm.shape())?;
    let c = gamma.len();
    let rows = grad_out.len() / c;
    let g = gamma.data();
    let mut g_gamma = vec![0.0f64; c];
    let mut g_beta = vec![0.0f64; c];
    let mut gx = grad_out.clone();
    match &cache.correction {
        None => {
            for (gpx, npx) in gx.data_mut().chunks_mut(c).zip(cache.norm.data().chunks(c)) {
                for ch in 0..c {
                    g_beta[ch] += gpx[ch].as_f64();
                    g_gamma[ch] += (gpx[ch] * npx[ch]).as_f64();
                    gpx[ch] = gpx[ch] * g[ch] * cache.inv_std[ch];
                }
            }
        }
        Some((r, d)) => {
            // xhat = r * xn + d with r, d constant; xn = (x - mu_B) / sigma_B.
            let mut mean_g = vec![0.0f64; c];
            let mut mean_gx = vec![0.0f64; c];
            for (gpx, npx) in grad_out.data().chunks(c).zip(cache.norm.data().chunks(c)) {
                for ch in 0..c {
                    let gy = gpx[ch].as_f64();
                    let xn = npx[ch].as_f64();
                    g_beta[ch] += gy;
                    g_gamma[ch] += gy * (r[ch].as_f64() * xn + d[ch].as_f64());
                    let gxn = gy * (g[ch] * r[ch]).as_f64();
                    mean_g[ch] += gxn;
                    mean_gx[ch] += gxn * xn;
                }
            }
            let m = rows as f64;
            mean_g.iter_mut().for_each(|v| *v /= m);
            mean_gx.iter_mut().for_each(|v| *v /= m);
            for (gpx, npx) in gx.data_mut().chunks_mut(c).zip(cache.norm.data().chunks(c)) {
                for ch in 0..c {
                    let gxn = gpx[ch].as_f64() * (g[ch] * r[ch]).as_f64();
                    let xn = npx[ch].as_f64();
                    gpx[ch] = T::lit(cache.inv_std[ch].as_f64() * (gxn - mean_g[ch] - xn * mean_gx[ch]));
                }
            }
        }
    }
    Ok(BnGrads {
        input: gx,
        gamma: Tensor::from_fn(&[c], |ch| T::lit(g_gamma[ch])),
        beta: Tensor::from_fn(&[c], |ch| T::lit(g_beta[ch])),
    })
}

/// Owned state of a single normalization layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T: Real = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub mov_mean: Tensor<T>,
    pub mov_var: Tensor<T>,
    pub settings: BnSettings,
    pub renorm: Renorm,
    pub frozen: bool,
}

impl<T: Real> BatchNormState<T> {
    pub fn new(channels: usize, settings: BnSettings) -> Self {
        BatchNormState {
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            mov_mean: Tensor::zeros(&[channels]),
            mov_var: Tensor::full(&[channels], T::one()),
            settings,
            renorm: Renorm::PLAIN,
            frozen: false,
        }
    }

    pub fn params(&self) -> BnParams<'_, T> {
        BnParams {
            gamma: &self.gamma,
            beta: &self.beta,
            mov_mean: &self.mov_mean,
            mov_var: &self.mov_var,
        }
    }

    /// Forward pass; unfrozen training also updates the moving statistics.
    pub fn forward(&mut self, x: &Tensor<T>, mode: BnMode) -> Result<(Tensor<T>, BnCache<T>)> {
        let (y, cache, update) =
            batch_norm_forward(x, &self.params(), &self.settings, mode, self.frozen, self.renorm)?;
        if let Some(u) = update {
            self.mov_mean = u.mov_mean;
            self.mov_var = u.mov_var;
        }
        Ok((y, cache))
    }
}

/// Switch a layer permanently to moving statistics. Its tensors are excluded
/// from optimizer updates from then on.
pub fn freeze_batch_norm<T: Real>(mut state: BatchNormState<T>) -> BatchNormState<T> {
    state.frozen = true;
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{numeric_gradient, project, tensor_relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(c: usize) -> BatchNormState<f64> {
        BatchNormState::new(c, BnSettings::default())
    }

    #[test]
    fn frozen_identity_map() {
        let mut s = freeze_batch_norm(BatchNormState::<f32>::new(2, BnSettings { momentum: 0.99, epsilon: 0.0 }));
        let x = Tensor::new(&[2, 2], vec![1.0, -3.0, 0.5, 8.0]).unwrap();
        let (y, _) = s.forward(&x, BnMode::Train).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn two_value_batch_normalizes_to_pm_one() {
        let mut s = state(1);
        s.gamma = Tensor::full(&[1], 2.0);
        s.beta = Tensor::full(&[1], 0.5);
        let x = Tensor::new(&[2, 1], vec![1.0, 3.0]).unwrap();
        let (y, _) = s.forward(&x, BnMode::Train).unwrap();
        let k = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y.data()[0] - (-k * 2.0 + 0.5)).abs() < 1e-12);
        assert!((y.data()[1] - (k * 2.0 + 0.5)).abs() < 1e-12);
        // moving stats moved 1% toward (2, 1)
        assert!((s.mov_mean.data()[0] - 0.02).abs() < 1e-12);
        assert!((s.mov_var.data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_of_one_rejected_unless_frozen() {
        let mut s = state(3);
        let x = Tensor::zeros(&[1, 2, 2, 3]);
        assert!(matches!(s.forward(&x, BnMode::Train), Err(crate::GrrnError::Config(_))));
        assert!(s.forward(&x, BnMode::Eval).is_ok());
        let mut f = freeze_batch_norm(s);
        assert!(f.forward(&x, BnMode::Train).is_ok());
    }

    #[test]
    fn eval_and_frozen_leave_state_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::random_uniform(&[4, 3, 3, 2], -2.0, 2.0, &mut rng);
        let mut s = state(2);
        let before = s.clone();
        s.forward(&x, BnMode::Eval).unwrap();
        assert_eq!(s, before);
        let mut f = freeze_batch_norm(s);
        let frozen_before = f.clone();
        let (a, _) = f.forward(&x, BnMode::Train).unwrap();
        let (b, _) = f.forward(&x, BnMode::Eval).unwrap();
        assert_eq!(f, frozen_before);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn renorm_ramp_endpoints() {
        assert_eq!(Renorm::ramp(0.0, 3.0, 5.0), Renorm::PLAIN);
        assert_eq!(Renorm::ramp(1.0, 3.0, 5.0), Renorm { r_max: 3.0, d_max: 5.0 });
        assert_eq!(Renorm::ramp(0.5, 3.0, 5.0), Renorm { r_max: 2.0, d_max: 2.5 });
    }

    #[test]
    fn renorm_correction_pulls_toward_moving_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::<f64>::random_uniform(&[8, 2, 2, 1], 4.0, 6.0, &mut rng);
        let mut s = state(1);
        s.mov_mean = Tensor::full(&[1], 5.0);
        s.mov_var = Tensor::full(&[1], 0.25);
        s.renorm = Renorm { r_max: 3.0, d_max: 5.0 };
        let mut e = s.clone();
        let (y_eval, _) = e.forward(&x, BnMode::Eval).unwrap();
        let (y, _) = s.forward(&x, BnMode::Train).unwrap();
        // with unclipped factors, train output equals moving-stat normalization
        let err = y.max_abs_diff(&y_eval).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn train_gradient_with_fixed_correction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::<f64>::random_uniform(&[3, 2, 2, 3], -1.0, 1.0, &mut rng);
        let s = {
            let mut s = state(3);
            s.gamma = Tensor::random_uniform(&[3], 0.5, 1.5, &mut rng);
            s.beta = Tensor::random_uniform(&[3], -0.5, 0.5, &mut rng);
            s
        };
        let r = vec![1.3, 0.7, 1.0];
        let d = vec![0.2, -0.4, 0.0];
        let w = Tensor::random_uniform(x.shape(), -1.0, 1.0, &mut rng);
        let (_, cache, _, _) = batch_norm_train_with_correction(&x, &s.params(), &s.settings, &r, &d).unwrap();
        let g = batch_norm_backward(&cache, &s.gamma, &w).unwrap();
        let num = numeric_gradient(&x, 1e-3, |xp| {
            let (y, ..) = batch_norm_train_with_correction(xp, &s.params(), &s.settings, &r, &d).unwrap();
            project(&y, &w)
        });
        assert!(tensor_relative_error(&g.input, &num, 1e-6) < 1e-6);
    }
}
