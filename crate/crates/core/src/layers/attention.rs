//! Squeeze-and-excitation style channel gating.
//!
//! `gate = sigmoid(fc2(relu(fc1(avg_pool(x)))))` is computed over the full
//! channel dimension of each sample and multiplies every spatial position.

use crate::error::{shape_err, Result};
use crate::tensor::{
    fully_connected, fully_connected_backward, global_avg_pool, global_avg_pool_backward, split_batch, Real,
    Tensor,
};

/// Width of the bottleneck between the two fully connected layers.
pub fn bottleneck_width(channels: usize, reduction: usize) -> usize {
    (channels / reduction.max(1)).max(1)
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionParams<'a, T: Real> {
    /// `[C, C/r]`
    pub w1: &'a Tensor<T>,
    pub b1: &'a Tensor<T>,
    /// `[C/r, C]`
    pub w2: &'a Tensor<T>,
    pub b2: &'a Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct AttentionCache<T: Real> {
    pooled: Tensor<T>,
    hidden_pre: Tensor<T>,
    hidden: Tensor<T>,
    /// `[N, C]` gate values in (0, 1).
    pub gate: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct AttentionGrads<T: Real> {
    pub input: Tensor<T>,
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// Forward over `[.., H, W, C]`; returns the gated tensor and its cache.
pub fn channel_attention<T: Real>(
    x: &Tensor<T>,
    p: &AttentionParams<'_, T>,
) -> Result<(Tensor<T>, AttentionCache<T>)> {
    let (_, inner) = split_batch(x.shape(), 3)?;
    let c = inner[2];
    if p.w1.shape().first() != Some(&c) || p.w2.shape().get(1) != Some(&c) {
        return Err(shape_err!(
            "attention weights {:?}/{:?} do not match {c} channels",
            p.w1.shape(),
            p.w2.shape()
        ));
    }
    let pooled = global_avg_pool(x)?;
    let hidden_pre = fully_connected(&pooled, p.w1, p.b1)?;
    let hidden = hidden_pre.map(|v| v.max(T::zero()));
    let gate = fully_connected(&hidden, p.w2, p.b2)?.map(sigmoid);
    let hw = inner[0] * inner[1];
    let mut y = x.clone();
    for (sample, g) in y.data_mut().chunks_mut(hw * c).zip(gate.data().chunks(c)) {
        for px in sample.chunks_mut(c) {
            for (v, &k) in px.iter_mut().zip(g) {
                *v *= k;
            }
        }
    }
    Ok((
        y,
        AttentionCache {
            pooled,
            hidden_pre,
            hidden,
            gate,
        },
    ))
}

pub fn channel_attention_backward<T: Real>(
    x: &Tensor<T>,
    p: &AttentionParams<'_, T>,
    cache: &AttentionCache<T>,
    grad_out: &Tensor<T>,
) -> Result<AttentionGrads<T>> {
    grad_out.expect_shape(x.shape())?;
    let (_, inner) = split_batch(x.shape(), 3)?;
    let (hw, c) = (inner[0] * inner[1], inner[2]);
    let gate = cache.gate.data();
    let mut g_gate = vec![T::zero(); cache.gate.len()];
    let mut gx = grad_out.clone();
    for (n, (gs, xs)) in gx
        .data_mut()
        .chunks_mut(hw * c)
        .zip(x.data().chunks(hw * c))
        .enumerate()
    {
        let gg = &mut g_gate[n * c..(n + 1) * c];
        let k = &gate[n * c..(n + 1) * c];
        for (gpx, xpx) in gs.chunks_mut(c).zip(xs.chunks(c)) {
            for ch in 0..c {
                gg[ch] += gpx[ch] * xpx[ch];
                gpx[ch] *= k[ch];
            }
        }
    }
    let g_z2 = Tensor::from_fn(cache.gate.shape(), |i| g_gate[i] * gate[i] * (T::one() - gate[i]));
    let fc2 = fully_connected_backward(&cache.hidden, p.w2, &g_z2)?;
    let g_hpre = fc2
        .input
        .zip_map(&cache.hidden_pre, |g, h| if h > T::zero() { g } else { T::zero() })?;
    let fc1 = fully_connected_backward(&cache.pooled, p.w1, &g_hpre)?;
    let g_pool = global_avg_pool_backward(x.shape(), &fc1.input)?;
    gx.add_assign(&g_pool)?;
    Ok(AttentionGrads {
        input: gx,
        w1: fc1.weights,
        b1: fc1.bias,
        w2: fc2.weights,
        b2: fc2.bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Owned {
        w1: Tensor<f64>,
        b1: Tensor<f64>,
        w2: Tensor<f64>,
        b2: Tensor<f64>,
    }

    impl Owned {
        fn random(c: usize, r: usize, rng: &mut ChaCha8Rng) -> Self {
            let h = bottleneck_width(c, r);
            Owned {
                w1: Tensor::random_uniform(&[c, h], -1.0, 1.0, rng),
                b1: Tensor::random_uniform(&[h], -0.5, 0.5, rng),
                w2: Tensor::random_uniform(&[h, c], -1.0, 1.0, rng),
                b2: Tensor::random_uniform(&[c], -0.5, 0.5, rng),
            }
        }
        fn view(&self) -> AttentionParams<'_, f64> {
            AttentionParams {
                w1: &self.w1,
                b1: &self.b1,
                w2: &self.w2,
                b2: &self.b2,
            }
        }
    }

    #[test]
    fn zero_weights_halve_every_channel() {
        let c = 8;
        let z = Owned {
            w1: Tensor::zeros(&[c, 2]),
            b1: Tensor::zeros(&[2]),
            w2: Tensor::zeros(&[2, c]),
            b2: Tensor::zeros(&[c]),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::random_uniform(&[3, 3, c], -4.0, 4.0, &mut rng);
        let (y, _) = channel_attention(&x, &z.view()).unwrap();
        assert_eq!(y, x.scale(0.5));
    }

    #[test]
    fn bottleneck_sizes() {
        assert_eq!(bottleneck_width(192, 32), 6);
        assert_eq!(bottleneck_width(256, 32), 8);
        assert_eq!(bottleneck_width(16, 32), 1);
    }

    #[test]
    fn gates_never_amplify() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = Owned::random(6, 2, &mut rng);
        let x = Tensor::random_uniform(&[2, 4, 4, 6], -3.0, 3.0, &mut rng);
        let (y, cache) = channel_attention(&x, &p.view()).unwrap();
        assert!(cache.gate.data().iter().all(|&g| g > 0.0 && g < 1.0));
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!(a.abs() <= b.abs());
        }
    }

    #[test]
    fn spatial_permutation_commutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = Owned::random(4, 2, &mut rng);
        let x = Tensor::random_uniform(&[3, 2, 4], -1.0, 1.0, &mut rng);
        // swap pixel (0,0) with (2,1)
        let mut xp = x.clone();
        for ch in 0..4 {
            xp.set(&[0, 0, ch], x.at(&[2, 1, ch]));
            xp.set(&[2, 1, ch], x.at(&[0, 0, ch]));
        }
        let (y, cy) = channel_attention(&x, &p.view()).unwrap();
        let (yp, cp) = channel_attention(&xp, &p.view()).unwrap();
        assert!(cy.gate.max_abs_diff(&cp.gate).unwrap() < 1e-12);
        for ch in 0..4 {
            assert!((yp.at(&[0, 0, ch]) - y.at(&[2, 1, ch])).abs() < 1e-12);
        }
    }
}
