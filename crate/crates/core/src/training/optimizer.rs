use crate::error::{shape_err, Result};
use crate::model::{ParamGrads, ParamKind, ParamStore};
use crate::tensor::{Real, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Adam moments, one pair per stored tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T: Real = f32> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || params.entries().iter().map(|e| Tensor::zeros(e.value.shape())).collect();
        OptimizerState {
            m: zeros(),
            v: zeros(),
            step: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
        }
    }

    fn check(&self, params: &ParamStore<T>, grads: &ParamGrads<T>) -> Result<()> {
        let n = params.len();
        if self.m.len() != n || self.v.len() != n || grads.tensors().len() != n {
            return Err(shape_err!(
                "optimizer has {} moment tensors and {} gradients for {n} parameters",
                self.m.len(),
                grads.tensors().len()
            ));
        }
        for (i, e) in params.entries().iter().enumerate() {
            let s = e.value.shape();
            if self.m[i].shape() != s || self.v[i].shape() != s || grads.tensors()[i].shape() != s {
                return Err(shape_err!("optimizer state for {} does not match shape {s:?}", e.name));
            }
        }
        Ok(())
    }
}

/// One bias-corrected Adam update. Moving statistics are never updated;
/// batch-norm `gamma`/`beta` are skipped when `bn_frozen` is set.
pub fn adam_step<T: Real>(
    params: &mut ParamStore<T>,
    grads: &ParamGrads<T>,
    opt: &mut OptimizerState<T>,
    lr: f64,
    bn_frozen: bool,
) -> Result<()> {
    opt.check(params, grads)?;
    opt.step += 1;
    let t = opt.step as i32;
    let (b1, b2) = (opt.beta1, opt.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for id in params.ids().collect::<Vec<_>>() {
        let kind = params.entry(id).kind;
        if kind == ParamKind::Statistic || (bn_frozen && kind == ParamKind::BatchNorm) {
            continue;
        }
        let i = id.index();
        let g = grads.get(id).data();
        let m = opt.m[i].data_mut();
        let v = opt.v[i].data_mut();
        let p = params.get_mut(id).data_mut();
        for k in 0..p.len() {
            let gk = g[k].as_f64();
            let mk = b1 * m[k].as_f64() + (1.0 - b1) * gk;
            let vk = b2 * v[k].as_f64() + (1.0 - b2) * gk * gk;
            m[k] = T::lit(mk);
            v[k] = T::lit(vk);
            let update = lr * (mk / c1) / ((vk / c2).sqrt() + opt.epsilon);
            p[k] = T::lit(p[k].as_f64() - update);
        }
    }
    Ok(())
}
