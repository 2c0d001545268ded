use std::collections::BTreeMap;

use crate::nn::ParamSet;
use crate::scalar::Scalar;

/// SGD with momentum and L2 weight decay; velocity buffers keyed by
/// parameter name.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: BTreeMap::new(),
        }
    }

    /// `v = m v + g + wd w; w -= lr v` for every parameter accepted by
    /// `trainable`. `grads` must share the structure of `params`.
    pub fn step<P: ParamSet<T>>(&mut self, params: &mut P, grads: &P, lr: f64, trainable: impl Fn(&str) -> bool) {
        let (m, wd, lr) = (T::lit(self.momentum), T::lit(self.weight_decay), T::lit(lr));
        let gs = grads.named_params("");
        for ((name, p), (gname, g)) in params.named_params_mut("").into_iter().zip(gs) {
            debug_assert_eq!(name, gname);
            if !trainable(&name) {
                continue;
            }
            let v = self
                .velocity
                .entry(name)
                .or_insert_with(|| vec![T::zero(); p.data.len()]);
            for ((w, &gv), vv) in p.data.iter_mut().zip(&g.data).zip(v.iter_mut()) {
                *vv = m * *vv + gv + wd * *w;
                *w -= lr * *vv;
            }
        }
    }
}

/// Global L2 norm over the trainable gradients.
pub fn grad_norm<T: Scalar, P: ParamSet<T>>(grads: &P, trainable: impl Fn(&str) -> bool) -> f64 {
    grads
        .named_params("")
        .into_iter()
        .filter(|(n, _)| trainable(n))
        .flat_map(|(_, t)| t.data.iter().map(|v| v.as_f64() * v.as_f64()).collect::<Vec<_>>())
        .sum::<f64>()
        .sqrt()
}

/// Scales every gradient tensor in place.
pub fn scale_grads<T: Scalar, P: ParamSet<T>>(grads: &mut P, s: T) {
    for (_, t) in grads.named_params_mut("") {
        t.scale(s);
    }
}

/// Adds `src` into `dst` tensor by tensor.
pub fn add_grads<T: Scalar, P: ParamSet<T>>(dst: &mut P, src: &P) {
    let s = src.named_params("");
    for ((_, d), (_, t)) in dst.named_params_mut("").into_iter().zip(s) {
        d.add_assign(t);
    }
}
