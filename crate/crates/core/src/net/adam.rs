use super::params::{ParamId, ParamStore};
use super::tape::Gradients;
use super::tensor::Tensor;
use super::{NetConfig, NetError};

/// First and second moment estimates plus the number of steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|(_, _, t)| Tensor::new(t.shape.clone(), vec![0.0; t.len()]))
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One Adam update with the scheduled learning rate for `state.step`.
pub fn adam_step(
    store: &mut ParamStore,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &NetConfig,
) -> Result<(), NetError> {
    if grads.grads.len() != store.len() || state.m.len() != store.len() {
        return Err(NetError::ShapeMismatch("parameter count".into()));
    }
    for (i, g) in grads.grads.iter().enumerate() {
        if let Some(g) = g {
            if g.shape != store.get(ParamId(i)).shape {
                return Err(NetError::ShapeMismatch(store.name(ParamId(i)).to_string()));
            }
        }
    }
    let lr = cfg.lr(state.step);
    let t = (state.step + 1) as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..store.len() {
        let id = ParamId(i);
        let w = store.get_mut(id);
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let g = grads.grads[i].as_ref();
        for k in 0..w.len() {
            let mut gk = g.map_or(0.0, |g| g.data[k]);
            if cfg.weight_decay != 0.0 {
                gk += cfg.weight_decay * w.data[k];
            }
            m.data[k] = cfg.beta1 * m.data[k] + (1.0 - cfg.beta1) * gk;
            v.data[k] = cfg.beta2 * v.data[k] + (1.0 - cfg.beta2) * gk * gk;
            let mhat = m.data[k] / c1;
            let vhat = v.data[k] / c2;
            w.data[k] -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    state.step += 1;
    Ok(())
}
