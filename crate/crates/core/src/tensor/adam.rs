use super::{ParamSet, Scalar};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Adam hyper-parameters. Defaults: lr 2e-4, betas (0.5, 0.999).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.0002, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment buffers for every parameter of one [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Scalar> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> Self {
        let zeros = |p: &super::NamedParam<T>| vec![T::zero(); p.tensor.numel()];
        Self { config, step: 0, m: params.iter().map(zeros).collect(), v: params.iter().map(zeros).collect() }
    }
}

/// One bias-corrected Adam update. Clears every gradient afterwards.
pub fn adam_step<T: Scalar>(params: &mut ParamSet<T>, state: &mut AdamState<T>) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::InvalidShape(format!(
            "optimizer tracks {} parameters, set has {}",
            state.m.len(),
            params.len()
        )));
    }
    if let Some(p) = params.iter().find(|p| p.tensor.grad.is_none()) {
        return Err(Error::MissingGradient(p.name.clone()));
    }
    state.step += 1;
    let cfg = state.config;
    let t = state.step as i32;
    let b1 = T::from_f64_lossy(cfg.beta1);
    let b2 = T::from_f64_lossy(cfg.beta2);
    let one = T::one();
    let bc1 = T::from_f64_lossy(1.0 - cfg.beta1.powi(t));
    let bc2 = T::from_f64_lossy(1.0 - cfg.beta2.powi(t));
    let lr = T::from_f64_lossy(cfg.lr);
    let eps = T::from_f64_lossy(cfg.eps);

    for ((param, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let grad = param.tensor.grad.take().expect("checked above");
        if m.len() != grad.len() {
            return Err(Error::InvalidShape(format!("moment buffer mismatch for `{}`", param.name)));
        }
        for (((w, g), mi), vi) in param.tensor.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (one - b1) * *g;
            *vi = b2 * *vi + (one - b2) * *g * *g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn single(value: f64, grad: Option<f64>) -> ParamSet<f64> {
        let mut ps = ParamSet::new();
        ps.push("p", Tensor::new(vec![1], vec![value]).unwrap()).unwrap();
        ps.iter_mut().next().unwrap().tensor.grad = grad.map(|g| vec![g]);
        ps
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = v_hat = 1 after bias correction, so the step is lr / (1 + eps).
        let mut ps = single(0.0, Some(1.0));
        let mut st = AdamState::new(&ps, AdamConfig::default());
        adam_step(&mut ps, &mut st).unwrap();
        let p = ps.get("p").unwrap().data()[0];
        assert!((p + 0.0002 / (1.0 + 1e-8)).abs() < 1e-15, "{p}");
        assert_eq!(st.step, 1);
        assert!(ps.get("p").unwrap().grad.is_none());
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut ps = single(0.75, Some(0.0));
        let mut st = AdamState::new(&ps, AdamConfig::default());
        adam_step(&mut ps, &mut st).unwrap();
        assert_eq!(ps.get("p").unwrap().data()[0], 0.75);
    }

    #[test]
    fn missing_gradient_is_reported() {
        let mut ps = single(0.0, None);
        let mut st = AdamState::new(&ps, AdamConfig::default());
        assert!(matches!(adam_step(&mut ps, &mut st), Err(Error::MissingGradient(n)) if n == "p"));
        assert_eq!(st.step, 0);
    }

    #[test]
    fn defaults_match_training_setup() {
        let c = AdamConfig::default();
        assert_eq!((c.lr, c.beta1, c.beta2), (0.0002, 0.5, 0.999));
    }
}
