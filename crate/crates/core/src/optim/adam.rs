//! Adam with bias correction.

use crate::arch::ParamStore;
use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;
use alloc::format;
use alloc::vec::Vec;

/// Optimiser state: first and second moment accumulators per parameter
/// tensor, a shared step counter, and the hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    /// Fresh state with zero moments, shaped after `params`.
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    /// Rebuilds a state from checkpointed pieces, validating shapes against
    /// `params`.
    pub fn restore(
        params: &ParamStore,
        lr: f64,
        step: u64,
        m: Vec<Tensor>,
        v: Vec<Tensor>,
    ) -> Result<Self> {
        if m.len() != params.len() || v.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimiser state has {}/{} moment tensors for {} parameters",
                m.len(),
                v.len(),
                params.len()
            )));
        }
        for (i, t) in params.tensors().iter().enumerate() {
            if m[i].shape() != t.shape() || v[i].shape() != t.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "optimiser moment {i} does not match parameter shape {:?}",
                    t.shape()
                )));
            }
        }
        Ok(AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step,
            m,
            v,
        })
    }
}

/// One bias-corrected Adam update over all parameters.
///
/// `grads` must be index-aligned with the store. Non-finite gradients are
/// rejected so training halts instead of silently corrupting parameters.
pub fn adam_step(params: &mut ParamStore, grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != params.tensor(i).shape() {
            return Err(Error::ShapeMismatch(format!(
                "gradient {i} has shape {:?}, parameter has {:?}",
                g.shape(),
                params.tensor(i).shape()
            )));
        }
        if !g.all_finite() {
            return Err(Error::NonFinite(format!(
                "gradient for parameter {:?} is not finite",
                params.names()[i]
            )));
        }
    }

    state.step += 1;
    let t = state.step;
    let bc1 = 1.0 - math::powi(state.beta1, t as u32);
    let bc2 = 1.0 - math::powi(state.beta2, t as u32);
    for (i, g) in grads.iter().enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params.tensor_mut(i).data_mut();
        for ((mj, vj), (pj, gj)) in m.iter_mut().zip(v.iter_mut()).zip(p.iter_mut().zip(g.data())) {
            *mj = state.beta1 * *mj + (1.0 - state.beta1) * gj;
            *vj = state.beta2 * *vj + (1.0 - state.beta2) * gj * gj;
            let m_hat = *mj / bc1;
            let v_hat = *vj / bc2;
            *pj -= state.lr * m_hat / (math::sqrt(v_hat) + state.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_covidnet, ArchConfig};
    use alloc::vec;

    fn scalar_store() -> (ParamStore, AdamState) {
        // smallest graph with one parameterised node is overkill here; a
        // synthetic single-tensor store is enough for the update math.
        let g = build_covidnet(&ArchConfig {
            input_size: 8,
            widths: vec![4],
            blocks_per_stage: 1,
            stem_kernel: 3,
            stem_stride: 1,
            stem_pool: false,
            head_hidden: 4,
            ..ArchConfig::default()
        })
        .unwrap();
        let p = ParamStore::init(&g, 0).unwrap();
        let s = AdamState::new(&p, 0.1);
        (p, s)
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let (mut p, mut s) = scalar_store();
        let before = p.clone();
        let zeros: Vec<Tensor> = p.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        for _ in 0..5 {
            adam_step(&mut p, &zeros, &mut s).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(s.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_roughly_lr() {
        let (mut p, mut s) = scalar_store();
        s.lr = 0.1;
        let before = p.tensor(0).data()[0];
        let grads: Vec<Tensor> = p
            .tensors()
            .iter()
            .map(|t| Tensor::filled(t.shape(), 1.0))
            .collect();
        adam_step(&mut p, &grads, &mut s).unwrap();
        // bias-corrected first update with constant unit gradient is
        // lr * 1 / (1 + eps)
        let moved = before - p.tensor(0).data()[0];
        assert!((moved - 0.1).abs() < 1e-8, "moved {moved}");
    }

    #[test]
    fn quadratic_descent_converges() {
        // minimise f(x) = x^2 from x = 5 with plain Adam on one scalar
        let mut x = 5.0f64;
        let mut m = 0.0;
        let mut v = 0.0;
        let (lr, b1, b2, eps) = (0.05, 0.9, 0.999, 1e-8);
        for t in 1..=500u32 {
            let g = 2.0 * x;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - math::powi(b1, t));
            let v_hat = v / (1.0 - math::powi(b2, t));
            x -= lr * m_hat / (math::sqrt(v_hat) + eps);
        }
        assert!(x.abs() < 0.05, "x = {x}");
    }

    #[test]
    fn nan_gradient_is_rejected() {
        let (mut p, mut s) = scalar_store();
        let mut grads: Vec<Tensor> = p.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        grads[0].data_mut()[0] = f64::NAN;
        let err = adam_step(&mut p, &grads, &mut s).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn restore_round_trips() {
        let (mut p, mut s) = scalar_store();
        let grads: Vec<Tensor> = p
            .tensors()
            .iter()
            .map(|t| Tensor::filled(t.shape(), 0.25))
            .collect();
        adam_step(&mut p, &grads, &mut s).unwrap();
        let restored = AdamState::restore(
            &p,
            s.lr,
            s.step_count(),
            s.first_moments().to_vec(),
            s.second_moments().to_vec(),
        )
        .unwrap();
        assert_eq!(restored, s);
    }
}
