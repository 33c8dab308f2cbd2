use super::Parameters;
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for every parameter tensor, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: Parameters,
    pub second_moment: Parameters,
}

impl AdamState {
    /// Zeroed moments shaped like `params`, step count 0.
    pub fn fresh(params: &Parameters) -> Self {
        Self {
            step: 0,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
        }
    }

    /// One bias-corrected Adam update of every tensor.
    pub fn step(
        &mut self,
        params: &mut Parameters,
        grads: &Parameters,
        lr: f64,
        cfg: &AdamConfig,
    ) -> Result<()> {
        self.step += 1;
        let step = self.step;
        let grads = grads.tensors();
        let m = self.first_moment.tensors_mut();
        let v = self.second_moment.tensors_mut();
        let p = params.tensors_mut();
        if grads.len() != p.len() || m.len() != p.len() || v.len() != p.len() {
            return Err(shape_err("optimizer state and parameters differ in tensor count"));
        }
        for (((pt, gt), mt), vt) in p.into_iter().zip(grads).zip(m).zip(v) {
            if pt.1.shape() != gt.1.shape() || pt.1.shape() != mt.1.shape() || pt.1.shape() != vt.1.shape() {
                return Err(shape_err(format!("{} differs in shape from its gradient or moments", pt.0)));
            }
            adam_update(
                pt.1.data_mut(),
                gt.1.data(),
                mt.1.data_mut(),
                vt.1.data_mut(),
                step,
                lr,
                cfg,
            );
        }
        Ok(())
    }
}

/// Element-wise Adam with bias correction; `step` is 1 on the first update.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
    cfg: &AdamConfig,
) {
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}
