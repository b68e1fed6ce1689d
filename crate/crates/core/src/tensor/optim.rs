use super::{Tensor, TensorError};

/// Learnable tensor with its gradient slot and Adam moments.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor<f32>,
    pub grad: Option<Tensor<f32>>,
    pub adam_m: Tensor<f64>,
    pub adam_v: Tensor<f64>,
    pub step_count: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, tensor: Tensor<f32>) -> Self {
        let shape = tensor.shape().to_vec();
        Parameter {
            name: name.into(),
            tensor,
            grad: None,
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
            step_count: 0,
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensor.data().iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected update of every parameter, in slice order.
    /// Fails before touching anything if a gradient is missing.
    pub fn step(&self, params: &mut [Parameter]) -> Result<(), TensorError> {
        if let Some(p) = params.iter().find(|p| p.grad.is_none()) {
            return Err(TensorError::arg("adam_step", format!("missing gradient for {}", p.name)));
        }
        for p in params.iter_mut() {
            let grad = p.grad.as_ref().expect("checked above");
            if grad.shape() != p.tensor.shape() {
                return Err(TensorError::shape("adam_step", format!("{:?}", p.tensor.shape()), grad.shape()));
            }
            p.step_count += 1;
            let t = p.step_count;
            let (m, v) = (p.adam_m.data_mut(), p.adam_v.data_mut());
            for (i, (x, &g)) in p.tensor.data_mut().iter_mut().zip(grad.data()).enumerate() {
                let (delta, m_new, v_new) = adam_update(self, g as f64, m[i], v[i], t);
                m[i] = m_new;
                v[i] = v_new;
                *x = (*x as f64 + delta) as f32;
            }
        }
        Ok(())
    }
}

/// Scalar Adam recurrence at step `t` (1-based). Returns `(delta, m, v)`.
pub fn adam_update(cfg: &Adam, grad: f64, m: f64, v: f64, t: u64) -> (f64, f64, f64) {
    let m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    let v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
    let m_hat = m / (1.0 - cfg.beta1.powi(t as i32));
    let v_hat = v / (1.0 - cfg.beta2.powi(t as i32));
    (-cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps), m, v)
}
