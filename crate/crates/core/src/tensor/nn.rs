use super::{Real, Tensor, TensorError, Var};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchNormMode {
    Train,
    Eval,
}

pub struct BatchNormOutput<T: Real> {
    pub output: Var<T>,
    /// Per-channel `(mean, unbiased variance)` of the batch, train mode only.
    pub batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

impl<T: Real> BatchNormOutput<T> {
    /// Applies the momentum update to running statistics.
    pub fn update_running(&self, running_mean: &mut [f32], running_var: &mut [f32]) {
        if let Some((mean, var)) = &self.batch_stats {
            momentum_update(running_mean, mean);
            momentum_update(running_var, var);
        }
    }
}

/// `running <- (1 - momentum) * running + momentum * batch`
pub fn momentum_update(running: &mut [f32], batch: &[f64]) {
    for (r, &b) in running.iter_mut().zip(batch) {
        *r = ((1.0 - BN_MOMENTUM) * *r as f64 + BN_MOMENTUM * b) as f32;
    }
}

/// Per-channel normalization of `[B,C,H,W]` with affine `gamma`/`beta` of shape `[C]`.
pub fn batchnorm2d<T: Real>(
    x: &Var<T>,
    gamma: &Var<T>,
    beta: &Var<T>,
    running_mean: &[f32],
    running_var: &[f32],
    mode: BatchNormMode,
) -> Result<BatchNormOutput<T>, TensorError> {
    let [b, c, h, w] = x.value().dims4("batchnorm2d")?;
    for (name, len) in [
        ("gamma", gamma.value().numel()),
        ("beta", beta.value().numel()),
        ("running_mean", running_mean.len()),
        ("running_var", running_var.len()),
    ] {
        if len != c {
            return Err(TensorError::arg("batchnorm2d", format!("{name} has {len} entries for {c} channels")));
        }
    }
    let g = gamma.reshape(&[1, c, 1, 1])?;
    let bt = beta.reshape(&[1, c, 1, 1])?;
    match mode {
        BatchNormMode::Train => {
            let mean = x.mean_axes(&[0, 2, 3])?;
            let centered = x.sub(&mean)?;
            let var = centered.square().mean_axes(&[0, 2, 3])?;
            let xhat = centered.div(&var.add_scalar(BN_EPS).sqrt())?;
            let output = xhat.mul(&g)?.add(&bt)?;
            let n = (b * h * w) as f64;
            let correction = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
            let stats = (
                mean.value().to_f64_vec(),
                var.value().data().iter().map(|v| v.as_f64() * correction).collect(),
            );
            Ok(BatchNormOutput {
                output,
                batch_stats: Some(stats),
            })
        }
        BatchNormMode::Eval => {
            let shift = Var::constant(Tensor::from_parts(
                vec![1, c, 1, 1],
                running_mean.iter().map(|&m| T::from_f64(m as f64)).collect(),
            ));
            let inv_std = Var::constant(Tensor::from_parts(
                vec![1, c, 1, 1],
                running_var
                    .iter()
                    .map(|&v| T::from_f64(1.0 / (v as f64 + BN_EPS).sqrt()))
                    .collect(),
            ));
            let output = x.sub(&shift)?.mul(&inv_std)?.mul(&g)?.add(&bt)?;
            Ok(BatchNormOutput {
                output,
                batch_stats: None,
            })
        }
    }
}

/// Normalization over the last axis with affine parameters of that extent.
pub fn layer_norm<T: Real>(x: &Var<T>, gamma: &Var<T>, beta: &Var<T>) -> Result<Var<T>, TensorError> {
    let rank = x.shape().len();
    let c = x.shape()[rank - 1];
    if gamma.value().numel() != c || beta.value().numel() != c {
        return Err(TensorError::arg("layer_norm", format!("affine parameters must have {c} entries")));
    }
    let mut affine_shape = vec![1; rank];
    affine_shape[rank - 1] = c;
    let axis = [rank - 1];
    let centered = x.sub(&x.mean_axes(&axis)?)?;
    let var = centered.square().mean_axes(&axis)?;
    let xhat = centered.div(&var.add_scalar(LN_EPS).sqrt())?;
    xhat.mul(&gamma.reshape(&affine_shape)?)?.add(&beta.reshape(&affine_shape)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine(c: usize) -> (Var<f32>, Var<f32>) {
        (Var::param(Tensor::ones(&[c])), Var::param(Tensor::zeros(&[c])))
    }

    #[test]
    fn constant_channels_normalize_to_zero() {
        let x = Var::constant(Tensor::<f32>::from_fn(&[2, 3, 4, 4], |i| (i / 16 % 3) as f32 * 1.7 + 0.2));
        let (g, b) = affine(3);
        let out = batchnorm2d(&x, &g, &b, &[0.0; 3], &[1.0; 3], BatchNormMode::Train).unwrap();
        assert!(out.output.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn train_mode_standardizes() {
        // per-channel mean 5, std 2 via a deterministic symmetric pattern
        let x = Var::constant(Tensor::<f32>::from_fn(&[2, 2, 4, 4], |i| if i % 2 == 0 { 3.0 } else { 7.0 }));
        let (g, b) = affine(2);
        let out = batchnorm2d(&x, &g, &b, &[0.0; 2], &[1.0; 2], BatchNormMode::Train).unwrap();
        let y = out.output.value().to_f64_vec();
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-4);
        assert!((var - 1.0).abs() < 1e-3);

        let mut rm = vec![0.0f32; 2];
        let mut rv = vec![1.0f32; 2];
        out.update_running(&mut rm, &mut rv);
        assert!((rm[0] - 0.5).abs() < 1e-6);
        // unbiased batch variance 4 * 32/31
        let expect = 0.9 + 0.1 * 4.0 * 32.0 / 31.0;
        assert!((rv[0] as f64 - expect).abs() < 1e-6);
    }

    #[test]
    fn eval_with_unit_stats_is_near_identity() {
        let x = Var::constant(Tensor::<f32>::from_fn(&[1, 2, 3, 3], |i| i as f32 / 9.0 - 1.0));
        let (g, b) = affine(2);
        let out = batchnorm2d(&x, &g, &b, &[0.0; 2], &[1.0; 2], BatchNormMode::Eval).unwrap();
        let k = 1.0 / (1.0 + BN_EPS).sqrt();
        for (&y, &x) in out.output.value().data().iter().zip(x.value().data()) {
            assert!((y as f64 - x as f64 * k).abs() < 1e-6);
            assert!((y - x).abs() < 1e-5);
        }
        assert!(out.batch_stats.is_none());
    }

    #[test]
    fn channel_mismatch_is_error() {
        let x = Var::constant(Tensor::<f32>::zeros(&[1, 3, 2, 2]));
        let (g, b) = affine(2);
        assert!(batchnorm2d(&x, &g, &b, &[0.0; 3], &[1.0; 3], BatchNormMode::Train).is_err());
    }

    #[test]
    fn layer_norm_rows() {
        let x = Var::constant(Tensor::<f64>::new([2, 4], vec![1.0, 2.0, 3.0, 4.0, -1.0, -1.0, 1.0, 1.0]).unwrap());
        let g = Var::param(Tensor::ones(&[4]));
        let b = Var::param(Tensor::zeros(&[4]));
        let y = layer_norm(&x, &g, &b).unwrap();
        for row in y.value().data().chunks(4) {
            let m: f64 = row.iter().sum::<f64>() / 4.0;
            let v: f64 = row.iter().map(|r| (r - m).powi(2)).sum::<f64>() / 4.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-4);
        }
    }
}
