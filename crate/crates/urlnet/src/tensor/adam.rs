//! Adam optimizer with bias correction.

use super::{lit, Scalar, Tensor, TensorError};

/// Per-parameter first/second moment state plus hyperparameters.
/// Defaults: `lr = 1e-3`, `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
pub struct Adam<T: Scalar> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    moments: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: T, params: &[Tensor<T>]) -> Self {
        let moments = params
            .iter()
            .map(|p| (vec![T::zero(); p.numel()], vec![T::zero(); p.numel()]))
            .collect();
        Adam {
            lr,
            beta1: lit(0.9),
            beta2: lit(0.999),
            eps: lit(1e-8),
            step: 0,
            moments,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update from the gradients currently stored on
    /// `params`, which must be the same tensors (same order) the state was
    /// built for. Parameters without an accumulated gradient are untouched.
    pub fn step(&mut self, params: &[Tensor<T>]) -> Result<(), TensorError> {
        if params.len() != self.moments.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                detail: format!(
                    "{} params but state holds {}",
                    params.len(),
                    self.moments.len()
                ),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let corr1 = T::one() - self.beta1.powi(t);
        let corr2 = T::one() - self.beta2.powi(t);
        for (param, (m, v)) in params.iter().zip(self.moments.iter_mut()) {
            if param.numel() != m.len() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    detail: format!(
                        "param has {} elements, moment slot has {}",
                        param.numel(),
                        m.len()
                    ),
                });
            }
            let Some(grad) = param.grad_snapshot() else {
                continue;
            };
            if !grad.iter().all(|g| g.is_finite()) {
                return Err(TensorError::NonFinite { op: "adam_step" });
            }
            param.map_data_mut(|data| {
                for i in 0..data.len() {
                    let g = grad[i];
                    m[i] = self.beta1 * m[i] + (T::one() - self.beta1) * g;
                    v[i] = self.beta2 * v[i] + (T::one() - self.beta2) * g * g;
                    let m_hat = m[i] / corr1;
                    let v_hat = v[i] / corr2;
                    data[i] = data[i] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            });
            param.assert_finite("adam_step")?;
        }
        Ok(())
    }
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
pub fn clip_grad_norm<T: Scalar>(params: &[Tensor<T>], max_norm: T) {
    let mut total = T::zero();
    for p in params {
        if let Some(g) = p.grad_snapshot() {
            for v in g {
                total = total + v * v;
            }
        }
    }
    let norm = total.sqrt();
    if norm > max_norm && norm > T::zero() {
        let scale = max_norm / norm;
        for p in params {
            if p.has_grad() {
                p.with_grad(|g| {
                    for v in g.iter_mut() {
                        *v = *v * scale;
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let p = Tensor::<f64>::param(vec![3], vec![1.0, -2.0, 3.0]).unwrap();
        let mut opt = Adam::new(1e-3, std::slice::from_ref(&p));
        p.accumulate_grad(&[0.0, 0.0, 0.0]);
        opt.step(std::slice::from_ref(&p)).unwrap();
        assert_eq!(p.to_vec(), vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_is_bias_corrected_learning_rate() {
        // With g = 1 the corrected moments are both exactly 1, so the first
        // update is -lr / (1 + eps).
        let p = Tensor::<f64>::param(vec![1], vec![0.5]).unwrap();
        let mut opt = Adam::new(1e-3, std::slice::from_ref(&p));
        p.accumulate_grad(&[1.0]);
        opt.step(std::slice::from_ref(&p)).unwrap();
        let delta = p.item() - 0.5;
        assert!((delta + 1e-3).abs() < 1e-9, "delta = {delta}");
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn converges_on_scalar_quadratic() {
        // f(w) = (w - 5)^2, analytic gradient 2(w - 5).
        let w = Tensor::<f64>::param(vec![1], vec![0.0]).unwrap();
        let mut opt = Adam::new(0.1, std::slice::from_ref(&w));
        for _ in 0..200 {
            w.zero_grad();
            w.accumulate_grad(&[2.0 * (w.item() - 5.0)]);
            opt.step(std::slice::from_ref(&w)).unwrap();
        }
        assert!((w.item() - 5.0).abs() < 0.1, "w = {}", w.item());
    }

    #[test]
    fn untouched_param_is_skipped() {
        let p = Tensor::<f64>::param(vec![2], vec![1.0, 1.0]).unwrap();
        let mut opt = Adam::new(0.5, std::slice::from_ref(&p));
        opt.step(std::slice::from_ref(&p)).unwrap();
        assert_eq!(p.to_vec(), vec![1.0, 1.0]);
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        let p = Tensor::<f64>::param(vec![2], vec![0.0, 0.0]).unwrap();
        p.accumulate_grad(&[3.0, 4.0]);
        clip_grad_norm(std::slice::from_ref(&p), 1.0);
        let g = p.grad();
        let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!((g[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let p = Tensor::<f64>::param(vec![1], vec![0.0]).unwrap();
        let mut opt = Adam::new(0.1, std::slice::from_ref(&p));
        p.accumulate_grad(&[f64::NAN]);
        assert!(opt.step(std::slice::from_ref(&p)).is_err());
    }
}
