use super::mlp::{Gradients, Mlp};
use crate::error::{ensure, Result};
use crate::scalar::Scalar;

/// Bias-corrected Adam state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    first_moments: Vec<Vec<T>>,
    second_moments: Vec<Vec<T>>,
    step_count: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(mlp: &Mlp<T>, lr: T, beta1: T, beta2: T) -> Self {
        // One buffer per layer: weights then bias, flattened.
        let sizes: Vec<usize> = mlp.layers().iter().map(|l| l.weight.as_slice().len() + l.bias.len()).collect();
        Self {
            first_moments: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second_moments: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            step_count: 0,
            lr,
            beta1,
            beta2,
            epsilon: T::lit(1e-8),
        }
    }

    /// Adam with the 5e-4 / 0.9 / 0.999 setting used throughout the experiments.
    pub fn with_defaults(mlp: &Mlp<T>) -> Self {
        Self::new(mlp, T::lit(5e-4), T::lit(0.9), T::lit(0.999))
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one descent step `theta -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, mlp: &mut Mlp<T>, grads: &Gradients<T>) -> Result<()> {
        ensure!(grads.layers.len() == self.first_moments.len(), Shape, "gradient layer count mismatch");
        for (li, (g, m)) in grads.layers.iter().zip(&self.first_moments).enumerate() {
            let want = mlp.layers()[li].weight.shape();
            ensure!(
                g.weight.shape() == want && g.weight.as_slice().len() + g.bias.len() == m.len(),
                Shape,
                "gradient for layer {li} has shape {:?}, expected {:?}",
                g.weight.shape(),
                want
            );
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.epsilon);
        for (li, layer) in mlp.layers_mut().iter_mut().enumerate() {
            let g = &grads.layers[li];
            let grad_iter = g.weight.as_slice().iter().chain(&g.bias);
            let (w, b) = (layer.weight.as_mut_slice(), &mut layer.bias);
            let params = w.iter_mut().chain(b.iter_mut());
            let m = &mut self.first_moments[li];
            let v = &mut self.second_moments[li];
            for (((p, &gi), mi), vi) in params.zip(grad_iter).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step<T: Scalar>(mlp: &mut Mlp<T>, grads: &Gradients<T>, state: &mut AdamState<T>) -> Result<()> {
    state.step(mlp, grads)
}
