use super::matrix::Matrix;
use super::mlp::Mlp;
use crate::error::{ensure, Error, Result};
use crate::scalar::Scalar;

/// Compares backprop gradients against central differences.
///
/// `loss_fn` maps network outputs to `(loss, d loss / d outputs)`. Returns
/// the maximum over parameters of `|a - fd| / (|a| + |fd| + 1e-12)`.
pub fn grad_check<T, F>(mlp: &Mlp<T>, mut loss_fn: F, inputs: &Matrix<T>, h: T) -> Result<T>
where
    T: Scalar,
    F: FnMut(&Matrix<T>) -> Result<(T, Matrix<T>)>,
{
    ensure!(
        h > T::zero() && h <= T::lit(1e-2),
        Domain,
        "finite-difference step must lie in (0, 1e-2], got {h}"
    );
    let (outputs, cache) = mlp.forward(inputs)?;
    let (loss, dout) = loss_fn(&outputs)?;
    ensure!(loss.is_finite(), Numeric, "loss is not finite");
    let analytic = mlp.backward(&cache, &dout)?.flat();

    let mut probe = mlp.clone();
    let mut eval = |net: &Mlp<T>| -> Result<T> {
        let out = net.predict(inputs)?;
        let (l, _) = loss_fn(&out)?;
        if l.is_finite() {
            Ok(l)
        } else {
            Err(Error::Numeric("loss is not finite under perturbation".into()))
        }
    };
    let two = T::lit(2.0);
    let floor = T::lit(1e-12);
    let mut worst = T::zero();
    for (i, &a) in analytic.iter().enumerate() {
        let orig = mlp.param(i);
        probe.set_param(i, orig + h);
        let plus = eval(&probe)?;
        probe.set_param(i, orig - h);
        let minus = eval(&probe)?;
        probe.set_param(i, orig);
        let fd = (plus - minus) / (two * h);
        let rel = (a - fd).abs() / (a.abs() + fd.abs() + floor);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Layer, MlpConfig, OutputActivation};

    fn half_sum_squares(out: &Matrix<f64>) -> Result<(f64, Matrix<f64>)> {
        let l = 0.5 * out.as_slice().iter().map(|v| v * v).sum::<f64>();
        Ok((l, out.clone()))
    }

    #[test]
    fn quadratic_loss_on_linear_layer_is_exact() {
        let w = Matrix::from_rows(&[vec![0.3, -0.8], vec![1.1, 0.4]]).unwrap();
        let m = Mlp::from_layers(vec![Layer { weight: w, bias: vec![0.05, -0.1] }], OutputActivation::Identity)
            .unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.25], vec![0.0, 3.0]]).unwrap();
        let err = grad_check(&m, half_sum_squares, &x, 1e-5).unwrap();
        assert!(err <= 1e-8, "err = {err}");
    }

    #[test]
    fn two_hidden_layer_relu_net_with_smooth_head() {
        for (seed, act) in [(1, OutputActivation::Identity), (2, OutputActivation::Softplus), (3, OutputActivation::Sigmoid)]
        {
            let m = Mlp::<f64>::new(&MlpConfig::new(3, vec![7, 5], 2).with_output(act).with_seed(seed)).unwrap();
            let x = Matrix::from_fn(6, 3, |r, c| ((r * 5 + c * 3) % 7) as f64 * 0.37 - 1.1);
            let loss = |out: &Matrix<f64>| -> Result<(f64, Matrix<f64>)> {
                // sum(sin(o) + o^2 / 3)
                let l = out.as_slice().iter().map(|o| o.sin() + o * o / 3.0).sum();
                Ok((l, out.map(|o| o.cos() + 2.0 * o / 3.0)))
            };
            let err = grad_check(&m, loss, &x, 1e-5).unwrap();
            assert!(err <= 1e-4, "seed {seed}: err = {err}");
        }
    }

    #[test]
    fn step_outside_range_rejected() {
        let m = Mlp::<f64>::new(&MlpConfig::new(2, vec![2], 1)).unwrap();
        let x = Matrix::zeros(1, 2);
        assert!(matches!(grad_check(&m, half_sum_squares, &x, 0.0), Err(Error::Domain(_))));
        assert!(matches!(grad_check(&m, half_sum_squares, &x, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn non_finite_loss_reported() {
        let m = Mlp::<f64>::new(&MlpConfig::new(2, vec![2], 1)).unwrap();
        let x = Matrix::zeros(1, 2);
        let bad = |out: &Matrix<f64>| -> Result<(f64, Matrix<f64>)> { Ok((f64::NAN, out.clone())) };
        assert!(matches!(grad_check(&m, bad, &x, 1e-5), Err(Error::Numeric(_))));
    }
}
