//! Simplified neural joint-entropy estimator (small `d` only).
//!
//! MI is written as `H(X) - H(X | Y)` with both entropies expanded by the
//! chain rule over coordinates. Each conditional entropy term is the
//! cross-entropy of a classifier predicting the quantized `X_m` from the
//! preceding coordinates (and `Y` for the conditional chain), giving `2d - 1`
//! classifiers in total: `H(X_1)` itself is the plug-in entropy of its labels.
//!
//! Targets are quantized per batch into `N - 1` empirical-quantile bins.

use super::objectives::Objective;
use crate::error::{ensure, Result};
use crate::nn::{AdamState, Matrix, Mlp, MlpConfig};
use crate::sampling::Batch;
use crate::scalar::Scalar;

/// Largest dimension accepted (each extra coordinate adds two classifiers).
pub const NJEE_MAX_DIM: usize = 10;

/// Quantile bin of every entry: `floor(rank * bins / n)`, ties broken by
/// position.
pub fn quantize_column<T: Scalar>(values: &[T], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut labels = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = rank * bins / n;
    }
    labels
}

/// Empirical entropy (nats) of a label sample.
pub fn plug_in_entropy(labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    let mut sorted = labels.to_vec();
    sorted.sort_unstable();
    sorted
        .chunk_by(|a, b| a == b)
        .map(|run| {
            let p = run.len() as f64 / n;
            -p * p.ln()
        })
        .sum()
}

#[derive(Debug, Clone)]
struct Classifier<T> {
    net: Mlp<T>,
    opt: AdamState<T>,
}

impl<T: Scalar> Classifier<T> {
    /// Cross-entropy on `inputs` before the update, then one Adam step.
    fn step(&mut self, inputs: &Matrix<T>, labels: &[usize]) -> Result<T> {
        let (logits, cache) = self.net.forward(inputs)?;
        let (n, c) = logits.shape();
        let nf = T::from_usize(n).expect("count");
        let mut grad = Matrix::zeros(n, c);
        let mut ce = T::zero();
        for r in 0..n {
            let row = logits.row(r);
            let lse = crate::scalar::log_sum_exp(row);
            ce += lse - row[labels[r]];
            for (k, &z) in row.iter().enumerate() {
                grad[(r, k)] = (z - lse).exp() / nf;
            }
            grad[(r, labels[r])] -= T::one() / nf;
        }
        let ce = ce / nf;
        ensure!(ce.is_finite(), Numeric, "classifier cross-entropy is not finite");
        let g = self.net.backward(&cache, &grad)?;
        self.opt.step(&mut self.net, &g)?;
        Ok(ce)
    }
}

#[derive(Debug, Clone)]
pub struct Njee<T> {
    d: usize,
    batch_size: usize,
    /// `G(X_m | X^{m-1})` for `m = 2..=d`.
    unconditional: Vec<Classifier<T>>,
    /// `G(X_m | Y, X^{m-1})` for `m = 1..=d`.
    conditional: Vec<Classifier<T>>,
}

impl<T: Scalar> Njee<T> {
    pub fn new(
        d: usize,
        batch_size: usize,
        hidden_dims: &[usize],
        (lr, beta1, beta2): (f64, f64, f64),
        seed: u64,
    ) -> Result<Self> {
        ensure!(d >= 1, Config, "dimension must be >= 1");
        ensure!(d <= NJEE_MAX_DIM, Resource, "NJEE limited to d <= {NJEE_MAX_DIM}, got {d}");
        ensure!(batch_size >= 3, Config, "NJEE needs N >= 3 for N - 1 >= 2 classes");
        let classes = batch_size - 1;
        let make = |input: usize, k: u64| -> Result<Classifier<T>> {
            let net = Mlp::new(
                &MlpConfig::new(input, hidden_dims.to_vec(), classes).with_seed(seed.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15))),
            )?;
            let opt = AdamState::new(&net, T::lit(lr), T::lit(beta1), T::lit(beta2));
            Ok(Classifier { net, opt })
        };
        let unconditional = (2..=d).map(|m| make(m - 1, m as u64)).collect::<Result<_>>()?;
        let conditional = (1..=d).map(|m| make(d + m - 1, 100 + m as u64)).collect::<Result<_>>()?;
        Ok(Self { d, batch_size, unconditional, conditional })
    }

    pub fn classifier_count(&self) -> usize {
        self.unconditional.len() + self.conditional.len()
    }

    /// Trains every classifier once on `batch`. The returned objective's
    /// value is the summed cross-entropy and its estimate the MI computed
    /// from the pre-update cross-entropies; it carries no score gradients.
    pub fn step(&mut self, batch: &Batch<T>) -> Result<Objective<T>> {
        ensure!(
            batch.xs.cols() == self.d && batch.ys.cols() == self.d,
            Shape,
            "NJEE built for d = {}, batch has {}",
            self.d,
            batch.xs.cols()
        );
        ensure!(batch.len() == self.batch_size, Shape, "NJEE built for N = {}, got {}", self.batch_size, batch.len());
        let n = batch.len();
        let bins = n - 1;
        let labels: Vec<Vec<usize>> = (0..self.d)
            .map(|m| {
                let col: Vec<T> = (0..n).map(|r| batch.xs.get(r, m)).collect();
                quantize_column(&col, bins)
            })
            .collect();
        let h1 = T::lit(plug_in_entropy(&labels[0]));
        let mut unc = T::zero();
        for (k, clf) in self.unconditional.iter_mut().enumerate() {
            let m = k + 2;
            unc += clf.step(&batch.xs.leading_columns(m - 1), &labels[m - 1])?;
        }
        let mut cond = T::zero();
        for (k, clf) in self.conditional.iter_mut().enumerate() {
            let m = k + 1;
            let input = if m == 1 { batch.ys.clone() } else { batch.ys.hconcat(&batch.xs.leading_columns(m - 1))? };
            cond += clf.step(&input, &labels[m - 1])?;
        }
        Ok(Objective { value: unc + cond, estimate: h1 + unc - cond, d_joint: Vec::new(), d_marginal: Vec::new() })
    }
}
