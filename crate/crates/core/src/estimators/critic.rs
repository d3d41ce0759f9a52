//! Critic networks for the three pairing architectures.

use rand::Rng;

use super::objectives::Objective;
use super::ArchitectureKind;
use crate::error::{ensure, Error, Result};
use crate::nn::{AdamState, Gradients, Matrix, Mlp, MlpConfig, OutputActivation};
use crate::sampling::{marginal_pairs_for, Batch, MarginalPairs, MarginalStrategy};
use crate::scalar::Scalar;

/// Largest number of concatenated rows pushed through a network at once.
pub const CHUNK_ROWS: usize = 4096;

/// Network inputs for one batch.
#[derive(Debug, Clone, PartialEq)]
pub enum DiscriminatorInputs<T> {
    /// Rows are `[x, y]` concatenations.
    Concat { joint: Matrix<T>, marginal: Matrix<T> },
    /// Each tower sees its own stream; scores come from the `N x N` table
    /// of embedding inner products.
    Separable { xs: Matrix<T>, ys: Matrix<T> },
}

/// Materializes the network inputs of `arch` for a batch.
///
/// The joint architecture always uses the `N(N-1)` off-diagonal pairs; the
/// deranged one uses `pairs`.
pub fn discriminator_inputs<T: Scalar>(
    arch: ArchitectureKind,
    batch: &Batch<T>,
    pairs: &MarginalPairs,
) -> Result<DiscriminatorInputs<T>> {
    ensure!(
        batch.xs.cols() == batch.ys.cols(),
        Shape,
        "x has {} columns, y has {}",
        batch.xs.cols(),
        batch.ys.cols()
    );
    Ok(match arch {
        ArchitectureKind::Separable { .. } => {
            DiscriminatorInputs::Separable { xs: batch.xs.clone(), ys: batch.ys.clone() }
        }
        ArchitectureKind::Joint | ArchitectureKind::Deranged => {
            let all;
            let pairs = if arch == ArchitectureKind::Joint {
                all = MarginalPairs::off_diagonal(batch.len());
                &all
            } else {
                pairs
            };
            let joint = batch.xs.hconcat(&batch.ys)?;
            let (mx, my) = pairs.gather(batch)?;
            DiscriminatorInputs::Concat { joint, marginal: mx.hconcat(&my)? }
        }
    })
}

#[derive(Debug, Clone)]
enum Nets<T> {
    Concat { net: Mlp<T>, opt: AdamState<T> },
    Separable { g: Mlp<T>, h: Mlp<T>, opt_g: AdamState<T>, opt_h: AdamState<T> },
}

/// Trainable critic `T(x, y)` with its optimizer state.
#[derive(Debug, Clone)]
pub struct Critic<T> {
    arch: ArchitectureKind,
    nets: Nets<T>,
}

/// Row `r` of the concatenated input is `[x_{xi[r]}, y_{yi[r]}]`.
fn concat_rows<T: Scalar>(batch: &Batch<T>, xi: &[usize], yi: &[usize]) -> Matrix<T> {
    let d = batch.xs.cols();
    let mut data = Vec::with_capacity(xi.len() * 2 * d);
    for (&i, &j) in xi.iter().zip(yi) {
        data.extend_from_slice(batch.xs.row(i));
        data.extend_from_slice(batch.ys.row(j));
    }
    Matrix::from_vec(xi.len(), 2 * d, data).expect("consistent row sizes")
}

fn adam<T: Scalar>(net: &Mlp<T>, lr: f64, beta1: f64, beta2: f64) -> AdamState<T> {
    AdamState::new(net, T::lit(lr), T::lit(beta1), T::lit(beta2))
}

impl<T: Scalar> Critic<T> {
    pub fn new(
        arch: ArchitectureKind,
        d: usize,
        hidden_dims: &[usize],
        (lr, beta1, beta2): (f64, f64, f64),
        seed: u64,
    ) -> Result<Self> {
        let nets = match arch {
            ArchitectureKind::Joint | ArchitectureKind::Deranged => {
                let net = Mlp::new(&MlpConfig::new(2 * d, hidden_dims.to_vec(), 1).with_seed(seed))?;
                let opt = adam(&net, lr, beta1, beta2);
                Nets::Concat { net, opt }
            }
            ArchitectureKind::Separable { embed_dim } => {
                let tower = |s| {
                    Mlp::new(
                        &MlpConfig::new(d, hidden_dims.to_vec(), embed_dim)
                            .with_output(OutputActivation::Identity)
                            .with_seed(s),
                    )
                };
                let g = tower(seed)?;
                let h = tower(seed ^ 0x5851_F42D_4C95_7F2D)?;
                let (opt_g, opt_h) = (adam(&g, lr, beta1, beta2), adam(&h, lr, beta1, beta2));
                Nets::Separable { g, h, opt_g, opt_h }
            }
        };
        Ok(Self { arch, nets })
    }

    pub fn arch(&self) -> ArchitectureKind {
        self.arch
    }

    /// Marginal pairs this architecture scores for a batch of `n`.
    pub fn marginal_pairs<R: Rng + ?Sized>(
        &self,
        n: usize,
        strategy: MarginalStrategy,
        rng: &mut R,
    ) -> Result<MarginalPairs> {
        match self.arch {
            ArchitectureKind::Deranged => {
                ensure!(
                    strategy != MarginalStrategy::AllPairs,
                    Config,
                    "the deranged architecture cannot use all-pairs marginals"
                );
                marginal_pairs_for(n, strategy, rng)
            }
            ArchitectureKind::Joint => marginal_pairs_for(n, MarginalStrategy::AllPairs, rng),
            ArchitectureKind::Separable { .. } => Ok(MarginalPairs::off_diagonal(n)),
        }
    }

    fn check_batch(&self, batch: &Batch<T>) -> Result<()> {
        let d_in = match &self.nets {
            Nets::Concat { net, .. } => net.input_dim() / 2,
            Nets::Separable { g, .. } => g.input_dim(),
        };
        ensure!(
            batch.xs.cols() == d_in && batch.ys.cols() == d_in,
            Shape,
            "critic expects d = {d_in}, batch has {} / {}",
            batch.xs.cols(),
            batch.ys.cols()
        );
        Ok(())
    }

    /// Scores of the joint pairs `(x_i, y_i)` only.
    pub fn joint_scores(&self, batch: &Batch<T>) -> Result<Vec<T>> {
        self.check_batch(batch)?;
        let idx: Vec<usize> = (0..batch.len()).collect();
        match &self.nets {
            Nets::Concat { net, .. } => {
                let mut out = Vec::with_capacity(idx.len());
                for c in idx.chunks(CHUNK_ROWS) {
                    out.extend_from_slice(net.predict(&concat_rows(batch, c, c))?.as_slice());
                }
                Ok(out)
            }
            Nets::Separable { g, h, .. } => {
                let (ge, he) = (g.predict(&batch.xs)?, h.predict(&batch.ys)?);
                Ok((0..batch.len()).map(|i| dot(ge.row(i), he.row(i))).collect())
            }
        }
    }

    /// `(joint scores, marginal scores)` without recording gradients.
    pub fn scores(&self, batch: &Batch<T>, pairs: &MarginalPairs) -> Result<(Vec<T>, Vec<T>)> {
        self.check_batch(batch)?;
        let n = batch.len();
        match &self.nets {
            Nets::Concat { net, .. } => {
                let (xi, yi) = row_indices(n, pairs);
                let mut out = Vec::with_capacity(xi.len());
                for (cx, cy) in xi.chunks(CHUNK_ROWS).zip(yi.chunks(CHUNK_ROWS)) {
                    out.extend_from_slice(net.predict(&concat_rows(batch, cx, cy))?.as_slice());
                }
                let marginal = out.split_off(n);
                Ok((out, marginal))
            }
            Nets::Separable { g, h, .. } => {
                let table = g.predict(&batch.xs)?.matmul_t(&h.predict(&batch.ys)?)?;
                Ok(split_table(&table, pairs))
            }
        }
    }

    /// One Adam step of gradient ascent on the objective computed by `f`
    /// from `(joint scores, marginal scores)`.
    ///
    /// A non-finite objective or gradient returns a numeric error and leaves
    /// the parameters untouched.
    pub fn train_step<F>(&mut self, batch: &Batch<T>, pairs: &MarginalPairs, f: F) -> Result<Objective<T>>
    where
        F: FnOnce(&[T], &[T]) -> Result<Objective<T>>,
    {
        self.check_batch(batch)?;
        let n = batch.len();
        let finite = |obj: Objective<T>| -> Result<Objective<T>> {
            if obj.is_finite() {
                Ok(obj)
            } else {
                Err(Error::Numeric("objective or its gradient is not finite".into()))
            }
        };
        match &mut self.nets {
            Nets::Concat { net, opt } => {
                let (xi, yi) = row_indices(n, pairs);
                let rows = xi.len();
                if rows <= CHUNK_ROWS {
                    let (out, cache) = net.forward(&concat_rows(batch, &xi, &yi))?;
                    let s = out.as_slice();
                    let obj = finite(f(&s[..n], &s[n..])?)?;
                    let grads = net.backward(&cache, &loss_grad(&obj))?;
                    opt.step(net, &grads)?;
                    return Ok(obj);
                }
                // Too many rows to cache at once: score in chunks, then
                // recompute each chunk's activations for the backward pass.
                let mut s = Vec::with_capacity(rows);
                for (cx, cy) in xi.chunks(CHUNK_ROWS).zip(yi.chunks(CHUNK_ROWS)) {
                    s.extend_from_slice(net.predict(&concat_rows(batch, cx, cy))?.as_slice());
                }
                let obj = finite(f(&s[..n], &s[n..])?)?;
                let g_all = loss_grad(&obj).into_vec();
                let mut grads = Gradients::zeros_like(net);
                for (k, (cx, cy)) in xi.chunks(CHUNK_ROWS).zip(yi.chunks(CHUNK_ROWS)).enumerate() {
                    let (_, cache) = net.forward(&concat_rows(batch, cx, cy))?;
                    let start = k * CHUNK_ROWS;
                    let g = Matrix::from_vec(cx.len(), 1, g_all[start..start + cx.len()].to_vec())?;
                    grads.accumulate(&net.backward(&cache, &g)?)?;
                }
                opt.step(net, &grads)?;
                Ok(obj)
            }
            Nets::Separable { g, h, opt_g, opt_h } => {
                let (ge, cg) = g.forward(&batch.xs)?;
                let (he, ch) = h.forward(&batch.ys)?;
                let table = ge.matmul_t(&he)?;
                let (joint, marginal) = split_table(&table, pairs);
                let obj = finite(f(&joint, &marginal)?)?;
                // Loss is -J; scatter its score gradients into the table.
                let mut ds = Matrix::zeros(n, n);
                for (i, &d) in obj.d_joint.iter().enumerate() {
                    ds[(i, i)] -= d;
                }
                for ((&i, &j), &d) in pairs.x_index.iter().zip(&pairs.y_index).zip(&obj.d_marginal) {
                    ds[(i, j)] -= d;
                }
                let dg = ds.matmul(&he)?;
                let dh = ds.t_matmul(&ge)?;
                let gg = g.backward(&cg, &dg)?;
                let gh = h.backward(&ch, &dh)?;
                opt_g.step(g, &gg)?;
                opt_h.step(h, &gh)?;
                Ok(obj)
            }
        }
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&u, &v)| u * v).sum()
}

/// Joint rows `(i, i)` followed by the marginal pairs.
fn row_indices(n: usize, pairs: &MarginalPairs) -> (Vec<usize>, Vec<usize>) {
    let mut xi: Vec<usize> = (0..n).collect();
    let mut yi = xi.clone();
    xi.extend_from_slice(&pairs.x_index);
    yi.extend_from_slice(&pairs.y_index);
    (xi, yi)
}

fn split_table<T: Scalar>(table: &Matrix<T>, pairs: &MarginalPairs) -> (Vec<T>, Vec<T>) {
    let joint = (0..table.rows()).map(|i| table[(i, i)]).collect();
    let marginal = pairs.x_index.iter().zip(&pairs.y_index).map(|(&i, &j)| table[(i, j)]).collect();
    (joint, marginal)
}

/// Gradient of the loss `-J` w.r.t. the stacked `[joint; marginal]` scores.
fn loss_grad<T: Scalar>(obj: &Objective<T>) -> Matrix<T> {
    let g: Vec<T> = obj.d_joint.iter().chain(&obj.d_marginal).map(|&v| -v).collect();
    let rows = g.len();
    Matrix::from_vec(rows, 1, g).expect("column vector")
}
