//! Dense tanh MLPs with hand-written backpropagation, and Adam.
//!
//! Networks are generic over the float type: training runs in `f32`, while
//! gradient checks instantiate the same code in `f64`.

use std::fmt::Debug;
use std::ops::AddAssign;

use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::StandardNormal;

pub trait Scalar:
    LinalgScalar + Float + ScalarOperand + FromPrimitive + ToPrimitive + AddAssign + Debug + Send + Sync
{
}

impl<T> Scalar for T where
    T: LinalgScalar + Float + ScalarOperand + FromPrimitive + ToPrimitive + AddAssign + Debug + Send + Sync
{
}

/// Fully connected layer computing `x · weight + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<F> {
    /// Shape `(inputs, outputs)`, row-major.
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> Dense<F> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

/// Multi-layer perceptron: tanh on every hidden layer, linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<F> {
    pub layers: Vec<Dense<F>>,
}

/// Layer inputs recorded during a forward pass, consumed by `backward`.
pub struct ForwardCache<F> {
    inputs: Vec<Array2<F>>,
}

impl<F: Scalar> Mlp<F> {
    /// `sizes` lists every width including input and output.
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    /// Orthogonal initialization: unit gain on hidden layers, `output_gain`
    /// on the last layer, zero biases.
    pub fn orthogonal<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        let mut mlp = Self::zeros(sizes);
        let last = mlp.layers.len() - 1;
        for (i, layer) in mlp.layers.iter_mut().enumerate() {
            let gain = if i == last { output_gain } else { 1.0 };
            let q = orthogonal_matrix(layer.inputs(), layer.outputs(), rng);
            layer.weight = q.mapv(|v| F::from_f64(v * gain).expect("finite init"));
        }
        mlp
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs()];
        sizes.extend(self.layers.iter().map(Dense::outputs));
        sizes
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameter slices in storage order: per layer, weight then bias.
    pub fn param_slices(&self) -> Vec<&[F]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: ArrayView2<F>) -> (Array2<F>, ForwardCache<F>) {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias;
            if i != last {
                z.mapv_inplace(F::tanh);
            }
            inputs.push(h);
            h = z;
        }
        (h, ForwardCache { inputs })
    }

    /// Accumulates parameter gradients into `grads` given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache<F>, grad_output: Array2<F>, grads: &mut Mlp<F>) {
        let mut delta = grad_output;
        for i in (0..self.layers.len()).rev() {
            let input = &cache.inputs[i];
            let g = &mut grads.layers[i];
            g.weight += &input.t().dot(&delta);
            g.bias += &delta.sum_axis(Axis(0));
            if i == 0 {
                break;
            }
            let mut upstream = delta.dot(&self.layers[i].weight.t());
            // `input` is the tanh output of the previous layer.
            ndarray::Zip::from(&mut upstream)
                .and(input)
                .for_each(|d, &a| *d = *d * (F::one() - a * a));
            delta = upstream;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// `rows x cols` matrix with orthonormal rows or columns (whichever is the
/// shorter side), from Gram-Schmidt on a Gaussian draw.
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let (long, short) = (rows.max(cols), rows.min(cols));
    // `short` orthonormal vectors of length `long`.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    Array2::from_shape_fn(
        (rows, cols),
        |(r, c)| {
            if rows >= cols {
                basis[c][r]
            } else {
                basis[r][c]
            }
        },
    )
}

/// Adam with bias correction. Moments follow the parameter storage order of
/// the networks it is stepped with.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<F> {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub m: Vec<F>,
    pub v: Vec<F>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(param_count: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![F::zero(); param_count],
            v: vec![F::zero(); param_count],
        }
    }

    /// Applies one update. `params` and `grads` must list matching slices
    /// whose total length equals the moment length.
    pub fn apply(&mut self, params: Vec<&mut [F]>, grads: Vec<&[F]>, learning_rate: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c = |x: f64| F::from_f64(x).expect("finite");
        let (b1, b2) = (c(self.beta1), c(self.beta2));
        let (one_b1, one_b2) = (c(1.0 - self.beta1), c(1.0 - self.beta2));
        let corr1 = c(1.0 - self.beta1.powi(t));
        let corr2 = c(1.0 - self.beta2.powi(t));
        let (lr, eps) = (c(learning_rate), c(self.epsilon));
        let mut offset = 0;
        for (p, g) in params.into_iter().zip(grads) {
            assert_eq!(p.len(), g.len());
            let m = &mut self.m[offset..offset + p.len()];
            let v = &mut self.v[offset..offset + p.len()];
            for i in 0..p.len() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
            offset += p.len();
        }
        assert_eq!(offset, self.m.len(), "moment length mismatch");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = orthogonal_matrix(8, 3, &mut rng);
        let gram = q.t().dot(&q);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - expect).abs() < 1e-12);
            }
        }
        let q = orthogonal_matrix(3, 8, &mut rng);
        let gram = q.dot(&q.t());
        assert!((gram[[1, 1]] - 1.0).abs() < 1e-12 && gram[[0, 2]].abs() < 1e-12);
    }

    #[test]
    fn forward_matches_hand_computation() {
        let mut mlp = Mlp::<f64>::zeros(&[2, 2, 1]);
        mlp.layers[0].weight = array![[1.0, -1.0], [0.5, 2.0]];
        mlp.layers[0].bias = array![0.1, 0.0];
        mlp.layers[1].weight = array![[2.0], [1.0]];
        mlp.layers[1].bias = array![0.5];
        let out = mlp.forward(array![[1.0, 1.0]].view());
        let expect = 2.0 * (1.6f64).tanh() + (1.0f64).tanh() + 0.5;
        assert!((out[[0, 0]] - expect).abs() < 1e-15);
    }

    #[test]
    fn batch_rows_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mlp = Mlp::<f32>::orthogonal(&[38, 64, 64, 15], 1.0, &mut rng);
        let x = Array2::from_shape_fn((130, 38), |(i, j)| ((i * 7 + j) as f32 * 0.37).sin());
        let batch = mlp.forward(x.view());
        for i in [0, 64, 129] {
            let single = mlp.forward(x.slice(ndarray::s![i..i + 1, ..]));
            assert_eq!(single.row(0), batch.row(i));
        }
    }

    #[test]
    fn adam_zero_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mlp = Mlp::<f32>::orthogonal(&[3, 4, 2], 1.0, &mut rng);
        let before = mlp.clone();
        let mut grads = mlp.zeros_like();
        grads.layers[0].weight.fill(0.3);
        let mut adam = Adam::new(mlp.param_count());
        adam.apply(mlp.param_slices_mut(), grads.param_slices(), 0.0);
        assert_eq!(mlp, before);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn adam_first_step_moves_by_rate() {
        let mut mlp = Mlp::<f64>::zeros(&[1, 1]);
        let mut grads = mlp.zeros_like();
        grads.layers[0].weight[[0, 0]] = 4.0;
        grads.layers[0].bias[0] = -0.01;
        let mut adam = Adam::new(mlp.param_count());
        adam.apply(mlp.param_slices_mut(), grads.param_slices(), 1e-3);
        assert!((mlp.layers[0].weight[[0, 0]] + 1e-3).abs() < 1e-9);
        assert!((mlp.layers[0].bias[0] - 1e-3).abs() < 1e-8);
    }
}
