//! Fully connected networks with explicit forward and backward passes.
//!
//! Parameters live in one flat vector so a network's weights can be produced
//! by another network. The flat layout is a public contract: for each layer in
//! order, the weight block (row-major, `in x out`) followed by the bias block.
//! Hidden layers use ReLU; the final layer is linear and emits logits.

use crate::tensor::{affine, matmul, relu, relu_backward, MatrixBase, Scalar};
use crate::{Error, Result};
use rand::Rng;

/// Architecture of a fully connected network: layer sizes `[in, h1, ..., out]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(
                "layer_sizes: need at least input and output sizes".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("layer_sizes: all sizes must be >= 1".into()));
        }
        Ok(Self { layer_sizes })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of weight layers (consecutive size pairs).
    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Total parameter count: sum of `(n_in + 1) * n_out` over layers.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

}

/// Flat parameter vector for an [`MlpSpec`], in the documented layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatParamsBase<F> {
    data: Vec<F>,
}

impl<F: Scalar> FlatParamsBase<F> {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            data: vec![F::zero(); spec.param_count()],
        }
    }

    pub fn from_vec(spec: &MlpSpec, data: Vec<F>) -> Self {
        assert_eq!(
            data.len(),
            spec.param_count(),
            "flat params length {} != param_count {}",
            data.len(),
            spec.param_count()
        );
        Self { data }
    }

    /// He-uniform initialization: weights in `±sqrt(6 / fan_in)`, biases zero.
    pub fn init_he_uniform(spec: &MlpSpec, rng: &mut impl Rng) -> Self {
        let mut params = Self::zeros(spec);
        for l in 0..spec.num_layers() {
            let (n_in, n_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
            let limit = (6.0 / n_in as f64).sqrt();
            let offset = layer_weight_offset(spec, l);
            for k in 0..n_in * n_out {
                params.data[offset + k] = F::from(rng.gen_range(-limit..limit)).unwrap();
            }
        }
        params
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Weight matrix of layer `l` (shape `in x out`).
    pub fn layer_weight(&self, spec: &MlpSpec, l: usize) -> MatrixBase<F> {
        let (n_in, n_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
        let offset = layer_weight_offset(spec, l);
        MatrixBase::from_vec(n_in, n_out, self.data[offset..offset + n_in * n_out].to_vec())
    }

    /// Bias vector of layer `l`.
    pub fn layer_bias(&self, spec: &MlpSpec, l: usize) -> &[F] {
        let (n_in, n_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
        let offset = layer_weight_offset(spec, l) + n_in * n_out;
        &self.data[offset..offset + n_out]
    }

    /// Repacks per-layer weights and biases into the flat layout.
    pub fn from_layers(spec: &MlpSpec, layers: &[(MatrixBase<F>, Vec<F>)]) -> Self {
        assert_eq!(layers.len(), spec.num_layers());
        let mut data = Vec::with_capacity(spec.param_count());
        for (l, (w, b)) in layers.iter().enumerate() {
            assert_eq!(w.rows(), spec.layer_sizes[l]);
            assert_eq!(w.cols(), spec.layer_sizes[l + 1]);
            assert_eq!(b.len(), spec.layer_sizes[l + 1]);
            data.extend_from_slice(w.data());
            data.extend_from_slice(b);
        }
        Self::from_vec(spec, data)
    }
}

/// Offset of layer `l`'s weight block in the flat layout.
fn layer_weight_offset(spec: &MlpSpec, l: usize) -> usize {
    spec.layer_sizes[..=l]
        .windows(2)
        .map(|w| (w[0] + 1) * w[1])
        .sum()
}

/// Cached activations from a forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct Tape<F> {
    input: MatrixBase<F>,
    /// Pre-activations per layer.
    pre_activations: Vec<MatrixBase<F>>,
    /// Post-ReLU activations for hidden layers.
    activations: Vec<MatrixBase<F>>,
}

/// Forward pass: ReLU between hidden layers, linear final layer.
pub fn forward<F: Scalar>(
    spec: &MlpSpec,
    params: &FlatParamsBase<F>,
    x: &MatrixBase<F>,
) -> (MatrixBase<F>, Tape<F>) {
    assert_eq!(
        x.cols(),
        spec.input_size(),
        "forward: input has {} columns, spec expects {}",
        x.cols(),
        spec.input_size()
    );
    assert_eq!(params.len(), spec.param_count(), "forward: stale params");
    let layers = spec.num_layers();
    let mut pre_activations = Vec::with_capacity(layers);
    let mut activations = Vec::with_capacity(layers.saturating_sub(1));
    let mut current = x.clone();
    for l in 0..layers {
        let w = params.layer_weight(spec, l);
        let b = params.layer_bias(spec, l);
        let z = affine(&current, &w, b);
        pre_activations.push(z.clone());
        if l + 1 < layers {
            current = relu(&z);
            activations.push(current.clone());
        } else {
            current = z;
        }
    }
    let tape = Tape {
        input: x.clone(),
        pre_activations,
        activations,
    };
    (current, tape)
}

/// Reverse-mode gradients w.r.t. every parameter and the input.
///
/// `upstream` is the gradient of the loss w.r.t. the logits.
pub fn backward<F: Scalar>(
    spec: &MlpSpec,
    params: &FlatParamsBase<F>,
    tape: &Tape<F>,
    upstream: &MatrixBase<F>,
) -> (FlatParamsBase<F>, MatrixBase<F>) {
    let layers = spec.num_layers();
    assert_eq!(tape.pre_activations.len(), layers, "backward: stale tape");
    assert_eq!(
        (upstream.rows(), upstream.cols()),
        (tape.input.rows(), spec.output_size()),
        "backward: upstream shape mismatch"
    );
    let mut grads: Vec<(MatrixBase<F>, Vec<F>)> = Vec::with_capacity(layers);
    let mut delta = upstream.clone();
    let mut grad_input = MatrixBase::zeros(0, 0);
    for l in (0..layers).rev() {
        let a_prev = if l == 0 {
            &tape.input
        } else {
            &tape.activations[l - 1]
        };
        let grad_w = matmul(&a_prev.transpose(), &delta);
        let mut grad_b = vec![F::zero(); delta.cols()];
        for i in 0..delta.rows() {
            let row = delta.row(i);
            for j in 0..row.len() {
                grad_b[j] = grad_b[j] + row[j];
            }
        }
        let w = params.layer_weight(spec, l);
        let delta_in = matmul(&delta, &w.transpose());
        if l == 0 {
            grad_input = delta_in;
        } else {
            delta = relu_backward(&tape.pre_activations[l - 1], &delta_in);
        }
        grads.push((grad_w, grad_b));
    }
    grads.reverse();
    (FlatParamsBase::from_layers(spec, &grads), grad_input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::softmax_cross_entropy;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type M = MatrixBase<f64>;
    type P = FlatParamsBase<f64>;

    #[test]
    fn param_count_examples() {
        assert_eq!(MlpSpec::new(vec![10, 5, 2]).unwrap().param_count(), 67);
        assert_eq!(MlpSpec::new(vec![7, 1]).unwrap().param_count(), 8);
        assert_eq!(MlpSpec::new(vec![10, 20, 5]).unwrap().param_count(), 325);
    }

    #[test]
    fn spec_rejects_degenerate_shapes() {
        assert!(MlpSpec::new(vec![4]).is_err());
        assert!(MlpSpec::new(vec![4, 0, 2]).is_err());
    }

    #[test]
    fn flat_layout_round_trips() {
        let spec = MlpSpec::new(vec![3, 4, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f64> = (0..spec.param_count())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let params = P::from_vec(&spec, data.clone());
        let layers: Vec<_> = (0..spec.num_layers())
            .map(|l| {
                (
                    params.layer_weight(&spec, l),
                    params.layer_bias(&spec, l).to_vec(),
                )
            })
            .collect();
        let repacked = P::from_layers(&spec, &layers);
        assert_eq!(repacked.data(), &data[..]);
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let spec = MlpSpec::new(vec![4, 3, 2]).unwrap();
        let params = P::zeros(&spec);
        let x = M::from_rows(&[vec![1.0, -2.0, 0.5, 3.0]]);
        let (logits, _) = forward(&spec, &params, &x);
        assert_eq!(logits, M::zeros(1, 2));
    }

    #[test]
    fn single_linear_layer_equals_affine() {
        let spec = MlpSpec::new(vec![3, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = P::init_he_uniform(&spec, &mut rng);
        let x = M::from_rows(&[vec![0.3, -0.7, 1.2], vec![0.9, 0.1, -0.4]]);
        let (logits, _) = forward(&spec, &params, &x);
        let expected = affine(
            &x,
            &params.layer_weight(&spec, 0),
            params.layer_bias(&spec, 0),
        );
        assert_eq!(logits, expected);
    }

    #[test]
    fn two_layer_forward_matches_manual_composition() {
        let spec = MlpSpec::new(vec![3, 4, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = P::init_he_uniform(&spec, &mut rng);
        let x = M::from_rows(&[vec![0.5, -1.0, 2.0], vec![-0.2, 0.8, 0.1]]);
        let (logits, _) = forward(&spec, &params, &x);
        let h = relu(&affine(
            &x,
            &params.layer_weight(&spec, 0),
            params.layer_bias(&spec, 0),
        ));
        let expected = affine(
            &h,
            &params.layer_weight(&spec, 1),
            params.layer_bias(&spec, 1),
        );
        assert_eq!(logits, expected);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let spec = MlpSpec::new(vec![3, 4, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let params = P::init_he_uniform(&spec, &mut rng);
        let x = M::from_rows(&[vec![0.5, -1.0, 2.0]]);
        let (_, tape) = forward(&spec, &params, &x);
        let (grad, grad_x) = backward(&spec, &params, &tape, &M::zeros(1, 2));
        assert!(grad.data().iter().all(|&v| v == 0.0));
        assert!(grad_x.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_layer_grad_is_outer_product() {
        let spec = MlpSpec::new(vec![3, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = P::init_he_uniform(&spec, &mut rng);
        let x = M::from_rows(&[vec![0.3, -0.7, 1.2]]);
        let (_, tape) = forward(&spec, &params, &x);
        let upstream = M::from_rows(&[vec![2.0, -1.5]]);
        let (grad, _) = backward(&spec, &params, &tape, &upstream);
        let grad_w = grad.layer_weight(&spec, 0);
        let expected = matmul(&x.transpose(), &upstream);
        assert_eq!(grad_w, expected);
        assert_eq!(grad.layer_bias(&spec, 0), upstream.row(0));
    }

    /// Scalar loss used by the finite-difference checks.
    fn loss_of(spec: &MlpSpec, params: &P, x: &M, labels: &[usize]) -> f64 {
        let (logits, _) = forward(spec, params, x);
        softmax_cross_entropy(&logits, labels).0
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for trial in 0..5 {
            let spec = MlpSpec::new(vec![4, 5, 3]).unwrap();
            let params = P::init_he_uniform(&spec, &mut rng);
            let x = M::from_vec(
                2,
                4,
                (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            );
            let labels = [trial % 3, (trial + 1) % 3];
            let (logits, tape) = forward(&spec, &params, &x);
            let (_, up) = softmax_cross_entropy(&logits, &labels);
            let (grad, grad_x) = backward(&spec, &params, &tape, &up);

            let step = 1e-5;
            for k in 0..spec.param_count() {
                let mut plus = params.clone();
                plus.data_mut()[k] += step;
                let mut minus = params.clone();
                minus.data_mut()[k] -= step;
                let fd = (loss_of(&spec, &plus, &x, &labels)
                    - loss_of(&spec, &minus, &x, &labels))
                    / (2.0 * step);
                assert_relative_eq!(grad.data()[k], fd, max_relative = 1e-5, epsilon = 1e-8);
            }
            for i in 0..x.rows() {
                for j in 0..x.cols() {
                    let mut plus = x.clone();
                    plus[(i, j)] += step;
                    let mut minus = x.clone();
                    minus[(i, j)] -= step;
                    let fd = (loss_of(&spec, &params, &plus, &labels)
                        - loss_of(&spec, &params, &minus, &labels))
                        / (2.0 * step);
                    assert_relative_eq!(grad_x[(i, j)], fd, max_relative = 1e-5, epsilon = 1e-8);
                }
            }
        }
    }
}
