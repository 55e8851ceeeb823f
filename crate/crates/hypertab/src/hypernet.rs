//! The hypernetwork: a fully connected net mapping a binary feature mask to
//! the flat weight vector of a small target network, plus the composed
//! forward/backward pass through the generated weights.
//!
//! Only the hypernetwork weights are trainable. Gradients w.r.t. a generated
//! weight vector are pushed back through the hypernetwork as the upstream
//! gradient of its output layer; contributions from different masks are summed
//! in a fixed order.

use crate::augment::AugmentationMask;
use crate::mlp::{self, MlpSpec, Tape};
use crate::{Error, FlatParams, Matrix, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default hypernetwork hidden sizes.
pub const DEFAULT_HYPER_HIDDEN: [usize; 3] = [128, 64, 64];

/// Hypernetwork weights plus the target architecture its outputs parameterize.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperNetwork {
    hyper_spec: MlpSpec,
    psi: FlatParams,
    target_spec: MlpSpec,
}

impl HyperNetwork {
    /// Builds a hypernetwork for `d` input features and a target net
    /// `[mask_size, target_size, n_classes]`, with He-uniform initial weights.
    pub fn new(
        d: usize,
        mask_size: usize,
        target_size: usize,
        n_classes: usize,
        hyper_hidden: &[usize],
        seed: u64,
    ) -> Result<Self> {
        if mask_size > d {
            return Err(Error::Config(format!(
                "mask_size: {mask_size} exceeds feature count {d}"
            )));
        }
        if n_classes < 2 {
            return Err(Error::Config("n_classes: need at least 2".into()));
        }
        let target_spec = MlpSpec::new(vec![mask_size, target_size, n_classes])?;
        let mut hyper_sizes = vec![d];
        hyper_sizes.extend_from_slice(hyper_hidden);
        hyper_sizes.push(target_spec.param_count());
        let hyper_spec = MlpSpec::new(hyper_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = FlatParams::init_he_uniform(&hyper_spec, &mut rng);
        Ok(Self {
            hyper_spec,
            psi,
            target_spec,
        })
    }

    pub fn from_parts(hyper_spec: MlpSpec, psi: FlatParams, target_spec: MlpSpec) -> Result<Self> {
        if hyper_spec.output_size() != target_spec.param_count() {
            return Err(Error::Config(format!(
                "hypernetwork output size {} != target param count {}",
                hyper_spec.output_size(),
                target_spec.param_count()
            )));
        }
        if psi.len() != hyper_spec.param_count() {
            return Err(Error::Config("psi length does not match hyper spec".into()));
        }
        Ok(Self {
            hyper_spec,
            psi,
            target_spec,
        })
    }

    pub fn input_size(&self) -> usize {
        self.hyper_spec.input_size()
    }

    pub fn n_classes(&self) -> usize {
        self.target_spec.output_size()
    }

    pub fn hyper_spec(&self) -> &MlpSpec {
        &self.hyper_spec
    }

    pub fn target_spec(&self) -> &MlpSpec {
        &self.target_spec
    }

    pub fn psi(&self) -> &FlatParams {
        &self.psi
    }

    pub fn psi_mut(&mut self) -> &mut FlatParams {
        &mut self.psi
    }

    /// The trainable parameter count: `|psi|`, independent of the pool size.
    pub fn trainable_param_count(&self) -> usize {
        self.hyper_spec.param_count()
    }

    /// Generates the target weights for one mask: one hypernetwork forward
    /// pass on the binary encoding, tape retained for backprop.
    pub fn generate(&self, mask: &AugmentationMask) -> Result<GeneratedTarget> {
        if mask.d() != self.input_size() {
            return Err(Error::Config(format!(
                "mask dimension {} != hypernetwork input size {}",
                mask.d(),
                self.input_size()
            )));
        }
        let input = Matrix::from_vec(1, mask.d(), mask.binary());
        let (theta_row, hyper_tape) = mlp::forward(&self.hyper_spec, &self.psi, &input);
        let theta = FlatParams::from_vec(&self.target_spec, theta_row.row(0).to_vec());
        Ok(GeneratedTarget {
            mask: mask.clone(),
            theta,
            hyper_tape,
        })
    }

    /// Runs every target network in `masks` on its masked view of `X`.
    pub fn ensemble_forward(
        &self,
        masks: &[AugmentationMask],
        x: &Matrix,
    ) -> Result<EnsembleForward> {
        let mut targets = Vec::with_capacity(masks.len());
        for mask in masks {
            let generated = self.generate(mask)?;
            let masked = mask.apply_matrix(x)?;
            let (logits, target_tape) = mlp::forward(&self.target_spec, &generated.theta, &masked);
            targets.push(TargetEval {
                generated,
                target_tape,
                logits,
            });
        }
        Ok(EnsembleForward { targets })
    }

    /// Accumulates `dL/dpsi` over all targets, in pool order.
    ///
    /// For each target, the gradient w.r.t. its generated weights becomes the
    /// upstream gradient of the hypernetwork output layer. Gradients w.r.t.
    /// masked inputs are discarded.
    pub fn ensemble_backward(
        &self,
        forward: &EnsembleForward,
        upstream_per_target: &[Matrix],
    ) -> Result<FlatParams> {
        if upstream_per_target.len() != forward.targets.len() {
            return Err(Error::Config(
                "ensemble_backward: one upstream per target required".into(),
            ));
        }
        let mut grad_psi = FlatParams::zeros(&self.hyper_spec);
        for (eval, upstream) in forward.targets.iter().zip(upstream_per_target) {
            let (grad_theta, _grad_input) = mlp::backward(
                &self.target_spec,
                &eval.generated.theta,
                &eval.target_tape,
                upstream,
            );
            let theta_upstream =
                Matrix::from_vec(1, grad_theta.len(), grad_theta.data().to_vec());
            let (grad_psi_j, _) = mlp::backward(
                &self.hyper_spec,
                &self.psi,
                &eval.generated.hyper_tape,
                &theta_upstream,
            );
            for (acc, g) in grad_psi.data_mut().iter_mut().zip(grad_psi_j.data()) {
                *acc += g;
            }
        }
        Ok(grad_psi)
    }
}

/// One generated target network: mask, weights, and the hypernetwork tape
/// from the generating pass.
#[derive(Debug, Clone)]
pub struct GeneratedTarget {
    pub mask: AugmentationMask,
    pub theta: FlatParams,
    pub hyper_tape: Tape<f64>,
}

/// Per-target state from a batched ensemble forward pass.
#[derive(Debug, Clone)]
pub struct TargetEval {
    pub generated: GeneratedTarget,
    pub target_tape: Tape<f64>,
    pub logits: Matrix,
}

#[derive(Debug, Clone)]
pub struct EnsembleForward {
    pub targets: Vec<TargetEval>,
}

impl EnsembleForward {
    pub fn logits(&self) -> impl Iterator<Item = &Matrix> {
        self.targets.iter().map(|t| &t.logits)
    }
}
