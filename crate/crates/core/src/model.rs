//! The cost-map network: a fully convolutional feature extractor with a
//! pooled branch and a full-resolution skip branch, fused by channel
//! concatenation and squashed to `(0, 1)` by a sigmoid.
//!
//! ```text
//! input [40,28,4]
//!   conv1 5x5 4->64, lrelu
//!   conv2 3x3 64->32, lrelu                      = out2 [40,28,32]
//!   ├─ maxpool 2x2                                   [20,14,32]
//!   │  conv3 3x3 32->32, conv4 1x1 32->32,
//!   │  conv5 1x1 32->16 (each + lrelu), upsample = out6 [40,28,16]
//!   └─ skip_conv1 3x3 32->32, skip_conv2 1x1 32->32
//!      (each + lrelu)                            = out8 [40,28,32]
//!   concat(out8, out6)                               [40,28,48]
//!   head 1x1 48->1, sigmoid                          [40,28,1]
//! ```

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{self, CheckpointError, NamedTensor};
use crate::tensor::{self, Tape, Tensor, TensorError, Var};

pub const INPUT_ROWS: usize = 40;
pub const INPUT_COLS: usize = 28;
pub const INPUT_CHANNELS: usize = 4;
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: &'static str,
    pub kernel: usize,
    pub c_in: usize,
    pub c_out: usize,
}

impl ConvSpec {
    const fn new(name: &'static str, kernel: usize, c_in: usize, c_out: usize) -> Self {
        Self {
            name,
            kernel,
            c_in,
            c_out,
        }
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.kernel, self.kernel, self.c_in, self.c_out]
    }

    pub fn fan_in(&self) -> usize {
        self.kernel * self.kernel * self.c_in
    }

    pub fn param_count(&self) -> usize {
        self.fan_in() * self.c_out + self.c_out
    }
}

pub const LAYERS: [ConvSpec; 8] = [
    ConvSpec::new("conv1", 5, 4, 64),
    ConvSpec::new("conv2", 3, 64, 32),
    ConvSpec::new("conv3", 3, 32, 32),
    ConvSpec::new("conv4", 1, 32, 32),
    ConvSpec::new("conv5", 1, 32, 16),
    ConvSpec::new("skip_conv1", 3, 32, 32),
    ConvSpec::new("skip_conv2", 1, 32, 32),
    ConvSpec::new("head", 1, 48, 1),
];

/// Total scalar parameters across all layers, weights and biases.
pub const PARAM_COUNT: usize = 46_113;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("expected input [40, 28, 4], got {0:?}")]
    InputShape(Vec<usize>),
}

/// Weights and biases for every layer in [`LAYERS`] order, each weight
/// immediately followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct CamelModel {
    params: Vec<Tensor>,
}

/// Extra switches for [`CamelModel::forward_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOptions {
    /// Replace the pooled branch output with zeros before fusion.
    pub zero_deep_branch: bool,
}

/// Result of one forward pass on a tape.
pub struct Forward<'t> {
    pub cost: Var<'t>,
    /// `(label, shape)` for every intermediate in dataflow order.
    pub trace: Vec<(&'static str, Vec<usize>)>,
}

impl CamelModel {
    /// Fan-in scaled uniform weights, zero biases.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(2 * LAYERS.len());
        for spec in LAYERS {
            let bound = (6.0 / spec.fan_in() as f64).sqrt();
            let n = spec.fan_in() * spec.c_out;
            let w = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            params.push(Tensor::new(spec.weight_shape().to_vec(), w).expect("weight shape"));
            params.push(Tensor::zeros(vec![spec.c_out]));
        }
        Self { params }
    }

    pub fn zeros() -> Self {
        let params = LAYERS
            .iter()
            .flat_map(|spec| [Tensor::zeros(spec.weight_shape().to_vec()), Tensor::zeros(vec![spec.c_out])])
            .collect();
        Self { params }
    }

    pub fn param_names() -> Vec<String> {
        LAYERS
            .iter()
            .flat_map(|s| [format!("{}.weight", s.name), format!("{}.bias", s.name)])
            .collect()
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Record every parameter as a leaf on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape, requires_grad: bool) -> Vec<Var<'t>> {
        self.params
            .iter()
            .map(|p| tape.leaf(p.clone(), requires_grad))
            .collect()
    }

    pub fn forward<'t>(&self, tape: &'t Tape, input: Var<'t>) -> Result<Forward<'t>, ModelError> {
        let params = self.bind(tape, false);
        Self::forward_with(&params, input, ForwardOptions::default())
    }

    /// Forward pass against parameters already bound to the input's tape.
    pub fn forward_with<'t>(
        params: &[Var<'t>],
        input: Var<'t>,
        options: ForwardOptions,
    ) -> Result<Forward<'t>, ModelError> {
        let shape = input.shape();
        if shape != [INPUT_ROWS, INPUT_COLS, INPUT_CHANNELS] {
            return Err(ModelError::InputShape(shape));
        }
        assert_eq!(params.len(), 2 * LAYERS.len(), "bound parameter count");
        let layer = |i: usize, x: Var<'t>| -> tensor::Result<Var<'t>> {
            x.conv2d(params[2 * i], params[2 * i + 1])
        };
        let mut trace = vec![("input", input.shape())];
        let mut record = |label: &'static str, v: &Var<'t>| trace.push((label, v.shape()));

        let out1 = layer(0, input)?.leaky_relu(LEAKY_SLOPE);
        record("conv1", &out1);
        let out2 = layer(1, out1)?.leaky_relu(LEAKY_SLOPE);
        record("conv2", &out2);
        let pooled = out2.maxpool2d()?;
        record("maxpool", &pooled);
        let out4 = layer(2, pooled)?.leaky_relu(LEAKY_SLOPE);
        record("conv3", &out4);
        let out5 = layer(3, out4)?.leaky_relu(LEAKY_SLOPE);
        record("conv4", &out5);
        let out5b = layer(4, out5)?.leaky_relu(LEAKY_SLOPE);
        record("conv5", &out5b);
        let mut out6 = out5b.upsample2()?;
        record("upsample", &out6);
        if options.zero_deep_branch {
            out6 = out6.scale(0.0);
        }
        let out7 = layer(5, out2)?.leaky_relu(LEAKY_SLOPE);
        record("skip_conv1", &out7);
        let out8 = layer(6, out7)?.leaky_relu(LEAKY_SLOPE);
        record("skip_conv2", &out8);
        let fused = out8.concat_channels(out6)?;
        record("concat", &fused);
        let cost = layer(7, fused)?.sigmoid();
        record("head", &cost);
        Ok(Forward { cost, trace })
    }

    /// Inference: `[40, 28, 4]` grid in, `[40, 28]` costs in `(0, 1)` out.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor, ModelError> {
        let tape = Tape::new();
        let x = tape.constant(input.clone());
        let out = self.forward(&tape, x)?;
        let data = out.cost.to_tensor().into_data();
        Ok(Tensor::new(vec![INPUT_ROWS, INPUT_COLS], data)?)
    }

    pub fn named_params(&self) -> Vec<NamedTensor> {
        Self::param_names()
            .into_iter()
            .zip(&self.params)
            .map(|(name, tensor)| NamedTensor {
                name,
                tensor: tensor.clone(),
            })
            .collect()
    }

    /// Rebuild a model from named tensors, checking names and shapes.
    pub fn from_named(named: Vec<NamedTensor>) -> Result<Self, CheckpointError> {
        let template = Self::zeros();
        if named.len() != template.params.len() {
            return Err(CheckpointError::CountMismatch {
                expected: template.params.len(),
                found: named.len(),
            });
        }
        let names = Self::param_names();
        let mut params = Vec::with_capacity(named.len());
        for (index, ((nt, want_name), want)) in named.into_iter().zip(names).zip(&template.params).enumerate() {
            if nt.name != want_name {
                return Err(CheckpointError::NameMismatch {
                    index,
                    expected: want_name,
                    found: nt.name,
                });
            }
            if nt.tensor.shape() != want.shape() {
                return Err(CheckpointError::ShapeMismatch {
                    name: nt.name,
                    expected: want.shape().to_vec(),
                    found: nt.tensor.shape().to_vec(),
                });
            }
            params.push(nt.tensor);
        }
        let model = Self { params };
        debug_assert_eq!(model.num_scalars(), PARAM_COUNT);
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        checkpoint::save(path, &self.named_params())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_named(checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_input(seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = INPUT_ROWS * INPUT_COLS * INPUT_CHANNELS;
        Tensor::new(
            vec![INPUT_ROWS, INPUT_COLS, INPUT_CHANNELS],
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn parameter_count_matches_layer_table() {
        let total: usize = LAYERS.iter().map(ConvSpec::param_count).sum();
        assert_eq!(total, PARAM_COUNT);
        assert_eq!(CamelModel::init(0).num_scalars(), PARAM_COUNT);
    }

    #[test]
    fn zero_model_outputs_one_half_everywhere() {
        let out = CamelModel::zeros().predict(&Tensor::zeros(vec![40, 28, 4])).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn random_model_outputs_stay_in_open_unit_interval() {
        let model = CamelModel::init(3);
        let out = model.predict(&random_input(4)).unwrap();
        assert_eq!(out.shape(), [40, 28]);
        assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        assert_eq!(CamelModel::init(11), CamelModel::init(11));
        assert_ne!(CamelModel::init(11), CamelModel::init(12));
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::zeros(vec![40, 28, 3]));
        assert!(matches!(
            CamelModel::zeros().forward(&tape, x),
            Err(ModelError::InputShape(_))
        ));
    }

    #[test]
    fn deep_branch_ablation_still_produces_a_map() {
        let model = CamelModel::init(5);
        let tape = Tape::new();
        let params = model.bind(&tape, false);
        let x = tape.constant(random_input(6));
        let out = CamelModel::forward_with(&params, x, ForwardOptions { zero_deep_branch: true }).unwrap();
        assert_eq!(out.cost.shape(), [40, 28, 1]);
        assert!(out.cost.value().all_finite());
    }

    #[test]
    fn from_named_rejects_reshaped_parameter() {
        let mut named = CamelModel::init(1).named_params();
        named[2].tensor = Tensor::zeros(vec![3, 3, 64, 16]);
        assert!(matches!(
            CamelModel::from_named(named),
            Err(CheckpointError::ShapeMismatch { .. })
        ));
    }
}
