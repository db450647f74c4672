//! Finite-difference checks for every tape op and for the full training
//! loss.

use camel::model::{CamelModel, ForwardOptions};
use camel::nav::{soft_steering, NavContext};
use camel::tensor::gradcheck::{check_coordinates, check_directions, check_gradients};
use camel::tensor::{Result, Tape, Tensor, Var};
use rand::Rng;

use super::{rng, uniform_tensor};

type OpFn = for<'t> fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>;

pub struct OpCase {
    pub name: &'static str,
    /// Input shapes and the range each input is drawn from.
    pub inputs: Vec<(Vec<usize>, f64, f64)>,
    pub op: OpFn,
}

fn case(name: &'static str, inputs: &[(&[usize], f64, f64)], op: OpFn) -> OpCase {
    OpCase {
        name,
        inputs: inputs.iter().map(|&(s, lo, hi)| (s.to_vec(), lo, hi)).collect(),
        op,
    }
}

pub fn op_cases() -> Vec<OpCase> {
    vec![
        case(
            "conv2d_3x3",
            &[(&[5, 4, 3], -1.0, 1.0), (&[3, 3, 3, 2], -1.0, 1.0), (&[2], -1.0, 1.0)],
            |_, v| v[0].conv2d(v[1], v[2]),
        ),
        case(
            "conv2d_1x1",
            &[(&[4, 4, 2], -1.0, 1.0), (&[1, 1, 2, 3], -1.0, 1.0), (&[3], -1.0, 1.0)],
            |_, v| v[0].conv2d(v[1], v[2]),
        ),
        case("maxpool2d", &[(&[4, 6, 2], -1.0, 1.0)], |_, v| v[0].maxpool2d()),
        case("upsample2", &[(&[3, 2, 2], -1.0, 1.0)], |_, v| v[0].upsample2()),
        case("leaky_relu", &[(&[10], -1.0, 1.0)], |_, v| Ok(v[0].leaky_relu(0.01))),
        case(
            "concat_channels",
            &[(&[3, 2, 2], -1.0, 1.0), (&[3, 2, 3], -1.0, 1.0)],
            |_, v| v[0].concat_channels(v[1]),
        ),
        case("sigmoid", &[(&[8], -4.0, 4.0)], |_, v| Ok(v[0].sigmoid())),
        case("mse", &[(&[6], -1.0, 1.0), (&[6], -1.0, 1.0)], |_, v| v[0].mse(v[1])),
        case("softmin", &[(&[7], 0.0, 1.0)], |_, v| v[0].softmin(0.3)),
        case("gather", &[(&[6], -1.0, 1.0)], |_, v| v[0].gather(&[5, 0, 0, 3])),
        case("sum", &[(&[9], -1.0, 1.0)], |_, v| Ok(v[0].sum())),
        case("mean", &[(&[9], -1.0, 1.0)], |_, v| v[0].mean()),
        case("min", &[(&[9], -1.0, 1.0)], |_, v| v[0].min()),
        case("add", &[(&[5], -1.0, 1.0), (&[5], -1.0, 1.0)], |_, v| v[0].add(v[1])),
        case("mul", &[(&[5], -1.0, 1.0), (&[5], -1.0, 1.0)], |_, v| v[0].mul(v[1])),
        case("scale", &[(&[5], -1.0, 1.0)], |_, v| Ok(v[0].scale(-1.7))),
        case("mul_const", &[(&[4], -1.0, 1.0)], |_, v| v[0].mul_const(&[0.5, -2.0, 3.0, 0.0])),
        case("add_scalar", &[(&[5], -1.0, 1.0)], |_, v| Ok(v[0].add_scalar(0.3))),
        case("dot", &[(&[5], -1.0, 1.0), (&[5], -1.0, 1.0)], |_, v| v[0].dot(v[1])),
        case("atan2", &[(&[1], -1.5, 1.5), (&[1], -1.5, 1.5)], |_, v| v[0].atan2(v[1])),
        case("saturate", &[(&[8], -3.0, 3.0)], |_, v| Ok(v[0].saturate())),
        case(
            "stack",
            &[(&[1], -1.0, 1.0), (&[1], -1.0, 1.0), (&[1], -1.0, 1.0)],
            |t, v| t.stack(&[v[0], v[1], v[2], v[0]]),
        ),
    ]
}

/// Worst relative error of one op over `seeds` random draws. The scalar
/// checked is `sum(op(x) * r)` for a random weight vector `r`.
pub fn op_worst_error(case: &OpCase, seeds: u64, step: f64) -> f64 {
    (0..seeds)
        .map(|seed| {
            let mut g = rng(seed * 7919 + 17);
            let inputs: Vec<Tensor> = case
                .inputs
                .iter()
                .map(|(s, lo, hi)| {
                    let mut t = uniform_tensor(&mut g, s, *lo, *hi);
                    // Keep atan2 away from the origin, where it has no gradient.
                    if case.name == "atan2" && t.data()[0].abs() < 0.2 {
                        t.data_mut()[0] += 0.4_f64.copysign(t.data()[0]);
                    }
                    t
                })
                .collect();
            let out_len = {
                let tape = Tape::new();
                let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
                let len = (case.op)(&tape, &vars).unwrap().value().len();
                len
            };
            let weights: Vec<f64> = (0..out_len).map(|_| g.random_range(-1.0..1.0)).collect();
            let op = case.op;
            check_gradients(&inputs, step, move |t, v| Ok(op(t, v)?.mul_const(&weights)?.sum()))
                .unwrap()
                .relative_error()
        })
        .fold(0.0, f64::max)
}

/// Inputs for the end-to-end check: one grid followed by the parameters.
pub fn end_to_end_inputs(seed: u64) -> Vec<Tensor> {
    let mut g = rng(seed);
    let grid = uniform_tensor(&mut g, &[40, 28, 4], 0.0, 1.0);
    let model = CamelModel::init(seed);
    std::iter::once(grid).chain(model.params().iter().cloned()).collect()
}

/// `(soft_steering(model(grid)) - label)^2`, with the grid and every
/// parameter as inputs.
pub fn end_to_end_loss<'t>(tape: &'t Tape, v: &[Var<'t>], label: f64, nav: &NavContext) -> Result<Var<'t>> {
    let out = CamelModel::forward_with(&v[1..], v[0], ForwardOptions::default()).expect("model forward");
    let steer = soft_steering(out.cost, 40, 28, nav).expect("soft steering");
    steer.mse(tape.constant(Tensor::vector(vec![label])))
}

/// Relative errors of the end-to-end gradient along random directions and
/// at sampled coordinates of the grid and of every parameter tensor.
pub fn end_to_end_errors(seed: u64, directions: usize, coords_per_input: usize) -> (f64, f64) {
    let inputs = end_to_end_inputs(seed);
    let nav = NavContext::default();
    let label = 0.3;
    let mut g = rng(seed ^ 0xE2E);
    let dirs: Vec<Vec<Tensor>> = (0..directions)
        .map(|_| inputs.iter().map(|t| uniform_tensor(&mut g, t.shape(), -1.0, 1.0)).collect())
        .collect();
    let dir = check_directions(&inputs, &dirs, 1e-6, move |t, v| end_to_end_loss(t, v, label, &nav))
        .unwrap()
        .relative_error();
    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| {
            let n = t.len();
            (0..coords_per_input.min(n)).map(move |j| (i, (j * 7919 + i * 131) % n))
        })
        .collect();
    let coord = check_coordinates(&inputs, &coords, 1e-6, move |t, v| end_to_end_loss(t, v, label, &nav))
        .unwrap()
        .relative_error();
    (dir, coord)
}
