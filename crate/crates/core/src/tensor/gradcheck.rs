//! Central finite differences against the tape's gradients.

use super::{Result, Tape, Tensor, TensorError, Var};

/// Tape gradient and finite-difference estimate, side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct GradPairs {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradPairs {
    /// `|a - n| / (|a| + |n|)` in the Euclidean norm; zero when both vanish.
    pub fn relative_error(&self) -> f64 {
        let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
        let diff = norm(&mut self.analytic.iter().zip(&self.numeric).map(|(a, n)| a - n));
        let scale = norm(&mut self.analytic.iter().copied()) + norm(&mut self.numeric.iter().copied());
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }
}

fn evaluate<F>(inputs: &[Tensor], f: &F) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&tape, &vars)?;
    if !out.value().is_scalar() {
        return Err(TensorError::NonScalarLoss(out.shape()));
    }
    Ok(out.item())
}

/// Tape gradients of the scalar `f` with respect to every input.
pub fn analytic_gradients<F>(inputs: &[Tensor], f: &F) -> Result<Vec<Tensor>>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&tape, &vars)?;
    tape.backward(out)?;
    Ok(vars
        .iter()
        .map(|v| v.grad().unwrap_or_else(|| Tensor::zeros(v.shape())))
        .collect())
}

/// Compare gradients at the listed `(input, flat index)` coordinates.
pub fn check_coordinates<F>(inputs: &[Tensor], coords: &[(usize, usize)], step: f64, f: F) -> Result<GradPairs>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let grads = analytic_gradients(inputs, &f)?;
    let mut work = inputs.to_vec();
    let mut pairs = GradPairs {
        analytic: Vec::with_capacity(coords.len()),
        numeric: Vec::with_capacity(coords.len()),
    };
    for &(i, j) in coords {
        let x = work[i].data()[j];
        work[i].data_mut()[j] = x + step;
        let up = evaluate(&work, &f)?;
        work[i].data_mut()[j] = x - step;
        let down = evaluate(&work, &f)?;
        work[i].data_mut()[j] = x;
        pairs.analytic.push(grads[i].data()[j]);
        pairs.numeric.push((up - down) / (2.0 * step));
    }
    Ok(pairs)
}

/// Compare gradients at every coordinate of every input.
pub fn check_gradients<F>(inputs: &[Tensor], step: f64, f: F) -> Result<GradPairs>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.len()).map(move |j| (i, j)))
        .collect();
    check_coordinates(inputs, &coords, step, f)
}

/// Compare directional derivatives along each direction, given as one
/// tensor per input.
pub fn check_directions<F>(inputs: &[Tensor], directions: &[Vec<Tensor>], step: f64, f: F) -> Result<GradPairs>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let grads = analytic_gradients(inputs, &f)?;
    let shifted = |dir: &[Tensor], s: f64| -> Vec<Tensor> {
        inputs
            .iter()
            .zip(dir)
            .map(|(x, d)| {
                let data = x.data().iter().zip(d.data()).map(|(a, b)| a + s * b).collect();
                Tensor::new(x.shape().to_vec(), data).expect("same shape")
            })
            .collect()
    };
    let mut pairs = GradPairs {
        analytic: Vec::with_capacity(directions.len()),
        numeric: Vec::with_capacity(directions.len()),
    };
    for dir in directions {
        if dir.len() != inputs.len() || dir.iter().zip(inputs).any(|(d, x)| d.shape() != x.shape()) {
            return Err(TensorError::Shape {
                op: "check_directions",
                detail: "direction does not match the inputs".into(),
            });
        }
        let analytic = grads
            .iter()
            .zip(dir)
            .map(|(g, d)| g.data().iter().zip(d.data()).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let up = evaluate(&shifted(dir, step), &f)?;
        let down = evaluate(&shifted(dir, -step), &f)?;
        pairs.analytic.push(analytic);
        pairs.numeric.push((up - down) / (2.0 * step));
    }
    Ok(pairs)
}
