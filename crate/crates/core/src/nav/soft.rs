use std::f64::consts::FRAC_2_PI;

use super::{cell_offset, kernel_weights, mirror_index, CostMap, KernelLayout, NavContext, NavError, Result};
use crate::tensor::{Tape, Var};

/// Where soft steering angles are measured from: the center of the near row,
/// on the vehicle axis.
const REF_FWD: f64 = 0.5;

/// Differentiable steering estimate for a cost map recorded on a tape.
///
/// Per kernel, the risk is weight times (mean + min) plus a smooth penalty
/// once the mean passes the obstacle threshold, and the kernel votes for the
/// direction of its softmin-weighted cell centroid. Votes are averaged with
/// softmin weights over the risks, and the result is saturated into
/// `(-1, 1)`. Both softmins use temperature `ctx.tau`; as it shrinks the
/// estimate approaches steering straight at the hard pipeline's local goal.
///
/// The value is made exactly odd under left-right mirroring by averaging
/// with the negated estimate for the mirrored map.
pub fn soft_steering<'t>(cost: Var<'t>, rows: usize, cols: usize, ctx: &NavContext) -> Result<Var<'t>> {
    ctx.validate()?;
    let shape = cost.shape();
    if shape.iter().product::<usize>() != rows * cols || shape.first() != Some(&rows) {
        return Err(NavError::Shape(format!("cost tensor {shape:?} is not {rows}x{cols}")));
    }
    let layout = KernelLayout::new(rows, cols)?;
    let mirror: Vec<usize> = (0..rows * cols).map(|i| mirror_index(cols, i)).collect();
    let direct = one_sided(cost, &layout, ctx.bearing_to_goal, ctx)?;
    let mirrored = one_sided(cost.gather(&mirror)?, &layout, -ctx.bearing_to_goal, ctx)?;
    Ok(direct.add(mirrored.scale(-1.0))?.scale(0.5).saturate())
}

fn one_sided<'t>(cost: Var<'t>, layout: &KernelLayout, bearing: f64, ctx: &NavContext) -> Result<Var<'t>> {
    let tape = cost.tape();
    let weights = kernel_weights(layout, bearing, ctx.w_k);
    let (mut trav, mut means, mut votes) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..layout.count() {
        let cells = cost.gather(&layout.indices(k))?;
        let mean = cells.mean()?;
        trav.push(mean.add(cells.min()?)?);
        means.push(mean);
        let (fwd, lat): (Vec<f64>, Vec<f64>) = layout
            .cells(k)
            .map(|(r, c)| cell_offset(layout.cols, r, c))
            .unzip();
        let p = cells.softmin(ctx.tau)?;
        let loc_fwd = p.mul_const(&fwd)?.sum().add_scalar(-REF_FWD);
        let loc_lat = p.mul_const(&lat)?.sum();
        votes.push(loc_lat.atan2(loc_fwd)?.scale(FRAC_2_PI));
    }
    let penalty = tape
        .stack(&means)?
        .add_scalar(-ctx.obstacle_threshold)
        .scale(1.0 / ctx.tau)
        .sigmoid()
        .scale(ctx.obstacle_penalty);
    let risk = tape.stack(&trav)?.mul_const(&weights)?.add(penalty)?;
    Ok(risk.softmin(ctx.tau)?.dot(tape.stack(&votes)?)?)
}

/// [`soft_steering`] evaluated on a constant map.
pub fn soft_steering_value(map: &CostMap, ctx: &NavContext) -> Result<f64> {
    let tape = Tape::new();
    let x = tape.constant(map.to_tensor());
    Ok(soft_steering(x, map.rows(), map.cols(), ctx)?.item())
}
