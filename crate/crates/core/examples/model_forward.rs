//! The cost-map network: layer shapes, parameter count, inference time.

use std::time::Instant;

use camel::model::{CamelModel, LAYERS, PARAM_COUNT};
use camel::tensor::{Tape, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = CamelModel::init(0);
    println!("{} parameters (expected {PARAM_COUNT})", model.num_scalars());
    for spec in LAYERS {
        println!(
            "  {:<11} {}x{} {:>2} -> {:<2} {:>6} params",
            spec.name,
            spec.kernel,
            spec.kernel,
            spec.c_in,
            spec.c_out,
            spec.param_count()
        );
    }

    let data = (0..40 * 28 * 4).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
    let input = Tensor::new(vec![40, 28, 4], data)?;
    let tape = Tape::new();
    let out = model.forward(&tape, tape.constant(input.clone()))?;
    for (label, shape) in &out.trace {
        println!("  {label:<11} {shape:?}");
    }

    model.predict(&input)?;
    let runs = 20;
    let t = Instant::now();
    for _ in 0..runs {
        model.predict(&input)?;
    }
    println!("{:.2} ms per forward pass", t.elapsed().as_secs_f64() * 1e3 / runs as f64);
    Ok(())
}
