//! Reverse-mode gradients on the tape, checked against central differences.

use camel::tensor::gradcheck::check_gradients;
use camel::tensor::{Tape, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A 3x3 convolution followed by a leaky ReLU, max pooling and a sigmoid.
    let x = Tensor::new(vec![4, 4, 1], (0..16).map(|i| (i as f64 * 0.7).sin()).collect())?;
    let k = Tensor::new(vec![3, 3, 1, 2], (0..18).map(|i| (i as f64 * 1.3).cos() * 0.5).collect())?;
    let b = Tensor::vector(vec![0.1, -0.2]);

    let tape = Tape::new();
    let (xv, kv, bv) = (tape.leaf(x.clone(), true), tape.leaf(k.clone(), true), tape.leaf(b.clone(), true));
    let y = xv.conv2d(kv, bv)?.leaky_relu(0.01).maxpool2d()?.sigmoid().sum();
    tape.backward(y)?;
    println!("loss {:.6}, {} tape nodes", y.item(), tape.len());
    println!("d loss / d bias = {:?}", bv.grad().unwrap().data());

    let pairs = check_gradients(&[x, k, b], 1e-6, |_, v| {
        Ok(v[0].conv2d(v[1], v[2])?.leaky_relu(0.01).maxpool2d()?.sigmoid().sum())
    })?;
    println!(
        "{} coordinates checked, relative error {:.2e}",
        pairs.analytic.len(),
        pairs.relative_error()
    );
    Ok(())
}
