use super::gemm::gemm;
use super::tape::{Node, Tape, Var};
use super::{shape_err, Result, Tensor, TensorError};

/// Recorded operation together with whatever the backward rule needs.
pub(crate) enum Op {
    Leaf,
    Conv2d {
        input: usize,
        kernel: usize,
        bias: usize,
        geom: ConvGeom,
        /// im2col matrix `[h*w, k*k*c_in]`; `None` for 1x1 kernels, where
        /// the input itself is the column matrix.
        cols: Option<Vec<f64>>,
    },
    MaxPool2 {
        input: usize,
        argmax: Vec<usize>,
    },
    Upsample2 {
        input: usize,
        rows: usize,
        cols: usize,
        channels: usize,
    },
    LeakyRelu {
        input: usize,
        slope: f64,
    },
    ConcatChannels {
        a: usize,
        b: usize,
        ca: usize,
        cb: usize,
    },
    Sigmoid {
        input: usize,
    },
    Mse {
        pred: usize,
        target: usize,
    },
    Softmin {
        input: usize,
        temperature: f64,
    },
    Gather {
        input: usize,
        indices: Vec<usize>,
    },
    Sum {
        input: usize,
    },
    Mean {
        input: usize,
    },
    Min {
        input: usize,
        argmin: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Scale {
        input: usize,
        factor: f64,
    },
    MulConst {
        input: usize,
        factors: Vec<f64>,
    },
    AddScalar {
        input: usize,
    },
    Stack {
        inputs: Vec<usize>,
    },
    Atan2 {
        y: usize,
        x: usize,
    },
    Saturate {
        input: usize,
    },
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    rows: usize,
    cols: usize,
    c_in: usize,
    c_out: usize,
    k: usize,
}

impl ConvGeom {
    fn patch_len(&self) -> usize {
        self.k * self.k * self.c_in
    }

    /// Source pixel for kernel tap `(di, dj)` at output `(i, j)`, with
    /// replicate (edge-clamp) padding.
    #[inline]
    fn source(&self, i: usize, j: usize, di: usize, dj: usize) -> usize {
        let pad = (self.k / 2) as isize;
        let r = (i as isize + di as isize - pad).clamp(0, self.rows as isize - 1) as usize;
        let c = (j as isize + dj as isize - pad).clamp(0, self.cols as isize - 1) as usize;
        r * self.cols + c
    }

    fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let plen = self.patch_len();
        let mut out = vec![0.0; self.rows * self.cols * plen];
        for i in 0..self.rows {
            for j in 0..self.cols {
                let row = &mut out[(i * self.cols + j) * plen..][..plen];
                for di in 0..self.k {
                    for dj in 0..self.k {
                        let src = self.source(i, j, di, dj) * self.c_in;
                        let dst = (di * self.k + dj) * self.c_in;
                        row[dst..dst + self.c_in].copy_from_slice(&input[src..src + self.c_in]);
                    }
                }
            }
        }
        out
    }

    fn col2im(&self, dcols: &[f64]) -> Vec<f64> {
        let plen = self.patch_len();
        let mut out = vec![0.0; self.rows * self.cols * self.c_in];
        for i in 0..self.rows {
            for j in 0..self.cols {
                let row = &dcols[(i * self.cols + j) * plen..][..plen];
                for di in 0..self.k {
                    for dj in 0..self.k {
                        let dst = self.source(i, j, di, dj) * self.c_in;
                        let src = (di * self.k + dj) * self.c_in;
                        out[dst..dst + self.c_in]
                            .iter_mut()
                            .zip(&row[src..src + self.c_in])
                            .for_each(|(o, g)| *o += g);
                    }
                }
            }
        }
        out
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmin probabilities `exp(-v/t) / sum exp(-v/t)`, shifted by the minimum.
pub(crate) fn softmin_values(values: &[f64], temperature: f64) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut p: Vec<f64> = values
        .iter()
        .map(|v| (-(v - lo) / temperature).exp())
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

const SATURATE_ORDER: i32 = 16;

/// Smooth clamp to (-1, 1): `x / (1 + x^16)^(1/16)`. Near-identity on
/// `|x| <= 0.8`.
pub(crate) fn saturate_value(x: f64) -> f64 {
    x / (1.0 + x.powi(SATURATE_ORDER)).powf(1.0 / SATURATE_ORDER as f64)
}

fn saturate_derivative(x: f64) -> f64 {
    (1.0 + x.powi(SATURATE_ORDER)).powf(-(SATURATE_ORDER as f64 + 1.0) / SATURATE_ORDER as f64)
}

impl<'t> Var<'t> {
    fn unary(&self, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.requires_grad();
        self.tape.push(value, rg, op)
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "operands recorded on different tapes"
        );
    }

    /// Stride-1 convolution with replicate padding. `self` is
    /// `[rows, cols, c_in]`, `kernel` is `[k, k, c_in, c_out]` with odd `k`,
    /// `bias` is `[c_out]`.
    pub fn conv2d(&self, kernel: Var<'t>, bias: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&kernel);
        self.same_tape(&bias);
        let (input_v, kernel_v, bias_v) = (self.value(), kernel.value(), bias.value());
        let (is, ks) = (input_v.shape(), kernel_v.shape());
        if is.len() != 3 {
            return Err(shape_err("conv2d", format!("input must be [rows, cols, c], got {is:?}")));
        }
        if ks.len() != 4 || ks[0] != ks[1] {
            return Err(shape_err("conv2d", format!("kernel must be [k, k, c_in, c_out], got {ks:?}")));
        }
        if ks[0] % 2 == 0 {
            return Err(TensorError::Argument {
                op: "conv2d",
                detail: format!("kernel size {} is even", ks[0]),
            });
        }
        if ks[2] != is[2] {
            return Err(shape_err(
                "conv2d",
                format!("input has {} channels, kernel expects {}", is[2], ks[2]),
            ));
        }
        if bias_v.len() != ks[3] {
            return Err(shape_err(
                "conv2d",
                format!("bias has {} entries, kernel has {} outputs", bias_v.len(), ks[3]),
            ));
        }
        let geom = ConvGeom {
            rows: is[0],
            cols: is[1],
            c_in: is[2],
            c_out: ks[3],
            k: ks[0],
        };
        let m = geom.rows * geom.cols;
        let cols = (geom.k > 1).then(|| geom.im2col(input_v.data()));
        let lhs = cols.as_deref().unwrap_or(input_v.data());
        let mut out = Vec::with_capacity(m * geom.c_out);
        for _ in 0..m {
            out.extend_from_slice(bias_v.data());
        }
        gemm(m, geom.patch_len(), geom.c_out, lhs, false, kernel_v.data(), false, &mut out, 1.0);
        let rg = self.requires_grad() || kernel.requires_grad() || bias.requires_grad();
        // Keep the column matrix only when the kernel needs its gradient.
        let cols = if kernel.requires_grad() { cols } else { None };
        let value = Tensor::new(vec![geom.rows, geom.cols, geom.c_out], out)?;
        drop((input_v, kernel_v, bias_v));
        Ok(self.tape.push(
            value,
            rg,
            Op::Conv2d {
                input: self.id,
                kernel: kernel.id,
                bias: bias.id,
                geom,
                cols,
            },
        ))
    }

    /// 2x2 max pooling with stride 2. Ties go to the first maximum in
    /// row-major window order.
    pub fn maxpool2d(&self) -> Result<Var<'t>> {
        let v = self.value();
        let s = v.shape();
        if s.len() != 3 || !s[0].is_multiple_of(2) || !s[1].is_multiple_of(2) {
            return Err(shape_err("maxpool2d", format!("needs [even, even, c], got {s:?}")));
        }
        let (rows, cols, ch) = (s[0], s[1], s[2]);
        let (orows, ocols) = (rows / 2, cols / 2);
        let data = v.data();
        let mut out = Vec::with_capacity(orows * ocols * ch);
        let mut argmax = Vec::with_capacity(orows * ocols * ch);
        for i in 0..orows {
            for j in 0..ocols {
                for c in 0..ch {
                    let mut best = usize::MAX;
                    for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let idx = ((2 * i + di) * cols + 2 * j + dj) * ch + c;
                        if best == usize::MAX || data[idx] > data[best] {
                            best = idx;
                        }
                    }
                    out.push(data[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new(vec![orows, ocols, ch], out)?;
        drop(v);
        Ok(self.unary(value, Op::MaxPool2 { input: self.id, argmax }))
    }

    /// Nearest-neighbour upsampling by 2 in both spatial axes.
    pub fn upsample2(&self) -> Result<Var<'t>> {
        let v = self.value();
        let s = v.shape();
        if s.len() != 3 {
            return Err(shape_err("upsample2", format!("needs [rows, cols, c], got {s:?}")));
        }
        let (rows, cols, ch) = (s[0], s[1], s[2]);
        let data = v.data();
        let mut out = vec![0.0; 4 * rows * cols * ch];
        for r in 0..2 * rows {
            for c in 0..2 * cols {
                let src = ((r / 2) * cols + c / 2) * ch;
                let dst = (r * 2 * cols + c) * ch;
                out[dst..dst + ch].copy_from_slice(&data[src..src + ch]);
            }
        }
        let value = Tensor::new(vec![2 * rows, 2 * cols, ch], out)?;
        drop(v);
        Ok(self.unary(
            value,
            Op::Upsample2 {
                input: self.id,
                rows,
                cols,
                channels: ch,
            },
        ))
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<'t> {
        let v = self.value();
        let data = v.data().iter().map(|&x| if x >= 0.0 { x } else { slope * x }).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        drop(v);
        self.unary(value, Op::LeakyRelu { input: self.id, slope })
    }

    /// Channels of `self` followed by channels of `other`.
    pub fn concat_channels(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[..2] != sb[..2] {
            return Err(shape_err("concat_channels", format!("{sa:?} vs {sb:?}")));
        }
        let (ca, cb) = (sa[2], sb[2]);
        let cells = sa[0] * sa[1];
        let mut out = Vec::with_capacity(cells * (ca + cb));
        for p in 0..cells {
            out.extend_from_slice(&a.data()[p * ca..(p + 1) * ca]);
            out.extend_from_slice(&b.data()[p * cb..(p + 1) * cb]);
        }
        let value = Tensor::new(vec![sa[0], sa[1], ca + cb], out)?;
        drop((a, b));
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.tape.push(
            value,
            rg,
            Op::ConcatChannels {
                a: self.id,
                b: other.id,
                ca,
                cb,
            },
        ))
    }

    pub fn sigmoid(&self) -> Var<'t> {
        let v = self.value();
        let data = v.data().iter().map(|&x| sigmoid(x)).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        drop(v);
        self.unary(value, Op::Sigmoid { input: self.id })
    }

    /// Mean squared error `(1/n) sum (pred - target)^2` over all elements.
    pub fn mse(&self, target: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&target);
        let (p, t) = (self.value(), target.value());
        if p.len() != t.len() {
            return Err(shape_err("mse", format!("{} vs {} elements", p.len(), t.len())));
        }
        if p.is_empty() {
            return Err(TensorError::Argument {
                op: "mse",
                detail: "empty input".into(),
            });
        }
        let n = p.len() as f64;
        let loss = p.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        drop((p, t));
        let rg = self.requires_grad() || target.requires_grad();
        Ok(self.tape.push(
            Tensor::scalar(loss),
            rg,
            Op::Mse {
                pred: self.id,
                target: target.id,
            },
        ))
    }

    /// `p_i = exp(-v_i / t) / sum_j exp(-v_j / t)` over all elements.
    pub fn softmin(&self, temperature: f64) -> Result<Var<'t>> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(TensorError::Argument {
                op: "softmin",
                detail: format!("temperature must be positive, got {temperature}"),
            });
        }
        let v = self.value();
        if v.is_empty() {
            return Err(TensorError::Argument {
                op: "softmin",
                detail: "empty input".into(),
            });
        }
        let value = Tensor::new(v.shape().to_vec(), softmin_values(v.data(), temperature))?;
        drop(v);
        Ok(self.unary(
            value,
            Op::Softmin {
                input: self.id,
                temperature,
            },
        ))
    }

    /// Flat-index gather into a 1-D tensor.
    pub fn gather(&self, indices: &[usize]) -> Result<Var<'t>> {
        let v = self.value();
        if let Some(&bad) = indices.iter().find(|&&i| i >= v.len()) {
            return Err(shape_err("gather", format!("index {bad} out of {} elements", v.len())));
        }
        let data = indices.iter().map(|&i| v.data()[i]).collect();
        drop(v);
        Ok(self.unary(
            Tensor::vector(data),
            Op::Gather {
                input: self.id,
                indices: indices.to_vec(),
            },
        ))
    }

    pub fn sum(&self) -> Var<'t> {
        let total = self.value().data().iter().sum();
        self.unary(Tensor::scalar(total), Op::Sum { input: self.id })
    }

    pub fn mean(&self) -> Result<Var<'t>> {
        let v = self.value();
        if v.is_empty() {
            return Err(TensorError::Argument {
                op: "mean",
                detail: "empty input".into(),
            });
        }
        let m = v.data().iter().sum::<f64>() / v.len() as f64;
        drop(v);
        Ok(self.unary(Tensor::scalar(m), Op::Mean { input: self.id }))
    }

    /// Hard minimum; the gradient goes to the first minimal element.
    pub fn min(&self) -> Result<Var<'t>> {
        let v = self.value();
        if v.is_empty() {
            return Err(TensorError::Argument {
                op: "min",
                detail: "empty input".into(),
            });
        }
        let (argmin, lo) = v
            .data()
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, x)| if x < best.1 { (i, x) } else { best });
        drop(v);
        Ok(self.unary(Tensor::scalar(lo), Op::Min { input: self.id, argmin }))
    }

    fn binary_same_len(&self, other: &Var<'t>, op: &'static str) -> Result<()> {
        self.same_tape(other);
        let (a, b) = (self.value().len(), other.value().len());
        if a != b {
            return Err(shape_err(op, format!("{a} vs {b} elements")));
        }
        Ok(())
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary_same_len(&other, "add")?;
        let data = self
            .value()
            .data()
            .iter()
            .zip(other.value().data())
            .map(|(a, b)| a + b)
            .collect();
        let value = Tensor::new(self.shape(), data)?;
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.tape.push(value, rg, Op::Add { a: self.id, b: other.id }))
    }

    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary_same_len(&other, "mul")?;
        let data = self
            .value()
            .data()
            .iter()
            .zip(other.value().data())
            .map(|(a, b)| a * b)
            .collect();
        let value = Tensor::new(self.shape(), data)?;
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.tape.push(value, rg, Op::Mul { a: self.id, b: other.id }))
    }

    pub fn scale(&self, factor: f64) -> Var<'t> {
        let v = self.value();
        let data = v.data().iter().map(|x| x * factor).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        drop(v);
        self.unary(value, Op::Scale { input: self.id, factor })
    }

    /// Elementwise product with a constant vector.
    pub fn mul_const(&self, factors: &[f64]) -> Result<Var<'t>> {
        let v = self.value();
        if v.len() != factors.len() {
            return Err(shape_err("mul_const", format!("{} vs {} elements", v.len(), factors.len())));
        }
        let data = v.data().iter().zip(factors).map(|(a, b)| a * b).collect();
        let value = Tensor::new(v.shape().to_vec(), data)?;
        drop(v);
        Ok(self.unary(
            value,
            Op::MulConst {
                input: self.id,
                factors: factors.to_vec(),
            },
        ))
    }

    pub fn add_scalar(&self, offset: f64) -> Var<'t> {
        let v = self.value();
        let data = v.data().iter().map(|x| x + offset).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        drop(v);
        self.unary(value, Op::AddScalar { input: self.id })
    }

    /// `sum_i self_i * other_i` as a scalar.
    pub fn dot(&self, other: Var<'t>) -> Result<Var<'t>> {
        Ok(self.mul(other)?.sum())
    }

    /// Four-quadrant arctangent of two scalars, `atan2(self, x)`.
    pub fn atan2(&self, x: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&x);
        let (yv, xv) = (self.value(), x.value());
        if !yv.is_scalar() || !xv.is_scalar() {
            return Err(shape_err("atan2", "operands must be scalars"));
        }
        let value = Tensor::scalar(yv.item().atan2(xv.item()));
        drop((yv, xv));
        let rg = self.requires_grad() || x.requires_grad();
        Ok(self.tape.push(value, rg, Op::Atan2 { y: self.id, x: x.id }))
    }

    /// Smooth saturation into (-1, 1), close to the identity well inside.
    pub fn saturate(&self) -> Var<'t> {
        let v = self.value();
        let data = v.data().iter().map(|&x| saturate_value(x)).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        drop(v);
        self.unary(value, Op::Saturate { input: self.id })
    }
}

impl Tape {
    /// Stack scalars into a 1-D tensor.
    pub fn stack<'t>(&'t self, items: &[Var<'t>]) -> Result<Var<'t>> {
        let mut data = Vec::with_capacity(items.len());
        let mut rg = false;
        for v in items {
            assert!(std::ptr::eq(v.tape, self), "operand recorded on a different tape");
            let val = v.value();
            if !val.is_scalar() {
                return Err(shape_err("stack", format!("non-scalar operand {:?}", val.shape())));
            }
            data.push(val.item());
            rg |= v.requires_grad();
        }
        Ok(self.push(
            Tensor::vector(data),
            rg,
            Op::Stack {
                inputs: items.iter().map(|v| v.id).collect(),
            },
        ))
    }
}

/// Gradient contributions of node `id` to its inputs, given its output
/// gradient.
pub(crate) fn backward_op(nodes: &[Node], id: usize, grad: &[f64]) -> Vec<(usize, Vec<f64>)> {
    let node = &nodes[id];
    let needs = |src: usize| nodes[src].requires_grad;
    let mut out = Vec::new();
    match &node.op {
        Op::Leaf => {}
        Op::Conv2d {
            input,
            kernel,
            bias,
            geom,
            cols,
        } => {
            let m = geom.rows * geom.cols;
            let plen = geom.patch_len();
            if needs(*bias) {
                let mut db = vec![0.0; geom.c_out];
                for row in grad.chunks_exact(geom.c_out) {
                    db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                }
                out.push((*bias, db));
            }
            if needs(*kernel) {
                let lhs = cols.as_deref().unwrap_or(nodes[*input].value.data());
                let mut dk = vec![0.0; plen * geom.c_out];
                gemm(plen, m, geom.c_out, lhs, true, grad, false, &mut dk, 0.0);
                out.push((*kernel, dk));
            }
            if needs(*input) {
                let mut dcols = vec![0.0; m * plen];
                gemm(m, geom.c_out, plen, grad, false, nodes[*kernel].value.data(), true, &mut dcols, 0.0);
                let dinput = if geom.k > 1 { geom.col2im(&dcols) } else { dcols };
                out.push((*input, dinput));
            }
        }
        Op::MaxPool2 { input, argmax } => {
            let mut d = vec![0.0; nodes[*input].value.len()];
            for (&src, g) in argmax.iter().zip(grad) {
                d[src] += g;
            }
            out.push((*input, d));
        }
        Op::Upsample2 {
            input,
            rows,
            cols,
            channels,
        } => {
            let ch = *channels;
            let mut d = vec![0.0; rows * cols * ch];
            for r in 0..2 * rows {
                for c in 0..2 * cols {
                    let dst = ((r / 2) * cols + c / 2) * ch;
                    let src = (r * 2 * cols + c) * ch;
                    d[dst..dst + ch]
                        .iter_mut()
                        .zip(&grad[src..src + ch])
                        .for_each(|(a, g)| *a += g);
                }
            }
            out.push((*input, d));
        }
        Op::LeakyRelu { input, slope } => {
            let x = nodes[*input].value.data();
            let d = x
                .iter()
                .zip(grad)
                .map(|(&x, g)| if x >= 0.0 { *g } else { slope * g })
                .collect();
            out.push((*input, d));
        }
        Op::ConcatChannels { a, b, ca, cb } => {
            let w = ca + cb;
            let mut da = Vec::with_capacity(grad.len() / w * ca);
            let mut db = Vec::with_capacity(grad.len() / w * cb);
            for cell in grad.chunks_exact(w) {
                da.extend_from_slice(&cell[..*ca]);
                db.extend_from_slice(&cell[*ca..]);
            }
            out.push((*a, da));
            out.push((*b, db));
        }
        Op::Sigmoid { input } => {
            let y = node.value.data();
            let d = y.iter().zip(grad).map(|(s, g)| s * (1.0 - s) * g).collect();
            out.push((*input, d));
        }
        Op::Mse { pred, target } => {
            let (p, t) = (nodes[*pred].value.data(), nodes[*target].value.data());
            let scale = 2.0 * grad[0] / p.len() as f64;
            let dp: Vec<f64> = p.iter().zip(t).map(|(a, b)| scale * (a - b)).collect();
            let dt = dp.iter().map(|x| -x).collect();
            out.push((*pred, dp));
            out.push((*target, dt));
        }
        Op::Softmin { input, temperature } => {
            let p = node.value.data();
            let weighted: f64 = p.iter().zip(grad).map(|(p, g)| p * g).sum();
            let d = p
                .iter()
                .zip(grad)
                .map(|(p, g)| -p * (g - weighted) / temperature)
                .collect();
            out.push((*input, d));
        }
        Op::Gather { input, indices } => {
            let mut d = vec![0.0; nodes[*input].value.len()];
            for (&i, g) in indices.iter().zip(grad) {
                d[i] += g;
            }
            out.push((*input, d));
        }
        Op::Sum { input } => {
            out.push((*input, vec![grad[0]; nodes[*input].value.len()]));
        }
        Op::Mean { input } => {
            let n = nodes[*input].value.len();
            out.push((*input, vec![grad[0] / n as f64; n]));
        }
        Op::Min { input, argmin } => {
            let mut d = vec![0.0; nodes[*input].value.len()];
            d[*argmin] = grad[0];
            out.push((*input, d));
        }
        Op::Add { a, b } => {
            out.push((*a, grad.to_vec()));
            out.push((*b, grad.to_vec()));
        }
        Op::Mul { a, b } => {
            let (x, y) = (nodes[*a].value.data(), nodes[*b].value.data());
            out.push((*a, y.iter().zip(grad).map(|(y, g)| y * g).collect()));
            out.push((*b, x.iter().zip(grad).map(|(x, g)| x * g).collect()));
        }
        Op::Scale { input, factor } => {
            out.push((*input, grad.iter().map(|g| g * factor).collect()));
        }
        Op::MulConst { input, factors } => {
            out.push((*input, grad.iter().zip(factors).map(|(g, f)| g * f).collect()));
        }
        Op::AddScalar { input } => {
            out.push((*input, grad.to_vec()));
        }
        Op::Stack { inputs } => {
            for (&src, g) in inputs.iter().zip(grad) {
                out.push((src, vec![*g]));
            }
        }
        Op::Atan2 { y, x } => {
            let (yv, xv) = (nodes[*y].value.item(), nodes[*x].value.item());
            let r2 = xv * xv + yv * yv;
            out.push((*y, vec![grad[0] * xv / r2]));
            out.push((*x, vec![-grad[0] * yv / r2]));
        }
        Op::Saturate { input } => {
            let x = nodes[*input].value.data();
            let d = x.iter().zip(grad).map(|(&x, g)| saturate_derivative(x) * g).collect();
            out.push((*input, d));
        }
    }
    out.retain(|(src, _)| needs(*src));
    out
}
