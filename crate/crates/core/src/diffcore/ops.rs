use std::fmt;
use std::sync::Arc;

use super::conv::{conv2d_backward, conv2d_forward, ConvDims};
use super::fft::fft2c_planar;
use super::{complex_dims, Array, DiffError};

/// A fixed linear map usable as a graph primitive.
///
/// The backward pass applies [`LinearOperator::adjoint`] to the upstream
/// gradient, so `adjoint` must be the exact transpose of `apply` under the
/// real inner product.
pub trait LinearOperator: Send + Sync {
    fn name(&self) -> &'static str;
    fn input_shape(&self) -> Vec<usize>;
    fn output_shape(&self) -> Vec<usize>;
    fn apply(&self, x: &Array) -> Array;
    fn adjoint(&self, y: &Array) -> Array;
}

/// Primitive operations recorded on the graph.
#[derive(Clone)]
pub enum Op {
    Constant,
    Parameter,
    Add,
    Sub,
    /// Elementwise product.
    Mul,
    /// Multiplication by a fixed constant.
    Scale(f64),
    /// Array times a scalar node: inputs `(array, scalar)`.
    MulScalar,
    /// Scalar division: inputs `(numerator, denominator)`.
    Div,
    Exp,
    /// Inputs `(image [cin, h, w], kernel [cout, cin, kh, kw])`.
    Conv2d,
    /// Inputs `(x [c, h, w], bias [c])`.
    BiasAdd,
    Relu,
    Fft2,
    Ifft2,
    /// Complex product `a ⊙ b` on planar complex arrays of equal shape.
    CMul,
    /// Complex product `a ⊙ conj(b)`.
    CMulConj,
    /// Zeroes every column (last axis) whose flag is false.
    ColumnMask(Arc<Vec<bool>>),
    /// Real inner product of two arrays of equal shape.
    Dot,
    Sum,
    L2Norm,
    /// Sum of complex moduli over a planar complex array.
    L1Complex,
    /// Stacks `n` copies along a new leading axis.
    RepeatLeading(usize),
    /// Sums over the leading axis.
    SumLeading,
    Linear(Arc<dyn LinearOperator>),
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Linear(l) => write!(f, "Linear({})", l.name()),
            Op::ColumnMask(m) => write!(f, "ColumnMask({} cols)", m.len()),
            Op::Scale(c) => write!(f, "Scale({c})"),
            Op::RepeatLeading(n) => write!(f, "RepeatLeading({n})"),
            other => f.write_str(other.name()),
        }
    }
}

fn mismatch(op: &'static str, detail: String) -> DiffError {
    DiffError::ShapeMismatch { op, detail }
}

fn expect_arity(op: &'static str, inputs: &[&Array], n: usize) -> Result<(), DiffError> {
    if inputs.len() != n {
        return Err(mismatch(op, format!("expected {n} inputs, got {}", inputs.len())));
    }
    Ok(())
}

fn same_shape(op: &'static str, a: &Array, b: &Array) -> Result<(), DiffError> {
    if a.shape() != b.shape() {
        return Err(mismatch(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn expect_scalar(op: &'static str, a: &Array) -> Result<(), DiffError> {
    if a.len() != 1 {
        return Err(mismatch(op, format!("expected scalar, got {:?}", a.shape())));
    }
    Ok(())
}

fn expect_complex(op: &'static str, a: &Array) -> Result<(usize, usize, usize), DiffError> {
    complex_dims(a.shape()).ok_or_else(|| mismatch(op, format!("expected [.., 2, h, w], got {:?}", a.shape())))
}

fn conv_dims(x: &Array, k: &Array) -> Result<ConvDims, DiffError> {
    let (xs, ks) = (x.shape(), k.shape());
    if xs.len() != 3 || ks.len() != 4 || ks[1] != xs[0] || ks[2] % 2 == 0 || ks[3] % 2 == 0 {
        return Err(mismatch("conv2d", format!("input {xs:?}, kernel {ks:?}")));
    }
    Ok(ConvDims { cin: xs[0], cout: ks[0], h: xs[1], w: xs[2], kh: ks[2], kw: ks[3] })
}

/// Complex product on planar data; `conj_b` conjugates the second factor.
fn cmul_planar(a: &[f64], b: &[f64], plane: usize, conj_b: bool) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    let s = if conj_b { -1.0 } else { 1.0 };
    for base in (0..a.len()).step_by(2 * plane) {
        for p in 0..plane {
            let (ar, ai) = (a[base + p], a[base + plane + p]);
            let (br, bi) = (b[base + p], s * b[base + plane + p]);
            out[base + p] = ar * br - ai * bi;
            out[base + plane + p] = ar * bi + ai * br;
        }
    }
    out
}

fn apply_column_mask(data: &[f64], mask: &[bool]) -> Vec<f64> {
    let w = mask.len();
    data.chunks_exact(w)
        .flat_map(|row| row.iter().zip(mask).map(|(&v, &keep)| if keep { v } else { 0.0 }))
        .collect()
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Parameter => "parameter",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::MulScalar => "mul_scalar",
            Op::Div => "div",
            Op::Exp => "exp",
            Op::Conv2d => "conv2d",
            Op::BiasAdd => "bias_add",
            Op::Relu => "relu",
            Op::Fft2 => "fft2",
            Op::Ifft2 => "ifft2",
            Op::CMul => "cmul",
            Op::CMulConj => "cmul_conj",
            Op::ColumnMask(_) => "column_mask",
            Op::Dot => "dot",
            Op::Sum => "sum",
            Op::L2Norm => "l2_norm",
            Op::L1Complex => "l1_complex",
            Op::RepeatLeading(_) => "repeat_leading",
            Op::SumLeading => "sum_leading",
            Op::Linear(_) => "linear",
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Op::Constant | Op::Parameter)
    }

    /// Evaluates the primitive.
    pub fn forward(&self, inputs: &[&Array]) -> Result<Array, DiffError> {
        let name = self.name();
        match self {
            Op::Constant | Op::Parameter => Err(mismatch(name, "leaf nodes have no forward".into())),
            Op::Add | Op::Sub | Op::Mul => {
                expect_arity(name, inputs, 2)?;
                let (a, b) = (inputs[0], inputs[1]);
                same_shape(name, a, b)?;
                Ok(match self {
                    Op::Add => a.zip_map(b, |x, y| x + y),
                    Op::Sub => a.zip_map(b, |x, y| x - y),
                    _ => a.zip_map(b, |x, y| x * y),
                })
            }
            Op::Scale(c) => {
                expect_arity(name, inputs, 1)?;
                Ok(inputs[0].map(|x| x * c))
            }
            Op::MulScalar => {
                expect_arity(name, inputs, 2)?;
                expect_scalar(name, inputs[1])?;
                let s = inputs[1].item();
                Ok(inputs[0].map(|x| x * s))
            }
            Op::Div => {
                expect_arity(name, inputs, 2)?;
                expect_scalar(name, inputs[0])?;
                expect_scalar(name, inputs[1])?;
                Ok(Array::scalar(inputs[0].item() / inputs[1].item()))
            }
            Op::Exp => {
                expect_arity(name, inputs, 1)?;
                Ok(inputs[0].map(f64::exp))
            }
            Op::Conv2d => {
                expect_arity(name, inputs, 2)?;
                let d = conv_dims(inputs[0], inputs[1])?;
                let out = conv2d_forward(inputs[0].data(), inputs[1].data(), &d);
                Ok(Array::from_parts(vec![d.cout, d.h, d.w], out))
            }
            Op::BiasAdd => {
                expect_arity(name, inputs, 2)?;
                let (x, b) = (inputs[0], inputs[1]);
                if x.shape().len() != 3 || b.shape() != [x.shape()[0]] {
                    return Err(mismatch(name, format!("x {:?}, bias {:?}", x.shape(), b.shape())));
                }
                let plane = x.shape()[1] * x.shape()[2];
                let mut out = x.clone();
                for (chunk, &bv) in out.data_mut().chunks_exact_mut(plane).zip(b.data()) {
                    chunk.iter_mut().for_each(|v| *v += bv);
                }
                Ok(out)
            }
            Op::Relu => {
                expect_arity(name, inputs, 1)?;
                Ok(inputs[0].map(|x| if x > 0.0 { x } else { 0.0 }))
            }
            Op::Fft2 | Op::Ifft2 => {
                expect_arity(name, inputs, 1)?;
                let (lead, h, w) = expect_complex(name, inputs[0])?;
                let out = fft2c_planar(inputs[0].data(), lead, h, w, matches!(self, Op::Ifft2));
                Ok(Array::from_parts(inputs[0].shape().to_vec(), out))
            }
            Op::CMul | Op::CMulConj => {
                expect_arity(name, inputs, 2)?;
                let (_, h, w) = expect_complex(name, inputs[0])?;
                same_shape(name, inputs[0], inputs[1])?;
                let out = cmul_planar(inputs[0].data(), inputs[1].data(), h * w, matches!(self, Op::CMulConj));
                Ok(Array::from_parts(inputs[0].shape().to_vec(), out))
            }
            Op::ColumnMask(mask) => {
                expect_arity(name, inputs, 1)?;
                let x = inputs[0];
                if x.shape().last() != Some(&mask.len()) {
                    return Err(mismatch(name, format!("mask width {} vs shape {:?}", mask.len(), x.shape())));
                }
                Ok(Array::from_parts(x.shape().to_vec(), apply_column_mask(x.data(), mask)))
            }
            Op::Dot => {
                expect_arity(name, inputs, 2)?;
                same_shape(name, inputs[0], inputs[1])?;
                Ok(Array::scalar(inputs[0].dot(inputs[1])))
            }
            Op::Sum => {
                expect_arity(name, inputs, 1)?;
                Ok(Array::scalar(inputs[0].sum()))
            }
            Op::L2Norm => {
                expect_arity(name, inputs, 1)?;
                Ok(Array::scalar(inputs[0].norm2()))
            }
            Op::L1Complex => {
                expect_arity(name, inputs, 1)?;
                let (_, h, w) = expect_complex(name, inputs[0])?;
                Ok(Array::scalar(l1_complex(inputs[0].data(), h * w)))
            }
            Op::RepeatLeading(n) => {
                expect_arity(name, inputs, 1)?;
                let x = inputs[0];
                let mut shape = vec![*n];
                shape.extend_from_slice(x.shape());
                let mut data = Vec::with_capacity(n * x.len());
                for _ in 0..*n {
                    data.extend_from_slice(x.data());
                }
                Ok(Array::from_parts(shape, data))
            }
            Op::SumLeading => {
                expect_arity(name, inputs, 1)?;
                let x = inputs[0];
                if x.shape().is_empty() {
                    return Err(mismatch(name, "cannot reduce a scalar".into()));
                }
                let shape = x.shape()[1..].to_vec();
                let inner: usize = shape.iter().product();
                let mut out = vec![0.0; inner];
                for chunk in x.data().chunks_exact(inner.max(1)) {
                    out.iter_mut().zip(chunk).for_each(|(o, v)| *o += v);
                }
                Ok(Array::from_parts(shape, out))
            }
            Op::Linear(l) => {
                expect_arity(name, inputs, 1)?;
                if inputs[0].shape() != l.input_shape().as_slice() {
                    return Err(mismatch(
                        name,
                        format!("{} expects {:?}, got {:?}", l.name(), l.input_shape(), inputs[0].shape()),
                    ));
                }
                Ok(l.apply(inputs[0]))
            }
        }
    }

    /// Vector-Jacobian products for each input given the upstream gradient.
    pub(crate) fn backward(&self, inputs: &[&Array], output: &Array, grad: &Array) -> Vec<Array> {
        match self {
            Op::Constant | Op::Parameter => Vec::new(),
            Op::Add => vec![grad.clone(), grad.clone()],
            Op::Sub => vec![grad.clone(), grad.map(|g| -g)],
            Op::Mul => vec![grad.zip_map(inputs[1], |g, b| g * b), grad.zip_map(inputs[0], |g, a| g * a)],
            Op::Scale(c) => vec![grad.map(|g| g * c)],
            Op::MulScalar => {
                let s = inputs[1].item();
                let gs = grad.dot(inputs[0]);
                vec![grad.map(|g| g * s), Array::from_parts(inputs[1].shape().to_vec(), vec![gs])]
            }
            Op::Div => {
                let (a, b, g) = (inputs[0].item(), inputs[1].item(), grad.item());
                vec![
                    Array::from_parts(inputs[0].shape().to_vec(), vec![g / b]),
                    Array::from_parts(inputs[1].shape().to_vec(), vec![-g * a / (b * b)]),
                ]
            }
            Op::Exp => vec![grad.zip_map(output, |g, y| g * y)],
            Op::Conv2d => {
                let d = conv_dims(inputs[0], inputs[1]).expect("validated in forward");
                let (gx, gk) = conv2d_backward(inputs[0].data(), inputs[1].data(), grad.data(), &d);
                vec![
                    Array::from_parts(inputs[0].shape().to_vec(), gx),
                    Array::from_parts(inputs[1].shape().to_vec(), gk),
                ]
            }
            Op::BiasAdd => {
                let plane = grad.shape()[1] * grad.shape()[2];
                let gb = grad.data().chunks_exact(plane).map(|c| c.iter().sum()).collect();
                vec![grad.clone(), Array::from_parts(inputs[1].shape().to_vec(), gb)]
            }
            Op::Relu => vec![grad.zip_map(inputs[0], |g, x| if x > 0.0 { g } else { 0.0 })],
            Op::Fft2 | Op::Ifft2 => {
                // Unitary: the adjoint is the inverse transform.
                let (lead, h, w) = complex_dims(grad.shape()).expect("validated in forward");
                let g = fft2c_planar(grad.data(), lead, h, w, matches!(self, Op::Fft2));
                vec![Array::from_parts(grad.shape().to_vec(), g)]
            }
            Op::CMul => {
                let (_, h, w) = complex_dims(grad.shape()).expect("validated in forward");
                let plane = h * w;
                vec![
                    Array::from_parts(grad.shape().to_vec(), cmul_planar(grad.data(), inputs[1].data(), plane, true)),
                    Array::from_parts(grad.shape().to_vec(), cmul_planar(grad.data(), inputs[0].data(), plane, true)),
                ]
            }
            Op::CMulConj => {
                let (_, h, w) = complex_dims(grad.shape()).expect("validated in forward");
                let plane = h * w;
                // out = a·conj(b): d/da -> g·b, d/db -> a·conj(g)
                let ga = cmul_planar(grad.data(), inputs[1].data(), plane, false);
                let gb = cmul_planar(inputs[0].data(), grad.data(), plane, true);
                vec![Array::from_parts(grad.shape().to_vec(), ga), Array::from_parts(grad.shape().to_vec(), gb)]
            }
            Op::ColumnMask(mask) => vec![Array::from_parts(grad.shape().to_vec(), apply_column_mask(grad.data(), mask))],
            Op::Dot => {
                let g = grad.item();
                vec![inputs[1].map(|b| g * b), inputs[0].map(|a| g * a)]
            }
            Op::Sum => {
                let g = grad.item();
                vec![Array::full(inputs[0].shape(), g)]
            }
            Op::L2Norm => {
                let (g, n) = (grad.item(), output.item());
                if n == 0.0 {
                    vec![Array::zeros(inputs[0].shape())]
                } else {
                    vec![inputs[0].map(|x| g * x / n)]
                }
            }
            Op::L1Complex => {
                let g = grad.item();
                let (_, h, w) = complex_dims(inputs[0].shape()).expect("validated in forward");
                let plane = h * w;
                let x = inputs[0].data();
                let mut out = vec![0.0; x.len()];
                for base in (0..x.len()).step_by(2 * plane) {
                    for p in 0..plane {
                        let (re, im) = (x[base + p], x[base + plane + p]);
                        let m = re.hypot(im);
                        if m > 0.0 {
                            out[base + p] = g * re / m;
                            out[base + plane + p] = g * im / m;
                        }
                    }
                }
                vec![Array::from_parts(inputs[0].shape().to_vec(), out)]
            }
            Op::RepeatLeading(_) => {
                let inner = inputs[0].len();
                let mut out = vec![0.0; inner];
                for chunk in grad.data().chunks_exact(inner) {
                    out.iter_mut().zip(chunk).for_each(|(o, v)| *o += v);
                }
                vec![Array::from_parts(inputs[0].shape().to_vec(), out)]
            }
            Op::SumLeading => {
                let n = inputs[0].shape()[0];
                let mut data = Vec::with_capacity(inputs[0].len());
                for _ in 0..n {
                    data.extend_from_slice(grad.data());
                }
                vec![Array::from_parts(inputs[0].shape().to_vec(), data)]
            }
            Op::Linear(l) => vec![l.adjoint(grad)],
        }
    }
}

/// Sum of complex moduli of a planar complex buffer.
pub(crate) fn l1_complex(data: &[f64], plane: usize) -> f64 {
    let mut acc = 0.0;
    for base in (0..data.len()).step_by(2 * plane) {
        for p in 0..plane {
            acc += data[base + p].hypot(data[base + plane + p]);
        }
    }
    acc
}
