use alloc::format;
use alloc::vec;

use super::gemm::gemm;
use super::Tensor;
use crate::error::{Error, Result};

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[out, in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let ws = weight.shape();
        if ws.len() != 2 || bias.shape() != [ws[0]] {
            return Err(Error::shape(format!("dense weight {ws:?} / bias {:?} inconsistent", bias.shape())));
        }
        Ok(Dense { weight, bias })
    }

    pub fn zeros(out: usize, inp: usize) -> Self {
        Dense { weight: Tensor::zeros(&[out, inp]), bias: Tensor::zeros(&[out]) }
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Splits an input into `(batch, features)`: rank 1 is a single sample,
/// higher ranks keep the leading axis as batch and flatten the rest.
fn batch_view(input: &Tensor) -> (usize, usize) {
    match input.shape() {
        [n] => (1, *n),
        [b, ..] => (*b, input.len() / b.max(&1)),
        [] => (1, 1),
    }
}

pub fn dense(input: &Tensor, p: &Dense) -> Result<Tensor> {
    let (b, n) = batch_view(input);
    if n != p.in_features() {
        return Err(Error::shape(format!(
            "dense input {:?} has {n} features, weight {:?} expects {}",
            input.shape(),
            p.weight.shape(),
            p.in_features()
        )));
    }
    let m = p.out_features();
    let mut out = vec![0.0; b * m];
    for row in out.chunks_mut(m) {
        row.copy_from_slice(p.bias.values());
    }
    // out[b, m] += x[b, n] * W^T[n, m]
    gemm(b, n, m, 1.0, input.values(), false, p.weight.values(), true, 1.0, &mut out);
    let shape = if input.rank() == 1 { vec![m] } else { vec![b, m] };
    Tensor::new(shape, out)
}

/// Accumulates parameter gradients (when `param_grads`) and returns the input gradient.
pub fn dense_backward(input: &Tensor, p: &mut Dense, grad_out: &Tensor, param_grads: bool) -> Result<Tensor> {
    let (b, n) = batch_view(input);
    let m = p.out_features();
    if n != p.in_features() || grad_out.len() != b * m {
        return Err(Error::shape(format!(
            "dense backward: input {:?}, grad_out {:?}, weight {:?}",
            input.shape(),
            grad_out.shape(),
            p.weight.shape()
        )));
    }
    if param_grads {
        // dW[m, n] += dY^T[m, b] * X[b, n]
        gemm(m, b, n, 1.0, grad_out.values(), true, input.values(), false, 1.0, p.weight.grad_mut());
        let db = p.bias.grad_mut();
        for row in grad_out.values().chunks(m) {
            db.iter_mut().zip(row).for_each(|(a, g)| *a += g);
        }
    }
    let mut dx = vec![0.0; b * n];
    gemm(b, m, n, 1.0, grad_out.values(), false, p.weight.values(), false, 0.0, &mut dx);
    Tensor::new(input.shape().to_vec(), dx)
}
