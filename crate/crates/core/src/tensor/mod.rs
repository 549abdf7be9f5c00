//! Dense row-major tensors and the layer kernels of the backbone.
//!
//! Every layer exposes a forward function and an analytic backward function.
//! Backward functions accumulate parameter gradients into the `grad` buffers
//! of the parameter tensors and return the gradient with respect to the input.

mod conv;
mod dense;
mod gemm;
mod gradcheck;
mod pool;
mod relu;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub use conv::{conv2d, conv2d_backward, conv_output_extent, Conv2d};
pub use dense::{dense, dense_backward, Dense};
pub use gradcheck::{grad_check, grad_check_subset, relative_error, GradCheckReport};
pub use pool::{maxpool2d, maxpool2d_backward, pool_output_extent, PoolIndices};
pub use relu::{relu, relu_backward};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::shape(format!("shape {shape:?} holds {n} values, got {}", values.len())));
        }
        Ok(Tensor { shape, values, grad: None })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), values: vec![0.0; n], grad: None }
    }

    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), values: (0..n).map(f).collect(), grad: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated as zeros on first use.
    pub fn grad_mut(&mut self) -> &mut [f64] {
        let n = self.values.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Same values under a new shape with the same element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.values.len() {
            return Err(Error::shape(format!("cannot reshape {:?} into {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Checked mode: fails on the first NaN or infinity.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::numerical(format!("{what}: non-finite value at flat index {i}"))),
            None => Ok(()),
        }
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[&Tensor]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::argument("cannot stack an empty list"))?;
        let mut values = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::shape(format!("cannot stack {:?} with {:?}", first.shape, t.shape)));
            }
            values.extend_from_slice(&t.values);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Tensor::new(shape, values)
    }
}

/// Views a rank-3 `[C, H, W]` or rank-4 `[B, C, H, W]` shape as `(B, C, H, W)`.
pub(crate) fn as_nchw(shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [c, h, w] => Ok((1, c, h, w)),
        [b, c, h, w] => Ok((b, c, h, w)),
        _ => Err(Error::shape(format!("expected [C,H,W] or [B,C,H,W], got {shape:?}"))),
    }
}

/// Output shape with the same rank convention as the input.
pub(crate) fn nchw_shape(rank: usize, b: usize, c: usize, h: usize, w: usize) -> Vec<usize> {
    if rank == 3 {
        vec![c, h, w]
    } else {
        vec![b, c, h, w]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::new(vec![2, 3], vec![1.0; 6]).unwrap();
        assert_eq!(t.clone().reshape(&[3, 2]).unwrap().shape(), &[3, 2]);
        assert!(t.reshape(&[4, 2]).is_err());
    }

    #[test]
    fn finite_check_reports_index() {
        let t = Tensor::new(vec![3], vec![0.0, f64::NAN, 1.0]).unwrap();
        assert!(matches!(t.check_finite("x"), Err(Error::Numerical(m)) if m.contains("index 1")));
    }

    #[test]
    fn stack_adds_batch_axis() {
        let a = Tensor::zeros(&[1, 2, 2]);
        let b = Tensor::from_fn(&[1, 2, 2], |i| i as f64);
        let s = Tensor::stack(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), &[2, 1, 2, 2]);
        assert_eq!(&s.values()[4..], &[0.0, 1.0, 2.0, 3.0]);
        assert!(Tensor::stack(&[&a, &Tensor::zeros(&[2])]).is_err());
    }
}
