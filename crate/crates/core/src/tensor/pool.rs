use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{as_nchw, nchw_shape, Tensor};
use crate::error::{Error, Result};

/// Flat input index of the selected maximum for every output element.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndices {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

/// `floor((extent - window) / stride) + 1`.
pub fn pool_output_extent(extent: usize, window: usize, stride: usize) -> Result<usize> {
    if window == 0 || stride == 0 || window > extent {
        return Err(Error::shape(format!("pool window {window} (stride {stride}) exceeds extent {extent}")));
    }
    Ok((extent - window) / stride + 1)
}

/// Max pooling without padding. Ties resolve to the first maximum in scan order.
pub fn maxpool2d(input: &Tensor, window: usize, stride: usize) -> Result<(Tensor, PoolIndices)> {
    let (b, c, h, w) = as_nchw(input.shape())?;
    let oh = pool_output_extent(h, window, stride)?;
    let ow = pool_output_extent(w, window, stride)?;
    let x = input.values();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    let mut argmax = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for ky in 0..window {
                    let row = base + (oy * stride + ky) * w + ox * stride;
                    for idx in row..row + window {
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    let t = Tensor::new(nchw_shape(input.rank(), b, c, oh, ow), out)?;
    Ok((t, PoolIndices { input_shape: input.shape().to_vec(), argmax }))
}

/// Routes each output gradient to its recorded argmax.
pub fn maxpool2d_backward(indices: &PoolIndices, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.len() != indices.argmax.len() {
        return Err(Error::shape(format!(
            "pool grad_out {:?} does not match {} recorded outputs",
            grad_out.shape(),
            indices.argmax.len()
        )));
    }
    let n: usize = indices.input_shape.iter().product();
    let mut dx = vec![0.0; n];
    for (&i, &g) in indices.argmax.iter().zip(grad_out.values()) {
        dx[i] += g;
    }
    Tensor::new(indices.input_shape.clone(), dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_max() {
        let x = Tensor::new(alloc::vec![1, 2, 2], alloc::vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, idx) = maxpool2d(&x, 2, 2).unwrap();
        assert_eq!(y.values(), &[4.0]);
        let g = maxpool2d_backward(&idx, &Tensor::new(alloc::vec![1, 1, 1], alloc::vec![5.0]).unwrap()).unwrap();
        assert_eq!(g.values(), &[0.0, 0.0, 0.0, 5.0]);
    }

    #[test]
    fn constant_input_ties_go_to_first_index() {
        let x = Tensor::from_fn(&[1, 1, 5, 5], |_| 2.5);
        let (y, idx) = maxpool2d(&x, 3, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert!(y.values().iter().all(|v| *v == 2.5));
        let g = maxpool2d_backward(&idx, &Tensor::from_fn(&[1, 1, 2, 2], |_| 1.0)).unwrap();
        // window origins (0,0), (0,2), (2,0), (2,2)
        for (i, v) in g.values().iter().enumerate() {
            let expect = if [0, 2, 10, 12].contains(&i) { 1.0 } else { 0.0 };
            assert_eq!(*v, expect, "index {i}");
        }
    }

    #[test]
    fn extents() {
        assert_eq!(pool_output_extent(51, 3, 2).unwrap(), 25);
        assert_eq!(pool_output_extent(29, 3, 2).unwrap(), 14);
        assert!(maxpool2d(&Tensor::zeros(&[1, 2, 2]), 3, 1).is_err());
    }
}
