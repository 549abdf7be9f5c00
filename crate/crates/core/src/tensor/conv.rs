use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::gemm::gemm;
use super::{as_nchw, nchw_shape, Tensor};
use crate::error::{Error, Result};

/// 2-D cross-correlation layer with square kernels and constant-zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `[C_out, C_in, k, k]`
    pub weight: Tensor,
    /// `[C_out]`
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(weight: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Self> {
        let ws = weight.shape();
        if ws.len() != 4 || ws[2] != ws[3] {
            return Err(Error::shape(format!("conv weight must be [C_out, C_in, k, k], got {ws:?}")));
        }
        if bias.shape() != [ws[0]] {
            return Err(Error::shape(format!("conv bias {:?} does not match weight {ws:?}", bias.shape())));
        }
        if stride == 0 {
            return Err(Error::shape("conv stride must be >= 1"));
        }
        Ok(Conv2d { weight, bias, stride, padding })
    }

    pub fn zeros(c_out: usize, c_in: usize, k: usize, stride: usize, padding: usize) -> Self {
        Conv2d {
            weight: Tensor::zeros(&[c_out, c_in, k, k]),
            bias: Tensor::zeros(&[c_out]),
            stride,
            padding,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }
}

/// `floor((extent + 2 pad - k) / stride) + 1`, or an error when the kernel
/// does not fit the padded input.
pub fn conv_output_extent(extent: usize, k: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = extent + 2 * padding;
    if k == 0 || k > padded || stride == 0 {
        return Err(Error::shape(format!(
            "kernel {k} with stride {stride} does not fit padded extent {padded}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

struct Geometry {
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn new(input_shape: &[usize], p: &Conv2d) -> Result<(usize, Geometry)> {
        let (b, c, h, w) = as_nchw(input_shape)?;
        if c != p.in_channels() {
            return Err(Error::shape(format!(
                "conv input {input_shape:?} has {c} channels, weight {:?} expects {}",
                p.weight.shape(),
                p.in_channels()
            )));
        }
        let k = p.kernel();
        let oh = conv_output_extent(h, k, p.stride, p.padding)
            .map_err(|e| Error::shape(format!("input {input_shape:?} vs weight {:?}: {e}", p.weight.shape())))?;
        let ow = conv_output_extent(w, k, p.stride, p.padding)
            .map_err(|e| Error::shape(format!("input {input_shape:?} vs weight {:?}: {e}", p.weight.shape())))?;
        Ok((b, Geometry { c_in: c, h, w, k, stride: p.stride, pad: p.padding, oh, ow }))
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// Unrolls one image into `[C_in k k, oh ow]` columns.
    fn im2col(&self, img: &[f64], cols: &mut [f64]) {
        let p = self.positions();
        for c in 0..self.c_in {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (c * self.k + ky) * self.k + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        let line = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        if iy < 0 || iy >= self.h as isize {
                            line.iter_mut().for_each(|v| *v = 0.0);
                            continue;
                        }
                        let src = &img[(c * self.h + iy as usize) * self.w..][..self.w];
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            *v = if ix < 0 || ix >= self.w as isize { 0.0 } else { src[ix as usize] };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Geometry::im2col`]: scatters column gradients back onto the image.
    fn col2im(&self, cols: &[f64], img: &mut [f64]) {
        let p = self.positions();
        for c in 0..self.c_in {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (c * self.k + ky) * self.k + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut img[(c * self.h + iy as usize) * self.w..][..self.w];
                        for ox in 0..self.ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] += src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Forward pass. Accepts `[C, H, W]` or `[B, C, H, W]` and keeps the rank.
pub fn conv2d(input: &Tensor, p: &Conv2d) -> Result<Tensor> {
    let (b, g) = Geometry::new(input.shape(), p)?;
    let c_out = p.out_channels();
    let (kk, np) = (g.patch_len(), g.positions());
    let in_len = g.c_in * g.h * g.w;
    let mut cols = vec![0.0; kk * np];
    let mut out = vec![0.0; b * c_out * np];
    for bi in 0..b {
        g.im2col(&input.values()[bi * in_len..(bi + 1) * in_len], &mut cols);
        let dst = &mut out[bi * c_out * np..(bi + 1) * c_out * np];
        for (co, chunk) in dst.chunks_mut(np).enumerate() {
            chunk.iter_mut().for_each(|v| *v = p.bias.values()[co]);
        }
        gemm(c_out, kk, np, 1.0, p.weight.values(), false, &cols, false, 1.0, dst);
    }
    Tensor::new(nchw_shape(input.rank(), b, c_out, g.oh, g.ow), out)
}

/// Backward pass. Accumulates into `p.weight` / `p.bias` gradients when
/// `param_grads` is set and returns the input gradient when `input_grad` is set.
pub fn conv2d_backward(
    input: &Tensor,
    p: &mut Conv2d,
    grad_out: &Tensor,
    param_grads: bool,
    input_grad: bool,
) -> Result<Option<Tensor>> {
    let (b, g) = Geometry::new(input.shape(), p)?;
    let c_out = p.out_channels();
    let (kk, np) = (g.patch_len(), g.positions());
    let expected = nchw_shape(input.rank(), b, c_out, g.oh, g.ow);
    if grad_out.shape() != expected.as_slice() {
        return Err(Error::shape(format!(
            "conv grad_out {:?} does not match output {expected:?}",
            grad_out.shape()
        )));
    }
    let in_len = g.c_in * g.h * g.w;
    let mut cols = vec![0.0; kk * np];
    let mut dcols = if input_grad { vec![0.0; kk * np] } else { Vec::new() };
    let mut dinput = if input_grad { vec![0.0; input.len()] } else { Vec::new() };
    let mut dw = if param_grads { vec![0.0; c_out * kk] } else { Vec::new() };
    let mut db = if param_grads { vec![0.0; c_out] } else { Vec::new() };

    for bi in 0..b {
        let dout = &grad_out.values()[bi * c_out * np..(bi + 1) * c_out * np];
        if param_grads {
            g.im2col(&input.values()[bi * in_len..(bi + 1) * in_len], &mut cols);
            gemm(c_out, np, kk, 1.0, dout, false, &cols, true, 1.0, &mut dw);
            for (co, chunk) in dout.chunks(np).enumerate() {
                db[co] += chunk.iter().sum::<f64>();
            }
        }
        if input_grad {
            gemm(kk, c_out, np, 1.0, p.weight.values(), true, dout, false, 0.0, &mut dcols);
            g.col2im(&dcols, &mut dinput[bi * in_len..(bi + 1) * in_len]);
        }
    }
    if param_grads {
        p.weight.grad_mut().iter_mut().zip(&dw).for_each(|(a, d)| *a += d);
        p.bias.grad_mut().iter_mut().zip(&db).for_each(|(a, d)| *a += d);
    }
    if input_grad {
        Ok(Some(Tensor::new(input.shape().to_vec(), dinput)?))
    } else {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct 7-loop cross-correlation used as an independent reference.
    fn naive(input: &Tensor, p: &Conv2d) -> Vec<f64> {
        let (b, c, h, w) = as_nchw(input.shape()).unwrap();
        let (co, k, s, pad) = (p.out_channels(), p.kernel(), p.stride, p.padding);
        let oh = (h + 2 * pad - k) / s + 1;
        let ow = (w + 2 * pad - k) / s + 1;
        let mut out = Vec::new();
        for bi in 0..b {
            for o in 0..co {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = p.bias.values()[o];
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (y * s + ky) as isize - pad as isize;
                                    let ix = (x * s + kx) as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        acc += input.values()[((bi * c + ci) * h + iy as usize) * w + ix as usize]
                                            * p.weight.values()[((o * c + ci) * k + ky) * k + kx];
                                    }
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mut p = Conv2d::zeros(1, 1, 1, 1, 0);
        p.weight.values_mut()[0] = 1.0;
        let x = Tensor::from_fn(&[1, 4, 5], |i| i as f64 - 3.0);
        assert_eq!(conv2d(&x, &p).unwrap(), x);
    }

    #[test]
    fn zero_input_zero_bias() {
        let p = Conv2d::new(Tensor::from_fn(&[3, 2, 3, 3], |i| i as f64), Tensor::zeros(&[3]), 1, 1).unwrap();
        let y = conv2d(&Tensor::zeros(&[2, 2, 6, 6]), &p).unwrap();
        assert_eq!(y.shape(), &[2, 3, 6, 6]);
        assert!(y.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn output_extent_arithmetic() {
        assert_eq!(conv_output_extent(227, 31, 4, 2).unwrap(), 51);
        assert_eq!(conv_output_extent(64, 11, 2, 2).unwrap(), 29);
        assert!(conv_output_extent(3, 7, 1, 1).is_err());
    }

    #[test]
    fn matches_naive_reference() {
        let p = Conv2d::new(
            Tensor::from_fn(&[4, 3, 3, 3], |i| libm::sin(i as f64 * 0.37)),
            Tensor::from_fn(&[4], |i| i as f64 * 0.1),
            2,
            1,
        )
        .unwrap();
        let x = Tensor::from_fn(&[2, 3, 7, 8], |i| libm::cos(i as f64 * 0.11));
        let y = conv2d(&x, &p).unwrap();
        assert_eq!(y.shape(), &[2, 4, 4, 4]);
        for (a, b) in y.values().iter().zip(naive(&x, &p)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let p = Conv2d::zeros(2, 3, 3, 1, 0);
        let err = conv2d(&Tensor::zeros(&[1, 2, 5, 5]), &p).unwrap_err();
        match err {
            Error::Shape(m) => assert!(m.contains("[1, 2, 5, 5]") && m.contains("[2, 3, 3, 3]")),
            other => panic!("{other:?}"),
        }
    }
}
