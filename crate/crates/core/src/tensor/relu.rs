use alloc::format;

use super::Tensor;
use crate::error::{Error, Result};

pub fn relu(input: &Tensor) -> Tensor {
    Tensor::from_fn(input.shape(), |i| input.values()[i].max(0.0))
}

/// Passes gradient where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return Err(Error::shape(format!("relu grad {:?} vs input {:?}", grad_out.shape(), input.shape())));
    }
    Ok(Tensor::from_fn(input.shape(), |i| if input.values()[i] > 0.0 { grad_out.values()[i] } else { 0.0 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn elementwise() {
        let x = Tensor::new(vec![5], vec![-2.0, 3.0, -1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).values(), &[0.0, 3.0, 0.0, 0.0, 2.0]);
        let g = relu_backward(&x, &Tensor::from_fn(&[5], |_| 1.0)).unwrap();
        assert_eq!(g.values(), &[0.0, 1.0, 0.0, 0.0, 1.0]);
    }
}
