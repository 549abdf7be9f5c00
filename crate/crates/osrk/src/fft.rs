//! FFT-backed image formation with the same convention as the direct transform
//! in the core crate: unitary scaling, zero frequency at `n / 2`.

use std::sync::Arc;

use num_complex::Complex64;
use osrk_core::asc::center_index;
use osrk_core::data::ImageFormer;
use osrk_core::matrix::{ComplexMatrix, RealMatrix};
use rustfft::{Fft, FftPlanner};

/// Holds a plan for one side length; other lengths are planned on demand.
#[derive(Clone)]
pub struct FftFormer {
    n: usize,
    plan: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftFormer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftFormer").field("n", &self.n).finish()
    }
}

impl FftFormer {
    pub fn new(n: usize) -> Self {
        FftFormer { n, plan: FftPlanner::new().plan_fft_forward(n.max(1)) }
    }

    fn plan_for(&self, n: usize) -> Arc<dyn Fft<f64>> {
        if n == self.n {
            self.plan.clone()
        } else {
            FftPlanner::new().plan_fft_forward(n)
        }
    }

    /// Full unitary, centered 2-D transform.
    pub fn centered_dft2(&self, spectrum: &ComplexMatrix) -> osrk_core::Result<ComplexMatrix> {
        let n = spectrum.rows();
        if spectrum.cols() != n || n == 0 {
            return Err(osrk_core::Error::shape(format!(
                "transform needs a non-empty square matrix, got {}x{}",
                spectrum.rows(),
                spectrum.cols()
            )));
        }
        let plan = self.plan_for(n);
        let mut data = spectrum.as_slice().to_vec();
        plan.process(&mut data);
        // columns via transpose
        let mut t = vec![Complex64::new(0.0, 0.0); n * n];
        for r in 0..n {
            for c in 0..n {
                t[c * n + r] = data[r * n + c];
            }
        }
        plan.process(&mut t);
        let scale = 1.0 / n as f64;
        let shift = |s: usize| (s + n - n / 2) % n;
        Ok(ComplexMatrix::from_fn(n, n, |r, c| t[shift(c) * n + shift(r)] * scale))
    }
}

impl ImageFormer for FftFormer {
    fn form(&self, spectrum: &ComplexMatrix, size: usize) -> osrk_core::Result<RealMatrix> {
        let full = self.centered_dft2(spectrum)?;
        let n = full.rows();
        if size == 0 || size > n {
            return Err(osrk_core::Error::shape(format!("window size {size} outside 1..={n}")));
        }
        let start = center_index(n) - (size - 1) / 2;
        Ok(RealMatrix::from_fn(size, size, |r, c| full.get(start + r, start + c).norm()))
    }
}
