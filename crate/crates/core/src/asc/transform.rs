//! Unitary, zero-frequency-centered 2-D discrete Fourier transforms.
//!
//! The transform is evaluated directly from a twiddle table. That keeps it
//! allocation-light and exact for any side length (227 is prime), and lets
//! the kernel path evaluate only the output window it keeps.

use alloc::format;
use alloc::vec::Vec;

use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::math::sincos;
use crate::matrix::{ComplexMatrix, RealMatrix};

struct Twiddles {
    n: usize,
    table: Vec<Complex64>,
}

impl Twiddles {
    fn new(n: usize) -> Self {
        let table = (0..n)
            .map(|k| {
                let (s, c) = sincos(-2.0 * PI * k as f64 / n as f64);
                Complex64::new(c, s)
            })
            .collect();
        Twiddles { n, table }
    }

    #[inline]
    fn at(&self, k: usize, j: usize) -> Complex64 {
        self.table[(k * j) % self.n]
    }
}

/// Frequency bin shown at shifted position `s` (zero frequency lands on `n / 2`).
#[inline]
fn bin_for_shifted(s: usize, n: usize) -> usize {
    (s + n - n / 2) % n
}

/// Window `[start, start + r)` of shifted indices centered as [`crop_center`] centers.
fn centered_window(n: usize, r: usize) -> usize {
    center_index(n) - (r - 1) / 2
}

/// Center pixel of a side of length `n`: the middle for odd `n`, the upper-left
/// of the central pair for even `n`.
pub fn center_index(n: usize) -> usize {
    if n % 2 == 1 {
        n / 2
    } else {
        n / 2 - 1
    }
}

fn check_square(m: &ComplexMatrix) -> Result<usize> {
    if !m.is_square() || m.rows() == 0 {
        return Err(Error::shape(format!("transform needs a non-empty square matrix, got {}x{}", m.rows(), m.cols())));
    }
    Ok(m.rows())
}

/// Twiddle rows `w[o][j] = exp(-2 pi i bin(o) j / n)` for the requested shifted outputs.
fn twiddle_rows(tw: &Twiddles, shifted: &[usize]) -> Vec<Complex64> {
    let n = tw.n;
    let mut out = Vec::with_capacity(shifted.len() * n);
    for &s in shifted {
        let kb = bin_for_shifted(s, n);
        out.extend((0..n).map(|j| tw.at(kb, j)));
    }
    out
}

/// Evaluates the unitary shifted transform at shifted rows `row_idx` and columns `col_idx`.
fn transform_window(spec: &ComplexMatrix, row_idx: &[usize], col_idx: &[usize]) -> ComplexMatrix {
    let n = spec.rows();
    let tw = Twiddles::new(n);
    let wcol = twiddle_rows(&tw, col_idx);
    let wrow = twiddle_rows(&tw, row_idx);
    let nc = col_idx.len();

    // transform along columns first, keeping only the requested output columns
    let mut partial = ComplexMatrix::zeros(n, nc);
    for r in 0..n {
        let src = spec.row(r);
        for oc in 0..nc {
            let w = &wcol[oc * n..(oc + 1) * n];
            let mut acc = Complex64::new(0.0, 0.0);
            for (v, t) in src.iter().zip(w) {
                acc += v * t;
            }
            *partial.get_mut(r, oc) = acc;
        }
    }

    let scale = 1.0 / n as f64;
    let mut out = ComplexMatrix::zeros(row_idx.len(), nc);
    let mut acc = alloc::vec![Complex64::new(0.0, 0.0); nc];
    for or in 0..row_idx.len() {
        acc.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
        let w = &wrow[or * n..(or + 1) * n];
        for (r, t) in w.iter().enumerate() {
            for (a, v) in acc.iter_mut().zip(partial.row(r)) {
                *a += v * t;
            }
        }
        for (oc, a) in acc.iter().enumerate() {
            *out.get_mut(or, oc) = a * scale;
        }
    }
    out
}

/// Unitary 2-D DFT with the zero-frequency bin moved to the center pixel.
/// Energy is preserved: `sum |spectrum|^2 == sum |image|^2`.
pub fn centered_dft2(spectrum: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = check_square(spectrum)?;
    let idx: Vec<usize> = (0..n).collect();
    Ok(transform_window(spectrum, &idx, &idx))
}

/// Magnitude image of [`centered_dft2`].
pub fn spectrum_to_image(spectrum: &ComplexMatrix) -> Result<RealMatrix> {
    Ok(centered_dft2(spectrum)?.map(|z| z.norm()))
}

/// Same values as `crop_center(spectrum_to_image(spectrum), r)` but only the
/// `r x r` window is evaluated.
pub fn spectrum_to_image_cropped(spectrum: &ComplexMatrix, r: usize) -> Result<RealMatrix> {
    let n = check_square(spectrum)?;
    check_crop(n, r)?;
    let start = centered_window(n, r);
    let idx: Vec<usize> = (start..start + r).collect();
    Ok(transform_window(spectrum, &idx, &idx).map(|z| z.norm()))
}

/// Centered `size x size` window of the magnitude image for any `1 <= size <= n`.
/// For odd `size` this equals [`spectrum_to_image_cropped`].
pub fn spectrum_to_image_window(spectrum: &ComplexMatrix, size: usize) -> Result<RealMatrix> {
    let n = check_square(spectrum)?;
    if size == 0 || size > n {
        return Err(Error::shape(format!("window size {size} outside 1..={n}")));
    }
    let start = centered_window(n, size);
    let idx: Vec<usize> = (start..start + size).collect();
    Ok(transform_window(spectrum, &idx, &idx).map(|z| z.norm()))
}

fn check_crop(n: usize, r: usize) -> Result<()> {
    if r == 0 || r % 2 == 0 {
        return Err(Error::shape(format!("crop size must be odd and positive, got {r}")));
    }
    if r > n {
        return Err(Error::shape(format!("crop size {r} exceeds image side {n}")));
    }
    Ok(())
}

/// `r x r` window around the center pixel (see [`center_index`]).
pub fn crop_center(image: &RealMatrix, r: usize) -> Result<RealMatrix> {
    if !image.is_square() {
        return Err(Error::shape(format!("crop needs a square image, got {}x{}", image.rows(), image.cols())));
    }
    let n = image.rows();
    check_crop(n, r)?;
    let start = centered_window(n, r);
    Ok(RealMatrix::from_fn(r, r, |i, j| *image.get(start + i, start + j)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_in_zero_out() {
        let z = ComplexMatrix::zeros(6, 6);
        assert!(spectrum_to_image(&z).unwrap().as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_spectrum_peaks_at_center() {
        for n in [5usize, 8, 227] {
            let m = ComplexMatrix::from_fn(n, n, |_, _| Complex64::new(1.0, 0.0));
            let img = spectrum_to_image(&m).unwrap();
            let c = n / 2;
            assert!((img.get(c, c) - n as f64).abs() < 1e-9);
            let total: f64 = img.as_slice().iter().sum();
            assert!((total - img.get(c, c)).abs() < 1e-6);
        }
    }

    #[test]
    fn non_square_rejected() {
        let m = ComplexMatrix::zeros(3, 4);
        assert!(matches!(spectrum_to_image(&m), Err(Error::Shape(_))));
    }

    #[test]
    fn crop_indices() {
        let img = RealMatrix::from_fn(227, 227, |r, c| (r * 1000 + c) as f64);
        let k = crop_center(&img, 31).unwrap();
        assert_eq!(*k.get(0, 0), (98 * 1000 + 98) as f64);
        assert_eq!(*k.get(30, 30), (128 * 1000 + 128) as f64);
        assert_eq!(crop_center(&img, 227).unwrap(), img);

        let mut five = RealMatrix::zeros(5, 5);
        *five.get_mut(2, 2) = 7.0;
        let three = crop_center(&five, 3).unwrap();
        assert_eq!(*three.get(1, 1), 7.0);
        assert_eq!(three.as_slice().iter().filter(|v| **v != 0.0).count(), 1);

        // even side: window centered on the upper-left of the central 2x2
        let four = RealMatrix::from_fn(4, 4, |r, c| (r * 10 + c) as f64);
        assert_eq!(*crop_center(&four, 1).unwrap().get(0, 0), 11.0);
    }

    #[test]
    fn crop_errors() {
        let img = RealMatrix::zeros(5, 5);
        assert!(matches!(crop_center(&img, 7), Err(Error::Shape(_))));
        assert!(matches!(crop_center(&img, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn cropped_path_matches_full_path() {
        let n = 23;
        let m = ComplexMatrix::from_fn(n, n, |r, c| {
            Complex64::new(libm::sin(r as f64 * 0.7 + c as f64), libm::cos(r as f64 * c as f64 * 0.1))
        });
        let full = crop_center(&spectrum_to_image(&m).unwrap(), 7).unwrap();
        let fast = spectrum_to_image_cropped(&m, 7).unwrap();
        for (a, b) in full.as_slice().iter().zip(fast.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
