//! Scattering-center convolution kernel banks.
//!
//! Each kernel is the center crop of the magnitude image of a unit-amplitude
//! distributed scatterer of length `L` and orientation `phi_bar`, placed at the
//! scene origin. Banks enumerate the Cartesian product of a length grid and an
//! orientation grid, lengths in the outer loop.

use alloc::format;
use alloc::vec::Vec;

use super::radar::{make_radar_grid, FrequencyAspectGrid, RadarParams};
use super::scatter::{asc_response, ResponseMode, ScatteringCenter};
use super::transform::spectrum_to_image_cropped;
use crate::error::{Error, Result};
use crate::math::sqrt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizeMode {
    /// Magnitudes as produced by the unitary transform.
    RawMagnitude,
    /// Each kernel shifted to zero mean and scaled to unit L2 norm.
    #[default]
    ZeroMeanUnitL2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscKernelSpec {
    pub kernel_size: usize,
    pub length_grid_m: Vec<f64>,
    pub orientation_grid_deg: Vec<f64>,
    pub normalize: NormalizeMode,
}

/// `p * resolution`, the physical length spanned by `p` pixels.
pub fn length_from_pixels(p: usize, resolution: f64, kernel_size: usize) -> Result<f64> {
    if p == 0 || p > kernel_size {
        return Err(Error::config("p", format!("pixel count {p} must lie in 1..={kernel_size}")));
    }
    if !(resolution > 0.0) {
        return Err(Error::config("spatial_resolution", "must be positive"));
    }
    Ok(p as f64 * resolution)
}

/// `count` decimal values `k * step_tenths / 10` for `k = first..first+count`,
/// each correctly rounded from its decimal form.
fn decimal_series(first: usize, count: usize, step_tenths: usize) -> Vec<f64> {
    (first..first + count).map(|k| (k * step_tenths) as f64 / 10.0).collect()
}

impl AscKernelSpec {
    /// 11x11 kernels: lengths 0.3..3.0 m, orientations 0..90 deg in 10 deg steps (100 kernels).
    pub fn asc11() -> Self {
        AscKernelSpec {
            kernel_size: 11,
            length_grid_m: decimal_series(1, 10, 3),
            orientation_grid_deg: decimal_series(0, 10, 100),
            normalize: NormalizeMode::default(),
        }
    }

    /// 21x21 kernels: lengths 0.3..6.3 m, orientations 0..90 deg in 4.5 deg steps (441 kernels).
    pub fn asc21() -> Self {
        AscKernelSpec {
            kernel_size: 21,
            length_grid_m: decimal_series(1, 21, 3),
            orientation_grid_deg: decimal_series(0, 21, 45),
            normalize: NormalizeMode::default(),
        }
    }

    /// 31x31 kernels: lengths 0.3..9.3 m, orientations 0..90 deg in 3 deg steps (961 kernels).
    pub fn asc31() -> Self {
        AscKernelSpec {
            kernel_size: 31,
            length_grid_m: decimal_series(1, 31, 3),
            orientation_grid_deg: decimal_series(0, 31, 30),
            normalize: NormalizeMode::default(),
        }
    }

    /// Preset for a supported kernel size.
    pub fn preset(size: usize) -> Result<Self> {
        match size {
            11 => Ok(Self::asc11()),
            21 => Ok(Self::asc21()),
            31 => Ok(Self::asc31()),
            other => Err(Error::config("kernel_size", format!("no preset for {other}; supported: 11, 21, 31"))),
        }
    }

    pub fn bank_len(&self) -> usize {
        self.length_grid_m.len() * self.orientation_grid_deg.len()
    }

    /// (L, phi_bar) pairs in bank order.
    pub fn entries(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.bank_len());
        for &l in &self.length_grid_m {
            for &o in &self.orientation_grid_deg {
                out.push((l, o));
            }
        }
        out
    }

    pub fn validate(&self, params: &RadarParams) -> Result<()> {
        let r = self.kernel_size;
        if r == 0 || r % 2 == 0 {
            return Err(Error::config("kernel_size", format!("must be odd, got {r}")));
        }
        if r > params.n_aspect_samples {
            return Err(Error::config(
                "kernel_size",
                format!("{r} exceeds the {} point grid", params.n_aspect_samples),
            ));
        }
        if self.length_grid_m.is_empty() {
            return Err(Error::config("length_grid", "must not be empty"));
        }
        if self.orientation_grid_deg.is_empty() {
            return Err(Error::config("orientation_grid", "must not be empty"));
        }
        let m = params.spatial_resolution;
        for &l in &self.length_grid_m {
            let p = libm::round(l / m);
            if !(l.is_finite() && p >= 1.0 && p <= r as f64 && (l / m - p).abs() < 1e-9) {
                return Err(Error::config(
                    "length_grid",
                    format!("length {l} m is not p * {m} m with integer 1 <= p <= {r}"),
                ));
            }
        }
        for &o in &self.orientation_grid_deg {
            if !(0.0..=90.0).contains(&o) {
                return Err(Error::config("orientation_grid", format!("orientation {o} deg outside [0, 90]")));
            }
        }
        Ok(())
    }
}

/// Ordered set of `r x r` kernels with their `(L, phi_bar)` metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    kernel_size: usize,
    /// Row-major `r * r` values per kernel.
    kernels: Vec<Vec<f64>>,
    meta: Vec<(f64, f64)>,
}

impl KernelBank {
    pub fn new(kernel_size: usize, kernels: Vec<Vec<f64>>, meta: Vec<(f64, f64)>) -> Result<Self> {
        if kernels.len() != meta.len() {
            return Err(Error::shape(format!("{} kernels but {} metadata rows", kernels.len(), meta.len())));
        }
        let area = kernel_size * kernel_size;
        if let Some((i, k)) = kernels.iter().enumerate().find(|(_, k)| k.len() != area) {
            return Err(Error::shape(format!("kernel {i} has {} values, expected {area}", k.len())));
        }
        if kernels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::numerical("kernel bank contains non-finite values"));
        }
        Ok(KernelBank { kernel_size, kernels, meta })
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn kernel(&self, i: usize) -> &[f64] {
        &self.kernels[i]
    }

    pub fn kernels(&self) -> &[Vec<f64>] {
        &self.kernels
    }

    /// `(L in meters, phi_bar in degrees)` per kernel.
    pub fn meta(&self) -> &[(f64, f64)] {
        &self.meta
    }
}

/// One kernel: simplified response, transform, center crop, normalization.
pub fn synthesize_kernel(
    length_m: f64,
    phi_bar_deg: f64,
    kernel_size: usize,
    normalize: NormalizeMode,
    grid: &FrequencyAspectGrid,
) -> Result<Vec<f64>> {
    let center = ScatteringCenter::distributed(1.0, 0.0, 0.0, length_m, phi_bar_deg);
    let spectrum = asc_response(&center, grid, ResponseMode::Simplified)?;
    let img = spectrum_to_image_cropped(&spectrum, kernel_size)?;
    let mut k = img.into_vec();
    if normalize == NormalizeMode::ZeroMeanUnitL2 {
        normalize_zero_mean_unit_l2(&mut k).map_err(|_| {
            Error::numerical(format!("kernel L={length_m} phi_bar={phi_bar_deg} is constant and cannot be normalized"))
        })?;
    }
    Ok(k)
}

pub(crate) fn normalize_zero_mean_unit_l2(k: &mut [f64]) -> Result<()> {
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    k.iter_mut().for_each(|v| *v -= mean);
    let norm = sqrt(k.iter().map(|v| v * v).sum::<f64>());
    if !(norm > 0.0) {
        return Err(Error::numerical("zero-variance kernel"));
    }
    k.iter_mut().for_each(|v| *v /= norm);
    Ok(())
}

/// Builds every kernel of `spec` in bank order.
pub fn build_kernel_bank(spec: &AscKernelSpec, params: &RadarParams) -> Result<KernelBank> {
    spec.validate(params)?;
    let grid = make_radar_grid(params)?;
    let meta = spec.entries();
    let kernels = meta
        .iter()
        .map(|&(l, o)| synthesize_kernel(l, o, spec.kernel_size, spec.normalize, &grid))
        .collect::<Result<Vec<_>>>()?;
    KernelBank::new(spec.kernel_size, kernels, meta)
}
