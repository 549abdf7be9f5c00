//! Attributed scattering center responses and multi-center scene spectra.

use alloc::format;

use core::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::radar::FrequencyAspectGrid;
use crate::error::{Error, Result};
use crate::math::{deg_to_rad, exp, sin, sinc, sincos};
use crate::matrix::ComplexMatrix;

/// Seven-parameter scattering center `[A, alpha, x, y, L, phi_bar, gamma]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringCenter {
    pub amplitude: f64,
    pub alpha: f64,
    /// Cross-range position (m).
    pub x: f64,
    /// Range position (m).
    pub y: f64,
    /// Length of a distributed center (m). Zero for localized centers.
    pub length: f64,
    /// Orientation of a distributed center (degrees).
    pub phi_bar_deg: f64,
    pub gamma: f64,
}

impl ScatteringCenter {
    /// Distributed center with `alpha = gamma = 0`, the form used for kernel synthesis.
    pub fn distributed(amplitude: f64, x: f64, y: f64, length: f64, phi_bar_deg: f64) -> Self {
        ScatteringCenter { amplitude, alpha: 0.0, x, y, length, phi_bar_deg, gamma: 0.0 }
    }

    /// Localized center (`L = phi_bar = 0`).
    pub fn localized(amplitude: f64, alpha: f64, x: f64, y: f64, gamma: f64) -> Self {
        ScatteringCenter { amplitude, alpha, x, y, length: 0.0, phi_bar_deg: 0.0, gamma }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.amplitude, self.alpha, self.x, self.y, self.length, self.phi_bar_deg, self.gamma];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("scattering_center", "all parameters must be finite"));
        }
        if self.amplitude < 0.0 {
            return Err(Error::config("amplitude", format!("must be >= 0, got {}", self.amplitude)));
        }
        if self.length < 0.0 {
            return Err(Error::config("length", format!("must be >= 0, got {}", self.length)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseMode {
    /// All seven parameters.
    Full,
    /// Unit amplitude at the origin with `alpha = gamma = 0`: a pure sinc in aspect.
    Simplified,
}

/// Evaluates one center over the grid. Zero-pad rows are exactly zero.
///
/// The aspect factor is the normalized sinc of `2 f L sin(phi - phi_bar) / c`
/// in both modes, so the full response with `alpha = gamma = 0`, `A = 1` and a
/// center at the origin coincides with the simplified one.
pub fn asc_response(
    center: &ScatteringCenter,
    grid: &FrequencyAspectGrid,
    mode: ResponseMode,
) -> Result<ComplexMatrix> {
    center.validate()?;
    let mut out = ComplexMatrix::zeros(grid.n_freq(), grid.n_aspect());
    accumulate_response(center, grid, mode, &mut out);
    Ok(out)
}

pub(crate) fn accumulate_response(
    center: &ScatteringCenter,
    grid: &FrequencyAspectGrid,
    mode: ResponseMode,
    out: &mut ComplexMatrix,
) {
    let c = grid.light_speed;
    let phi_bar = deg_to_rad(center.phi_bar_deg);
    let n_asp = grid.n_aspect();
    // per-column quantities
    let mut sin_rel = alloc::vec::Vec::with_capacity(n_asp);
    let mut trig = alloc::vec::Vec::with_capacity(n_asp);
    for &a in &grid.aspects_deg {
        let phi = deg_to_rad(a);
        sin_rel.push(sin(phi - phi_bar));
        trig.push(sincos(phi));
    }

    for (row, (&f, &active)) in grid.freqs_hz.iter().zip(&grid.active).enumerate() {
        if !active {
            continue;
        }
        let sinc_scale = 2.0 * f / c * center.length;
        match mode {
            ResponseMode::Simplified => {
                for col in 0..n_asp {
                    *out.get_mut(row, col) += Complex64::new(sinc(sinc_scale * sin_rel[col]), 0.0);
                }
            }
            ResponseMode::Full => {
                // (j f/fc)^alpha = (f/fc)^alpha * exp(j pi alpha / 2)
                let freq_term = Complex64::from_polar(
                    center.amplitude * libm::pow(f / grid.carrier_freq, center.alpha),
                    PI * center.alpha / 2.0,
                );
                let k = 4.0 * PI * f / c;
                for col in 0..n_asp {
                    let (s, co) = trig[col];
                    let (ps, pc) = sincos(-k * (center.x * co + center.y * s));
                    let aspect = sinc(sinc_scale * sin_rel[col]) * exp(-2.0 * PI * f * center.gamma * s);
                    *out.get_mut(row, col) += freq_term * Complex64::new(pc, ps) * aspect;
                }
            }
        }
    }
}

/// Superposes the full responses of `centers` and adds circular complex Gaussian
/// noise with `E|n|^2 = noise_sigma^2` on every measured slot.
pub fn scene_spectrum<R: Rng + ?Sized>(
    centers: &[ScatteringCenter],
    grid: &FrequencyAspectGrid,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    if centers.is_empty() {
        return Err(Error::argument("scene_spectrum needs at least one scattering center"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::argument(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    for c in centers {
        c.validate()?;
    }
    let mut out = ComplexMatrix::zeros(grid.n_freq(), grid.n_aspect());
    for c in centers {
        accumulate_response(c, grid, ResponseMode::Full, &mut out);
    }
    if noise_sigma > 0.0 {
        let scale = noise_sigma / core::f64::consts::SQRT_2;
        for (row, &active) in grid.active.iter().enumerate() {
            if !active {
                continue;
            }
            for col in 0..grid.n_aspect() {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                *out.get_mut(row, col) += Complex64::new(re * scale, im * scale);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asc::radar::{make_radar_grid, RadarParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> FrequencyAspectGrid {
        make_radar_grid(&RadarParams::default()).unwrap()
    }

    #[test]
    fn simplified_is_one_on_the_orientation_and_for_zero_length() {
        let g = grid();
        let c = ScatteringCenter::distributed(1.0, 0.0, 0.0, 0.0, 30.0);
        let resp = asc_response(&c, &g, ResponseMode::Simplified).unwrap();
        for row in 0..g.n_freq() {
            for col in 0..g.n_aspect() {
                let expect = if g.active[row] { 1.0 } else { 0.0 };
                assert_eq!(*resp.get(row, col), Complex64::new(expect, 0.0));
            }
        }
        // phi == phi_bar at the center aspect column (0 degrees)
        let c = ScatteringCenter::distributed(1.0, 0.0, 0.0, 2.4, 0.0);
        let resp = asc_response(&c, &g, ResponseMode::Simplified).unwrap();
        for row in 19..208 {
            assert!((resp.get(row, 113).re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn simplified_hits_the_sinc_zero() {
        // choose L so that 2 f L sin(phi - phi_bar)/c = 1 at one grid point
        let g = grid();
        let (row, col) = (100, 200);
        let f = g.freqs_hz[row];
        let s = sin(deg_to_rad(g.aspects_deg[col]) - 0.0);
        let length = g.light_speed / (2.0 * f * s);
        let c = ScatteringCenter::distributed(1.0, 0.0, 0.0, length, 0.0);
        let resp = asc_response(&c, &g, ResponseMode::Simplified).unwrap();
        assert!(resp.get(row, col).norm() < 1e-12);
    }

    #[test]
    fn masked_rows_are_exactly_zero_in_full_mode() {
        let g = grid();
        let c = ScatteringCenter { amplitude: 2.0, alpha: 0.5, x: 1.0, y: -2.0, length: 1.2, phi_bar_deg: 20.0, gamma: 1e-12 };
        let resp = asc_response(&c, &g, ResponseMode::Full).unwrap();
        for row in (0..19).chain(208..227) {
            assert!(resp.row(row).iter().all(|z| *z == Complex64::new(0.0, 0.0)));
        }
    }

    #[test]
    fn full_reduces_to_simplified() {
        let g = grid();
        for &(l, pb) in &[(0.3, 0.0), (3.0, 40.0), (6.3, 90.0), (1.5, -12.0)] {
            let c = ScatteringCenter::distributed(1.0, 0.0, 0.0, l, pb);
            let full = asc_response(&c, &g, ResponseMode::Full).unwrap();
            let simp = asc_response(&c, &g, ResponseMode::Simplified).unwrap();
            for (a, b) in full.as_slice().iter().zip(simp.as_slice()) {
                assert!((a - b).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn scene_rejects_empty_and_negative_noise() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(scene_spectrum(&[], &g, 0.0, &mut rng), Err(Error::Argument(_))));
        let c = ScatteringCenter::distributed(1.0, 0.0, 0.0, 1.0, 0.0);
        assert!(scene_spectrum(&[c], &g, -1.0, &mut rng).is_err());
        let neg = ScatteringCenter { amplitude: -1.0, ..c };
        assert!(matches!(asc_response(&neg, &g, ResponseMode::Full), Err(Error::Config { .. })));
    }

    #[test]
    fn scene_is_linear_without_noise() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = ScatteringCenter { amplitude: 0.7, alpha: 0.5, x: 1.5, y: -0.6, length: 0.9, phi_bar_deg: 10.0, gamma: 0.0 };
        let single = asc_response(&c, &g, ResponseMode::Full).unwrap();
        let one = scene_spectrum(&[c], &g, 0.0, &mut rng).unwrap();
        assert_eq!(one, single);
        let two = scene_spectrum(&[c, c], &g, 0.0, &mut rng).unwrap();
        for (a, b) in two.as_slice().iter().zip(single.as_slice()) {
            assert!((a - b * 2.0).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_only_touches_measured_rows() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = ScatteringCenter::distributed(0.0, 0.0, 0.0, 0.0, 0.0);
        let noisy = scene_spectrum(&[c], &g, 0.5, &mut rng).unwrap();
        assert!(noisy.row(0).iter().all(|z| z.norm() == 0.0));
        let measured: f64 = (19..208).map(|r| noisy.row(r).iter().map(|z| z.norm_sqr()).sum::<f64>()).sum();
        let mean_power = measured / (189.0 * 227.0);
        assert!((mean_power - 0.25).abs() < 0.01, "{mean_power}");
    }
}
