//! Radar acquisition parameters and the sampled frequency/aspect grid.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Imaging parameters of the radar whose returns the kernels and scenes emulate.
///
/// Defaults follow the X-band MSTAR collection: 9.6 GHz carrier, 0.49 GHz
/// bandwidth over 9.36..9.85 GHz, 189 frequency samples padded with 19 zeros at
/// each end, and 227 aspect samples over a 2.8 degree aperture.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarParams {
    pub carrier_freq: f64,
    pub bandwidth: f64,
    pub freq_min: f64,
    pub freq_max: f64,
    pub n_freq_samples: usize,
    pub zero_pad_each_end: usize,
    pub aspect_span_deg: f64,
    pub n_aspect_samples: usize,
    pub light_speed: f64,
    /// Meters per image pixel.
    pub spatial_resolution: f64,
    /// Reported sampling figure (Hz). Kept for provenance only; nothing derives from it.
    pub sampling_frequency_note: f64,
}

impl Default for RadarParams {
    fn default() -> Self {
        RadarParams {
            carrier_freq: 9.6e9,
            bandwidth: 0.49e9,
            freq_min: 9.36e9,
            freq_max: 9.85e9,
            n_freq_samples: 189,
            zero_pad_each_end: 19,
            aspect_span_deg: 2.8,
            n_aspect_samples: 227,
            light_speed: 299_792_458.0,
            spatial_resolution: 0.3,
            sampling_frequency_note: 0.591e9,
        }
    }
}

impl RadarParams {
    /// Number of rows of the padded frequency axis.
    pub fn padded_freq_len(&self) -> usize {
        self.n_freq_samples + 2 * self.zero_pad_each_end
    }

    /// Every invariant violation, in field order.
    pub fn violations(&self) -> Vec<Error> {
        let mut out = Vec::new();
        let finite = |v: f64| v.is_finite();
        if !(finite(self.carrier_freq) && self.carrier_freq > 0.0) {
            out.push(Error::config("carrier_freq", "must be positive and finite"));
        }
        if !(finite(self.bandwidth) && self.bandwidth > 0.0) {
            out.push(Error::config("bandwidth", "must be positive and finite"));
        }
        if !(finite(self.freq_min) && self.freq_min > 0.0) {
            out.push(Error::config("freq_min", "must be positive and finite"));
        }
        if !finite(self.freq_max) {
            out.push(Error::config("freq_max", "must be finite"));
        }
        if !(self.freq_min < self.carrier_freq) {
            out.push(Error::config(
                "freq_min",
                format!("freq_min {} must lie below carrier_freq {}", self.freq_min, self.carrier_freq),
            ));
        }
        if !(self.carrier_freq < self.freq_max) {
            out.push(Error::config(
                "freq_max",
                format!("freq_max {} must lie above carrier_freq {}", self.freq_max, self.carrier_freq),
            ));
        }
        let span = self.freq_max - self.freq_min;
        if self.bandwidth > 0.0 && (span - self.bandwidth).abs() > 1e-6 * self.bandwidth {
            out.push(Error::config(
                "bandwidth",
                format!("freq_max - freq_min = {span} differs from bandwidth {}", self.bandwidth),
            ));
        }
        if self.n_freq_samples == 0 {
            out.push(Error::config("n_freq_samples", "must be at least 1"));
        }
        if self.n_aspect_samples == 0 {
            out.push(Error::config("n_aspect_samples", "must be at least 1"));
        }
        if self.n_freq_samples + 2 * self.zero_pad_each_end != self.n_aspect_samples {
            out.push(Error::config(
                "zero_pad_each_end",
                format!(
                    "n_freq_samples + 2*zero_pad_each_end = {} must equal n_aspect_samples = {}",
                    self.padded_freq_len(),
                    self.n_aspect_samples
                ),
            ));
        }
        if !(finite(self.aspect_span_deg) && self.aspect_span_deg >= 0.0) {
            out.push(Error::config("aspect_span_deg", "must be finite and non-negative"));
        }
        if !(finite(self.light_speed) && self.light_speed > 0.0) {
            out.push(Error::config("light_speed", "must be positive and finite"));
        }
        if !(finite(self.spatial_resolution) && self.spatial_resolution > 0.0) {
            out.push(Error::config("spatial_resolution", "must be positive"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Sampled (frequency, aspect) plane. Rows index frequency, columns index aspect.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyAspectGrid {
    /// Frequency of every row in Hz. Padded rows carry the continued uniform
    /// spacing for reference but are masked out.
    pub freqs_hz: Vec<f64>,
    /// `true` for measured rows, `false` for zero-pad rows.
    pub active: Vec<bool>,
    pub aspects_deg: Vec<f64>,
    pub carrier_freq: f64,
    pub light_speed: f64,
}

impl FrequencyAspectGrid {
    pub fn n_freq(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn n_aspect(&self) -> usize {
        self.aspects_deg.len()
    }

    /// Spacing between adjacent frequency rows (0 for a single sample).
    pub fn freq_step(&self) -> f64 {
        match self.active.iter().position(|&a| a) {
            Some(i) if i + 1 < self.freqs_hz.len() => self.freqs_hz[i + 1] - self.freqs_hz[i],
            _ => 0.0,
        }
    }
}

/// Builds the padded frequency axis and the symmetric aspect axis.
pub fn make_radar_grid(params: &RadarParams) -> Result<FrequencyAspectGrid> {
    params.validate()?;
    let n = params.n_freq_samples;
    let pad = params.zero_pad_each_end;
    let step = if n > 1 { (params.freq_max - params.freq_min) / (n - 1) as f64 } else { 0.0 };
    let total = n + 2 * pad;
    let mut freqs_hz = Vec::with_capacity(total);
    let mut active = Vec::with_capacity(total);
    for row in 0..total {
        let offset = row as f64 - pad as f64;
        let f = if row >= pad && row < pad + n {
            let i = row - pad;
            // pin the last sample to freq_max exactly
            if n > 1 && i == n - 1 {
                params.freq_max
            } else {
                params.freq_min + i as f64 * step
            }
        } else {
            params.freq_min + offset * step
        };
        freqs_hz.push(f);
        active.push(row >= pad && row < pad + n);
    }

    let m = params.n_aspect_samples;
    let half = params.aspect_span_deg / 2.0;
    let aspects_deg = (0..m)
        .map(|i| {
            if m == 1 {
                0.0
            } else if i == m - 1 {
                half
            } else {
                -half + i as f64 * (params.aspect_span_deg / (m - 1) as f64)
            }
        })
        .collect();

    Ok(FrequencyAspectGrid {
        freqs_hz,
        active,
        aspects_deg,
        carrier_freq: params.carrier_freq,
        light_speed: params.light_speed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_is_227_square() {
        let grid = make_radar_grid(&RadarParams::default()).unwrap();
        assert_eq!(grid.n_freq(), 227);
        assert_eq!(grid.n_aspect(), 227);
        assert_eq!(grid.active.iter().filter(|a| **a).count(), 189);
        assert!(!grid.active[18] && grid.active[19] && grid.active[207] && !grid.active[208]);
        assert_eq!(grid.aspects_deg[0], -1.4);
        assert_eq!(grid.aspects_deg[226], 1.4);
        assert!(grid.aspects_deg[113].abs() < 1e-12);
    }

    #[test]
    fn frequency_step_matches_arithmetic() {
        let grid = make_radar_grid(&RadarParams::default()).unwrap();
        let expected = (9.85e9 - 9.36e9) / 188.0;
        assert!((grid.freq_step() - expected).abs() < 1e-3);
        assert_eq!(grid.freqs_hz[19], 9.36e9);
        assert_eq!(grid.freqs_hz[207], 9.85e9);
    }

    #[test]
    fn small_unpadded_grid() {
        let p = RadarParams { n_freq_samples: 4, zero_pad_each_end: 0, n_aspect_samples: 4, ..Default::default() };
        let grid = make_radar_grid(&p).unwrap();
        assert_eq!((grid.n_freq(), grid.n_aspect()), (4, 4));
        assert!(grid.active.iter().all(|a| *a));
    }

    #[test]
    fn bad_counts_name_the_field() {
        let p = RadarParams { n_aspect_samples: 200, ..Default::default() };
        match make_radar_grid(&p) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "zero_pad_each_end"),
            other => panic!("unexpected {other:?}"),
        }
        let p = RadarParams { spatial_resolution: 0.0, ..Default::default() };
        assert!(matches!(p.validate(), Err(Error::Config { field, .. }) if field == "spatial_resolution"));
        let p = RadarParams { freq_max: 9.5e9, ..Default::default() };
        let fields: Vec<_> = p
            .violations()
            .into_iter()
            .map(|e| match e {
                Error::Config { field, .. } => field,
                _ => unreachable!(),
            })
            .collect();
        assert!(fields.contains(&"freq_max".into()) && fields.contains(&"bandwidth".into()));
    }
}
