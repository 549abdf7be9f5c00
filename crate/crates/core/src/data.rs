//! SAR samples, preprocessing, SOC partitions and synthetic scatterer datasets.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::asc::{center_index, make_radar_grid, scene_spectrum, spectrum_to_image_window, RadarParams, ScatteringCenter};
use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, RealMatrix};
use crate::tensor::Tensor;

pub const META_DEPRESSION: &str = "depression_deg";
pub const META_AZIMUTH: &str = "azimuth_deg";
pub const META_SERIAL: &str = "serial";

/// One SAR chip. `label == None` marks an unknown-class sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SarSample {
    pub magnitude: RealMatrix,
    pub phase: Option<RealMatrix>,
    pub label: Option<String>,
    pub metadata: BTreeMap<String, String>,
}

impl SarSample {
    pub fn new(magnitude: RealMatrix, label: Option<String>) -> Self {
        SarSample { magnitude, phase: None, label, metadata: BTreeMap::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self.magnitude.as_slice().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::argument(format!("magnitude entries must be finite and >= 0, found {bad}")));
        }
        if let Some(p) = &self.phase {
            if p.rows() != self.magnitude.rows() || p.cols() != self.magnitude.cols() {
                return Err(Error::shape(format!(
                    "phase {}x{} does not match magnitude {}x{}",
                    p.rows(),
                    p.cols(),
                    self.magnitude.rows(),
                    self.magnitude.cols()
                )));
            }
        }
        Ok(())
    }

    fn meta_f64(&self, key: &str) -> Option<f64> {
        self.metadata.get(key).and_then(|v| v.trim().parse().ok())
    }

    pub fn depression_deg(&self) -> Option<f64> {
        self.meta_f64(META_DEPRESSION)
    }

    pub fn azimuth_deg(&self) -> Option<f64> {
        self.meta_f64(META_AZIMUTH)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PreprocessMode {
    /// Symmetric zero padding about the center. Larger sources are cropped.
    #[default]
    Pad,
    /// Center crop. Smaller sources are zero padded.
    CenterCrop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scaling {
    /// Divide by the per-image maximum.
    #[default]
    Linear,
    /// `ln(1 + x)` followed by max scaling.
    Log,
}

/// Places the magnitude image about its center in a `target x target` window
/// and scales it into `[0, 1]`. Returns `[1, target, target]`.
///
/// Both modes align the source center pixel with the target center pixel, so
/// they agree wherever both are defined.
pub fn preprocess(sample: &SarSample, target: usize, _mode: PreprocessMode, scaling: Scaling) -> Result<Tensor> {
    if target == 0 {
        return Err(Error::argument("target size must be >= 1"));
    }
    let src = &sample.magnitude;
    let (tc, rc, cc) = (center_index(target) as isize, center_index(src.rows()) as isize, center_index(src.cols()) as isize);
    let mut out = vec![0.0; target * target];
    for i in 0..target {
        let si = i as isize - tc + rc;
        if si < 0 || si >= src.rows() as isize {
            continue;
        }
        for j in 0..target {
            let sj = j as isize - tc + cc;
            if sj < 0 || sj >= src.cols() as isize {
                continue;
            }
            let v = *src.get(si as usize, sj as usize);
            out[i * target + j] = match scaling {
                Scaling::Linear => v,
                Scaling::Log => libm::log1p(v),
            };
        }
    }
    let max = out.iter().cloned().fold(0.0f64, f64::max);
    if !max.is_finite() {
        return Err(Error::numerical("non-finite magnitude in preprocess"));
    }
    if max > 0.0 {
        out.iter_mut().for_each(|v| *v /= max);
    }
    Tensor::new(vec![1, target, target], out)
}

/// Preprocessed images with integer labels, stored contiguously as `[n, 1, s, s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    size: usize,
    images: Vec<f64>,
    labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(size: usize) -> Self {
        LabeledSet { size, images: Vec::new(), labels: Vec::new() }
    }

    /// `image` must hold `size * size` values.
    pub fn push(&mut self, image: &[f64], label: usize) -> Result<()> {
        if image.len() != self.size * self.size {
            return Err(Error::shape(format!("image has {} values, expected {}x{}", image.len(), self.size, self.size)));
        }
        self.images.extend_from_slice(image);
        self.labels.push(label);
        Ok(())
    }

    /// Preprocesses `samples` and maps their labels through `class_index`.
    /// Samples whose label is absent from the map are skipped.
    pub fn from_samples(
        samples: &[&SarSample],
        class_index: &BTreeMap<String, usize>,
        size: usize,
        mode: PreprocessMode,
        scaling: Scaling,
    ) -> Result<Self> {
        let mut set = LabeledSet::new(size);
        for s in samples {
            let Some(k) = s.label.as_ref().and_then(|l| class_index.get(l)) else { continue };
            let t = preprocess(s, size, mode, scaling)?;
            set.push(t.values(), *k)?;
        }
        Ok(set)
    }

    pub fn image_size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let n = self.size * self.size;
        &self.images[i * n..(i + 1) * n]
    }

    /// Gathers `indices` into a `[B, 1, s, s]` tensor.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let n = self.size * self.size;
        let mut values = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::argument(format!("sample index {i} out of range 0..{}", self.len())));
            }
            values.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Ok((Tensor::new(vec![indices.len(), 1, self.size, self.size], values)?, labels))
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut out = LabeledSet::new(self.size);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::argument(format!("sample index {i} out of range 0..{}", self.len())));
            }
            out.push(self.image(i), self.labels[i])?;
        }
        Ok(out)
    }

    /// Per-class indices, in storage order.
    pub fn indices_by_class(&self, n_classes: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); n_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            if l < n_classes {
                out[l].push(i);
            }
        }
        out
    }
}

/// Train/test partition over a sample list, by index.
#[derive(Debug, Clone, PartialEq)]
pub struct SocSplit {
    pub known: Vec<String>,
    pub unknown: Vec<String>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl SocSplit {
    /// Label index of each known class, in `known` order.
    pub fn class_index(&self) -> BTreeMap<String, usize> {
        self.known.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect()
    }
}

pub const TRAIN_DEPRESSION_DEG: f64 = 17.0;
pub const TEST_DEPRESSION_DEG: f64 = 15.0;

/// One row of the standard MSTAR ten-class split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SocEntry {
    pub class: &'static str,
    pub serial: &'static str,
    pub train_count: usize,
    pub test_count: usize,
}

const fn soc(class: &'static str, serial: &'static str, train_count: usize, test_count: usize) -> SocEntry {
    SocEntry { class, serial, train_count, test_count }
}

/// Classes, serial numbers and image counts of the standard split
/// (17 degree training, 15 degree testing).
pub const SOC_TABLE: [SocEntry; 10] = [
    soc("BMP2", "9563", 233, 195),
    soc("BTR70", "c71", 233, 196),
    soc("T72", "132", 232, 196),
    soc("T62", "A51", 299, 273),
    soc("BRDM2", "E71", 298, 274),
    soc("BTR60", "7532", 256, 195),
    soc("ZSU23/4", "d08", 299, 274),
    soc("D7", "13015", 299, 274),
    soc("ZIL131", "E12", 299, 274),
    soc("2S1", "B01", 299, 274),
];

/// Known classes of the standard open-set protocol; the other three are unknown.
pub const SOC_KNOWN: [&str; 7] = ["2S1", "BRDM2", "BTR60", "D7", "T62", "ZIL131", "ZSU23/4"];
pub const SOC_UNKNOWN: [&str; 3] = ["BMP2", "BTR70", "T72"];

/// Table entry for a class label. Case and the `/` in `ZSU23/4` are ignored,
/// so directory names such as `zsu234` match.
pub fn soc_entry(label: &str) -> Option<&'static SocEntry> {
    let norm = |s: &str| s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_uppercase();
    let l = norm(label);
    SOC_TABLE.iter().find(|e| norm(e.class) == l)
}

/// Differences between the samples present and the table counts, one line per
/// class and partition, for classes named in the table.
pub fn soc_count_mismatches(samples: &[SarSample]) -> Vec<String> {
    let mut out = Vec::new();
    for e in &SOC_TABLE {
        let of_class: Vec<&SarSample> =
            samples.iter().filter(|s| s.label.as_deref().and_then(soc_entry).is_some_and(|x| x == e)).collect();
        if of_class.is_empty() {
            continue;
        }
        for (dep, want, part) in [(TRAIN_DEPRESSION_DEG, e.train_count, "train"), (TEST_DEPRESSION_DEG, e.test_count, "test")] {
            let got = of_class.iter().filter(|s| s.depression_deg().is_some_and(|d| (d - dep).abs() < 0.5)).count();
            if got != want {
                out.push(format!("{} {part}: {got} images, standard split has {want}", e.class));
            }
        }
    }
    out
}

/// Partitions `samples` into known-class training data and a test set that
/// also holds every sample of the unknown classes.
///
/// When every involved sample carries a depression angle, 17 degree samples
/// train and 15 degree samples test. Otherwise each known class is split by
/// a seeded shuffle with `test_fraction` of it held out.
pub fn make_soc_split(
    samples: &[SarSample],
    known: &[String],
    unknown: &[String],
    test_fraction: f64,
    seed: u64,
) -> Result<SocSplit> {
    if known.is_empty() {
        return Err(Error::config("known", "at least one known class is required"));
    }
    if let Some(c) = known.iter().find(|c| unknown.contains(c)) {
        return Err(Error::config("unknown", format!("class `{c}` is listed as both known and unknown")));
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::config("test_fraction", format!("must lie in [0, 1), got {test_fraction}")));
    }
    for c in known.iter().chain(unknown) {
        if !samples.iter().any(|s| s.label.as_deref() == Some(c.as_str())) {
            return Err(Error::config("classes", format!("class `{c}` has no samples")));
        }
    }
    let involved = |s: &SarSample| s.label.as_ref().is_some_and(|l| known.contains(l) || unknown.contains(l));
    let tagged = samples.iter().filter(|s| involved(s)).all(|s| s.depression_deg().is_some());
    let near = |a: f64, b: f64| (a - b).abs() < 0.5;

    let mut train = Vec::new();
    let mut test = Vec::new();
    if tagged {
        for (i, s) in samples.iter().enumerate() {
            let Some(l) = s.label.as_ref() else { continue };
            let dep = s.depression_deg().unwrap_or(f64::NAN);
            if known.contains(l) && near(dep, TRAIN_DEPRESSION_DEG) {
                train.push(i);
            } else if (known.contains(l) || unknown.contains(l)) && near(dep, TEST_DEPRESSION_DEG) {
                test.push(i);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in known {
            let mut idx: Vec<usize> =
                samples.iter().enumerate().filter(|(_, s)| s.label.as_ref() == Some(c)).map(|(i, _)| i).collect();
            idx.shuffle(&mut rng);
            let n_test = libm::round(idx.len() as f64 * test_fraction) as usize;
            test.extend_from_slice(&idx[..n_test]);
            train.extend_from_slice(&idx[n_test..]);
        }
        for (i, s) in samples.iter().enumerate() {
            if s.label.as_ref().is_some_and(|l| unknown.contains(l)) {
                test.push(i);
            }
        }
        train.sort_unstable();
        test.sort_unstable();
    }
    Ok(SocSplit { known: known.to_vec(), unknown: unknown.to_vec(), train, test })
}

/// Per-sample perturbation scales applied to a class template.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    /// Standard deviation of x and y (m).
    pub position_m: f64,
    /// Standard deviation of L (m).
    pub length_m: f64,
    /// Standard deviation of the orientation (degrees).
    pub orientation_deg: f64,
    /// Relative standard deviation of the amplitude.
    pub amplitude_rel: f64,
}

impl Jitter {
    pub const NONE: Jitter = Jitter { position_m: 0.0, length_m: 0.0, orientation_deg: 0.0, amplitude_rel: 0.0 };
}

impl Default for Jitter {
    fn default() -> Self {
        Jitter { position_m: 0.15, length_m: 0.1, orientation_deg: 3.0, amplitude_rel: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub scatterers_min: usize,
    pub scatterers_max: usize,
    /// Template positions are drawn uniformly in `[-extent_m, extent_m]`.
    pub extent_m: f64,
    pub jitter: Jitter,
    pub noise_sigma: f64,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_classes: 5,
            train_per_class: 200,
            test_per_class: 100,
            scatterers_min: 4,
            scatterers_max: 7,
            extent_m: 5.0,
            jitter: Jitter::default(),
            noise_sigma: 0.5,
            image_size: 64,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn violations(&self, radar: &RadarParams) -> Vec<Error> {
        let mut out = Vec::new();
        if self.n_classes == 0 {
            out.push(Error::config("n_classes", "must be >= 1"));
        }
        if self.train_per_class == 0 {
            out.push(Error::config("train_per_class", "must be >= 1"));
        }
        if self.test_per_class == 0 {
            out.push(Error::config("test_per_class", "must be >= 1"));
        }
        if self.scatterers_min == 0 || self.scatterers_min > self.scatterers_max {
            out.push(Error::config(
                "scatterers_min",
                format!("need 1 <= min <= max, got {}..{}", self.scatterers_min, self.scatterers_max),
            ));
        }
        if !(self.extent_m >= 0.0 && self.extent_m.is_finite()) {
            out.push(Error::config("extent_m", "must be finite and >= 0"));
        }
        let j = self.jitter;
        if [j.position_m, j.length_m, j.orientation_deg, j.amplitude_rel].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            out.push(Error::config("jitter", "all jitter scales must be finite and >= 0"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            out.push(Error::config("noise_sigma", "must be finite and >= 0"));
        }
        let grid = radar.n_aspect_samples;
        if self.image_size == 0 || self.image_size > grid {
            out.push(Error::config("image_size", format!("must lie in 1..={grid} (padded grid side)")));
        }
        out
    }

    pub fn validate(&self, radar: &RadarParams) -> Result<()> {
        match self.violations(radar).into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Turns a square spectrum into a centered magnitude window.
pub trait ImageFormer {
    fn form(&self, spectrum: &ComplexMatrix, size: usize) -> Result<RealMatrix>;
}

/// Direct evaluation of the needed output window.
#[derive(Debug, Clone, Copy, Default)]
pub struct DirectFormer;

impl ImageFormer for DirectFormer {
    fn form(&self, spectrum: &ComplexMatrix, size: usize) -> Result<RealMatrix> {
        spectrum_to_image_window(spectrum, size)
    }
}

pub fn synth_class_name(k: usize) -> String {
    format!("class{k:02}")
}

/// Fixed scattering-center layout of each class, drawn once under `cfg.seed`.
pub fn synth_templates(cfg: &SynthConfig) -> Vec<Vec<ScatteringCenter>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let e = cfg.extent_m;
    let pos = |rng: &mut ChaCha8Rng| if e > 0.0 { rng.random_range(-e..=e) } else { 0.0 };
    (0..cfg.n_classes)
        .map(|_| {
            let q = rng.random_range(cfg.scatterers_min..=cfg.scatterers_max);
            (0..q)
                .map(|i| {
                    let (x, y) = (pos(&mut rng), pos(&mut rng));
                    let amp = rng.random_range(0.5..1.5);
                    if i % 2 == 0 {
                        let length = rng.random_range(0.6..3.0);
                        let phi = rng.random_range(-60.0..60.0);
                        ScatteringCenter::distributed(amp, x, y, length, phi)
                    } else {
                        let alpha = [-0.5, 0.0, 0.5][rng.random_range(0..3)];
                        ScatteringCenter::localized(amp, alpha, x, y, 0.0)
                    }
                })
                .collect()
        })
        .collect()
}

/// One perturbed instance of `template`.
pub fn jitter_template<R: Rng + ?Sized>(template: &[ScatteringCenter], jitter: &Jitter, rng: &mut R) -> Vec<ScatteringCenter> {
    let mut draw = |sd: f64| -> f64 {
        if sd > 0.0 {
            Normal::new(0.0, sd).map(|n| n.sample(rng)).unwrap_or(0.0)
        } else {
            0.0
        }
    };
    template
        .iter()
        .map(|c| {
            let mut c = *c;
            c.x += draw(jitter.position_m);
            c.y += draw(jitter.position_m);
            if c.length > 0.0 {
                c.length = (c.length + draw(jitter.length_m)).max(0.0);
                c.phi_bar_deg += draw(jitter.orientation_deg);
            }
            c.amplitude = (c.amplitude * (1.0 + draw(jitter.amplitude_rel))).max(0.0);
            c
        })
        .collect()
}

/// Generated split: `train` then `test`, balanced per class, class-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub class_names: Vec<String>,
    pub train: Vec<SarSample>,
    pub test: Vec<SarSample>,
}

/// Seed of the stream used for global sample index `i` (train samples first).
fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + 1);
    rng
}

/// Synthesizes sample `index` of class `class`. Every sample has its own RNG
/// stream, so samples can be produced in any order.
pub fn synth_sample(
    cfg: &SynthConfig,
    templates: &[Vec<ScatteringCenter>],
    grid: &crate::asc::FrequencyAspectGrid,
    former: &dyn ImageFormer,
    class: usize,
    index: u64,
) -> Result<SarSample> {
    let mut rng = sample_rng(cfg.seed, index);
    let centers = jitter_template(&templates[class], &cfg.jitter, &mut rng);
    let spectrum = scene_spectrum(&centers, grid, cfg.noise_sigma, &mut rng)?;
    let magnitude = former.form(&spectrum, cfg.image_size)?;
    let mut s = SarSample::new(magnitude, Some(synth_class_name(class)));
    s.metadata.insert("synthetic_index".to_string(), format!("{index}"));
    Ok(s)
}

/// Index list `(class, global_index, is_train)` in output order.
pub fn synth_plan(cfg: &SynthConfig) -> Vec<(usize, u64, bool)> {
    let n_train = (cfg.n_classes * cfg.train_per_class) as u64;
    let mut plan = Vec::new();
    for k in 0..cfg.n_classes {
        for i in 0..cfg.train_per_class {
            plan.push((k, (k * cfg.train_per_class + i) as u64, true));
        }
    }
    for k in 0..cfg.n_classes {
        for i in 0..cfg.test_per_class {
            plan.push((k, n_train + (k * cfg.test_per_class + i) as u64, false));
        }
    }
    plan
}

pub fn synth_dataset(cfg: &SynthConfig, radar: &RadarParams, former: &dyn ImageFormer) -> Result<SynthDataset> {
    cfg.validate(radar)?;
    let grid = make_radar_grid(radar)?;
    let templates = synth_templates(cfg);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (k, idx, is_train) in synth_plan(cfg) {
        let s = synth_sample(cfg, &templates, &grid, former, k, idx)?;
        if is_train { train.push(s) } else { test.push(s) }
    }
    Ok(SynthDataset { class_names: (0..cfg.n_classes).map(synth_class_name).collect(), train, test })
}
