//! `key = value` configuration text.
//!
//! One pair per line, `#` starts a comment. Keys are flat and unique across
//! sections; network layers are given as `layer.N = conv,k=11,c=100,s=2,p=2`.
//! Every reader collects all problems before failing, so one run reports every
//! offending key.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use core::str::FromStr;

use crate::asc::{AscKernelSpec, NormalizeMode, RadarParams};
use crate::data::{Jitter, PreprocessMode, Scaling, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{OpenSetPolicy, ThresholdPolicy, DEFAULT_CALIBRATION_Q};
use crate::network::{FirstLayerInit, LayerSpec, NetworkConfig};
use crate::rpl::{BoundaryMode, Gate};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KvConfig {
    /// key -> (value, 1-based line; 0 for programmatic overrides)
    entries: BTreeMap<String, (String, usize)>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = KvConfig::default();
        let mut errors = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errors.push(Error::config(format!("line {line_no}"), format!("expected `key = value`, got `{line}`")));
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                errors.push(Error::config(format!("line {line_no}"), "empty key"));
                continue;
            }
            if let Some((_, first)) = cfg.entries.get(k) {
                errors.push(Error::config(k, format!("duplicate key on line {line_no} (first on line {first})")));
                continue;
            }
            cfg.entries.insert(k.to_string(), (v.to_string(), line_no));
        }
        Error::collect(errors)?;
        Ok(cfg)
    }

    /// Sets or replaces a value (command-line overrides).
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Canonical text form: sorted `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, (v, _)) in &self.entries {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    /// Keys not recognized by any reader.
    pub fn unknown_keys(&self) -> Vec<Error> {
        self.keys()
            .filter(|k| !ALL_KEYS.iter().any(|set| set.contains(k)) && !is_layer_key(k))
            .map(|k| Error::config(k, "unknown key"))
            .collect()
    }

    fn read<T: FromStr>(&self, key: &str, target: &mut T, errors: &mut Vec<Error>) {
        if let Some(v) = self.get(key) {
            match v.parse::<T>() {
                Ok(x) => *target = x,
                Err(_) => errors.push(Error::config(key, format!("cannot parse `{v}`"))),
            }
        }
    }

    fn read_list(&self, key: &str, target: &mut Vec<f64>, errors: &mut Vec<Error>) {
        if let Some(v) = self.get(key) {
            match parse_list(v) {
                Ok(x) => *target = x,
                Err(_) => errors.push(Error::config(key, format!("cannot parse list `{v}`"))),
            }
        }
    }

    fn read_with<T>(&self, key: &str, target: &mut T, errors: &mut Vec<Error>, f: impl Fn(&str) -> Option<T>) {
        if let Some(v) = self.get(key) {
            match f(v) {
                Some(x) => *target = x,
                None => errors.push(Error::config(key, format!("unrecognized value `{v}`"))),
            }
        }
    }
}

fn is_layer_key(k: &str) -> bool {
    k.strip_prefix("layer.").is_some_and(|n| n.parse::<usize>().is_ok())
}

/// Comma-separated reals.
pub fn parse_list(v: &str) -> core::result::Result<Vec<f64>, ()> {
    v.split(',').map(|s| s.trim().parse::<f64>().map_err(|_| ())).collect()
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

pub const RADAR_KEYS: &[&str] = &[
    "carrier_freq",
    "bandwidth",
    "freq_min",
    "freq_max",
    "n_freq_samples",
    "zero_pad_each_end",
    "aspect_span_deg",
    "n_aspect_samples",
    "light_speed",
    "spatial_resolution",
];
pub const KERNEL_KEYS: &[&str] = &["kernel_size", "length_grid", "orientation_grid", "normalize"];
pub const NETWORK_KEYS: &[&str] =
    &["network", "input_size", "embedding_dim", "first_layer_init", "kernel_bank", "freeze_first_layer"];
pub const TRAIN_KEYS: &[&str] =
    &["epochs", "learning_rate", "batch_size", "lambda", "gamma", "momentum", "seed", "deterministic", "clip"];
pub const SYNTH_KEYS: &[&str] = &[
    "n_classes",
    "train_per_class",
    "test_per_class",
    "scatterers_min",
    "scatterers_max",
    "extent_m",
    "jitter_position_m",
    "jitter_length_m",
    "jitter_orientation_deg",
    "jitter_amplitude_rel",
    "noise_sigma",
    "image_size",
];
pub const EVAL_KEYS: &[&str] = &[
    "boundary",
    "gate",
    "threshold",
    "calibration_q",
    "preprocess",
    "scaling",
    "known_classes",
    "unknown_classes",
    "test_fraction",
    "eval_batch",
];
const ALL_KEYS: &[&[&str]] = &[RADAR_KEYS, KERNEL_KEYS, NETWORK_KEYS, TRAIN_KEYS, SYNTH_KEYS, EVAL_KEYS];

impl RadarParams {
    pub fn from_kv(kv: &KvConfig, errors: &mut Vec<Error>) -> Self {
        let mut p = RadarParams::default();
        let before = errors.len();
        kv.read("carrier_freq", &mut p.carrier_freq, errors);
        kv.read("bandwidth", &mut p.bandwidth, errors);
        kv.read("freq_min", &mut p.freq_min, errors);
        kv.read("freq_max", &mut p.freq_max, errors);
        kv.read("n_freq_samples", &mut p.n_freq_samples, errors);
        kv.read("zero_pad_each_end", &mut p.zero_pad_each_end, errors);
        kv.read("aspect_span_deg", &mut p.aspect_span_deg, errors);
        kv.read("n_aspect_samples", &mut p.n_aspect_samples, errors);
        kv.read("light_speed", &mut p.light_speed, errors);
        kv.read("spatial_resolution", &mut p.spatial_resolution, errors);
        if errors.len() == before {
            errors.extend(p.violations());
        }
        p
    }
}

impl AscKernelSpec {
    /// Starts from the preset for `kernel_size` (default 11) and applies grid overrides.
    pub fn from_kv(kv: &KvConfig, radar: &RadarParams, errors: &mut Vec<Error>) -> Self {
        let mut size = 11usize;
        kv.read("kernel_size", &mut size, errors);
        let mut spec = match AscKernelSpec::preset(size) {
            Ok(s) => s,
            Err(e) => {
                if kv.get("length_grid").is_none() || kv.get("orientation_grid").is_none() {
                    errors.push(e);
                }
                AscKernelSpec {
                    kernel_size: size,
                    length_grid_m: Vec::new(),
                    orientation_grid_deg: Vec::new(),
                    normalize: NormalizeMode::default(),
                }
            }
        };
        let before = errors.len();
        kv.read_list("length_grid", &mut spec.length_grid_m, errors);
        kv.read_list("orientation_grid", &mut spec.orientation_grid_deg, errors);
        kv.read_with("normalize", &mut spec.normalize, errors, |v| match v {
            "raw_magnitude" => Some(NormalizeMode::RawMagnitude),
            "zero_mean_unit_l2" => Some(NormalizeMode::ZeroMeanUnitL2),
            _ => None,
        });
        if errors.len() == before {
            if let Err(e) = spec.validate(radar) {
                errors.push(e);
            }
        }
        spec
    }
}

impl LayerSpec {
    /// Parses `conv,k=..,c=..,s=..,p=..`, `pool,k=..,s=..` or `dense,out=..`.
    /// Omitted stride defaults to 1 (2 for pools), omitted padding to 0.
    pub fn parse(line: &str) -> core::result::Result<Self, String> {
        let mut parts = line.split(',').map(str::trim);
        let kind = parts.next().unwrap_or("");
        let mut args = BTreeMap::new();
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| format!("expected key=value, got `{p}`"))?;
            let v: usize = v.trim().parse().map_err(|_| format!("`{k}` needs a non-negative integer, got `{v}`"))?;
            args.insert(k.trim().to_string(), v);
        }
        let take = |args: &mut BTreeMap<String, usize>, names: &[&str], default: Option<usize>| {
            for n in names {
                if let Some(v) = args.remove(*n) {
                    return Ok(v);
                }
            }
            default.ok_or_else(|| format!("missing `{}`", names[0]))
        };
        let spec = match kind {
            "conv" => LayerSpec::Conv {
                kernel: take(&mut args, &["k"], None)?,
                channels: take(&mut args, &["c"], None)?,
                stride: take(&mut args, &["s"], Some(1))?,
                padding: take(&mut args, &["p"], Some(0))?,
            },
            "pool" => LayerSpec::Pool { window: take(&mut args, &["k", "w"], None)?, stride: take(&mut args, &["s"], Some(2))? },
            "dense" => LayerSpec::Dense { out: take(&mut args, &["out", "o"], None)? },
            other => return Err(format!("unknown layer kind `{other}`")),
        };
        if let Some(k) = args.keys().next() {
            return Err(format!("unexpected argument `{k}`"));
        }
        Ok(spec)
    }
}

impl NetworkConfig {
    /// `network = desk | table_i` picks the base; `layer.N` lines replace the
    /// whole layer stack when present.
    pub fn from_kv(kv: &KvConfig, errors: &mut Vec<Error>) -> Self {
        let before = errors.len();
        let mut m = None::<usize>;
        if kv.get("embedding_dim").is_some() {
            let mut v = 0usize;
            kv.read("embedding_dim", &mut v, errors);
            m = Some(v);
        }
        let mut cfg = match kv.get("network").unwrap_or("desk") {
            "desk" => NetworkConfig::desk(),
            "table_i" => NetworkConfig::table_i(m.unwrap_or(10)),
            other => {
                errors.push(Error::config("network", format!("unknown preset `{other}`; use desk or table_i")));
                NetworkConfig::desk()
            }
        };
        kv.read("input_size", &mut cfg.input_size, errors);
        let mut layers: Vec<(usize, LayerSpec)> = Vec::new();
        for k in kv.keys().filter(|k| is_layer_key(k)) {
            let idx: usize = k["layer.".len()..].parse().unwrap_or(usize::MAX);
            match LayerSpec::parse(kv.get(k).unwrap_or("")) {
                Ok(l) => layers.push((idx, l)),
                Err(e) => errors.push(Error::config(k, e)),
            }
        }
        if !layers.is_empty() {
            layers.sort_by_key(|(i, _)| *i);
            if layers.iter().enumerate().any(|(pos, (i, _))| pos != *i) {
                errors.push(Error::config("layer.N", "layer indices must be 0, 1, 2, ... without gaps"));
            }
            cfg.layers = layers.into_iter().map(|(_, l)| l).collect();
        }
        if let Some(m) = m {
            cfg.embedding_dim = m;
            if kv.get("network") != Some("table_i") && !kv.keys().any(is_layer_key) {
                if let Some(LayerSpec::Dense { out }) = cfg.layers.last_mut() {
                    *out = m;
                }
            }
        } else if let Some(LayerSpec::Dense { out }) = cfg.layers.last() {
            cfg.embedding_dim = *out;
        }
        let mut init = String::from("random");
        kv.read("first_layer_init", &mut init, errors);
        match init.as_str() {
            "random" => cfg.first_layer_init = FirstLayerInit::Random,
            "asc" => match kv.get("kernel_bank") {
                Some(p) => cfg.first_layer_init = FirstLayerInit::AscBank(p.to_string()),
                None => errors.push(Error::config("kernel_bank", "required when first_layer_init = asc")),
            },
            other => errors.push(Error::config("first_layer_init", format!("unknown value `{other}`; use random or asc"))),
        }
        kv.read_with("freeze_first_layer", &mut cfg.freeze_first_layer, errors, parse_bool);
        if errors.len() == before {
            if let Err(e) = cfg.validate() {
                errors.push(e);
            }
        }
        cfg
    }
}

impl NetworkConfig {
    /// Text that [`NetworkConfig::from_kv`] reads back to an equal config.
    pub fn to_kv_text(&self) -> String {
        let mut s = format!("input_size = {}\nembedding_dim = {}\n", self.input_size, self.embedding_dim);
        for (i, l) in self.layers.iter().enumerate() {
            s.push_str(&format!("layer.{i} = {}\n", l.to_line()));
        }
        match &self.first_layer_init {
            FirstLayerInit::Random => s.push_str("first_layer_init = random\n"),
            FirstLayerInit::AscBank(p) => s.push_str(&format!("first_layer_init = asc\nkernel_bank = {p}\n")),
        }
        s.push_str(&format!("freeze_first_layer = {}\n", self.freeze_first_layer));
        s
    }
}

impl TrainConfig {
    /// Text that [`TrainConfig::from_kv`] reads back to an equal config.
    pub fn to_kv_text(&self) -> String {
        let mut s = format!(
            "epochs = {}\nlearning_rate = {}\nbatch_size = {}\nlambda = {}\ngamma = {}\nmomentum = {}\nseed = {}\ndeterministic = {}\n",
            self.epochs,
            self.learning_rate,
            self.batch_size,
            self.lambda,
            self.gamma,
            self.momentum,
            self.seed,
            self.deterministic
        );
        if let Some(c) = self.clip {
            s.push_str(&format!("clip = {c}\n"));
        }
        s
    }

    pub fn from_kv(kv: &KvConfig, errors: &mut Vec<Error>) -> Self {
        let mut c = TrainConfig::default();
        let before = errors.len();
        kv.read("epochs", &mut c.epochs, errors);
        kv.read("learning_rate", &mut c.learning_rate, errors);
        kv.read("batch_size", &mut c.batch_size, errors);
        kv.read("lambda", &mut c.lambda, errors);
        kv.read("gamma", &mut c.gamma, errors);
        kv.read("momentum", &mut c.momentum, errors);
        kv.read("seed", &mut c.seed, errors);
        kv.read_with("deterministic", &mut c.deterministic, errors, parse_bool);
        if kv.get("clip").is_some() {
            let mut v = 0.0;
            kv.read("clip", &mut v, errors);
            c.clip = Some(v);
        }
        if errors.len() == before {
            errors.extend(c.violations());
        }
        c
    }
}

impl SynthConfig {
    pub fn from_kv(kv: &KvConfig, radar: &RadarParams, errors: &mut Vec<Error>) -> Self {
        let mut c = SynthConfig::default();
        let before = errors.len();
        kv.read("n_classes", &mut c.n_classes, errors);
        kv.read("train_per_class", &mut c.train_per_class, errors);
        kv.read("test_per_class", &mut c.test_per_class, errors);
        kv.read("scatterers_min", &mut c.scatterers_min, errors);
        kv.read("scatterers_max", &mut c.scatterers_max, errors);
        kv.read("extent_m", &mut c.extent_m, errors);
        let mut j: Jitter = c.jitter;
        kv.read("jitter_position_m", &mut j.position_m, errors);
        kv.read("jitter_length_m", &mut j.length_m, errors);
        kv.read("jitter_orientation_deg", &mut j.orientation_deg, errors);
        kv.read("jitter_amplitude_rel", &mut j.amplitude_rel, errors);
        c.jitter = j;
        kv.read("noise_sigma", &mut c.noise_sigma, errors);
        kv.read("image_size", &mut c.image_size, errors);
        kv.read("seed", &mut c.seed, errors);
        if errors.len() == before {
            errors.extend(c.violations(radar));
        }
        c
    }
}

/// Inference and data-handling settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub boundary: BoundaryMode,
    pub policy: OpenSetPolicy,
    pub preprocess: PreprocessMode,
    pub scaling: Scaling,
    pub known_classes: Vec<String>,
    pub unknown_classes: Vec<String>,
    pub test_fraction: f64,
    pub eval_batch: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            boundary: BoundaryMode::Shared,
            policy: OpenSetPolicy::default(),
            preprocess: PreprocessMode::Pad,
            scaling: Scaling::Linear,
            known_classes: Vec::new(),
            unknown_classes: Vec::new(),
            test_fraction: 0.3,
            eval_batch: 64,
        }
    }
}

/// `use_r`, `calibrated` (percentile with `calibration_q`), `-inf`, or a number.
pub fn parse_threshold(v: &str, q: f64) -> Option<ThresholdPolicy> {
    match v {
        "use_r" | "USE_R" => Some(ThresholdPolicy::UseR),
        "calibrated" | "percentile" => Some(ThresholdPolicy::Percentile(q)),
        "-inf" => Some(ThresholdPolicy::Fixed(f64::NEG_INFINITY)),
        other => other.parse::<f64>().ok().filter(|x| !x.is_nan()).map(ThresholdPolicy::Fixed),
    }
}

fn parse_names(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

impl EvalSettings {
    pub fn from_kv(kv: &KvConfig, errors: &mut Vec<Error>) -> Self {
        let mut s = EvalSettings::default();
        kv.read_with("boundary", &mut s.boundary, errors, |v| match v {
            "shared" => Some(BoundaryMode::Shared),
            "per_class" => Some(BoundaryMode::PerClass),
            _ => None,
        });
        kv.read_with("gate", &mut s.policy.gate, errors, |v| match v {
            "euclid" => Some(Gate::Euclid),
            "combined" => Some(Gate::Combined),
            _ => None,
        });
        let mut q = DEFAULT_CALIBRATION_Q;
        kv.read("calibration_q", &mut q, errors);
        if !(0.0..=100.0).contains(&q) {
            errors.push(Error::config("calibration_q", format!("must lie in [0, 100], got {q}")));
        }
        kv.read_with("threshold", &mut s.policy.threshold, errors, |v| parse_threshold(v, q));
        kv.read_with("preprocess", &mut s.preprocess, errors, |v| match v {
            "pad" => Some(PreprocessMode::Pad),
            "center_crop" => Some(PreprocessMode::CenterCrop),
            _ => None,
        });
        kv.read_with("scaling", &mut s.scaling, errors, |v| match v {
            "linear" => Some(Scaling::Linear),
            "log" => Some(Scaling::Log),
            _ => None,
        });
        if let Some(v) = kv.get("known_classes") {
            s.known_classes = parse_names(v);
        }
        if let Some(v) = kv.get("unknown_classes") {
            s.unknown_classes = parse_names(v);
        }
        kv.read("test_fraction", &mut s.test_fraction, errors);
        if !(0.0..1.0).contains(&s.test_fraction) {
            errors.push(Error::config("test_fraction", format!("must lie in [0, 1), got {}", s.test_fraction)));
        }
        kv.read("eval_batch", &mut s.eval_batch, errors);
        if s.eval_batch == 0 {
            errors.push(Error::config("eval_batch", "must be >= 1"));
        }
        s
    }
}

/// Every section read from one file, with every problem reported together.
#[derive(Debug, Clone, PartialEq)]
pub struct FullConfig {
    pub radar: RadarParams,
    pub kernel: AscKernelSpec,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub eval: EvalSettings,
}

impl FullConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut errors = kv.unknown_keys();
        let radar = RadarParams::from_kv(kv, &mut errors);
        let kernel = AscKernelSpec::from_kv(kv, &radar, &mut errors);
        let network = NetworkConfig::from_kv(kv, &mut errors);
        let train = TrainConfig::from_kv(kv, &mut errors);
        let synth = SynthConfig::from_kv(kv, &radar, &mut errors);
        let eval = EvalSettings::from_kv(kv, &mut errors);
        Error::collect(errors)?;
        Ok(FullConfig { radar, kernel, network, train, synth, eval })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_comments_and_errors() {
        let kv = KvConfig::parse("# header\nepochs = 3 # trailing\n\nlearning_rate=0.5\n").unwrap();
        assert_eq!(kv.get("epochs"), Some("3"));
        assert_eq!(kv.get("learning_rate"), Some("0.5"));
        let err = KvConfig::parse("oops\nepochs = 1\nepochs = 2\n").unwrap_err();
        assert!(matches!(err, Error::ConfigList(ref v) if v.len() == 2));
    }

    #[test]
    fn all_offending_keys_reported() {
        let kv = KvConfig::parse("epochs = 0\nlearning_rate = x\nbogus = 1\ncarrier_freq = -1\n").unwrap();
        let Err(Error::ConfigList(list)) = FullConfig::from_kv(&kv) else { panic!("expected a list") };
        let fields: Vec<String> = list
            .iter()
            .filter_map(|e| match e {
                Error::Config { field, .. } => Some(field.clone()),
                _ => None,
            })
            .collect();
        for f in ["bogus", "learning_rate", "carrier_freq"] {
            assert!(fields.iter().any(|x| x == f), "{f} missing from {fields:?}");
        }
    }

    #[test]
    fn layer_lines() {
        assert_eq!(
            LayerSpec::parse("conv,k=31,c=961,s=4,p=2").unwrap(),
            LayerSpec::Conv { kernel: 31, channels: 961, stride: 4, padding: 2 }
        );
        assert_eq!(LayerSpec::parse("pool,k=3,s=2").unwrap(), LayerSpec::Pool { window: 3, stride: 2 });
        assert_eq!(LayerSpec::parse("dense,out=8").unwrap(), LayerSpec::Dense { out: 8 });
        assert!(LayerSpec::parse("conv,k=3").is_err());
        for l in NetworkConfig::table_i(10).layers {
            assert_eq!(LayerSpec::parse(&l.to_line()).unwrap(), l);
        }
        let kv = KvConfig::parse(
            "input_size = 16\nembedding_dim = 4\nlayer.0 = conv,k=3,c=2,s=1,p=1\nlayer.1 = pool,k=2,s=2\nlayer.2 = dense,out=4\n",
        )
        .unwrap();
        let mut errors = Vec::new();
        let net = NetworkConfig::from_kv(&kv, &mut errors);
        assert!(errors.is_empty(), "{errors:?}");
        assert_eq!(net.layers.len(), 3);
        assert_eq!(net.embedding_dim, 4);
    }

    #[test]
    fn text_round_trip() {
        let mut net = NetworkConfig::table_i(12);
        net.first_layer_init = FirstLayerInit::AscBank("bank.ascb".into());
        net.freeze_first_layer = true;
        let train = TrainConfig { learning_rate: 0.1 + 0.2, clip: Some(5.0), seed: 99, ..TrainConfig::default() };
        let kv = KvConfig::parse(&(net.to_kv_text() + &train.to_kv_text())).unwrap();
        let mut errors = Vec::new();
        assert_eq!(NetworkConfig::from_kv(&kv, &mut errors), net);
        assert_eq!(TrainConfig::from_kv(&kv, &mut errors), train);
        assert!(errors.is_empty(), "{errors:?}");
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = FullConfig::from_kv(&KvConfig::default()).unwrap();
        assert_eq!(cfg.radar, RadarParams::default());
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.network, NetworkConfig::desk());
        assert_eq!(cfg.kernel, AscKernelSpec::asc11());
        let kv = KvConfig::parse("threshold = -inf\ngate = combined\n").unwrap();
        let e = FullConfig::from_kv(&kv).unwrap().eval;
        assert_eq!(e.policy.threshold, ThresholdPolicy::Fixed(f64::NEG_INFINITY));
        assert_eq!(e.policy.gate, Gate::Combined);
    }
}
