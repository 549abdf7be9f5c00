//! Experiment protocols: train-and-evaluate, openness sweeps and limited-sample runs.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::{
    assemble_confusion, closed_set_accuracy, macro_metrics, openness, openset_accuracy, MacroMetrics, OpenSetConfusion,
};
use crate::asc::KernelBank;
use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::network::{build_network, init_conv1_from_bank, Network, NetworkConfig};
use crate::rpl::{argmax, calibrate_threshold, predict_open, BoundaryMode, Gate, OpenPrediction, RplHead, Threshold};
use crate::train::{fit, EpochLog, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// The learned radius.
    UseR,
    Fixed(f64),
    /// `q`-th percentile of the training-set gating distances.
    Percentile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpenSetPolicy {
    pub gate: Gate,
    pub threshold: ThresholdPolicy,
}

impl Default for OpenSetPolicy {
    fn default() -> Self {
        OpenSetPolicy { gate: Gate::Euclid, threshold: ThresholdPolicy::UseR }
    }
}

pub const DEFAULT_CALIBRATION_Q: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub boundary: BoundaryMode,
    pub policy: OpenSetPolicy,
    /// Copied into the first convolution when present.
    pub bank: Option<KernelBank>,
    /// Batch size for inference passes.
    pub eval_batch: usize,
}

impl ExperimentConfig {
    pub fn new(network: NetworkConfig, train: TrainConfig) -> Self {
        ExperimentConfig {
            network,
            train,
            boundary: BoundaryMode::Shared,
            policy: OpenSetPolicy::default(),
            bank: None,
            eval_batch: 64,
        }
    }
}

/// Salt separating the head initialization stream from the network one.
const HEAD_SEED_SALT: u64 = 0x5250_4c48_4541_4400;

/// Untrained network and head for `n_classes` under `seed`.
pub fn init_model(n_classes: usize, cfg: &ExperimentConfig, seed: u64) -> Result<(Network, RplHead)> {
    let mut net = build_network(&cfg.network, seed)?;
    if let Some(bank) = &cfg.bank {
        init_conv1_from_bank(&mut net, bank)?;
    }
    let head = RplHead::new(
        n_classes,
        cfg.network.embedding_dim,
        cfg.train.gamma,
        cfg.train.lambda,
        cfg.boundary,
        seed ^ HEAD_SEED_SALT,
    )?;
    Ok((net, head))
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub net: Network,
    pub head: RplHead,
    pub logs: Vec<EpochLog>,
    pub gate: Gate,
    pub threshold: Threshold,
}

/// Embeddings of every sample in `set`, row-major `len x m`.
pub fn embed(net: &Network, set: &LabeledSet, batch: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(set.len() * net.embedding_dim());
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let (x, _) = set.batch(chunk)?;
        out.extend_from_slice(net.forward_embedding(&x)?.values());
    }
    Ok(out)
}

impl TrainedModel {
    pub fn embed(&self, set: &LabeledSet, batch: usize) -> Result<Vec<f64>> {
        embed(&self.net, set, batch)
    }

    pub fn predict_embeddings(&self, embeddings: &[f64]) -> Result<Vec<OpenPrediction>> {
        let m = self.head.dim();
        embeddings.chunks(m).map(|f| predict_open(f, &self.head, self.gate, self.threshold)).collect()
    }

    pub fn predict(&self, set: &LabeledSet, batch: usize) -> Result<Vec<OpenPrediction>> {
        self.predict_embeddings(&self.embed(set, batch)?)
    }
}

/// Turns a threshold policy into a concrete threshold for a trained model.
pub fn resolve_threshold(
    policy: &OpenSetPolicy,
    net: &Network,
    head: &RplHead,
    train: &LabeledSet,
    batch: usize,
) -> Result<Threshold> {
    Ok(match policy.threshold {
        ThresholdPolicy::UseR => Threshold::UseR,
        ThresholdPolicy::Fixed(v) => Threshold::Value(v),
        ThresholdPolicy::Percentile(q) => {
            let emb = embed(net, train, batch)?;
            let gating: Vec<f64> = emb
                .chunks(head.dim())
                .map(|f| predict_open(f, head, policy.gate, Threshold::Value(f64::NEG_INFINITY)).map(|p| p.gating_distance))
                .collect::<Result<_>>()?;
            Threshold::Value(calibrate_threshold(&gating, q)?)
        }
    })
}

/// Trains on `train` (labels in `0..n_classes`) and resolves the rejection threshold.
pub fn train_model(train: &LabeledSet, n_classes: usize, cfg: &ExperimentConfig, seed: u64) -> Result<TrainedModel> {
    let (net, head) = init_model(n_classes, cfg, seed)?;
    let tcfg = TrainConfig { seed, ..cfg.train.clone() };
    let (net, head, logs) = fit(net, head, train, &tcfg)?;
    let threshold = resolve_threshold(&cfg.policy, &net, &head, train, cfg.eval_batch)?;
    Ok(TrainedModel { net, head, logs, gate: cfg.policy.gate, threshold })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenSetReport {
    pub confusion: OpenSetConfusion,
    pub metrics: MacroMetrics,
    pub accuracy: f64,
    /// Argmax accuracy on known-truth samples, ignoring rejection.
    pub closed_accuracy: f64,
    pub predictions: Vec<OpenPrediction>,
    pub truth: Vec<Option<usize>>,
}

/// Labels `>= n_known` are unknown truths.
pub fn truths(set: &LabeledSet, n_known: usize) -> Vec<Option<usize>> {
    set.labels().iter().map(|&l| if l < n_known { Some(l) } else { None }).collect()
}

pub fn report_from_predictions(predictions: Vec<OpenPrediction>, truth: Vec<Option<usize>>, n_known: usize) -> Result<OpenSetReport> {
    let confusion = assemble_confusion(&predictions, &truth, n_known)?;
    let metrics = macro_metrics(&confusion);
    let accuracy = openset_accuracy(&confusion)?;
    let (mut pc, mut tc) = (Vec::new(), Vec::new());
    for (p, t) in predictions.iter().zip(&truth) {
        if let Some(t) = t {
            pc.push(p.closed_class);
            tc.push(*t);
        }
    }
    let closed_accuracy = if tc.is_empty() { 0.0 } else { closed_set_accuracy(&pc, &tc)? };
    Ok(OpenSetReport { confusion, metrics, accuracy, closed_accuracy, predictions, truth })
}

pub fn evaluate_open(model: &TrainedModel, test: &LabeledSet, n_known: usize, batch: usize) -> Result<OpenSetReport> {
    let predictions = model.predict(test, batch)?;
    report_from_predictions(predictions, truths(test, n_known), n_known)
}

/// Mean combined distance from the test samples of each known class to every
/// reciprocal point: `mean[k][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationReport {
    pub mean: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
}

impl SeparationReport {
    /// Own-point mean strictly exceeds every other mean, for every class with samples.
    pub fn holds(&self) -> bool {
        self.mean.iter().zip(&self.counts).enumerate().all(|(k, (row, &n))| {
            n == 0 || row.iter().enumerate().all(|(j, v)| j == k || row[k] > *v)
        })
    }
}

pub fn separation_report(predictions: &[OpenPrediction], truth: &[Option<usize>], n_known: usize) -> SeparationReport {
    let mut mean = vec![vec![0.0; n_known]; n_known];
    let mut counts = vec![0usize; n_known];
    for (p, t) in predictions.iter().zip(truth) {
        let Some(k) = *t else { continue };
        counts[k] += 1;
        for (acc, d) in mean[k].iter_mut().zip(&p.distances) {
            *acc += d;
        }
    }
    for (row, &n) in mean.iter_mut().zip(&counts) {
        if n > 0 {
            row.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    SeparationReport { mean, counts }
}

/// Train and test sets whose labels index `class_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassData {
    pub class_names: Vec<String>,
    pub train: LabeledSet,
    pub test: LabeledSet,
    /// Azimuth in degrees of every training sample, when known.
    pub train_azimuth: Option<Vec<f64>>,
}

/// Keeps the classes in `known` (relabelled to their position). With
/// `keep_unknown`, every other sample is kept under label `known.len()`.
pub fn remap(set: &LabeledSet, known: &[usize], keep_unknown: bool) -> Result<LabeledSet> {
    let pos: BTreeMap<usize, usize> = known.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut out = LabeledSet::new(set.image_size());
    for (i, l) in set.labels().iter().enumerate() {
        match pos.get(l) {
            Some(&k) => out.push(set.image(i), k)?,
            None if keep_unknown => out.push(set.image(i), known.len())?,
            None => {}
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k_known: usize,
    pub n_test_classes: usize,
    pub openness: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub f1_min: f64,
    pub f1_max: f64,
    pub accuracy_min: f64,
    pub accuracy_max: f64,
    pub repetitions: usize,
    pub seed: u64,
}

/// For each `k` in `k_min..=k_max`, trains on the first `k` classes of
/// `class_order` and evaluates against the test samples of every class in
/// `class_order`. Repetition `r` uses seed `seed + r`.
pub fn run_openness_sweep(
    data: &ClassData,
    class_order: &[usize],
    k_min: usize,
    k_max: usize,
    repetitions: usize,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let total = class_order.len();
    if k_min < 2 || k_min > k_max || k_max > total {
        return Err(Error::config("k_range", format!("need 2 <= k_min <= k_max <= {total}, got {k_min}..{k_max}")));
    }
    if repetitions == 0 {
        return Err(Error::config("repetitions", "must be >= 1"));
    }
    if let Some(c) = class_order.iter().find(|&&c| c >= data.class_names.len()) {
        return Err(Error::config("class_order", format!("class index {c} outside 0..{}", data.class_names.len())));
    }
    let mut rows = Vec::new();
    for k in k_min..=k_max {
        let known = &class_order[..k];
        let train = remap(&data.train, known, false)?;
        let test = remap(&remap_subset(&data.test, class_order)?, &(0..k).collect::<Vec<_>>(), true)?;
        let mut f1s = Vec::new();
        let mut accs = Vec::new();
        let (mut p_sum, mut r_sum) = (0.0, 0.0);
        for rep in 0..repetitions {
            let s = seed.wrapping_add(rep as u64);
            let model = train_model(&train, k, cfg, s)?;
            let report = evaluate_open(&model, &test, k, cfg.eval_batch)?;
            p_sum += report.metrics.precision;
            r_sum += report.metrics.recall;
            f1s.push(report.metrics.f1);
            accs.push(report.accuracy);
        }
        let n = repetitions as f64;
        let fold = |v: &[f64], f: fn(f64, f64) -> f64, init: f64| v.iter().cloned().fold(init, f);
        rows.push(SweepRow {
            k_known: k,
            n_test_classes: total,
            openness: openness(k, total)?,
            precision: p_sum / n,
            recall: r_sum / n,
            f1: f1s.iter().sum::<f64>() / n,
            accuracy: accs.iter().sum::<f64>() / n,
            f1_min: fold(&f1s, f64::min, f64::INFINITY),
            f1_max: fold(&f1s, f64::max, f64::NEG_INFINITY),
            accuracy_min: fold(&accs, f64::min, f64::INFINITY),
            accuracy_max: fold(&accs, f64::max, f64::NEG_INFINITY),
            repetitions,
            seed,
        });
    }
    Ok(rows)
}

/// Restricts `set` to the classes of `order`, relabelled to their position in it.
fn remap_subset(set: &LabeledSet, order: &[usize]) -> Result<LabeledSet> {
    remap(set, order, false)
}

/// Up to `count` indices per class drawn by a seeded shuffle. Larger counts
/// always contain the smaller draws.
pub fn subsample_per_class(set: &LabeledSet, n_classes: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (k, mut idx) in set.indices_by_class(n_classes).into_iter().enumerate() {
        if count > idx.len() {
            return Err(Error::argument(format!("class {k} has {} training samples, {count} requested", idx.len())));
        }
        idx.shuffle(&mut rng);
        out.extend_from_slice(&idx[..count]);
    }
    out.sort_unstable();
    Ok(out)
}

/// Up to `count` indices per class forming one contiguous run of azimuths,
/// starting at a seeded position and wrapping around the circle.
pub fn subsample_azimuth_blocks(
    set: &LabeledSet,
    azimuth_deg: &[f64],
    n_classes: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if azimuth_deg.len() != set.len() {
        return Err(Error::argument(format!("{} azimuths for {} samples", azimuth_deg.len(), set.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (k, mut idx) in set.indices_by_class(n_classes).into_iter().enumerate() {
        if count > idx.len() {
            return Err(Error::argument(format!("class {k} has {} training samples, {count} requested", idx.len())));
        }
        idx.sort_by(|&a, &b| azimuth_deg[a].rem_euclid(360.0).total_cmp(&azimuth_deg[b].rem_euclid(360.0)).then(a.cmp(&b)));
        if idx.is_empty() {
            continue;
        }
        let start = rng.random_range(0..idx.len());
        out.extend((0..count).map(|i| idx[(start + i) % idx.len()]));
    }
    out.sort_unstable();
    Ok(out)
}

/// How the limited-sample protocol draws its training subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Subsampling {
    #[default]
    Random,
    AzimuthBlocks,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitedRow {
    pub per_class: usize,
    pub accuracy: f64,
    /// Random-initialization accuracy under the same seed, for paired runs.
    pub base_accuracy: Option<f64>,
}

/// Closed-set accuracy of a model trained with `lambda = 0` on known test data.
fn closed_set_run(train: &LabeledSet, test: &LabeledSet, n_classes: usize, cfg: &ExperimentConfig, seed: u64) -> Result<f64> {
    let mut c = cfg.clone();
    c.train.lambda = 0.0;
    c.policy = OpenSetPolicy { gate: cfg.policy.gate, threshold: ThresholdPolicy::Fixed(f64::NEG_INFINITY) };
    let model = train_model(train, n_classes, &c, seed)?;
    let emb = model.embed(test, c.eval_batch)?;
    let pred: Vec<usize> = emb
        .chunks(model.head.dim())
        .map(|f| model.head.distances(f).map(|d| argmax(&d)))
        .collect::<Result<_>>()?;
    closed_set_accuracy(&pred, test.labels())
}

/// Closed-set accuracy for each per-class training count. With `paired`, the
/// same run is repeated without the kernel bank under the same seed.
pub fn run_limited_sample_protocol(
    data: &ClassData,
    per_class_counts: &[usize],
    cfg: &ExperimentConfig,
    seed: u64,
    paired: bool,
    subsampling: Subsampling,
) -> Result<Vec<LimitedRow>> {
    let n = data.class_names.len();
    if paired && cfg.bank.is_none() {
        return Err(Error::config("kernel_bank", "paired runs need a kernel bank"));
    }
    let mut rows = Vec::new();
    for &count in per_class_counts {
        let idx = match (subsampling, &data.train_azimuth) {
            (Subsampling::Random, _) => subsample_per_class(&data.train, n, count, seed)?,
            (Subsampling::AzimuthBlocks, Some(az)) => subsample_azimuth_blocks(&data.train, az, n, count, seed)?,
            (Subsampling::AzimuthBlocks, None) => {
                return Err(Error::argument("azimuth-block subsampling needs azimuth metadata on every training sample"))
            }
        };
        let train = data.train.select(&idx)?;
        let accuracy = closed_set_run(&train, &data.test, n, cfg, seed)?;
        let base_accuracy = if paired {
            let base = ExperimentConfig { bank: None, ..cfg.clone() };
            Some(closed_set_run(&train, &data.test, n, &base, seed)?)
        } else {
            None
        };
        rows.push(LimitedRow { per_class: count, accuracy, base_accuracy });
    }
    Ok(rows)
}

/// Six significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = libm::floor(libm::log10(libm::fabs(x))) as i32;
    if !(-5..=6).contains(&mag) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

pub const SWEEP_CSV_HEADER: &str =
    "k_known,openness,precision,recall,f1,accuracy,repetitions,seed,f1_min,f1_max,accuracy_min,accuracy_max";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.k_known,
            fmt_sig6(r.openness),
            fmt_sig6(r.precision),
            fmt_sig6(r.recall),
            fmt_sig6(r.f1),
            fmt_sig6(r.accuracy),
            r.repetitions,
            r.seed,
            fmt_sig6(r.f1_min),
            fmt_sig6(r.f1_max),
            fmt_sig6(r.accuracy_min),
            fmt_sig6(r.accuracy_max),
        ));
    }
    s
}

pub const LIMITED_CSV_HEADER: &str = "per_class,accuracy,base_accuracy,seed";

pub fn limited_csv(rows: &[LimitedRow], seed: u64) -> String {
    let mut s = String::from(LIMITED_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let base = r.base_accuracy.map(fmt_sig6).unwrap_or_default();
        s.push_str(&format!("{},{},{},{}\n", r.per_class, fmt_sig6(r.accuracy), base, seed));
    }
    s
}

pub const REPORT_CSV_HEADER: &str =
    "k_known,openness,precision,recall,f1,accuracy,repetitions,seed,closed_accuracy,tu,fu,unknown_accepted";

/// Single-setting report in the sweep layout plus raw rejection counts.
pub fn report_csv(report: &OpenSetReport, k_known: usize, n_test_classes: usize, seed: u64) -> Result<String> {
    let o = openness(k_known, n_test_classes)?;
    Ok(format!(
        "{REPORT_CSV_HEADER}\n{},{},{},{},{},{},1,{},{},{},{},{}\n",
        k_known,
        fmt_sig6(o),
        fmt_sig6(report.metrics.precision),
        fmt_sig6(report.metrics.recall),
        fmt_sig6(report.metrics.f1),
        fmt_sig6(report.accuracy),
        seed,
        fmt_sig6(report.closed_accuracy),
        report.confusion.tu,
        report.confusion.fu,
        report.confusion.unknown_accepted,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6() {
        assert_eq!(fmt_sig6(1.0), "1.00000");
        assert_eq!(fmt_sig6(0.0925042), "0.0925042");
        assert_eq!(fmt_sig6(123.456789), "123.457");
        assert_eq!(fmt_sig6(0.0), "0");
    }

    #[test]
    fn azimuth_blocks_are_contiguous() {
        let mut set = LabeledSet::new(1);
        let mut az = Vec::new();
        for i in 0..40 {
            set.push(&[0.0], i % 2).unwrap();
            // distinct azimuths below 360 in shuffled order
            az.push(((i * 7) % 40) as f64 * 9.0);
        }
        for seed in 0..10 {
            let idx = subsample_azimuth_blocks(&set, &az, 2, 5, seed).unwrap();
            assert_eq!(idx.len(), 10);
            for k in 0..2 {
                let mut a: Vec<f64> = idx.iter().filter(|&&i| set.labels()[i] == k).map(|&i| az[i]).collect();
                let all: Vec<f64> = (0..40).filter(|i| i % 2 == k).map(|i| az[i]).collect();
                a.sort_by(f64::total_cmp);
                let mut sorted = all.clone();
                sorted.sort_by(f64::total_cmp);
                // the five picks are consecutive in the circular azimuth order
                let pos: Vec<usize> = a.iter().map(|v| sorted.iter().position(|s| s == v).unwrap()).collect();
                let gaps = (0..5).filter(|&j| (pos[(j + 1) % 5] + 20 - pos[j]) % 20 != 1).count();
                assert_eq!(gaps, 1, "seed {seed} class {k}: {pos:?}");
            }
        }
        assert!(subsample_azimuth_blocks(&set, &az[..3], 2, 5, 0).is_err());
    }

    #[test]
    fn remap_and_subsample() {
        let mut set = LabeledSet::new(1);
        for i in 0..12 {
            set.push(&[i as f64], i % 4).unwrap();
        }
        let r = remap(&set, &[2, 0], true).unwrap();
        assert_eq!(&r.labels()[..4], &[1, 2, 0, 2]);
        let r = remap(&set, &[2, 0], false).unwrap();
        assert_eq!(r.len(), 6);

        let a = subsample_per_class(&set, 4, 2, 3).unwrap();
        let b = subsample_per_class(&set, 4, 2, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        assert!(subsample_per_class(&set, 4, 4, 3).is_err());
        let full = subsample_per_class(&set, 4, 3, 3).unwrap();
        assert_eq!(full, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn separation_check() {
        let mk = |d: Vec<f64>| OpenPrediction { class: Some(0), closed_class: 0, distances: d, gating_distance: 0.0, threshold_used: 0.0 };
        let preds = vec![mk(vec![3.0, 1.0]), mk(vec![0.0, 2.0])];
        let rep = separation_report(&preds, &[Some(0), Some(1)], 2);
        assert!(rep.holds());
        let rep = separation_report(&preds, &[Some(1), Some(0)], 2);
        assert!(!rep.holds());
    }
}
