//! Command-line front end.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use osrk_core::asc::{build_kernel_bank, make_radar_grid, AscKernelSpec, KernelBank};
use osrk_core::config::{parse_threshold, FullConfig, KvConfig};
use osrk_core::data::{
    make_soc_split, preprocess, soc_count_mismatches, soc_entry, synth_plan, synth_sample, synth_templates, LabeledSet,
    SarSample, SynthDataset, SOC_KNOWN,
};
use osrk_core::eval::{
    embed, evaluate_open, init_model, limited_csv, report_csv, resolve_threshold, run_limited_sample_protocol,
    run_openness_sweep, separation_report, sweep_csv, truths, ClassData, ExperimentConfig, OpenSetPolicy,
    Subsampling, ThresholdPolicy, TrainedModel,
};
use osrk_core::network::{FirstLayerInit, LayerSpec, Network};
use osrk_core::rpl::{Gate, RplHead, Threshold};
use osrk_core::train::{EpochLog, Trainer};

use crate::bank_file::{meta_path, read_bank, write_bank};
use crate::checkpoint::{load_checkpoint, save_checkpoint, CheckpointFile};
use crate::dataset::{load_dataset_dir, load_sample_file, write_synth_dataset, LoadOptions, LoadedDataset, MANIFEST_FILE, META_SPLIT};
use crate::error::{Error, Result};
use crate::fft::FftFormer;
use crate::fsio::{atomic_write, read_file};
use crate::manifest::RunManifest;
use crate::report::{embeddings_csv, grid_cols, loss_csv, montage, save_png};

#[derive(Debug, Parser)]
#[command(name = "osrk", version, about = "Scattering-kernel CNN features with reciprocal-point open-set recognition for SAR images")]
pub struct Cli {
    /// Seed for every random draw; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Deterministic mode (the default). `--deterministic false` turns it off.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub deterministic: Option<bool>,
    /// Worker threads for data synthesis and loading.
    #[arg(long, global = true, env = "OSRK_THREADS", default_value_t = 1)]
    pub threads: usize,
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` setting, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory (PNG, MSTAR or OSRT files; `manifest.csv` is used when present).
    #[arg(long)]
    pub data: PathBuf,
    /// Manifest CSV with `path,label,split` columns.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Fail on unreadable files instead of skipping them.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    /// Initialize the first convolution from an ASC kernel bank built from the config.
    #[arg(long)]
    pub asc: bool,
    /// Initialize the first convolution from a bank file.
    #[arg(long, conflicts_with = "asc")]
    pub kernel_bank: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an ASC kernel bank.
    GenKernels {
        /// Preset size 11, 21 or 31; otherwise the config's kernel settings apply.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// PNG montage of the kernels.
        #[arg(long)]
        montage: Option<PathBuf>,
    },
    /// Generate a synthetic scatterer-scene dataset.
    SynthData {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network and reciprocal-point head.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        init: InitArgs,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many epochs in this invocation.
        #[arg(long)]
        stop_after: Option<usize>,
        /// Per-step loss CSV.
        #[arg(long)]
        losses: Option<PathBuf>,
    },
    /// Open-set evaluation of a trained checkpoint.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Report CSV.
        #[arg(long)]
        out: PathBuf,
        /// Threshold override: `use_r`, `calibrated`, `-inf` or a number.
        #[arg(long, allow_hyphen_values = true)]
        threshold: Option<String>,
        /// Per-sample prediction CSV.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Train with the first k classes for each k and evaluate against all classes.
    SweepOpenness {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        init: InitArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        k_min: usize,
        #[arg(long, default_value_t = 7)]
        k_max: usize,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
    },
    /// Closed-set accuracy for limited training counts per class.
    LimitedSample {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        init: InitArgs,
        #[arg(long)]
        out: PathBuf,
        /// Training samples per class, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "20")]
        counts: Vec<usize>,
        /// Repeat every run with random initialization under the same seed.
        #[arg(long)]
        paired: bool,
        /// Draw each class subset as one contiguous azimuth range.
        #[arg(long)]
        azimuth_blocks: bool,
    },
    /// Write embeddings and predictions as CSV.
    ExportEmbeddings {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// `train`, `test` or `all`.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Per-channel feature maps of one layer for one image.
    DumpFeatures {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Layer index in the network configuration.
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenKernels { .. } => "gen-kernels",
            Command::SynthData { .. } => "synth-data",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::SweepOpenness { .. } => "sweep-openness",
            Command::LimitedSample { .. } => "limited-sample",
            Command::ExportEmbeddings { .. } => "export-embeddings",
            Command::DumpFeatures { .. } => "dump-features",
        }
    }
}

/// Resolved settings shared by every command.
struct Ctx {
    kv: KvConfig,
    cfg: FullConfig,
    seed: u64,
    deterministic: bool,
    threads: usize,
}

impl Ctx {
    fn from_cli(cli: &Cli) -> Result<Self> {
        let mut kv = match &cli.config {
            Some(p) => {
                let text = String::from_utf8(read_file(p)?)
                    .map_err(|_| Error::Core(osrk_core::Error::config("config", format!("{} is not UTF-8", p.display()))))?;
                KvConfig::parse(&text)?
            }
            None => KvConfig::default(),
        };
        let mut errors = Vec::new();
        for s in &cli.set {
            match s.split_once('=') {
                Some((k, v)) => kv.set(k.trim(), v.trim()),
                None => errors.push(osrk_core::Error::config("--set", format!("expected KEY=VALUE, got `{s}`"))),
            }
        }
        osrk_core::Error::collect(errors)?;
        if let Some(s) = cli.seed {
            kv.set("seed", &s.to_string());
        }
        if let Some(d) = cli.deterministic {
            kv.set("deterministic", if d { "true" } else { "false" });
        }
        if cli.threads == 0 {
            return Err(osrk_core::Error::config("threads", "must be >= 1").into());
        }
        let cfg = FullConfig::from_kv(&kv)?;
        Ok(Ctx { seed: cfg.train.seed, deterministic: cfg.train.deterministic, threads: cli.threads, kv, cfg })
    }

    fn manifest(&self, command: &str) -> RunManifest {
        let mut m = RunManifest::new(command, self.seed, self.deterministic, self.threads);
        m.config_text = format!("{}{}{}", self.kv.to_text(), self.cfg.network.to_kv_text(), self.cfg.train.to_kv_text());
        m
    }

    fn experiment(&self, bank: Option<KernelBank>) -> ExperimentConfig {
        ExperimentConfig {
            bank,
            boundary: self.cfg.eval.boundary,
            policy: self.cfg.eval.policy,
            eval_batch: self.cfg.eval.eval_batch,
            ..ExperimentConfig::new(self.cfg.network.clone(), self.cfg.train.clone())
        }
    }

    /// Kernel spec for `--asc`: the configured spec when `kernel_size` is set,
    /// otherwise the preset matching the first convolution.
    fn asc_spec(&self) -> Result<AscKernelSpec> {
        if self.kv.get("kernel_size").is_some() {
            return Ok(self.cfg.kernel.clone());
        }
        match self.cfg.network.layers.first() {
            Some(LayerSpec::Conv { kernel, .. }) => Ok(AscKernelSpec::preset(*kernel)?),
            _ => Ok(self.cfg.kernel.clone()),
        }
    }

    fn bank(&self, init: &InitArgs) -> Result<Option<KernelBank>> {
        if let Some(p) = &init.kernel_bank {
            return Ok(Some(read_bank(p)?));
        }
        if init.asc {
            return Ok(Some(build_kernel_bank(&self.asc_spec()?, &self.cfg.radar)?));
        }
        match &self.cfg.network.first_layer_init {
            FirstLayerInit::AscBank(p) => Ok(Some(read_bank(Path::new(p))?)),
            FirstLayerInit::Random => Ok(None),
        }
    }

    fn input_size(&self) -> usize {
        self.cfg.network.input_size
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::from_cli(&cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.threads)
        .build()
        .map_err(|e| Error::Core(osrk_core::Error::config("threads", e.to_string())))?;
    pool.install(|| dispatch(&ctx, &cli.command))
}

fn dispatch(ctx: &Ctx, command: &Command) -> Result<()> {
    let mut manifest = ctx.manifest(command.name());
    let anchor = match command {
        Command::GenKernels { size, out, montage } => gen_kernels(ctx, *size, out, montage.as_deref(), &mut manifest)?,
        Command::SynthData { out } => synth_data(ctx, out, &mut manifest)?,
        Command::Train { data, init, out, resume, stop_after, losses } => {
            train(ctx, data, init, out, resume.as_deref(), *stop_after, losses.as_deref(), &mut manifest)?
        }
        Command::Eval { model, data, out, threshold, predictions } => {
            eval(ctx, model, data, out, threshold.as_deref(), predictions.as_deref(), &mut manifest)?
        }
        Command::SweepOpenness { data, init, out, k_min, k_max, repetitions } => {
            sweep(ctx, data, init, out, *k_min, *k_max, *repetitions, &mut manifest)?
        }
        Command::LimitedSample { data, init, out, counts, paired, azimuth_blocks } => {
            let sub = if *azimuth_blocks { Subsampling::AzimuthBlocks } else { Subsampling::Random };
            limited(ctx, data, init, out, counts, *paired, sub, &mut manifest)?
        }
        Command::ExportEmbeddings { model, data, out, split } => export_embeddings(ctx, model, data, out, split, &mut manifest)?,
        Command::DumpFeatures { model, image, layer, out_dir } => dump_features(model, image, *layer, out_dir, &mut manifest)?,
    };
    manifest.write_for(&anchor)?;
    Ok(())
}

fn gen_kernels(ctx: &Ctx, size: Option<usize>, out: &Path, montage_path: Option<&Path>, m: &mut RunManifest) -> Result<PathBuf> {
    let spec = match size {
        Some(s) => AscKernelSpec::preset(s)?,
        None => ctx.cfg.kernel.clone(),
    };
    let bank = build_kernel_bank(&spec, &ctx.cfg.radar)?;
    write_bank(out, &bank)?;
    m.outputs.extend([out.to_path_buf(), meta_path(out)]);
    if let Some(p) = montage_path {
        let tiles: Vec<&[f64]> = bank.kernels().iter().map(Vec::as_slice).collect();
        let cols = spec.orientation_grid_deg.len().max(1);
        save_png(p, &montage(&tiles, bank.kernel_size(), cols)?)?;
        m.outputs.push(p.to_path_buf());
    }
    m.extra.insert("kernels".into(), json!(bank.len()));
    m.extra.insert("kernel_size".into(), json!(bank.kernel_size()));
    eprintln!("wrote {} kernels of {}x{} to {}", bank.len(), bank.kernel_size(), bank.kernel_size(), out.display());
    Ok(out.to_path_buf())
}

/// Synthesizes samples in parallel; every sample has its own seeded stream, so
/// the result does not depend on the thread count.
pub fn synth_parallel(cfg: &osrk_core::data::SynthConfig, radar: &osrk_core::asc::RadarParams) -> Result<SynthDataset> {
    cfg.validate(radar)?;
    let grid = make_radar_grid(radar)?;
    let templates = synth_templates(cfg);
    let former = FftFormer::new(radar.n_freq_samples + 2 * radar.zero_pad_each_end);
    let plan = synth_plan(cfg);
    let samples: Vec<(bool, SarSample)> = plan
        .par_iter()
        .map(|&(k, idx, is_train)| synth_sample(cfg, &templates, &grid, &former, k, idx).map(|s| (is_train, s)))
        .collect::<osrk_core::Result<_>>()?;
    let (train, test): (Vec<_>, Vec<_>) = samples.into_iter().partition(|(t, _)| *t);
    Ok(SynthDataset {
        class_names: (0..cfg.n_classes).map(osrk_core::data::synth_class_name).collect(),
        train: train.into_iter().map(|(_, s)| s).collect(),
        test: test.into_iter().map(|(_, s)| s).collect(),
    })
}

fn synth_data(ctx: &Ctx, out: &Path, m: &mut RunManifest) -> Result<PathBuf> {
    let ds = synth_parallel(&ctx.cfg.synth, &ctx.cfg.radar)?;
    let files = write_synth_dataset(&ds, out)?;
    m.outputs.push(out.join(MANIFEST_FILE));
    m.extra.insert("files".into(), json!(files.len()));
    m.extra.insert("classes".into(), json!(ds.class_names));
    eprintln!("wrote {} train and {} test samples to {}", ds.train.len(), ds.test.len(), out.display());
    Ok(out.to_path_buf())
}

fn load(data: &DataArgs, m: &mut RunManifest) -> Result<LoadedDataset> {
    let manifest = data.manifest.clone().or_else(|| {
        let p = data.data.join(MANIFEST_FILE);
        p.is_file().then_some(p)
    });
    if let Some(p) = &manifest {
        m.inputs.push(p.clone());
    }
    let ds = load_dataset_dir(&data.data, &LoadOptions { manifest, strict: data.strict })?;
    for w in &ds.warnings {
        eprintln!("warning: {w}");
    }
    for w in soc_count_mismatches(&ds.samples) {
        eprintln!("note: {w}");
    }
    m.extra.insert("samples".into(), json!(ds.samples.len()));
    Ok(ds)
}

/// Known and unknown classes: the configured lists, else the standard
/// seven/three split for MSTAR's ten classes, else every class known.
fn resolve_classes(ctx: &Ctx, ds: &LoadedDataset) -> Result<(Vec<String>, Vec<String>)> {
    let all = ds.class_names();
    let e = &ctx.cfg.eval;
    if !e.known_classes.is_empty() {
        for c in e.known_classes.iter().chain(&e.unknown_classes) {
            if !all.contains(c) {
                return Err(osrk_core::Error::config("known_classes", format!("class `{c}` has no samples")).into());
            }
        }
        let unknown = if e.unknown_classes.is_empty() {
            all.iter().filter(|c| !e.known_classes.contains(c)).cloned().collect()
        } else {
            e.unknown_classes.clone()
        };
        return Ok((e.known_classes.clone(), unknown));
    }
    if all.len() == 10 && all.iter().all(|c| soc_entry(c).is_some()) {
        let is_known = |c: &String| SOC_KNOWN.iter().any(|k| soc_entry(k) == soc_entry(c));
        let known = all.iter().filter(|c| is_known(c)).cloned().collect();
        let unknown = all.iter().filter(|c| !is_known(c)).cloned().collect();
        return Ok((known, unknown));
    }
    Ok((all, Vec::new()))
}

/// Train and test sample indices. Explicit `split` tags win; otherwise the
/// depression-angle or seeded split applies.
fn partition(ds: &LoadedDataset, known: &[String], unknown: &[String], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let involved = |s: &SarSample| s.label.as_ref().is_some_and(|l| known.contains(l) || unknown.contains(l));
    let tag = |s: &SarSample| s.metadata.get(META_SPLIT).map(|v| v.to_ascii_lowercase());
    let tagged = ds
        .samples
        .iter()
        .filter(|s| involved(s))
        .all(|s| matches!(tag(s).as_deref(), Some("train" | "test")));
    if tagged {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, s) in ds.samples.iter().enumerate() {
            if !involved(s) {
                continue;
            }
            let is_known = s.label.as_ref().is_some_and(|l| known.contains(l));
            match tag(s).as_deref() {
                Some("train") if is_known => train.push(i),
                Some("test") => test.push(i),
                _ => {}
            }
        }
        return Ok((train, test));
    }
    let split = make_soc_split(&ds.samples, known, unknown, test_fraction, seed)?;
    Ok((split.train, split.test))
}

fn labeled(ctx: &Ctx, ds: &LoadedDataset, idx: &[usize], index: &BTreeMap<String, usize>) -> Result<LabeledSet> {
    let refs: Vec<&SarSample> = idx.iter().map(|&i| &ds.samples[i]).collect();
    Ok(LabeledSet::from_samples(&refs, index, ctx.input_size(), ctx.cfg.eval.preprocess, ctx.cfg.eval.scaling)?)
}

/// Label map with known classes first and every unknown class at `known.len()`.
fn open_index(known: &[String], unknown: &[String]) -> BTreeMap<String, usize> {
    let mut m: BTreeMap<String, usize> = known.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    for c in unknown {
        m.insert(c.clone(), known.len());
    }
    m
}

fn threshold_text(t: Threshold) -> String {
    match t {
        Threshold::UseR => "use_r".into(),
        Threshold::Value(v) => format!("{v}"),
    }
}

fn gate_text(g: Gate) -> &'static str {
    match g {
        Gate::Euclid => "euclid",
        Gate::Combined => "combined",
    }
}

fn join(names: &[String]) -> String {
    names.join(",")
}

fn split_names(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

const STEP_LOSS_HEADER: &str = "epoch,step,total,classification,boundary";

/// Step losses in shortest round-trip form, so runs can be compared exactly.
fn step_loss_csv(logs: &[EpochLog], first_step: u64) -> String {
    let mut s = format!("{STEP_LOSS_HEADER}\n");
    let mut step = first_step;
    for l in logs {
        for st in &l.steps {
            s.push_str(&format!("{},{},{},{},{}\n", l.epoch, step, st.total, st.classification, st.boundary));
            step += 1;
        }
    }
    s
}

#[allow(clippy::too_many_arguments)]
fn train(
    ctx: &Ctx,
    data: &DataArgs,
    init: &InitArgs,
    out: &Path,
    resume: Option<&Path>,
    stop_after: Option<usize>,
    losses: Option<&Path>,
    m: &mut RunManifest,
) -> Result<PathBuf> {
    let ds = load(data, m)?;
    let (mut trainer, known, unknown, split_seed, test_fraction, first_step) = match resume {
        Some(p) => {
            m.inputs.push(p.to_path_buf());
            let f = load_checkpoint(p)?;
            let meta = |k: &str| f.meta.get(k).cloned().ok_or_else(|| Error::Data(format!("{}: checkpoint lacks `{k}`", p.display())));
            let known = split_names(&meta("known_classes")?);
            let unknown = split_names(&meta("unknown_classes")?);
            let seed: u64 = meta("split_seed")?.parse().map_err(|_| Error::Data("bad split_seed".into()))?;
            let tf: f64 = meta("test_fraction")?.parse().map_err(|_| Error::Data("bad test_fraction".into()))?;
            let step = f.checkpoint.step;
            (Trainer::from_checkpoint(&f.checkpoint)?, known, unknown, seed, tf, step)
        }
        None => {
            let (known, unknown) = resolve_classes(ctx, &ds)?;
            let exp = ctx.experiment(ctx.bank(init)?);
            let (net, head) = init_model(known.len(), &exp, ctx.seed)?;
            (Trainer::new(net, head, ctx.cfg.train.clone())?, known, unknown, ctx.seed, ctx.cfg.eval.test_fraction, 0)
        }
    };
    let (train_idx, _) = partition(&ds, &known, &unknown, test_fraction, split_seed)?;
    let index: BTreeMap<String, usize> = known.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    let train_set = labeled(ctx, &ds, &train_idx, &index)?;
    if train_set.is_empty() {
        return Err(Error::Data("no training samples for the known classes".into()));
    }
    let budget = trainer.config().epochs;
    let limit = stop_after.unwrap_or(usize::MAX);
    let mut logs = Vec::new();
    while trainer.epochs_done() < budget && logs.len() < limit {
        let log = trainer.run_epoch(&train_set)?;
        eprintln!(
            "epoch {}: loss {:.6} (classification {:.6}, boundary {:.6})",
            log.epoch, log.total, log.classification, log.boundary
        );
        logs.push(log);
    }
    let policy = ctx.cfg.eval.policy;
    let threshold =
        resolve_threshold(&policy, trainer.network(), trainer.head(), &train_set, ctx.cfg.eval.eval_batch)?;
    let mut meta = BTreeMap::new();
    meta.insert("known_classes".to_string(), join(&known));
    meta.insert("unknown_classes".to_string(), join(&unknown));
    meta.insert("split_seed".to_string(), split_seed.to_string());
    meta.insert("test_fraction".to_string(), format!("{test_fraction}"));
    meta.insert("threshold".to_string(), threshold_text(threshold));
    meta.insert("gate".to_string(), gate_text(policy.gate).to_string());
    meta.insert("preprocess".to_string(), format!("{:?}", ctx.cfg.eval.preprocess).to_ascii_lowercase());
    meta.insert("scaling".to_string(), format!("{:?}", ctx.cfg.eval.scaling).to_ascii_lowercase());
    save_checkpoint(out, &CheckpointFile { checkpoint: trainer.checkpoint(), meta })?;
    m.outputs.push(out.to_path_buf());
    if let Some(p) = losses {
        atomic_write(p, step_loss_csv(&logs, first_step).as_bytes())?;
        m.outputs.push(p.to_path_buf());
        let mut epoch_path = p.as_os_str().to_owned();
        epoch_path.push(".epochs.csv");
        atomic_write(Path::new(&epoch_path), loss_csv(&logs).as_bytes())?;
    }
    m.extra.insert("epochs_done".into(), json!(trainer.epochs_done()));
    m.extra.insert("known_classes".into(), json!(known));
    m.extra.insert("threshold".into(), json!(threshold_text(threshold)));
    Ok(out.to_path_buf())
}

/// Model and its stored evaluation settings.
struct LoadedModel {
    net: Network,
    head: RplHead,
    known: Vec<String>,
    unknown: Vec<String>,
    split_seed: u64,
    test_fraction: f64,
    gate: Gate,
    threshold: Threshold,
}

fn load_model(path: &Path, m: &mut RunManifest) -> Result<LoadedModel> {
    m.inputs.push(path.to_path_buf());
    let f = load_checkpoint(path)?;
    let get = |k: &str| f.meta.get(k).map(String::as_str).unwrap_or("");
    let bad = |k: &str| Error::Data(format!("{}: checkpoint field `{k}` is invalid", path.display()));
    let trainer = Trainer::from_checkpoint(&f.checkpoint)?;
    let gate = match get("gate") {
        "combined" => Gate::Combined,
        _ => Gate::Euclid,
    };
    let threshold = match parse_threshold(get("threshold"), 0.0) {
        Some(ThresholdPolicy::Fixed(v)) => Threshold::Value(v),
        _ => Threshold::UseR,
    };
    let (net, head) = trainer.into_parts();
    Ok(LoadedModel {
        net,
        head,
        known: split_names(get("known_classes")),
        unknown: split_names(get("unknown_classes")),
        split_seed: get("split_seed").parse().map_err(|_| bad("split_seed"))?,
        test_fraction: get("test_fraction").parse().map_err(|_| bad("test_fraction"))?,
        gate,
        threshold,
    })
}

/// Unknown classes for evaluation: every labelled class outside the known set.
fn eval_unknowns(lm: &LoadedModel, ds: &LoadedDataset) -> Vec<String> {
    let mut u: Vec<String> = ds.class_names().into_iter().filter(|c| !lm.known.contains(c)).collect();
    for c in &lm.unknown {
        if !u.contains(c) {
            u.push(c.clone());
        }
    }
    u.retain(|c| ds.samples.iter().any(|s| s.label.as_ref() == Some(c)));
    u
}

fn eval(
    ctx: &Ctx,
    model: &Path,
    data: &DataArgs,
    out: &Path,
    threshold: Option<&str>,
    predictions: Option<&Path>,
    m: &mut RunManifest,
) -> Result<PathBuf> {
    let lm = load_model(model, m)?;
    let ds = load(data, m)?;
    let unknown = eval_unknowns(&lm, &ds);
    let (train_idx, test_idx) = partition(&ds, &lm.known, &unknown, lm.test_fraction, lm.split_seed)?;
    let index = open_index(&lm.known, &unknown);
    let test = labeled(ctx, &ds, &test_idx, &index)?;
    let n_known = lm.known.len();
    let batch = ctx.cfg.eval.eval_batch;
    let threshold = match threshold {
        None => lm.threshold,
        Some(v) => {
            let q = match ctx.cfg.eval.policy.threshold {
                ThresholdPolicy::Percentile(q) => q,
                _ => osrk_core::eval::DEFAULT_CALIBRATION_Q,
            };
            let policy = parse_threshold(v, q)
                .ok_or_else(|| osrk_core::Error::config("threshold", format!("cannot parse `{v}`")))?;
            let known_index: BTreeMap<String, usize> = lm.known.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
            let train = labeled(ctx, &ds, &train_idx, &known_index)?;
            resolve_threshold(&OpenSetPolicy { gate: lm.gate, threshold: policy }, &lm.net, &lm.head, &train, batch)?
        }
    };
    let model = TrainedModel { net: lm.net, head: lm.head, logs: Vec::new(), gate: lm.gate, threshold };
    let report = evaluate_open(&model, &test, n_known, batch)?;
    let present: std::collections::BTreeSet<usize> = test.labels().iter().copied().collect();
    let n_unknown_classes = if present.contains(&n_known) { unknown.len() } else { 0 };
    let csv = report_csv(&report, n_known, n_known + n_unknown_classes, ctx.seed)?;
    atomic_write(out, csv.as_bytes())?;
    m.outputs.push(out.to_path_buf());
    let sep = separation_report(&report.predictions, &truths(&test, n_known), n_known);
    eprintln!(
        "precision {:.4} recall {:.4} f1 {:.4} accuracy {:.4} closed-set accuracy {:.4}; separation {}",
        report.metrics.precision,
        report.metrics.recall,
        report.metrics.f1,
        report.accuracy,
        report.closed_accuracy,
        if sep.holds() { "holds" } else { "does not hold" }
    );
    if let Some(p) = predictions {
        let mut s = String::from("index,true_label,predicted,gating_distance,threshold\n");
        let mut names = lm.known.clone();
        names.push("UNKNOWN".into());
        for (i, pr) in report.predictions.iter().enumerate() {
            let predicted = pr.class.map_or("UNKNOWN", |k| names[k].as_str());
            s.push_str(&format!(
                "{i},{},{predicted},{},{}\n",
                names[test.labels()[i]],
                osrk_core::eval::fmt_sig6(pr.gating_distance),
                osrk_core::eval::fmt_sig6(pr.threshold_used)
            ));
        }
        atomic_write(p, s.as_bytes())?;
        m.outputs.push(p.to_path_buf());
    }
    m.extra.insert("threshold".into(), json!(threshold_text(threshold)));
    m.extra.insert("separation_holds".into(), json!(sep.holds()));
    Ok(out.to_path_buf())
}

/// All classes known, split into train and test sets.
fn class_data(ctx: &Ctx, ds: &LoadedDataset) -> Result<ClassData> {
    let classes = if ctx.cfg.eval.known_classes.is_empty() {
        ds.class_names()
    } else {
        let mut c = ctx.cfg.eval.known_classes.clone();
        c.extend(ctx.cfg.eval.unknown_classes.iter().cloned());
        c
    };
    let (train_idx, test_idx) = partition(ds, &classes, &[], ctx.cfg.eval.test_fraction, ctx.seed)?;
    let index: BTreeMap<String, usize> = classes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    let train = labeled(ctx, ds, &train_idx, &index)?;
    let train_azimuth: Option<Vec<f64>> = train_idx.iter().map(|&i| ds.samples[i].azimuth_deg()).collect();
    Ok(ClassData {
        train_azimuth: train_azimuth.filter(|a| a.len() == train.len()),
        train,
        test: labeled(ctx, ds, &test_idx, &index)?,
        class_names: classes,
    })
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    ctx: &Ctx,
    data: &DataArgs,
    init: &InitArgs,
    out: &Path,
    k_min: usize,
    k_max: usize,
    reps: usize,
    m: &mut RunManifest,
) -> Result<PathBuf> {
    let ds = load(data, m)?;
    let cd = class_data(ctx, &ds)?;
    let order: Vec<usize> = (0..cd.class_names.len()).collect();
    let rows = run_openness_sweep(&cd, &order, k_min, k_max, reps, &ctx.experiment(ctx.bank(init)?), ctx.seed)?;
    atomic_write(out, sweep_csv(&rows).as_bytes())?;
    m.outputs.push(out.to_path_buf());
    m.extra.insert("class_order".into(), json!(cd.class_names));
    Ok(out.to_path_buf())
}

#[allow(clippy::too_many_arguments)]
fn limited(
    ctx: &Ctx,
    data: &DataArgs,
    init: &InitArgs,
    out: &Path,
    counts: &[usize],
    paired: bool,
    sub: Subsampling,
    m: &mut RunManifest,
) -> Result<PathBuf> {
    let ds = load(data, m)?;
    let cd = class_data(ctx, &ds)?;
    let mut bank = ctx.bank(init)?;
    if paired && bank.is_none() {
        bank = Some(build_kernel_bank(&ctx.asc_spec()?, &ctx.cfg.radar)?);
    }
    let rows = run_limited_sample_protocol(&cd, counts, &ctx.experiment(bank), ctx.seed, paired, sub)?;
    atomic_write(out, limited_csv(&rows, ctx.seed).as_bytes())?;
    m.outputs.push(out.to_path_buf());
    Ok(out.to_path_buf())
}

fn export_embeddings(ctx: &Ctx, model: &Path, data: &DataArgs, out: &Path, split: &str, m: &mut RunManifest) -> Result<PathBuf> {
    let lm = load_model(model, m)?;
    let ds = load(data, m)?;
    let unknown = eval_unknowns(&lm, &ds);
    let (train_idx, test_idx) = partition(&ds, &lm.known, &unknown, lm.test_fraction, lm.split_seed)?;
    let idx: Vec<usize> = match split {
        "train" => train_idx,
        "test" => test_idx,
        "all" => {
            let mut v: Vec<usize> = train_idx.into_iter().chain(test_idx).collect();
            v.sort_unstable();
            v
        }
        other => return Err(osrk_core::Error::config("split", format!("`{other}`; use train, test or all")).into()),
    };
    let index = open_index(&lm.known, &unknown);
    let idx: Vec<usize> = idx.into_iter().filter(|&i| ds.samples[i].label.as_ref().is_some_and(|l| index.contains_key(l))).collect();
    let set = labeled(ctx, &ds, &idx, &index)?;
    let model = TrainedModel { net: lm.net, head: lm.head, logs: Vec::new(), gate: lm.gate, threshold: lm.threshold };
    let emb = embed(&model.net, &set, ctx.cfg.eval.eval_batch)?;
    let preds = model.predict_embeddings(&emb)?;
    let ids: Vec<String> = idx
        .iter()
        .map(|&i| ds.paths[i].strip_prefix(&data.data).unwrap_or(&ds.paths[i]).display().to_string())
        .collect();
    let truth: Vec<String> = idx.iter().map(|&i| ds.samples[i].label.clone().unwrap_or_default()).collect();
    let csv = embeddings_csv(&ids, &truth, &preds, &lm.known, &emb, model.head.dim());
    atomic_write(out, csv.as_bytes())?;
    m.outputs.push(out.to_path_buf());
    Ok(out.to_path_buf())
}

fn dump_features(model: &Path, image: &Path, layer: usize, out_dir: &Path, m: &mut RunManifest) -> Result<PathBuf> {
    let f = load_checkpoint(model)?;
    m.inputs.extend([model.to_path_buf(), image.to_path_buf()]);
    let preprocess_mode = match f.meta.get("preprocess").map(String::as_str) {
        Some("centercrop") => osrk_core::data::PreprocessMode::CenterCrop,
        _ => osrk_core::data::PreprocessMode::Pad,
    };
    let scaling = match f.meta.get("scaling").map(String::as_str) {
        Some("log") => osrk_core::data::Scaling::Log,
        _ => osrk_core::data::Scaling::Linear,
    };
    let (net, _) = Trainer::from_checkpoint(&f.checkpoint)?.into_parts();
    let sample = load_sample_file(image)?;
    let s = net.input_size();
    let x = preprocess(&sample, s, preprocess_mode, scaling)?.reshape(&[1, 1, s, s])?;
    let n_layers = net.config().layers.len();
    let y = net.forward_to(&x, layer)?;
    let &[1, c, h, w] = y.shape() else {
        let spatial: Vec<String> = net
            .config()
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| !matches!(l, LayerSpec::Dense { .. }))
            .map(|(i, _)| i.to_string())
            .collect();
        return Err(osrk_core::Error::argument(format!(
            "layer {layer} of 0..{n_layers} has no spatial output; feature maps exist for layers {}",
            spatial.join(", ")
        ))
        .into());
    };
    if h != w {
        return Err(Error::Data(format!("feature maps are {h}x{w}, expected square")));
    }
    let area = h * w;
    let channels: Vec<&[f64]> = y.values().chunks(area).collect();
    for (i, ch) in channels.iter().enumerate() {
        let p = out_dir.join(format!("channel_{i:03}.png"));
        save_png(&p, &montage(&[ch], h, 1)?)?;
        m.outputs.push(p);
    }
    let mp = out_dir.join("montage.png");
    save_png(&mp, &montage(&channels, h, grid_cols(c))?)?;
    m.outputs.push(mp);
    m.extra.insert("channels".into(), json!(c));
    m.extra.insert("extent".into(), json!(h));
    Ok(out_dir.to_path_buf())
}
