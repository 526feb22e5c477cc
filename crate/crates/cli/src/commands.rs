//! The work behind each subcommand. Every function takes the effective
//! configuration (after command-line overrides), writes its artifacts under
//! the resolved output directory, finishes with a manifest, and returns the
//! numbers it printed so tests can assert on them without scraping stdout.
//!
//! Error taxonomy: problems with the *inputs* (configuration, datasets,
//! checkpoints, report files) are validation failures and exit 1; failures
//! while producing *outputs* (training, analysis, writes) exit 2.

use std::fmt;
use std::path::{Path, PathBuf};

use fsta_core::analysis::{
    compare_runs, count_ops, energy, firing_rate, read_firing_csv, spectrum_report,
    write_comparison_csv, write_energy_csv, write_firing_csv, write_spectrum_report,
    AnalysisError, ComparisonReport, EnergyModel, FiringStats, OpCounts, SpectrumReport,
};
use fsta_core::model::{build_network, ForwardTrace, ModelError, Network};
use fsta_core::train::{
    capture_checkpoint, evaluate, gather_batch, load_checkpoint, lr_for_epoch, restore_network,
    save_checkpoint, train_epoch, Metrics, Optimizer, TrainError,
};
use fsta_core::Tensor;

use crate::config::{ConfigError, DatasetDescriptor, RunConfig};
use crate::container::{write_container, ContainerError};
use crate::data::{dataset_to_containers, load_dataset, DataError, Dataset, Split};
use crate::manifest::write_manifest;

#[derive(Debug)]
pub enum CliError {
    /// Bad inputs; exit code 1.
    Validation(String),
    /// Failure while doing the work; exit code 2.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ContainerError> for CliError {
    fn from(e: ContainerError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn io_runtime(what: &Path, e: impl fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", what.display()))
}

fn dataset_of<'a>(cfg: &'a RunConfig, command: &str) -> Result<&'a DatasetDescriptor, CliError> {
    cfg.dataset
        .as_ref()
        .ok_or_else(|| CliError::Validation(format!("the `{command}` command needs a dataset")))
}

fn out_dir_of(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| io_runtime(&dir, e))?;
    Ok(dir)
}

// ---------------------------------------------------------------------------
// Traced inference shared by several commands
// ---------------------------------------------------------------------------

/// Traced forward passes over the first `limit` images, in batches.
fn traced_batches(
    net: &Network<f64>,
    images: &Tensor<f64>,
    limit: usize,
    batch_size: usize,
) -> Result<Vec<ForwardTrace<f64>>, CliError> {
    let n = images.shape()[0].min(limit);
    if n == 0 {
        return Err(CliError::Validation("no images to trace".into()));
    }
    let indices: Vec<usize> = (0..n).collect();
    let mut traces = Vec::new();
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = gather_batch(images, chunk)?;
        let (_, trace) = net.forward(&batch, true)?;
        traces.push(trace.expect("trace requested"));
    }
    Ok(traces)
}

/// Pool firing statistics across batches: integer spike/slot sums per
/// layer, rates recomputed once at the end.
fn firing_of_traces(traces: &[ForwardTrace<f64>]) -> Result<FiringStats, CliError> {
    let mut merged: Option<FiringStats> = None;
    for trace in traces {
        let stats = firing_rate(trace)?;
        match &mut merged {
            None => merged = Some(stats),
            Some(acc) => {
                if acc.layers.len() != stats.layers.len() {
                    return Err(CliError::Runtime(format!(
                        "trace structure changed between batches: {} layers vs {}",
                        acc.layers.len(),
                        stats.layers.len()
                    )));
                }
                for (a, b) in acc.layers.iter_mut().zip(&stats.layers) {
                    if a.name != b.name {
                        return Err(CliError::Runtime(format!(
                            "trace layer order changed: {} vs {}",
                            a.name, b.name
                        )));
                    }
                    a.spikes += b.spikes;
                    a.slots += b.slots;
                }
                acc.total_spikes += stats.total_spikes;
                acc.total_slots += stats.total_slots;
            }
        }
    }
    let mut stats = merged.ok_or_else(|| CliError::Runtime("no traces collected".into()))?;
    for layer in &mut stats.layers {
        layer.rate = if layer.slots == 0 { 0.0 } else { layer.spikes as f64 / layer.slots as f64 };
    }
    stats.network_rate = if stats.total_slots == 0 {
        0.0
    } else {
        stats.total_spikes as f64 / stats.total_slots as f64
    };
    Ok(stats)
}

fn network_for_analysis(cfg: &RunConfig, data: &Dataset) -> Result<Network<f64>, CliError> {
    match &cfg.spectrum.checkpoint {
        Some(path) => {
            let ck = load_checkpoint(path).map_err(|e| CliError::Validation(e.to_string()))?;
            Ok(restore_network::<f64>(&ck).map_err(|e| CliError::Validation(e.to_string()))?)
        }
        None => {
            let spec = cfg.network_spec(data.input_shape(), data.classes)?;
            Ok(build_network::<f64>(&spec, cfg.seed)?)
        }
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub out_dir: PathBuf,
    pub final_train: Metrics,
    pub final_test: Metrics,
    /// Firing statistics of the trained network on the full test split.
    pub firing: FiringStats,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome, CliError> {
    if cfg.train.epochs == 0 {
        return Err(CliError::Validation("train.epochs must be at least 1".into()));
    }
    let desc = dataset_of(cfg, "train")?;
    let train_set = load_dataset(desc, Split::Train)?;
    let test_set = load_dataset(desc, Split::Test)?;

    let spec = cfg.network_spec(train_set.input_shape(), train_set.classes)?;
    let mut net = build_network::<f64>(&spec, cfg.seed)?;
    let tc = cfg.train_config();
    let mut optimizer = Optimizer::new(tc.optimizer, tc.weight_decay);

    let out_dir = out_dir_of(cfg)?;
    let metrics_path = out_dir.join("metrics.csv");
    let mut metrics_csv =
        csv::Writer::from_path(&metrics_path).map_err(|e| io_runtime(&metrics_path, e))?;
    metrics_csv
        .write_record([
            "epoch",
            "lr",
            "train_loss",
            "train_accuracy",
            "train_firing",
            "test_loss",
            "test_accuracy",
            "test_firing",
        ])
        .map_err(|e| io_runtime(&metrics_path, e))?;

    let mut last: Option<(Metrics, Metrics)> = None;
    for epoch in 0..tc.epochs {
        let train_m =
            train_epoch(&mut net, &mut optimizer, &train_set.images, &train_set.labels, &tc, epoch)?;
        let test_m = evaluate(&net, &test_set.images, &test_set.labels, tc.batch_size)?;
        let lr = lr_for_epoch(tc.lr, epoch, tc.epochs, tc.cosine_lr);
        metrics_csv
            .write_record([
                epoch.to_string(),
                format!("{lr:.8}"),
                format!("{:.6}", train_m.loss),
                format!("{:.6}", train_m.accuracy),
                format!("{:.6}", train_m.firing_rate),
                format!("{:.6}", test_m.loss),
                format!("{:.6}", test_m.accuracy),
                format!("{:.6}", test_m.firing_rate),
            ])
            .map_err(|e| io_runtime(&metrics_path, e))?;
        println!(
            "epoch {epoch}: lr {lr:.5} | train loss {:.4} acc {:.4} | test loss {:.4} acc {:.4} firing {:.4}",
            train_m.loss, train_m.accuracy, test_m.loss, test_m.accuracy, test_m.firing_rate
        );
        last = Some((train_m, test_m));
    }
    metrics_csv.flush().map_err(|e| io_runtime(&metrics_path, e))?;
    let (final_train, final_test) = last.expect("at least one epoch ran");

    let traces = traced_batches(&net, &test_set.images, usize::MAX, tc.batch_size)?;
    let firing = firing_of_traces(&traces)?;
    write_firing_csv(&out_dir.join("firing.csv"), &firing)?;

    let checkpoint = capture_checkpoint(&net, &optimizer, tc.epochs, cfg.seed);
    save_checkpoint(&out_dir.join("checkpoint.json"), &checkpoint)?;
    write_manifest(&out_dir, "train", cfg).map_err(|e| io_runtime(&out_dir, e))?;

    Ok(TrainOutcome { out_dir, final_train, final_test, firing })
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub out_dir: PathBuf,
    pub metrics: Metrics,
    pub firing: FiringStats,
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalOutcome, CliError> {
    let path = cfg
        .eval
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::Validation("eval needs eval.checkpoint".into()))?;
    let checkpoint = load_checkpoint(path).map_err(|e| CliError::Validation(e.to_string()))?;
    let net = restore_network::<f64>(&checkpoint).map_err(|e| CliError::Validation(e.to_string()))?;

    let desc = dataset_of(cfg, "eval")?;
    let test_set = load_dataset(desc, Split::Test)?;
    if checkpoint.spec.input != test_set.input_shape() {
        return Err(CliError::Validation(format!(
            "checkpoint expects input {:?}, dataset provides {:?}",
            checkpoint.spec.input,
            test_set.input_shape()
        )));
    }

    let metrics = evaluate(&net, &test_set.images, &test_set.labels, cfg.train.batch_size)?;
    let traces = traced_batches(&net, &test_set.images, usize::MAX, cfg.train.batch_size)?;
    let firing = firing_of_traces(&traces)?;

    let out_dir = out_dir_of(cfg)?;
    let metrics_path = out_dir.join("metrics.csv");
    let mut metrics_csv =
        csv::Writer::from_path(&metrics_path).map_err(|e| io_runtime(&metrics_path, e))?;
    metrics_csv
        .write_record(["loss", "accuracy", "firing_rate", "samples"])
        .map_err(|e| io_runtime(&metrics_path, e))?;
    metrics_csv
        .write_record([
            format!("{:.6}", metrics.loss),
            format!("{:.6}", metrics.accuracy),
            format!("{:.6}", metrics.firing_rate),
            metrics.samples.to_string(),
        ])
        .map_err(|e| io_runtime(&metrics_path, e))?;
    metrics_csv.flush().map_err(|e| io_runtime(&metrics_path, e))?;
    write_firing_csv(&out_dir.join("firing.csv"), &firing)?;
    write_manifest(&out_dir, "eval", cfg).map_err(|e| io_runtime(&out_dir, e))?;

    println!(
        "test loss {:.4} accuracy {:.4} firing rate {:.4} over {} samples",
        metrics.loss, metrics.accuracy, metrics.firing_rate, metrics.samples
    );
    Ok(EvalOutcome { out_dir, metrics, firing })
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

pub fn cmd_spectrum(cfg: &RunConfig) -> Result<SpectrumReport, CliError> {
    let desc = dataset_of(cfg, "spectrum")?;
    let test_set = load_dataset(desc, Split::Test)?;
    let net = network_for_analysis(cfg, &test_set)?;

    let traces =
        traced_batches(&net, &test_set.images, cfg.spectrum.samples, cfg.train.batch_size)?;
    let report = spectrum_report(&traces, cfg.spectrum.per_channel)?;

    let out_dir = out_dir_of(cfg)?;
    write_spectrum_report(&out_dir, &report)?;
    write_manifest(&out_dir, "spectrum", cfg).map_err(|e| io_runtime(&out_dir, e))?;
    println!(
        "wrote {} spectra ({} samples averaged) under {}",
        report.entries.len(),
        report.samples,
        out_dir.join("spectrum").display()
    );
    Ok(report)
}

// ---------------------------------------------------------------------------
// energy
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EnergyOutcome {
    pub out_dir: PathBuf,
    pub counts: OpCounts,
    pub joules: f64,
}

pub fn cmd_energy(cfg: &RunConfig) -> Result<EnergyOutcome, CliError> {
    let model = EnergyModel { e_ac: cfg.energy.e_ac, e_mac: cfg.energy.e_mac };
    let counts = match (cfg.energy.acs, cfg.energy.macs) {
        (Some(acs), Some(macs)) => {
            OpCounts { acs, macs, params_trainable: 0, params_frozen: 0, flops: None }
        }
        _ => {
            let desc = dataset_of(cfg, "energy")?;
            let test_set = load_dataset(desc, Split::Test)?;
            let net = network_for_analysis(cfg, &test_set)?;
            let traces =
                traced_batches(&net, &test_set.images, cfg.energy.samples, cfg.energy.samples)?;
            count_ops(&net, &traces[0])?
        }
    };
    let joules = energy(&counts, &model);

    let out_dir = out_dir_of(cfg)?;
    write_energy_csv(&out_dir.join("energy.csv"), &counts, &model)?;
    write_manifest(&out_dir, "energy", cfg).map_err(|e| io_runtime(&out_dir, e))?;
    println!("{:.2} mJ", joules * 1e3);
    Ok(EnergyOutcome { out_dir, counts, joules })
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

pub fn cmd_compare(cfg: &RunConfig) -> Result<ComparisonReport, CliError> {
    let base_path = cfg
        .compare
        .baseline
        .as_ref()
        .ok_or_else(|| CliError::Validation("compare needs compare.baseline".into()))?;
    let cand_path = cfg
        .compare
        .candidate
        .as_ref()
        .ok_or_else(|| CliError::Validation("compare needs compare.candidate".into()))?;
    let base = read_firing_csv(base_path).map_err(|e| CliError::Validation(e.to_string()))?;
    let cand = read_firing_csv(cand_path).map_err(|e| CliError::Validation(e.to_string()))?;
    let report = compare_runs(&base, &cand).map_err(|e| CliError::Validation(e.to_string()))?;

    let out_dir = out_dir_of(cfg)?;
    write_comparison_csv(&out_dir.join("compare.csv"), &report)?;
    write_manifest(&out_dir, "compare", cfg).map_err(|e| io_runtime(&out_dir, e))?;

    match report.network_reduction {
        Some(r) => println!(
            "network firing rate {:.6} → {:.6} ({:+.2}% change)",
            report.network_base,
            report.network_other,
            -r * 100.0
        ),
        None => println!(
            "network firing rate {:.6} → {:.6} (baseline rate is zero; no ratio)",
            report.network_base, report.network_other
        ),
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

pub fn cmd_gen_data(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let desc = dataset_of(cfg, "gen-data")?;
    if !matches!(
        desc,
        DatasetDescriptor::SyntheticGratings(_) | DatasetDescriptor::SyntheticTwoclass(_)
    ) {
        return Err(CliError::Validation(format!(
            "gen-data materializes synthetic datasets only, got `{}`",
            desc.kind_name()
        )));
    }
    let train_set = load_dataset(desc, Split::Train)?;
    let test_set = load_dataset(desc, Split::Test)?;

    let out_dir = out_dir_of(cfg)?;
    let (train_images, train_labels) = dataset_to_containers(&train_set);
    let (test_images, test_labels) = dataset_to_containers(&test_set);
    write_container(&out_dir.join("train_images.fsta"), &train_images)?;
    write_container(&out_dir.join("train_labels.fsta"), &train_labels)?;
    write_container(&out_dir.join("test_images.fsta"), &test_images)?;
    write_container(&out_dir.join("test_labels.fsta"), &test_labels)?;
    write_manifest(&out_dir, "gen-data", cfg).map_err(|e| io_runtime(&out_dir, e))?;

    println!(
        "wrote {} train / {} test samples to {}",
        train_set.len(),
        test_set.len(),
        out_dir.display()
    );
    Ok(out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config_str, TwoclassOptions};

    fn temp_out(tag: &str) -> PathBuf {
        std::env::temp_dir().join(format!("cmd-{tag}-{}", std::process::id()))
    }

    fn tiny_config(tag: &str) -> RunConfig {
        let mut cfg = parse_config_str(
            "[train]\nepochs = 1\nbatch_size = 16\nlr = 0.05\n\n[dataset.synthetic_twoclass]\ntrain_samples = 32\ntest_samples = 16\nheight = 8\nwidth = 8\n",
        )
        .unwrap();
        cfg.out = temp_out(tag);
        cfg.network.timesteps = Some(2);
        cfg
    }

    #[test]
    fn train_writes_expected_artifacts() {
        let cfg = tiny_config("train");
        let outcome = cmd_train(&cfg).unwrap();
        for file in ["metrics.csv", "firing.csv", "checkpoint.json", "manifest.json"] {
            assert!(outcome.out_dir.join(file).exists(), "missing {file}");
        }
        assert!(outcome.final_test.accuracy >= 0.0);
        assert!(outcome.firing.total_slots > 0);
        let manifest = crate::manifest::read_manifest(&outcome.out_dir.join("manifest.json")).unwrap();
        assert_eq!(manifest.command, "train");
        assert!(manifest.artifacts.contains_key("metrics.csv"));
        std::fs::remove_dir_all(&outcome.out_dir).ok();
    }

    #[test]
    fn eval_reproduces_trained_test_metrics() {
        let mut cfg = tiny_config("evalsrc");
        let outcome = cmd_train(&cfg).unwrap();

        cfg.out = temp_out("eval");
        cfg.eval.checkpoint = Some(outcome.out_dir.join("checkpoint.json"));
        let eval = cmd_eval(&cfg).unwrap();
        assert!((eval.metrics.accuracy - outcome.final_test.accuracy).abs() < 1e-12);
        assert!((eval.metrics.loss - outcome.final_test.loss).abs() < 1e-9);
        assert_eq!(eval.firing.total_spikes, outcome.firing.total_spikes);
        std::fs::remove_dir_all(&outcome.out_dir).ok();
        std::fs::remove_dir_all(&eval.out_dir).ok();
    }

    #[test]
    fn spectrum_writes_report_tree() {
        let mut cfg = tiny_config("spectrum");
        cfg.spectrum.samples = 4;
        let report = cmd_spectrum(&cfg).unwrap();
        assert!(!report.entries.is_empty());
        let dir = cfg.out_dir();
        assert!(dir.join("spectrum/bands.csv").exists());
        // One csv and one pgm per entry.
        let files: Vec<_> = std::fs::read_dir(dir.join("spectrum")).unwrap().collect();
        assert_eq!(files.len(), 2 * report.entries.len() + 1);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn energy_prices_count_overrides() {
        let mut cfg = RunConfig::default();
        cfg.out = temp_out("energy");
        cfg.energy.acs = Some(260.05e6);
        cfg.energy.macs = Some(67.26e6);
        let outcome = cmd_energy(&cfg).unwrap();
        assert!((outcome.joules * 1e3 - 0.54).abs() / 0.54 < 0.01);
        assert!(outcome.out_dir.join("energy.csv").exists());
        std::fs::remove_dir_all(&outcome.out_dir).ok();
    }

    #[test]
    fn energy_counts_from_inference_when_no_overrides() {
        let mut cfg = tiny_config("energy-infer");
        cfg.energy.samples = 4;
        let outcome = cmd_energy(&cfg).unwrap();
        assert!(outcome.counts.macs > 0.0);
        assert!(outcome.joules > 0.0);
        std::fs::remove_dir_all(&outcome.out_dir).ok();
    }

    #[test]
    fn compare_reads_two_firing_reports() {
        let cfg_a = tiny_config("cmp-a");
        let a = cmd_train(&cfg_a).unwrap();
        let mut cfg_b = tiny_config("cmp-b");
        cfg_b.seed = 1;
        let b = cmd_train(&cfg_b).unwrap();

        let mut cfg = RunConfig::default();
        cfg.out = temp_out("cmp-out");
        cfg.compare.baseline = Some(a.out_dir.join("firing.csv"));
        cfg.compare.candidate = Some(b.out_dir.join("firing.csv"));
        let report = cmd_compare(&cfg).unwrap();
        assert_eq!(report.layers.len(), a.firing.layers.len());
        assert!(cfg.out_dir().join("compare.csv").exists());
        std::fs::remove_dir_all(&a.out_dir).ok();
        std::fs::remove_dir_all(&b.out_dir).ok();
        std::fs::remove_dir_all(&cfg.out_dir()).ok();
    }

    #[test]
    fn gen_data_roundtrips_into_container_dataset() {
        let mut cfg = RunConfig::default();
        cfg.out = temp_out("gen");
        cfg.dataset = Some(DatasetDescriptor::SyntheticTwoclass(TwoclassOptions {
            train_samples: 10,
            test_samples: 6,
            height: 8,
            width: 8,
            ..Default::default()
        }));
        let dir = cmd_gen_data(&cfg).unwrap();

        let reloaded = crate::data::load_container_dataset(
            &crate::config::ContainerOptions {
                train_images: dir.join("train_images.fsta"),
                train_labels: dir.join("train_labels.fsta"),
                test_images: dir.join("test_images.fsta"),
                test_labels: dir.join("test_labels.fsta"),
                classes: 2,
            },
            Split::Train,
        )
        .unwrap();
        let direct = load_dataset(cfg.dataset.as_ref().unwrap(), Split::Train).unwrap();
        assert_eq!(reloaded.labels, direct.labels);
        assert_eq!(reloaded.images.data().to_vec(), direct.images.data().to_vec());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn train_rejects_zero_epochs_as_validation() {
        let mut cfg = tiny_config("zero-epochs");
        cfg.train.epochs = 0;
        match cmd_train(&cfg) {
            Err(CliError::Validation(_)) => {}
            other => panic!("expected validation error, got {other:?}"),
        }
    }
}
