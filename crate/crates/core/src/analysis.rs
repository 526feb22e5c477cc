//! Measurement over traced forward passes: firing-rate statistics,
//! accumulate/multiply-accumulate operation counting, a per-operation energy
//! model, spatial-frequency spectrum reports, and run-to-run comparison,
//! plus the CSV/PGM report writers.
//!
//! Counting conventions (the literature rarely states them; these are
//! pinned here and used consistently):
//! - An AC is one synaptic accumulate triggered by a spike. Spikes are
//!   charged to the *consuming* layer: each spike entering a k×k
//!   convolution with `C_out` filters costs `k²·C_out` ACs, each spike
//!   entering a global average pool or an identity shortcut costs one, and
//!   each spike entering a classifier costs one per class.
//! - A MAC is one real-valued multiply-accumulate. The analog front-end
//!   convolution, the classifier (whose pooled input is real), and all
//!   attention-internal arithmetic count as MACs. Batch norm is folded into
//!   the preceding convolution at inference and costs nothing extra.
//! - Attention output is gated spikes: the event count and positions equal
//!   those of the incoming spikes, so downstream consumers are still
//!   charged ACs on the same counts.
//! - Counts are per input sample (batch-averaged) and summed over all
//!   timesteps. Boundary effects of padded convolutions are ignored: every
//!   spike is charged the full `k²·C_out` fanout.

use std::fmt;
use std::io::Write as IoWrite;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::frequency::{band_energy, center_spectrum, dft2d, Band, FrequencyError};
use crate::model::{ForwardTrace, Layer, LayerSpec, ModelError, Network, ShapeInfo};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};

/// Errors from measurement and report emission.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisError {
    /// Firing statistics require strictly binary spike tensors.
    NonBinaryTrace { layer: String },
    EmptyTrace,
    /// A trace does not line up with the network it claims to come from.
    TraceMismatch { detail: String },
    /// Traces in one batch disagree on layer structure or extents.
    HeterogeneousTraces { detail: String },
    /// Two runs being compared have different layer structures.
    StructureMismatch { detail: String },
    /// A report file could not be written or read.
    Io { message: String },
    /// A report file exists but does not parse back.
    Parse { message: String },
    Frequency(FrequencyError),
    Tensor(TensorError),
    Model(ModelError),
}

impl fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalysisError::NonBinaryTrace { layer } => {
                write!(f, "trace for {layer} contains non-binary values")
            }
            AnalysisError::EmptyTrace => write!(f, "trace has no spiking layers"),
            AnalysisError::TraceMismatch { detail } => write!(f, "trace/network mismatch: {detail}"),
            AnalysisError::HeterogeneousTraces { detail } => {
                write!(f, "traces disagree: {detail}")
            }
            AnalysisError::StructureMismatch { detail } => {
                write!(f, "layer structures differ: {detail}")
            }
            AnalysisError::Io { message } => write!(f, "report i/o: {message}"),
            AnalysisError::Parse { message } => write!(f, "report parse: {message}"),
            AnalysisError::Frequency(e) => write!(f, "{e}"),
            AnalysisError::Tensor(e) => write!(f, "{e}"),
            AnalysisError::Model(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for AnalysisError {}

impl From<FrequencyError> for AnalysisError {
    fn from(e: FrequencyError) -> Self {
        AnalysisError::Frequency(e)
    }
}

impl From<TensorError> for AnalysisError {
    fn from(e: TensorError) -> Self {
        AnalysisError::Tensor(e)
    }
}

impl From<ModelError> for AnalysisError {
    fn from(e: ModelError) -> Self {
        AnalysisError::Model(e)
    }
}

// ---------------------------------------------------------------------------
// Firing statistics
// ---------------------------------------------------------------------------

/// Exact spike accounting for one spiking stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFiring {
    pub name: String,
    pub spikes: u64,
    /// Neuron-timestep slots: every element of the `[T, N, C, H, W]` trace.
    pub slots: u64,
    pub rate: f64,
}

/// Per-layer and whole-network firing rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiringStats {
    pub layers: Vec<LayerFiring>,
    pub total_spikes: u64,
    pub total_slots: u64,
    /// Count-weighted aggregate: total spikes over total slots.
    pub network_rate: f64,
}

/// Count spikes per layer with exact integer arithmetic; a single division
/// per rate at the end. Non-binary values are an invariant breach upstream
/// and rejected.
pub fn firing_rate<S: Scalar>(trace: &ForwardTrace<S>) -> Result<FiringStats, AnalysisError> {
    if trace.layers.is_empty() {
        return Err(AnalysisError::EmptyTrace);
    }
    let mut layers = Vec::with_capacity(trace.layers.len());
    let mut total_spikes = 0u64;
    let mut total_slots = 0u64;
    for entry in &trace.layers {
        let mut spikes = 0u64;
        for &v in entry.spikes.data().iter() {
            if v == S::one() {
                spikes += 1;
            } else if v != S::zero() {
                return Err(AnalysisError::NonBinaryTrace { layer: entry.name.clone() });
            }
        }
        let slots = entry.spikes.numel() as u64;
        total_spikes += spikes;
        total_slots += slots;
        layers.push(LayerFiring {
            name: entry.name.clone(),
            spikes,
            slots,
            rate: spikes as f64 / slots as f64,
        });
    }
    Ok(FiringStats {
        layers,
        total_spikes,
        total_slots,
        network_rate: total_spikes as f64 / total_slots as f64,
    })
}

// ---------------------------------------------------------------------------
// Operation counting and energy
// ---------------------------------------------------------------------------

/// Synaptic-operation totals per input sample, summed over timesteps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpCounts {
    pub acs: f64,
    pub macs: f64,
    pub params_trainable: usize,
    pub params_frozen: usize,
    /// Carried for table compatibility; no counting methodology is defined
    /// for it, so it is never populated here.
    pub flops: Option<f64>,
}

/// Energy per operation in joules. The defaults reconcile published
/// (ACs, MACs) → energy rows to within 1% and match the 45 nm CMOS
/// convention widely used in the field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub e_ac: f64,
    pub e_mac: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel { e_ac: 0.9e-12, e_mac: 4.6e-12 }
    }
}

/// Total inference energy in joules: `acs·e_ac + macs·e_mac`.
pub fn energy(counts: &OpCounts, model: &EnergyModel) -> f64 {
    counts.acs * model.e_ac + counts.macs * model.e_mac
}

/// What a layer's input carries for counting purposes.
#[derive(Debug, Clone, Copy)]
enum Feed {
    /// Dense real values (analog image, pooled activations, logits).
    Real,
    /// Spike events (or attention-gated spikes): per-sample count over all
    /// timesteps.
    Events(f64),
}

/// Attention-internal multiply-accumulates per sample. Conventions: every
/// arithmetic element op (multiplies, adds, compares folded into mixes,
/// sigmoids) counts as one MAC; the DCT bank is a depthwise convolution
/// with `k²` filters of `k²` taps each.
fn fsta_macs(c: usize, h: usize, w: usize, k: usize, t: usize) -> f64 {
    let (c, h, w, k, t) = (c as f64, h as f64, w as f64, k as f64, t as f64);
    let spatial = t * c * h * w          // time-mean of the input
        + c * k.powi(4) * h * w          // DCT filter bank (depthwise)
        + k * k * h * w                  // mean across channels
        + (k * k + 1.0) * h * w          // 1×1 compression + bias
        + h * w                          // sigmoid
        + 2.0 * t * c * h * w;           // gate multiply + residual add
    let temporal = 2.0 * t * c * h * w   // spatial average and max pools
        + 3.0 * t * c                    // α/β mix and channel mean
        + t * (t + 1.0)                  // temporal linear map + bias
        + t                              // sigmoid
        + 2.0 * t * c * h * w;           // gate multiply + residual add
    let fusion = 3.0 * t * c * h * w;    // two branch scales + combining add
    spatial + temporal + fusion
}

/// Count ACs and MACs for one traced forward pass of `net`.
///
/// The trace must come from `net` (entry names and extents are checked).
/// ACs are exact integer sums divided once by the batch size; MACs come
/// from closed-form dense formulas times the timestep count.
pub fn count_ops<S: Scalar>(net: &Network<S>, trace: &ForwardTrace<S>) -> Result<OpCounts, AnalysisError> {
    if trace.layers.is_empty() {
        return Err(AnalysisError::EmptyTrace);
    }
    let spec = net.spec();
    let chain = spec.shape_chain()?;
    let t = spec.timesteps as f64;
    let batch = trace.layers[0].spikes.shape()[1];
    if batch == 0 {
        return Err(AnalysisError::TraceMismatch { detail: "empty batch".into() });
    }

    // Consume trace entries in order, validating names.
    let mut entries = trace.layers.iter();
    let mut next_entry = |expected: &str| -> Result<f64, AnalysisError> {
        let entry = entries.next().ok_or_else(|| AnalysisError::TraceMismatch {
            detail: format!("missing trace entry for {expected}"),
        })?;
        if entry.name != expected {
            return Err(AnalysisError::TraceMismatch {
                detail: format!("expected trace entry {expected}, found {}", entry.name),
            });
        }
        if entry.spikes.shape()[1] != batch {
            return Err(AnalysisError::TraceMismatch {
                detail: format!("batch size changes at {expected}"),
            });
        }
        let mut spikes = 0u64;
        for &v in entry.spikes.data().iter() {
            if v != S::zero() {
                spikes += 1;
            }
        }
        Ok(spikes as f64 / batch as f64)
    };

    let mut acs = 0.0f64;
    let mut macs = 0.0f64;
    let mut feed = Feed::Real;

    for (i, layer) in spec.layers.iter().enumerate() {
        match (*layer).clone() {
            LayerSpec::ConvBnLif { channels, kernel, .. } => {
                match feed {
                    Feed::Real => {
                        let ShapeInfo::Spatial { channels: cin, .. } = chain[i].input else {
                            unreachable!("validated")
                        };
                        let ShapeInfo::Spatial { height: oh, width: ow, .. } = chain[i].output else {
                            unreachable!("validated")
                        };
                        macs += t * (kernel * kernel * cin * channels * oh * ow) as f64;
                    }
                    Feed::Events(s) => acs += s * (kernel * kernel * channels) as f64,
                }
                feed = Feed::Events(next_entry(&format!("layer{i}_conv"))?);
            }
            LayerSpec::ResidualBlock { channels, .. } => {
                let has_projection = matches!(&net.layers[i], Layer::Residual { projection: Some(_), .. });
                let ShapeInfo::Spatial { channels: cin, .. } = chain[i].input else {
                    unreachable!("validated")
                };
                let ShapeInfo::Spatial { height: oh, width: ow, .. } = chain[i].output else {
                    unreachable!("validated")
                };
                match feed {
                    Feed::Real => {
                        macs += t * (9 * cin * channels * oh * ow) as f64;
                        if has_projection {
                            macs += t * (cin * channels * oh * ow) as f64;
                        } else {
                            macs += t * (channels * oh * ow) as f64; // dense shortcut add
                        }
                    }
                    Feed::Events(s) => {
                        let conv1_fanout = (9 * channels) as f64;
                        let shortcut_fanout = if has_projection { channels as f64 } else { 1.0 };
                        acs += s * (conv1_fanout + shortcut_fanout);
                    }
                }
                let inner = next_entry(&format!("layer{i}_res.inner"))?;
                acs += inner * (9 * channels) as f64;
                feed = Feed::Events(next_entry(&format!("layer{i}_res"))?);
            }
            LayerSpec::AvgPool => {
                match feed {
                    Feed::Real => {
                        let ShapeInfo::Spatial { channels, height, width } = chain[i].input else {
                            unreachable!("validated")
                        };
                        macs += t * (channels * height * width) as f64;
                    }
                    Feed::Events(s) => acs += s,
                }
                feed = Feed::Real;
            }
            LayerSpec::Flatten => {}
            LayerSpec::Classifier { classes } => {
                let ShapeInfo::Flat { features } = chain[i].input else { unreachable!("validated") };
                match feed {
                    Feed::Real => macs += t * (features * classes + classes) as f64,
                    Feed::Events(s) => {
                        acs += s * classes as f64;
                        macs += t * classes as f64; // bias adds
                    }
                }
                feed = Feed::Real;
            }
            LayerSpec::Fsta { kernel, .. } => {
                let ShapeInfo::Spatial { channels, height, width } = chain[i].input else {
                    unreachable!("validated")
                };
                macs += fsta_macs(channels, height, width, kernel, spec.timesteps);
                // Gated spikes keep their positions and count; the feed kind
                // is unchanged for downstream AC attribution.
            }
        }
    }

    if let Some(extra) = entries.next() {
        return Err(AnalysisError::TraceMismatch {
            detail: format!("unexpected extra trace entry {}", extra.name),
        });
    }

    Ok(OpCounts {
        acs,
        macs,
        params_trainable: net.parameter_count(),
        params_frozen: net.frozen_parameter_count(),
        flops: None,
    })
}

// ---------------------------------------------------------------------------
// Spectrum report
// ---------------------------------------------------------------------------

/// One band's share of the centered spectrum energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandFraction {
    /// `"horizontal_axis"` or `"vertical_axis"`.
    pub axis: String,
    pub halfwidth: usize,
    pub fraction: f64,
}

/// Centered spectrum of one (layer, timestep) firing-probability map.
#[derive(Debug, Clone)]
pub struct SpectrumEntry {
    pub layer: String,
    /// Position of this layer within the trace (used in artifact names).
    pub layer_index: usize,
    pub timestep: usize,
    /// Channel index when per-channel spectra were requested.
    pub channel: Option<usize>,
    /// Firing probability per pixel, `[H, W]`, in `[0, 1]`.
    pub probability: Tensor<f64>,
    /// Centered magnitude map, `[H, W]`.
    pub magnitude: Tensor<f64>,
    /// `ln(1 + magnitude)`, same extent.
    pub log_magnitude: Tensor<f64>,
    pub bands: Vec<BandFraction>,
}

/// Spectra for every traced spiking layer at every timestep.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub entries: Vec<SpectrumEntry>,
    pub timesteps: usize,
    /// Total samples averaged over (summed across traces).
    pub samples: usize,
}

fn spectrum_of_map(map: &Tensor<f64>) -> Result<(Tensor<f64>, Tensor<f64>, Vec<BandFraction>), AnalysisError> {
    let transformed = dft2d(map)?;
    let centered = center_spectrum(&transformed)?;
    let magnitude = centered.magnitudes().clone();
    let log_data: Vec<f64> = magnitude.data().iter().map(|&m| (1.0 + m).ln()).collect();
    let log_magnitude = Tensor::from_vec(magnitude.shape().to_vec(), log_data)?;
    let mut bands = Vec::with_capacity(6);
    for halfwidth in 0..=2usize {
        bands.push(BandFraction {
            axis: "horizontal_axis".into(),
            halfwidth,
            fraction: band_energy(&centered, Band::HorizontalAxis { halfwidth })?,
        });
        bands.push(BandFraction {
            axis: "vertical_axis".into(),
            halfwidth,
            fraction: band_energy(&centered, Band::VerticalAxis { halfwidth })?,
        });
    }
    Ok((magnitude, log_magnitude, bands))
}

/// Average spike activity into firing-probability maps and transform them.
///
/// For each traced spiking layer and each timestep, spikes are averaged over
/// every sample in every trace and (unless `per_channel`) over channels,
/// yielding an `[H, W]` probability map; its DFT is centered and stored as
/// linear and `ln(1+·)` magnitudes together with axis band-energy fractions
/// at halfwidths 0, 1, and 2.
pub fn spectrum_report<S: Scalar>(
    traces: &[ForwardTrace<S>],
    per_channel: bool,
) -> Result<SpectrumReport, AnalysisError> {
    let Some(first) = traces.first() else {
        return Err(AnalysisError::EmptyTrace);
    };
    if first.layers.is_empty() {
        return Err(AnalysisError::EmptyTrace);
    }
    // Structural agreement across the batch of traces.
    for trace in traces.iter().skip(1) {
        if trace.layers.len() != first.layers.len() {
            return Err(AnalysisError::HeterogeneousTraces {
                detail: format!(
                    "{} layers vs {}",
                    trace.layers.len(),
                    first.layers.len()
                ),
            });
        }
        for (a, b) in trace.layers.iter().zip(&first.layers) {
            if a.name != b.name {
                return Err(AnalysisError::HeterogeneousTraces {
                    detail: format!("layer {} vs {}", a.name, b.name),
                });
            }
            if a.spikes.shape()[0] != b.spikes.shape()[0]
                || a.spikes.shape()[2..] != b.spikes.shape()[2..]
            {
                return Err(AnalysisError::HeterogeneousTraces {
                    detail: format!("extents differ at {}", a.name),
                });
            }
        }
    }

    let timesteps = first.layers[0].spikes.shape()[0];
    let samples: usize = traces.iter().map(|tr| tr.layers[0].spikes.shape()[1]).sum();
    let mut entries = Vec::new();

    for (layer_index, proto) in first.layers.iter().enumerate() {
        let shape = proto.spikes.shape();
        let (t, c, h, w) = (shape[0], shape[2], shape[3], shape[4]);
        for timestep in 0..t {
            let channel_range: Vec<Option<usize>> = if per_channel {
                (0..c).map(Some).collect()
            } else {
                vec![None]
            };
            for channel in channel_range {
                let mut acc = vec![0.0f64; h * w];
                let mut denom = 0.0f64;
                for trace in traces {
                    let entry = &trace.layers[layer_index];
                    let n = entry.spikes.shape()[1];
                    let data = entry.spikes.data();
                    let channels: Vec<usize> = match channel {
                        Some(ci) => vec![ci],
                        None => (0..c).collect(),
                    };
                    for ni in 0..n {
                        for &ci in &channels {
                            let base = (((timestep * n) + ni) * c + ci) * h * w;
                            for (px, a) in acc.iter_mut().enumerate() {
                                *a += data[base + px].to_f64().unwrap();
                            }
                            denom += 1.0;
                        }
                    }
                }
                for a in &mut acc {
                    *a /= denom;
                }
                let probability = Tensor::from_vec(vec![h, w], acc)?;
                let (magnitude, log_magnitude, bands) = spectrum_of_map(&probability)?;
                entries.push(SpectrumEntry {
                    layer: proto.name.clone(),
                    layer_index,
                    timestep,
                    channel,
                    probability,
                    magnitude,
                    log_magnitude,
                    bands,
                });
            }
        }
    }

    Ok(SpectrumReport { entries, timesteps, samples })
}

// ---------------------------------------------------------------------------
// Run comparison
// ---------------------------------------------------------------------------

/// Relative firing reduction of one layer; `None` when the base rate is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReduction {
    pub name: String,
    pub base_rate: f64,
    pub other_rate: f64,
    pub reduction: Option<f64>,
}

/// Firing reduction of a run relative to a baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub layers: Vec<LayerReduction>,
    pub network_base: f64,
    pub network_other: f64,
    pub network_reduction: Option<f64>,
}

fn relative_reduction(base: f64, other: f64) -> Option<f64> {
    if base == 0.0 {
        None
    } else {
        Some((base - other) / base)
    }
}

/// Strip a positional `layer{i}_` prefix so that runs whose layer indices
/// shifted (e.g. after attention modules were inserted between stages) still
/// pair up by layer kind.
fn structural_key(name: &str) -> &str {
    if let Some((prefix, kind)) = name.split_once('_') {
        if let Some(index) = prefix.strip_prefix("layer") {
            if !index.is_empty() && index.bytes().all(|b| b.is_ascii_digit()) {
                return kind;
            }
        }
    }
    name
}

/// Per-layer and network-level relative reduction `(base − other)/base`.
/// Layers are paired positionally and must agree in kind up to the numeric
/// `layer{i}_` prefix; rows keep the base run's names. Layers with a zero
/// base rate are reported without a ratio rather than failing.
pub fn compare_runs(base: &FiringStats, other: &FiringStats) -> Result<ComparisonReport, AnalysisError> {
    if base.layers.len() != other.layers.len() {
        return Err(AnalysisError::StructureMismatch {
            detail: format!("{} layers vs {}", base.layers.len(), other.layers.len()),
        });
    }
    let mut layers = Vec::with_capacity(base.layers.len());
    for (b, o) in base.layers.iter().zip(&other.layers) {
        if structural_key(&b.name) != structural_key(&o.name) {
            return Err(AnalysisError::StructureMismatch {
                detail: format!("layer {} vs {}", b.name, o.name),
            });
        }
        layers.push(LayerReduction {
            name: b.name.clone(),
            base_rate: b.rate,
            other_rate: o.rate,
            reduction: relative_reduction(b.rate, o.rate),
        });
    }
    Ok(ComparisonReport {
        layers,
        network_base: base.network_rate,
        network_other: other.network_rate,
        network_reduction: relative_reduction(base.network_rate, other.network_rate),
    })
}

// ---------------------------------------------------------------------------
// Report writers
// ---------------------------------------------------------------------------

fn io_err<E: fmt::Display>(e: E) -> AnalysisError {
    AnalysisError::Io { message: e.to_string() }
}

/// Write firing statistics: one row per layer plus a `network` total row.
pub fn write_firing_csv(path: &Path, stats: &FiringStats) -> Result<(), AnalysisError> {
    let mut writer = csv::Writer::from_path(path).map_err(io_err)?;
    writer.write_record(["layer", "spikes", "slots", "rate"]).map_err(io_err)?;
    for layer in &stats.layers {
        writer
            .write_record([
                layer.name.as_str(),
                &layer.spikes.to_string(),
                &layer.slots.to_string(),
                &format!("{:.12}", layer.rate),
            ])
            .map_err(io_err)?;
    }
    writer
        .write_record([
            "network",
            &stats.total_spikes.to_string(),
            &stats.total_slots.to_string(),
            &format!("{:.12}", stats.network_rate),
        ])
        .map_err(io_err)?;
    writer.flush().map_err(io_err)?;
    Ok(())
}

/// Parse a firing CSV written by [`write_firing_csv`]. Rates are recomputed
/// from the exact counts; the `network` row is cross-checked.
pub fn read_firing_csv(path: &Path) -> Result<FiringStats, AnalysisError> {
    let mut reader = csv::Reader::from_path(path).map_err(io_err)?;
    let mut layers = Vec::new();
    let mut network: Option<(u64, u64)> = None;
    for record in reader.records() {
        let record = record.map_err(io_err)?;
        if record.len() != 4 {
            return Err(AnalysisError::Parse {
                message: format!("expected 4 columns, got {}", record.len()),
            });
        }
        let name = record[0].to_string();
        let spikes: u64 = record[1]
            .parse()
            .map_err(|e| AnalysisError::Parse { message: format!("spikes for {name}: {e}") })?;
        let slots: u64 = record[2]
            .parse()
            .map_err(|e| AnalysisError::Parse { message: format!("slots for {name}: {e}") })?;
        if slots == 0 {
            return Err(AnalysisError::Parse { message: format!("zero slots for {name}") });
        }
        if name == "network" {
            network = Some((spikes, slots));
        } else {
            layers.push(LayerFiring { name, spikes, slots, rate: spikes as f64 / slots as f64 });
        }
    }
    if layers.is_empty() {
        return Err(AnalysisError::Parse { message: "no layer rows".into() });
    }
    let total_spikes: u64 = layers.iter().map(|l| l.spikes).sum();
    let total_slots: u64 = layers.iter().map(|l| l.slots).sum();
    if let Some((s, n)) = network {
        if s != total_spikes || n != total_slots {
            return Err(AnalysisError::Parse {
                message: format!(
                    "network row ({s}, {n}) disagrees with layer totals ({total_spikes}, {total_slots})"
                ),
            });
        }
    }
    Ok(FiringStats {
        layers,
        total_spikes,
        total_slots,
        network_rate: total_spikes as f64 / total_slots as f64,
    })
}

/// Operation counts and modelled energy as a single-row CSV.
pub fn write_energy_csv(
    path: &Path,
    counts: &OpCounts,
    model: &EnergyModel,
) -> Result<(), AnalysisError> {
    let mut writer = csv::Writer::from_path(path).map_err(io_err)?;
    writer
        .write_record([
            "acs",
            "macs",
            "params_trainable",
            "params_frozen",
            "e_ac_joules",
            "e_mac_joules",
            "energy_joules",
        ])
        .map_err(io_err)?;
    writer
        .write_record([
            format!("{:.3}", counts.acs),
            format!("{:.3}", counts.macs),
            counts.params_trainable.to_string(),
            counts.params_frozen.to_string(),
            format!("{:e}", model.e_ac),
            format!("{:e}", model.e_mac),
            format!("{:e}", energy(counts, model)),
        ])
        .map_err(io_err)?;
    writer.flush().map_err(io_err)?;
    Ok(())
}

/// Comparison report: one row per layer plus the network row; layers whose
/// base never fired are marked `n/a`.
pub fn write_comparison_csv(path: &Path, report: &ComparisonReport) -> Result<(), AnalysisError> {
    let mut writer = csv::Writer::from_path(path).map_err(io_err)?;
    writer
        .write_record(["layer", "base_rate", "other_rate", "reduction"])
        .map_err(io_err)?;
    let fmt_reduction = |r: Option<f64>| match r {
        Some(v) => format!("{v:.6}"),
        None => "n/a".to_string(),
    };
    for layer in &report.layers {
        writer
            .write_record([
                layer.name.as_str(),
                &format!("{:.12}", layer.base_rate),
                &format!("{:.12}", layer.other_rate),
                &fmt_reduction(layer.reduction),
            ])
            .map_err(io_err)?;
    }
    writer
        .write_record([
            "network",
            &format!("{:.12}", report.network_base),
            &format!("{:.12}", report.network_other),
            &fmt_reduction(report.network_reduction),
        ])
        .map_err(io_err)?;
    writer.flush().map_err(io_err)?;
    Ok(())
}

/// An `[H, W]` map as a CSV matrix: header `col_0..col_{W-1}`, one row per
/// image row.
fn write_matrix_csv(path: &Path, map: &Tensor<f64>) -> Result<(), AnalysisError> {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let mut writer = csv::Writer::from_path(path).map_err(io_err)?;
    let header: Vec<String> = (0..w).map(|j| format!("col_{j}")).collect();
    writer.write_record(&header).map_err(io_err)?;
    let data = map.data();
    for row in 0..h {
        let cells: Vec<String> = (0..w).map(|j| format!("{:.12}", data[row * w + j])).collect();
        writer.write_record(&cells).map_err(io_err)?;
    }
    writer.flush().map_err(io_err)?;
    Ok(())
}

/// An `[H, W]` map as a binary (P5) PGM, linearly mapped to 0..=255 after
/// per-map normalization; an all-zero map renders black.
pub fn write_pgm(path: &Path, map: &Tensor<f64>) -> Result<(), AnalysisError> {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let data = map.data();
    let max = data.iter().cloned().fold(0.0f64, f64::max);
    let mut bytes = Vec::with_capacity(32 + h * w);
    bytes.extend_from_slice(format!("P5\n{w} {h}\n255\n").as_bytes());
    for &v in data.iter() {
        let px = if max > 0.0 { (v / max * 255.0).round().clamp(0.0, 255.0) as u8 } else { 0 };
        bytes.push(px);
    }
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    file.write_all(&bytes).map_err(io_err)?;
    Ok(())
}

/// Lay a spectrum report out on disk:
/// `<run_dir>/spectrum/layer<L>_t<T>[_c<C>].csv` (linear magnitude matrix),
/// the matching `.pgm` (normalized log magnitude), and
/// `<run_dir>/spectrum/bands.csv` with every band-energy fraction.
pub fn write_spectrum_report(run_dir: &Path, report: &SpectrumReport) -> Result<(), AnalysisError> {
    let dir = run_dir.join("spectrum");
    std::fs::create_dir_all(&dir).map_err(io_err)?;

    let mut bands = csv::Writer::from_path(dir.join("bands.csv")).map_err(io_err)?;
    bands
        .write_record(["layer", "layer_index", "timestep", "channel", "axis", "halfwidth", "fraction"])
        .map_err(io_err)?;

    for entry in &report.entries {
        let stem = match entry.channel {
            Some(c) => format!("layer{}_t{}_c{}", entry.layer_index, entry.timestep, c),
            None => format!("layer{}_t{}", entry.layer_index, entry.timestep),
        };
        write_matrix_csv(&dir.join(format!("{stem}.csv")), &entry.magnitude)?;
        write_pgm(&dir.join(format!("{stem}.pgm")), &entry.log_magnitude)?;
        for band in &entry.bands {
            bands
                .write_record([
                    entry.layer.as_str(),
                    &entry.layer_index.to_string(),
                    &entry.timestep.to_string(),
                    &entry.channel.map(|c| c.to_string()).unwrap_or_default(),
                    band.axis.as_str(),
                    &band.halfwidth.to_string(),
                    &format!("{:.12}", band.fraction),
                ])
                .map_err(io_err)?;
        }
    }
    bands.flush().map_err(io_err)?;
    Ok(())
}
