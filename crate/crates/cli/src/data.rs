//! Dataset ingestion and generation.
//!
//! Every descriptor resolves to the same in-memory form: images `[M, C, H,
//! W]` in `f64` plus integer labels. Synthetic datasets are pure functions
//! of their options (including the seed), so regenerating one yields
//! identical bytes; the train and test splits draw from independent
//! deterministic streams.

use std::fmt;
use std::path::Path;

use fsta_core::model::InputShape;
use fsta_core::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{
    Cifar10Options, ContainerOptions, DatasetDescriptor, GratingsOptions, Orientation,
    TwoclassOptions,
};
use crate::container::{read_container, Container, ContainerError, Payload};

/// One CIFAR-10 record: a label byte then 32×32 pixels in R, G, B planes.
pub const CIFAR_RECORD_BYTES: usize = 3073;
pub const CIFAR_RECORDS_PER_BATCH: usize = 10_000;
/// 10,000 records of 3,073 bytes.
pub const CIFAR_BATCH_BYTES: usize = CIFAR_RECORD_BYTES * CIFAR_RECORDS_PER_BATCH;
pub const CIFAR_CLASSES: usize = 10;
const CIFAR_SIDE: usize = 32;
const CIFAR_PLANE: usize = CIFAR_SIDE * CIFAR_SIDE;

#[derive(Debug)]
pub enum DataError {
    Io { path: String, message: String },
    BatchSize { path: String, expected: usize, actual: usize },
    BadLabel { path: String, record: usize, label: u8 },
    Container(ContainerError),
    LabelValue { index: usize, value: f64, classes: usize },
    ImageRank { rank: usize },
    CountMismatch { images: usize, labels: usize },
    ZeroStd { channel: usize },
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::Io { path, message } => write!(f, "{path}: {message}"),
            DataError::BatchSize { path, expected, actual } => {
                write!(f, "{path}: expected {expected} bytes, found {actual}")
            }
            DataError::BadLabel { path, record, label } => {
                write!(f, "{path}: record {record} carries label {label}, outside 0..{}", CIFAR_CLASSES)
            }
            DataError::Container(e) => write!(f, "container: {e}"),
            DataError::LabelValue { index, value, classes } => {
                write!(f, "label {index} is {value}, not an integer in 0..{classes}")
            }
            DataError::ImageRank { rank } => {
                write!(f, "image container must be rank 4 [M, C, H, W], got rank {rank}")
            }
            DataError::CountMismatch { images, labels } => {
                write!(f, "{images} images but {labels} labels")
            }
            DataError::ZeroStd { channel } => {
                write!(f, "channel {channel} has zero standard deviation; cannot normalize")
            }
        }
    }
}

impl std::error::Error for DataError {}

impl From<ContainerError> for DataError {
    fn from(e: ContainerError) -> Self {
        DataError::Container(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Images `[M, C, H, W]` with labels in `0..classes`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Tensor<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_shape(&self) -> InputShape {
        let s = self.images.shape();
        InputShape { channels: s[1], height: s[2], width: s[3] }
    }
}

pub fn load_dataset(desc: &DatasetDescriptor, split: Split) -> Result<Dataset, DataError> {
    match desc {
        DatasetDescriptor::Cifar10Binary(o) => load_cifar10_binary(o, split),
        DatasetDescriptor::TensorContainer(o) => load_container_dataset(o, split),
        DatasetDescriptor::SyntheticGratings(o) => Ok(gen_gratings(o, split)),
        DatasetDescriptor::SyntheticTwoclass(o) => Ok(gen_twoclass(o, split)),
    }
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary
// ---------------------------------------------------------------------------

fn cifar_batch_files(split: Split) -> &'static [&'static str] {
    match split {
        Split::Train => &[
            "data_batch_1.bin",
            "data_batch_2.bin",
            "data_batch_3.bin",
            "data_batch_4.bin",
            "data_batch_5.bin",
        ],
        Split::Test => &["test_batch.bin"],
    }
}

fn read_batch(path: &Path) -> Result<Vec<u8>, DataError> {
    let bytes = std::fs::read(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    if bytes.len() != CIFAR_BATCH_BYTES {
        return Err(DataError::BatchSize {
            path: path.display().to_string(),
            expected: CIFAR_BATCH_BYTES,
            actual: bytes.len(),
        });
    }
    Ok(bytes)
}

/// Per-channel mean and standard deviation of the training split on the
/// [0, 1] pixel scale. This is the one-shot computation behind the default
/// normalization constants; the values land in the run manifest via the
/// effective configuration.
pub fn cifar10_channel_stats(dir: &Path) -> Result<([f64; 3], [f64; 3]), DataError> {
    let mut sum = [0.0f64; 3];
    let mut sum_sq = [0.0f64; 3];
    let mut count = 0u64;
    for file in cifar_batch_files(Split::Train) {
        let bytes = read_batch(&dir.join(file))?;
        for record in bytes.chunks_exact(CIFAR_RECORD_BYTES) {
            for c in 0..3 {
                for &b in &record[1 + c * CIFAR_PLANE..1 + (c + 1) * CIFAR_PLANE] {
                    let v = b as f64 / 255.0;
                    sum[c] += v;
                    sum_sq[c] += v * v;
                }
            }
            count += CIFAR_PLANE as u64;
        }
    }
    let n = count as f64;
    let mut mean = [0.0; 3];
    let mut std = [0.0; 3];
    for c in 0..3 {
        mean[c] = sum[c] / n;
        std[c] = (sum_sq[c] / n - mean[c] * mean[c]).max(0.0).sqrt();
        if std[c] == 0.0 {
            return Err(DataError::ZeroStd { channel: c });
        }
    }
    Ok((mean, std))
}

pub fn load_cifar10_binary(options: &Cifar10Options, split: Split) -> Result<Dataset, DataError> {
    let (mean, std) = match (options.mean, options.std) {
        (Some(m), Some(s)) => (m, s),
        _ => cifar10_channel_stats(&options.dir)?,
    };
    for (c, &s) in std.iter().enumerate() {
        if s == 0.0 {
            return Err(DataError::ZeroStd { channel: c });
        }
    }

    let files = cifar_batch_files(split);
    let mut labels = Vec::with_capacity(files.len() * CIFAR_RECORDS_PER_BATCH);
    let mut pixels =
        Vec::with_capacity(files.len() * CIFAR_RECORDS_PER_BATCH * 3 * CIFAR_PLANE);
    for file in files {
        let path = options.dir.join(file);
        let bytes = read_batch(&path)?;
        for (i, record) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
            let label = record[0];
            if label as usize >= CIFAR_CLASSES {
                return Err(DataError::BadLabel {
                    path: path.display().to_string(),
                    record: i,
                    label,
                });
            }
            labels.push(label as usize);
            for c in 0..3 {
                for &b in &record[1 + c * CIFAR_PLANE..1 + (c + 1) * CIFAR_PLANE] {
                    pixels.push((b as f64 / 255.0 - mean[c]) / std[c]);
                }
            }
        }
    }
    let images = Tensor::from_vec(vec![labels.len(), 3, CIFAR_SIDE, CIFAR_SIDE], pixels)
        .expect("pixel count follows from record count");
    Ok(Dataset { images, labels, classes: CIFAR_CLASSES })
}

// ---------------------------------------------------------------------------
// Containers
// ---------------------------------------------------------------------------

fn labels_from_container(c: &Container, classes: usize) -> Result<Vec<usize>, DataError> {
    let t = c.to_tensor();
    let mut labels = Vec::with_capacity(t.numel());
    for (i, &v) in t.data().iter().enumerate() {
        if v.fract() != 0.0 || v < 0.0 || v >= classes as f64 {
            return Err(DataError::LabelValue { index: i, value: v, classes });
        }
        labels.push(v as usize);
    }
    Ok(labels)
}

pub fn load_container_dataset(options: &ContainerOptions, split: Split) -> Result<Dataset, DataError> {
    let (images_path, labels_path) = match split {
        Split::Train => (&options.train_images, &options.train_labels),
        Split::Test => (&options.test_images, &options.test_labels),
    };
    let images_c = read_container(images_path)?;
    if images_c.shape.len() != 4 {
        return Err(DataError::ImageRank { rank: images_c.shape.len() });
    }
    let images = images_c.to_tensor();
    let labels = labels_from_container(&read_container(labels_path)?, options.classes)?;
    if images.shape()[0] != labels.len() {
        return Err(DataError::CountMismatch { images: images.shape()[0], labels: labels.len() });
    }
    Ok(Dataset { images, labels, classes: options.classes })
}

/// Materialize a split as image/label containers (f64 payloads).
pub fn dataset_to_containers(dataset: &Dataset) -> (Container, Container) {
    let images = Container::from_tensor(&dataset.images);
    let labels = Container::new(
        vec![dataset.labels.len()],
        Payload::F64(dataset.labels.iter().map(|&l| l as f64).collect()),
    )
    .expect("shape matches label count");
    (images, labels)
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Independent deterministic stream per (seed, split).
fn split_rng(seed: u64, split: Split) -> ChaCha8Rng {
    let salt = match split {
        Split::Train => 0x7472_6169_6e00_0000, // "train"
        Split::Test => 0x7465_7374_0000_0000,  // "test"
    };
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}

/// Sinusoidal stripe images. A vertical grating varies along x only, so its
/// spectrum lives on the central horizontal axis of the centered transform;
/// horizontal gratings are the transpose; mixed images superpose both.
pub fn gen_gratings(options: &GratingsOptions, split: Split) -> Dataset {
    let samples = match split {
        Split::Train => options.train_samples,
        Split::Test => options.test_samples,
    };
    let (h, w, ch) = (options.height, options.width, options.channels);
    let mut rng = split_rng(options.seed, split);
    let mut pixels = Vec::with_capacity(samples * ch * h * w);
    let mut labels = Vec::with_capacity(samples);
    let omega = 2.0 * std::f64::consts::PI / options.period;

    for i in 0..samples {
        let class = i % options.orientations.len();
        labels.push(class);
        let phase_x: f64 = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        let phase_y: f64 = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        let mut map = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let v = match options.orientations[class] {
                    Orientation::Vertical => 0.5 + 0.5 * (omega * x as f64 + phase_x).sin(),
                    Orientation::Horizontal => 0.5 + 0.5 * (omega * y as f64 + phase_y).sin(),
                    Orientation::Mixed => {
                        0.5 + 0.25 * (omega * x as f64 + phase_x).sin()
                            + 0.25 * (omega * y as f64 + phase_y).sin()
                    }
                };
                map.push(v);
            }
        }
        for _ in 0..ch {
            if options.noise > 0.0 {
                for &v in &map {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    pixels.push(v + options.noise * n);
                }
            } else {
                pixels.extend_from_slice(&map);
            }
        }
    }
    let images = Tensor::from_vec(vec![samples, ch, h, w], pixels).expect("constructed to match");
    Dataset { images, labels, classes: options.orientations.len() }
}

/// Two textures of Gaussian blobs: class 0 concentrates its blobs in the
/// left half of the frame, class 1 in the right half. Linearly separable at
/// zero noise, and gently corrupted otherwise.
pub fn gen_twoclass(options: &TwoclassOptions, split: Split) -> Dataset {
    let samples = match split {
        Split::Train => options.train_samples,
        Split::Test => options.test_samples,
    };
    let (h, w, ch) = (options.height, options.width, options.channels);
    let mut rng = split_rng(options.seed, split);
    let mut pixels = Vec::with_capacity(samples * ch * h * w);
    let mut labels = Vec::with_capacity(samples);
    let half = w as f64 / 2.0;
    let inv_two_sigma_sq = 1.0 / (2.0 * options.blob_sigma * options.blob_sigma);

    for i in 0..samples {
        let class = i % 2;
        labels.push(class);
        let mut map = vec![0.0f64; h * w];
        for _ in 0..options.blobs {
            let cx = match class {
                0 => rng.random_range(0.0..half),
                _ => rng.random_range(half..w as f64),
            };
            let cy: f64 = rng.random_range(0.0..h as f64);
            let amp: f64 = rng.random_range(0.7..1.0);
            for y in 0..h {
                for x in 0..w {
                    let dx = x as f64 + 0.5 - cx;
                    let dy = y as f64 + 0.5 - cy;
                    map[y * w + x] += amp * (-(dx * dx + dy * dy) * inv_two_sigma_sq).exp();
                }
            }
        }
        for _ in 0..ch {
            for &v in &map {
                let noisy = if options.noise > 0.0 {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    v + options.noise * n
                } else {
                    v
                };
                pixels.push(noisy.clamp(0.0, 1.5));
            }
        }
    }
    let images = Tensor::from_vec(vec![samples, ch, h, w], pixels).expect("constructed to match");
    Dataset { images, labels, classes: 2 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fsta_testkit::oracle::dft2d_naive;

    fn write_fake_batch(path: &Path, label_of: impl Fn(usize) -> u8) {
        let mut bytes = vec![0u8; CIFAR_BATCH_BYTES];
        for r in 0..CIFAR_RECORDS_PER_BATCH {
            bytes[r * CIFAR_RECORD_BYTES] = label_of(r);
            for j in 1..CIFAR_RECORD_BYTES {
                bytes[r * CIFAR_RECORD_BYTES + j] = ((r * 31 + j * 7) % 256) as u8;
            }
        }
        std::fs::write(path, bytes).unwrap();
    }

    fn temp_dir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("data-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn cifar_layout_constants() {
        assert_eq!(CIFAR_RECORD_BYTES, 3073);
        assert_eq!(CIFAR_BATCH_BYTES, 30_730_000);
    }

    #[test]
    fn cifar_test_batch_decodes_scales_and_normalizes() {
        let dir = temp_dir("cifar");
        write_fake_batch(&dir.join("test_batch.bin"), |r| (r % 10) as u8);
        let options = Cifar10Options {
            dir: dir.clone(),
            mean: Some([0.5, 0.5, 0.5]),
            std: Some([0.25, 0.25, 0.25]),
        };
        let ds = load_cifar10_binary(&options, Split::Test).unwrap();
        assert_eq!(ds.images.shape(), &[10_000, 3, 32, 32]);
        assert_eq!(ds.labels[7], 7);
        // First pixel of record 0, channel 0: raw byte (0·31 + 1·7) % 256 = 7.
        let expected = (7.0 / 255.0 - 0.5) / 0.25;
        assert!((ds.images.data()[0] - expected).abs() < 1e-12);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn cifar_truncated_file_reports_both_sizes() {
        let dir = temp_dir("cifar-trunc");
        std::fs::write(dir.join("test_batch.bin"), vec![0u8; 1000]).unwrap();
        let options = Cifar10Options {
            dir: dir.clone(),
            mean: Some([0.5; 3]),
            std: Some([0.25; 3]),
        };
        match load_cifar10_binary(&options, Split::Test) {
            Err(DataError::BatchSize { expected, actual, .. }) => {
                assert_eq!(expected, 30_730_000);
                assert_eq!(actual, 1000);
            }
            other => panic!("expected batch size error, got {other:?}"),
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn cifar_label_out_of_range_is_rejected() {
        let dir = temp_dir("cifar-label");
        write_fake_batch(&dir.join("test_batch.bin"), |r| if r == 3 { 10 } else { 0 });
        let options = Cifar10Options {
            dir: dir.clone(),
            mean: Some([0.5; 3]),
            std: Some([0.25; 3]),
        };
        match load_cifar10_binary(&options, Split::Test) {
            Err(DataError::BadLabel { record: 3, label: 10, .. }) => {}
            other => panic!("expected bad label, got {other:?}"),
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn cifar_channel_stats_match_direct_computation() {
        let dir = temp_dir("cifar-stats");
        for file in cifar_batch_files(Split::Train) {
            write_fake_batch(&dir.join(file), |r| (r % 10) as u8);
        }
        let (mean, std) = cifar10_channel_stats(&dir).unwrap();
        // All five batches carry identical pixel bytes, so the dataset-wide
        // stats equal single-batch stats computed here from the raw formula.
        let mut sum = [0.0f64; 3];
        let mut sq = [0.0f64; 3];
        for r in 0..CIFAR_RECORDS_PER_BATCH {
            for j in 1..CIFAR_RECORD_BYTES {
                let c = (j - 1) / CIFAR_PLANE;
                let v = ((r * 31 + j * 7) % 256) as f64 / 255.0;
                sum[c] += v;
                sq[c] += v * v;
            }
        }
        let n = (CIFAR_RECORDS_PER_BATCH * CIFAR_PLANE) as f64;
        for c in 0..3 {
            let m = sum[c] / n;
            let s = (sq[c] / n - m * m).sqrt();
            assert!((mean[c] - m).abs() < 1e-9, "channel {c}: {} vs {m}", mean[c]);
            assert!((std[c] - s).abs() < 1e-9, "channel {c}: {} vs {s}", std[c]);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn gratings_are_reproducible_and_counted() {
        let options = GratingsOptions { train_samples: 6, test_samples: 4, ..Default::default() };
        let a = gen_gratings(&options, Split::Train);
        let b = gen_gratings(&options, Split::Train);
        assert_eq!(a.images.data().to_vec(), b.images.data().to_vec());
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.len(), 6);
        assert_eq!(gen_gratings(&options, Split::Test).len(), 4);
        // Train and test streams differ.
        let t = gen_gratings(&options, Split::Test);
        assert_ne!(a.images.data()[..64], t.images.data()[..64]);
    }

    #[test]
    fn zero_noise_vertical_grating_is_spectrally_on_axis() {
        let options = GratingsOptions {
            train_samples: 4,
            orientations: vec![Orientation::Vertical],
            noise: 0.0,
            ..Default::default()
        };
        let ds = gen_gratings(&options, Split::Train);
        let (h, w) = (options.height, options.width);
        for i in 0..ds.len() {
            let start = i * h * w;
            let img = &ds.images.data()[start..start + h * w];
            let (re, im) = dft2d_naive(img, &vec![0.0; h * w], h, w);
            let mut on_axis = 0.0;
            let mut total = 0.0;
            for u in 0..h {
                for v in 0..w {
                    let e = re[u * w + v].powi(2) + im[u * w + v].powi(2);
                    total += e;
                    if u == 0 {
                        on_axis += e;
                    }
                }
            }
            assert!(on_axis / total > 0.99, "image {i}: {}", on_axis / total);
        }
    }

    #[test]
    fn twoclass_blobs_sit_in_their_half() {
        let options = TwoclassOptions { noise: 0.0, train_samples: 8, ..Default::default() };
        let ds = gen_twoclass(&options, Split::Train);
        let (h, w) = (options.height, options.width);
        for i in 0..ds.len() {
            let start = i * h * w;
            let img = &ds.images.data()[start..start + h * w];
            let left: f64 = (0..h).flat_map(|y| (0..w / 2).map(move |x| (y, x))).map(|(y, x)| img[y * w + x]).sum();
            let right: f64 = (0..h).flat_map(|y| (w / 2..w).map(move |x| (y, x))).map(|(y, x)| img[y * w + x]).sum();
            if ds.labels[i] == 0 {
                assert!(left > right, "image {i}: {left} vs {right}");
            } else {
                assert!(right > left, "image {i}: {left} vs {right}");
            }
        }
    }

    #[test]
    fn container_dataset_roundtrips_through_files() {
        let dir = temp_dir("containers");
        let options = TwoclassOptions { train_samples: 6, test_samples: 4, ..Default::default() };
        let train = gen_twoclass(&options, Split::Train);
        let test = gen_twoclass(&options, Split::Test);
        let (ti, tl) = dataset_to_containers(&train);
        let (si, sl) = dataset_to_containers(&test);
        crate::container::write_container(&dir.join("train_images.fsta"), &ti).unwrap();
        crate::container::write_container(&dir.join("train_labels.fsta"), &tl).unwrap();
        crate::container::write_container(&dir.join("test_images.fsta"), &si).unwrap();
        crate::container::write_container(&dir.join("test_labels.fsta"), &sl).unwrap();

        let options = ContainerOptions {
            train_images: dir.join("train_images.fsta"),
            train_labels: dir.join("train_labels.fsta"),
            test_images: dir.join("test_images.fsta"),
            test_labels: dir.join("test_labels.fsta"),
            classes: 2,
        };
        let loaded = load_container_dataset(&options, Split::Train).unwrap();
        assert_eq!(loaded.labels, train.labels);
        assert_eq!(loaded.images.data().to_vec(), train.images.data().to_vec());
        let loaded = load_container_dataset(&options, Split::Test).unwrap();
        assert_eq!(loaded.labels, test.labels);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn bad_label_values_in_containers_are_rejected() {
        let c = Container::new(vec![2], Payload::F64(vec![0.0, 2.5])).unwrap();
        match labels_from_container(&c, 2) {
            Err(DataError::LabelValue { index: 1, .. }) => {}
            other => panic!("expected label value error, got {other:?}"),
        }
    }
}
