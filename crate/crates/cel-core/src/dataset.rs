//! Labeled datasets: CSV/IDX ingestion, synthetic Gaussian blobs, class
//! partitions and stratified train/test splits.
//!
//! Labels are remapped to contiguous `[0, M)` at ingestion; the original
//! label vocabulary is kept in `label_names` for reporting.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CelError, Result};

/// One labeled sample: a feature vector and its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// A classification dataset with a dense class vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<Sample>,
    num_classes: usize,
    feature_dim: usize,
    label_names: Vec<String>,
}

impl LabeledDataset {
    /// Builds a dataset, validating that every label is in `[0, M)`, every
    /// feature vector has dimension `d` and is finite, and `M >= 2`.
    pub fn new(
        samples: Vec<Sample>,
        num_classes: usize,
        feature_dim: usize,
        label_names: Vec<String>,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(CelError::TooFewClasses { found: num_classes });
        }
        if label_names.len() != num_classes {
            return Err(CelError::DimensionMismatch {
                what: "label_names",
                expected: num_classes,
                got: label_names.len(),
            });
        }
        for s in &samples {
            if s.features.len() != feature_dim {
                return Err(CelError::DimensionMismatch {
                    what: "sample features",
                    expected: feature_dim,
                    got: s.features.len(),
                });
            }
            if s.label >= num_classes {
                return Err(CelError::DimensionMismatch {
                    what: "sample label",
                    expected: num_classes,
                    got: s.label,
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(CelError::NonFinite {
                    what: "sample features",
                });
            }
        }
        Ok(Self {
            samples,
            num_classes,
            feature_dim,
            label_names,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }
}

/// Per-class lists of sample indices, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPartition {
    pub per_class: Vec<Vec<usize>>,
}

impl ClassPartition {
    /// Total number of indexed samples.
    pub fn total(&self) -> usize {
        self.per_class.iter().map(Vec::len).sum()
    }
}

/// Specification of a synthetic isotropic-Gaussian blob dataset.
///
/// When `class_means` is omitted, means are placed automatically: classes in
/// `overlap_pairs` share a grid cell with a sub-stddev offset between them,
/// all other mean pairs sit at least `6 * class_stddev` apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub num_classes: usize,
    pub per_class_count: usize,
    pub feature_dim: usize,
    #[serde(default)]
    pub class_means: Option<Vec<Vec<f64>>>,
    pub class_stddev: f64,
    #[serde(default)]
    pub overlap_pairs: Vec<(usize, usize)>,
    pub seed: u64,
}

const OVERLAP_OFFSET_FACTOR: f64 = 0.75;
const GRID_SPACING_FACTOR: f64 = 8.0;
const SEPARATION_FACTOR: f64 = 6.0;

impl BlobSpec {
    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(CelError::TooFewClasses {
                found: self.num_classes,
            });
        }
        if self.per_class_count < 1 {
            return Err(CelError::InvalidConfig(
                "per_class_count must be >= 1".into(),
            ));
        }
        if self.feature_dim < 1 {
            return Err(CelError::InvalidConfig("feature_dim must be >= 1".into()));
        }
        if !self.class_stddev.is_finite() || self.class_stddev <= 0.0 {
            return Err(CelError::InvalidConfig(
                "class_stddev must be a positive real".into(),
            ));
        }
        let mut seen = vec![false; self.num_classes];
        for &(a, b) in &self.overlap_pairs {
            if a >= self.num_classes || b >= self.num_classes || a == b {
                return Err(CelError::InvalidConfig(format!(
                    "overlap pair ({a}, {b}) out of range or degenerate"
                )));
            }
            // A class in two pairs would need to be both near and 6-stddev
            // far from some third class.
            if seen[a] || seen[b] {
                return Err(CelError::Placement {
                    reason: format!(
                        "class {} appears in more than one overlap pair",
                        if seen[a] { a } else { b }
                    ),
                });
            }
            seen[a] = true;
            seen[b] = true;
        }
        if let Some(means) = &self.class_means {
            if means.len() != self.num_classes {
                return Err(CelError::DimensionMismatch {
                    what: "class_means",
                    expected: self.num_classes,
                    got: means.len(),
                });
            }
            for m in means {
                if m.len() != self.feature_dim {
                    return Err(CelError::DimensionMismatch {
                        what: "class mean",
                        expected: self.feature_dim,
                        got: m.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Resolves class means, either taking the explicit ones or placing them
    /// on a scaled grid so that the overlap/separation constraints hold.
    pub fn resolve_means(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let means = match &self.class_means {
            Some(m) => m.clone(),
            None => self.place_means(),
        };
        self.check_geometry(&means)?;
        Ok(means)
    }

    fn place_means(&self) -> Vec<Vec<f64>> {
        let m = self.num_classes;
        let d = self.feature_dim;
        let spacing = GRID_SPACING_FACTOR * self.class_stddev;

        // One grid cell per "group": an overlap pair shares a cell, every
        // other class gets its own.
        let mut group_of = vec![usize::MAX; m];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for &(a, b) in &self.overlap_pairs {
            group_of[a] = groups.len();
            group_of[b] = groups.len();
            groups.push(vec![a, b]);
        }
        for (c, group) in group_of.iter_mut().enumerate() {
            if *group == usize::MAX {
                *group = groups.len();
                groups.push(vec![c]);
            }
        }

        // Lattice {0..side-1}^d enumerated in row-major order, recentered on
        // the origin to keep feature magnitudes moderate.
        let side = (groups.len() as f64).powf(1.0 / d as f64).ceil() as usize;
        let side = side.max(2);
        let mut bases = Vec::with_capacity(groups.len());
        for g in 0..groups.len() {
            let mut cell = vec![0usize; d];
            let mut rem = g;
            for coord in cell.iter_mut() {
                *coord = rem % side;
                rem /= side;
            }
            bases.push(
                cell.iter()
                    .map(|&c| c as f64 * spacing)
                    .collect::<Vec<f64>>(),
            );
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| bases.iter().map(|b| b[j]).sum::<f64>() / bases.len() as f64)
            .collect();
        let mut means = vec![vec![0.0; d]; m];
        for (base, members) in bases.iter().zip(&groups) {
            for (i, &class) in members.iter().enumerate() {
                let mut mean: Vec<f64> = base.iter().zip(&centroid).map(|(b, c)| b - c).collect();
                if i == 1 {
                    mean[0] += OVERLAP_OFFSET_FACTOR * self.class_stddev;
                }
                means[class] = mean;
            }
        }
        means
    }

    fn check_geometry(&self, means: &[Vec<f64>]) -> Result<()> {
        let sd = self.class_stddev;
        let is_overlap = |a: usize, b: usize| {
            self.overlap_pairs
                .iter()
                .any(|&(x, y)| (x, y) == (a, b) || (y, x) == (a, b))
        };
        for a in 0..means.len() {
            for b in (a + 1)..means.len() {
                let dist = euclidean(&means[a], &means[b]);
                if is_overlap(a, b) {
                    if dist > sd * (1.0 + 1e-9) {
                        return Err(CelError::Placement {
                            reason: format!(
                                "overlap pair ({a}, {b}) means are {dist:.6} apart, need <= stddev {sd:.6}"
                            ),
                        });
                    }
                } else if dist < SEPARATION_FACTOR * sd * (1.0 - 1e-9) {
                    return Err(CelError::Placement {
                        reason: format!(
                            "classes {a} and {b} means are {dist:.6} apart, need >= {:.6}",
                            SEPARATION_FACTOR * sd
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Loads a header-first CSV file; every column except `label_column` is a
/// feature. Label values map to contiguous class indices by first appearance.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;

    let headers = reader.headers()?.clone();
    let arity = headers.len();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| CelError::MissingColumn {
            column: label_column.to_string(),
        })?;

    let mut label_ids: HashMap<String, usize> = HashMap::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut samples = Vec::new();

    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2; // 1-based, after the header
        if record.len() != arity {
            return Err(CelError::RaggedRow {
                row,
                expected: arity,
                got: record.len(),
            });
        }
        let mut features = Vec::with_capacity(arity - 1);
        for (col, value) in record.iter().enumerate() {
            if col == label_idx {
                continue;
            }
            let parsed: f64 = value.parse().map_err(|_| CelError::BadField {
                row,
                column: headers[col].to_string(),
                value: value.to_string(),
            })?;
            if !parsed.is_finite() {
                return Err(CelError::BadField {
                    row,
                    column: headers[col].to_string(),
                    value: value.to_string(),
                });
            }
            features.push(parsed);
        }
        let key = record[label_idx].to_string();
        let label = *label_ids.entry(key.clone()).or_insert_with(|| {
            label_names.push(key);
            label_names.len() - 1
        });
        samples.push(Sample { features, label });
    }

    let num_classes = label_names.len();
    if num_classes < 2 {
        return Err(CelError::TooFewClasses { found: num_classes });
    }
    LabeledDataset::new(samples, num_classes, arity - 1, label_names)
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(reader: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| CelError::Truncated {
            what: what.to_string(),
        })?;
    Ok(u32::from_be_bytes(buf))
}

/// Loads an MNIST-style IDX image/label file pair. Pixel bytes are scaled to
/// `[0, 1]`; images are flattened to `rows * cols` features. Label bytes map
/// to contiguous class indices in ascending value order.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<LabeledDataset> {
    let mut img = std::io::BufReader::new(std::fs::File::open(images_path.as_ref())?);
    let magic = read_be_u32(&mut img, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(CelError::BadMagic {
            expected: IDX_IMAGES_MAGIC,
            got: magic,
        });
    }
    let n_images = read_be_u32(&mut img, "image count")? as usize;
    let rows = read_be_u32(&mut img, "image rows")? as usize;
    let cols = read_be_u32(&mut img, "image cols")? as usize;
    let mut pixels = vec![0u8; n_images * rows * cols];
    img.read_exact(&mut pixels)
        .map_err(|_| CelError::Truncated {
            what: "image data".to_string(),
        })?;

    let mut lab = std::io::BufReader::new(std::fs::File::open(labels_path.as_ref())?);
    let magic = read_be_u32(&mut lab, "label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(CelError::BadMagic {
            expected: IDX_LABELS_MAGIC,
            got: magic,
        });
    }
    let n_labels = read_be_u32(&mut lab, "label count")? as usize;
    if n_labels != n_images {
        return Err(CelError::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    let mut raw_labels = vec![0u8; n_labels];
    lab.read_exact(&mut raw_labels)
        .map_err(|_| CelError::Truncated {
            what: "label data".to_string(),
        })?;

    let mut present = [false; 256];
    for &l in &raw_labels {
        present[l as usize] = true;
    }
    let values: Vec<u8> = (0..=255u8).filter(|&v| present[v as usize]).collect();
    if values.len() < 2 {
        return Err(CelError::TooFewClasses {
            found: values.len(),
        });
    }
    let mut remap = [0usize; 256];
    for (i, &v) in values.iter().enumerate() {
        remap[v as usize] = i;
    }

    let dim = rows * cols;
    let samples = raw_labels
        .iter()
        .enumerate()
        .map(|(i, &l)| Sample {
            features: pixels[i * dim..(i + 1) * dim]
                .iter()
                .map(|&p| p as f64 / 255.0)
                .collect(),
            label: remap[l as usize],
        })
        .collect();
    let label_names = values.iter().map(|v| v.to_string()).collect();
    LabeledDataset::new(samples, values.len(), dim, label_names)
}

/// Draws `per_class_count` samples per class from isotropic Gaussians at the
/// spec's class means. Deterministic given the spec's seed.
pub fn generate_blobs(spec: &BlobSpec) -> Result<LabeledDataset> {
    let means = spec.resolve_means()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples = Vec::with_capacity(spec.num_classes * spec.per_class_count);
    for (label, mean) in means.iter().enumerate() {
        for _ in 0..spec.per_class_count {
            let features = mean
                .iter()
                .map(|&mu| mu + spec.class_stddev * rng.sample::<f64, _>(StandardNormal))
                .collect();
            samples.push(Sample { features, label });
        }
    }
    let label_names = (0..spec.num_classes).map(|c| c.to_string()).collect();
    LabeledDataset::new(samples, spec.num_classes, spec.feature_dim, label_names)
}

/// Groups sample indices by class, preserving dataset order within a class.
pub fn partition_by_class(ds: &LabeledDataset) -> ClassPartition {
    let mut per_class = vec![Vec::new(); ds.num_classes()];
    for (i, s) in ds.samples().iter().enumerate() {
        per_class[s.label].push(i);
    }
    ClassPartition { per_class }
}

/// Stratified split: each class contributes `round(N_m * test_fraction)`
/// test samples, chosen by a seeded shuffle. Sample order within each half
/// follows the original dataset order.
pub fn split_train_test(
    ds: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !test_fraction.is_finite() || test_fraction <= 0.0 || test_fraction >= 1.0 {
        return Err(CelError::InvalidConfig(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let partition = partition_by_class(ds);
    for (class, indices) in partition.per_class.iter().enumerate() {
        if indices.len() < 2 {
            return Err(CelError::ClassTooSmall {
                class,
                count: indices.len(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test = vec![false; ds.len()];
    for indices in &partition.per_class {
        let mut shuffled = indices.clone();
        fisher_yates(&mut shuffled, &mut rng);
        let n_test = (indices.len() as f64 * test_fraction).round() as usize;
        for &i in shuffled.iter().take(n_test) {
            in_test[i] = true;
        }
    }

    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, s) in ds.samples().iter().enumerate() {
        if in_test[i] {
            test.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok((
        LabeledDataset::new(
            train,
            ds.num_classes(),
            ds.feature_dim(),
            ds.label_names().to_vec(),
        )?,
        LabeledDataset::new(
            test,
            ds.num_classes(),
            ds.feature_dim(),
            ds.label_names().to_vec(),
        )?,
    ))
}

/// Writes a dataset in the canonical CSV layout `f0..f{d-1}, label`, with
/// labels spelled in the original vocabulary so `load_csv` round-trips it.
pub fn write_dataset_csv(path: impl AsRef<Path>, ds: &LabeledDataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<String> = (0..ds.feature_dim()).map(|i| format!("f{i}")).collect();
    header.push("label".to_string());
    w.write_record(&header)?;
    for sample in ds.samples() {
        let mut row: Vec<String> = sample.features.iter().map(|v| v.to_string()).collect();
        row.push(ds.label_names()[sample.label].clone());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// In-place Fisher-Yates shuffle driven by the given generator.
pub(crate) fn fisher_yates<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}
