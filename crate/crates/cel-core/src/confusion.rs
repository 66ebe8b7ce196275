//! Class confusion scoring: embed samples with a scorer network, measure how
//! far each class strays from its own center toward foreign centers (or how
//! uncertain its predictions are), and sort classes hardest first.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{fisher_yates, ClassPartition, LabeledDataset};
use crate::error::{CelError, Result};
use crate::trainer::{softmax, DenseModel};

/// Which confusion criterion produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Distance,
    Entropy,
}

/// Scorer outputs for a dataset: per-sample embedding (penultimate-layer
/// activations), probability vector (softmax of the logits) and class label.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    embeddings: Vec<Vec<f64>>,
    probabilities: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    embedding_dim: usize,
}

impl EmbeddingBatch {
    /// Validates that probabilities are distributions (entries >= 0 summing
    /// to 1 within 1e-9), embeddings are finite, and labels are in range.
    pub fn new(
        embeddings: Vec<Vec<f64>>,
        probabilities: Vec<Vec<f64>>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if embeddings.is_empty() {
            return Err(CelError::EmptyPool);
        }
        if probabilities.len() != embeddings.len() || labels.len() != embeddings.len() {
            return Err(CelError::DimensionMismatch {
                what: "batch rows",
                expected: embeddings.len(),
                got: probabilities.len().min(labels.len()),
            });
        }
        let embedding_dim = embeddings[0].len();
        for g in &embeddings {
            if g.len() != embedding_dim {
                return Err(CelError::DimensionMismatch {
                    what: "embedding",
                    expected: embedding_dim,
                    got: g.len(),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(CelError::NonFinite { what: "embeddings" });
            }
        }
        for p in &probabilities {
            if p.len() != num_classes {
                return Err(CelError::DimensionMismatch {
                    what: "probability vector",
                    expected: num_classes,
                    got: p.len(),
                });
            }
            if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
                return Err(CelError::NonFinite {
                    what: "probabilities",
                });
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(CelError::InvalidConfig(format!(
                    "probability vector sums to {sum}, expected 1"
                )));
            }
        }
        for &l in &labels {
            if l >= num_classes {
                return Err(CelError::DimensionMismatch {
                    what: "batch label",
                    expected: num_classes,
                    got: l,
                });
            }
        }
        Ok(Self {
            embeddings,
            probabilities,
            labels,
            num_classes,
            embedding_dim,
        })
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }

    pub fn probabilities(&self) -> &[Vec<f64>] {
        &self.probabilities
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }
}

/// Arithmetic-mean class centers in embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStatistics {
    pub centers: Vec<Vec<f64>>,
}

/// Per-class confusion scores under one criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub criterion: Criterion,
    pub scores: Vec<f64>,
}

/// A class permutation sorted by descending confusion score. For natural and
/// random orderings there is no report to carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassOrdering {
    pub order: Vec<usize>,
    pub source_scores: Option<ConfusionReport>,
}

impl ClassOrdering {
    /// Identity ordering 0..M.
    pub fn natural(num_classes: usize) -> Self {
        Self {
            order: (0..num_classes).collect(),
            source_scores: None,
        }
    }

    /// Seeded random permutation of 0..M.
    pub fn random(num_classes: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..num_classes).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        fisher_yates(&mut order, &mut rng);
        Self {
            order,
            source_scores: None,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.order.len()
    }
}

/// Runs the scorer over every sample, producing embeddings and softmax
/// probability vectors in dataset order.
pub fn compute_embeddings(scorer: &DenseModel, ds: &LabeledDataset) -> Result<EmbeddingBatch> {
    if scorer.input_dim() != ds.feature_dim() {
        return Err(CelError::DimensionMismatch {
            what: "scorer input",
            expected: ds.feature_dim(),
            got: scorer.input_dim(),
        });
    }
    if scorer.output_dim() != ds.num_classes() {
        return Err(CelError::DimensionMismatch {
            what: "scorer output",
            expected: ds.num_classes(),
            got: scorer.output_dim(),
        });
    }
    let mut embeddings = Vec::with_capacity(ds.len());
    let mut probabilities = Vec::with_capacity(ds.len());
    let mut labels = Vec::with_capacity(ds.len());
    for sample in ds.samples() {
        let (embedding, logits) = scorer.embed(&sample.features)?;
        embeddings.push(embedding);
        probabilities.push(softmax(&logits));
        labels.push(sample.label);
    }
    EmbeddingBatch::new(embeddings, probabilities, labels, ds.num_classes())
}

/// Mean embedding of each class. Every class must be nonempty.
pub fn class_centers(
    batch: &EmbeddingBatch,
    partition: &ClassPartition,
) -> Result<ClassStatistics> {
    if partition.per_class.len() != batch.num_classes() {
        return Err(CelError::DimensionMismatch {
            what: "partition classes",
            expected: batch.num_classes(),
            got: partition.per_class.len(),
        });
    }
    if partition.total() != batch.len() {
        return Err(CelError::DimensionMismatch {
            what: "partition size",
            expected: batch.len(),
            got: partition.total(),
        });
    }
    let dim = batch.embedding_dim();
    let mut centers = Vec::with_capacity(batch.num_classes());
    for (class, indices) in partition.per_class.iter().enumerate() {
        if indices.is_empty() {
            return Err(CelError::EmptyClass { class });
        }
        let mut center = vec![0.0; dim];
        for &i in indices {
            let Some(&label) = batch.labels().get(i) else {
                return Err(CelError::DimensionMismatch {
                    what: "partition index",
                    expected: batch.len(),
                    got: i,
                });
            };
            if label != class {
                return Err(CelError::DimensionMismatch {
                    what: "partition label",
                    expected: class,
                    got: label,
                });
            }
            for (c, g) in center.iter_mut().zip(&batch.embeddings()[i]) {
                *c += g;
            }
        }
        let n = indices.len() as f64;
        for c in center.iter_mut() {
            *c /= n;
        }
        centers.push(center);
    }
    Ok(ClassStatistics { centers })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Guard for near-zero squared distances to foreign centers: a sample
/// sitting on another class's center is maximal confusion, clamped instead
/// of dividing by zero.
const DIST_GUARD: f64 = 1e-12;

fn distance_scores(
    embeddings: &[Vec<f64>],
    labels: &[usize],
    centers: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let num_classes = centers.len();
    let mut sums = vec![0.0; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (g, &m) in embeddings.iter().zip(labels) {
        let own = sq_dist(g, &centers[m]);
        let mut acc = 0.0;
        for (j, center) in centers.iter().enumerate() {
            if j == m {
                continue; // the j = m term contributes exactly 1, added below
            }
            let foreign = sq_dist(g, center);
            acc += own / foreign.max(DIST_GUARD);
        }
        sums[m] += acc;
        counts[m] += 1;
    }
    sums.iter()
        .zip(&counts)
        .enumerate()
        .map(|(class, (&s, &n))| {
            if n == 0 {
                Err(CelError::EmptyClass { class })
            } else {
                Ok(1.0 + s / n as f64)
            }
        })
        .collect()
}

/// Distance-based criterion: per class, the mean over its samples of the sum
/// over classes of squared distance to the own center over squared distance
/// to each center. The own-class term is added analytically as 1, so scores
/// are always >= 1.
pub fn score_distance(batch: &EmbeddingBatch, stats: &ClassStatistics) -> Result<ConfusionReport> {
    if stats.centers.len() != batch.num_classes() {
        return Err(CelError::DimensionMismatch {
            what: "centers",
            expected: batch.num_classes(),
            got: stats.centers.len(),
        });
    }
    for c in &stats.centers {
        if c.len() != batch.embedding_dim() {
            return Err(CelError::DimensionMismatch {
                what: "center",
                expected: batch.embedding_dim(),
                got: c.len(),
            });
        }
    }
    let scores = distance_scores(batch.embeddings(), batch.labels(), &stats.centers)?;
    Ok(ConfusionReport {
        criterion: Criterion::Distance,
        scores,
    })
}

/// Distance-based scoring straight from labeled embeddings (the CSV import
/// path): centers are computed internally.
pub fn score_distance_from_embeddings(
    embeddings: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
) -> Result<ConfusionReport> {
    if embeddings.is_empty() || embeddings.len() != labels.len() {
        return Err(CelError::DimensionMismatch {
            what: "embedding rows",
            expected: embeddings.len(),
            got: labels.len(),
        });
    }
    let dim = embeddings[0].len();
    let mut centers = vec![vec![0.0; dim]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (g, &m) in embeddings.iter().zip(labels) {
        if m >= num_classes {
            return Err(CelError::DimensionMismatch {
                what: "label",
                expected: num_classes,
                got: m,
            });
        }
        for (c, v) in centers[m].iter_mut().zip(g) {
            *c += v;
        }
        counts[m] += 1;
    }
    for (class, (center, &n)) in centers.iter_mut().zip(&counts).enumerate() {
        if n == 0 {
            return Err(CelError::EmptyClass { class });
        }
        for c in center.iter_mut() {
            *c /= n as f64;
        }
    }
    let scores = distance_scores(embeddings, labels, &centers)?;
    Ok(ConfusionReport {
        criterion: Criterion::Distance,
        scores,
    })
}

/// Entropy-based criterion: per class, the mean Shannon entropy (natural
/// log) of its samples' probability vectors, with `0 * ln(1/0) := 0`.
/// An empty class scores 0.
pub fn score_entropy(batch: &EmbeddingBatch) -> Result<ConfusionReport> {
    let mut sums = vec![0.0; batch.num_classes()];
    let mut counts = vec![0usize; batch.num_classes()];
    for (p, &m) in batch.probabilities().iter().zip(batch.labels()) {
        let entropy: f64 = p
            .iter()
            .map(|&q| if q > 0.0 { -q * q.ln() } else { 0.0 })
            .sum();
        sums[m] += entropy;
        counts[m] += 1;
    }
    let scores = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect();
    Ok(ConfusionReport {
        criterion: Criterion::Entropy,
        scores,
    })
}

/// Sorts classes by descending confusion score, ties broken by ascending
/// class index.
pub fn order_classes(report: &ConfusionReport) -> Result<ClassOrdering> {
    for (class, &s) in report.scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(CelError::NonFiniteScore { class });
        }
    }
    let mut order: Vec<usize> = (0..report.scores.len()).collect();
    order.sort_by(|&a, &b| {
        report.scores[b]
            .partial_cmp(&report.scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    Ok(ClassOrdering {
        order,
        source_scores: Some(report.clone()),
    })
}

/// Writes one row per sample: `label, g_0..g_{e-1}`, with a header.
pub fn write_embeddings_csv(
    path: impl AsRef<Path>,
    embeddings: &[Vec<f64>],
    labels: &[usize],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let dim = embeddings.first().map_or(0, Vec::len);
    let mut header = vec!["label".to_string()];
    header.extend((0..dim).map(|i| format!("g_{i}")));
    w.write_record(&header)?;
    for (g, &l) in embeddings.iter().zip(labels) {
        let mut row = vec![l.to_string()];
        row.extend(g.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an embeddings CSV back into labels and embedding vectors.
pub fn read_embeddings_csv(path: impl AsRef<Path>) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let arity = r.headers()?.len();
    let mut labels = Vec::new();
    let mut embeddings = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let row = i + 2;
        if record.len() != arity {
            return Err(CelError::RaggedRow {
                row,
                expected: arity,
                got: record.len(),
            });
        }
        let label: usize = record[0].parse().map_err(|_| CelError::BadField {
            row,
            column: "label".into(),
            value: record[0].to_string(),
        })?;
        let values = record
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>().map_err(|_| CelError::BadField {
                    row,
                    column: "g".into(),
                    value: v.to_string(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        labels.push(label);
        embeddings.push(values);
    }
    Ok((labels, embeddings))
}

/// Writes one row per class: `class_id, score`, with a header.
pub fn write_report_csv(path: impl AsRef<Path>, report: &ConfusionReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["class_id", "score"])?;
    for (class, score) in report.scores.iter().enumerate() {
        w.write_record([class.to_string(), score.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a scores CSV; rows may arrive in any class order.
pub fn read_report_csv(path: impl AsRef<Path>, criterion: Criterion) -> Result<ConfusionReport> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let class: usize = record[0].parse().map_err(|_| CelError::BadField {
            row,
            column: "class_id".into(),
            value: record[0].to_string(),
        })?;
        let score: f64 = record[1].parse().map_err(|_| CelError::BadField {
            row,
            column: "score".into(),
            value: record[1].to_string(),
        })?;
        rows.push((class, score));
    }
    rows.sort_by_key(|&(c, _)| c);
    for (i, &(c, _)) in rows.iter().enumerate() {
        if c != i {
            return Err(CelError::InvalidConfig(format!(
                "scores file must cover classes 0..{} exactly, found class {c}",
                rows.len()
            )));
        }
    }
    Ok(ConfusionReport {
        criterion,
        scores: rows.into_iter().map(|(_, s)| s).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{partition_by_class, LabeledDataset, Sample};

    fn uniform_probs(n: usize, m: usize) -> Vec<Vec<f64>> {
        vec![vec![1.0 / m as f64; m]; n]
    }

    fn batch_1d(points: &[(f64, usize)], m: usize) -> EmbeddingBatch {
        let embeddings: Vec<Vec<f64>> = points.iter().map(|&(x, _)| vec![x]).collect();
        let labels: Vec<usize> = points.iter().map(|&(_, l)| l).collect();
        EmbeddingBatch::new(embeddings, uniform_probs(points.len(), m), labels, m).unwrap()
    }

    #[test]
    fn embeddings_identity_scorer() {
        let samples: Vec<Sample> = [(0.5, 0), (-1.5, 1)]
            .iter()
            .map(|&(x, l)| Sample {
                features: vec![x],
                label: l,
            })
            .collect();
        let ds = LabeledDataset::new(samples, 2, 1, vec!["0".into(), "1".into()]).unwrap();
        let scorer = DenseModel::zeros(&[1, 2]).unwrap();
        let batch = compute_embeddings(&scorer, &ds).unwrap();
        assert_eq!(batch.embeddings(), &[vec![0.5], vec![-1.5]]);
        for p in batch.probabilities() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn embeddings_match_per_sample_path() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let scorer = DenseModel::random(&[3, 5, 4], &mut rng).unwrap();
        let samples: Vec<Sample> = (0..12)
            .map(|i| Sample {
                features: vec![(i as f64).sin(), (i as f64).cos(), i as f64 / 12.0],
                label: i % 4,
            })
            .collect();
        let ds =
            LabeledDataset::new(samples, 4, 3, (0..4).map(|c| c.to_string()).collect()).unwrap();
        let batch = compute_embeddings(&scorer, &ds).unwrap();
        for (i, sample) in ds.samples().iter().enumerate() {
            let (embedding, logits) = scorer.embed(&sample.features).unwrap();
            assert_eq!(batch.embeddings()[i], embedding);
            assert_eq!(batch.probabilities()[i], softmax(&logits));
        }
    }

    #[test]
    fn centers_arithmetic_mean() {
        let embeddings = vec![vec![1.0, 1.0], vec![3.0, 3.0], vec![5.0, -1.0]];
        let labels = vec![0, 0, 1];
        let batch = EmbeddingBatch::new(embeddings, uniform_probs(3, 2), labels, 2).unwrap();
        let partition = ClassPartition {
            per_class: vec![vec![0, 1], vec![2]],
        };
        let stats = class_centers(&batch, &partition).unwrap();
        assert_eq!(stats.centers[0], vec![2.0, 2.0]);
        // single-sample class: center equals the embedding
        assert_eq!(stats.centers[1], vec![5.0, -1.0]);
    }

    #[test]
    fn centers_require_nonempty_classes() {
        let batch = batch_1d(&[(0.0, 1), (1.0, 1)], 2);
        let partition = ClassPartition {
            per_class: vec![vec![], vec![0, 1]],
        };
        assert!(matches!(
            class_centers(&batch, &partition),
            Err(CelError::EmptyClass { class: 0 })
        ));
    }

    // Brute-force mean oracle with independent summation order.
    #[test]
    fn centers_match_bruteforce() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 30;
        let embeddings: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let batch = EmbeddingBatch::new(embeddings.clone(), uniform_probs(n, 3), labels.clone(), 3)
            .unwrap();
        let samples: Vec<Sample> = embeddings
            .iter()
            .zip(&labels)
            .map(|(f, &l)| Sample {
                features: f.clone(),
                label: l,
            })
            .collect();
        let ds =
            LabeledDataset::new(samples, 3, 3, (0..3).map(|c| c.to_string()).collect()).unwrap();
        let stats = class_centers(&batch, &partition_by_class(&ds)).unwrap();
        for m in 0..3 {
            for d in 0..3 {
                let values: Vec<f64> = embeddings
                    .iter()
                    .zip(&labels)
                    .filter(|&(_, &l)| l == m)
                    .map(|(g, _)| g[d])
                    .collect();
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                assert!((stats.centers[m][d] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn distance_score_worked_example() {
        // classes A = {0, 2}, B = {10, 12}: centers 1 and 11
        let batch = batch_1d(&[(0.0, 0), (2.0, 0), (10.0, 1), (12.0, 1)], 2);
        let partition = ClassPartition {
            per_class: vec![vec![0, 1], vec![2, 3]],
        };
        let stats = class_centers(&batch, &partition).unwrap();
        let report = score_distance(&batch, &stats).unwrap();
        let expected = 1.0 + 0.5 * (1.0 / 121.0 + 1.0 / 81.0);
        assert!((report.scores[0] - expected).abs() < 1e-12);
        assert!((report.scores[0] - 1.010305).abs() < 1e-6);
        // mirror symmetry of the configuration
        assert!((report.scores[1] - report.scores[0]).abs() < 1e-12);
    }

    #[test]
    fn distance_score_point_classes_score_one() {
        let batch = batch_1d(&[(0.0, 0), (5.0, 1), (9.0, 2)], 3);
        let partition = ClassPartition {
            per_class: vec![vec![0], vec![1], vec![2]],
        };
        let stats = class_centers(&batch, &partition).unwrap();
        let report = score_distance(&batch, &stats).unwrap();
        for &s in &report.scores {
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn distance_score_guard_handles_sample_on_foreign_center() {
        // sample of class 0 sits exactly on class 1's center
        let batch = batch_1d(&[(5.0, 0), (-5.0, 0), (5.0, 1)], 2);
        let partition = ClassPartition {
            per_class: vec![vec![0, 1], vec![2]],
        };
        let stats = class_centers(&batch, &partition).unwrap();
        let report = score_distance(&batch, &stats).unwrap();
        assert!(report.scores.iter().all(|s| s.is_finite()));
        assert!(report.scores[0] >= 1.0);
    }

    #[test]
    fn entropy_score_fixtures() {
        let m = 4;
        let one_hot = vec![vec![1.0, 0.0, 0.0, 0.0]; 3];
        let batch = EmbeddingBatch::new(vec![vec![0.0]; 3], one_hot, vec![0, 0, 0], m);
        // batch with a single populated class: score_entropy still works
        let report = score_entropy(&batch.unwrap()).unwrap();
        assert_eq!(report.scores[0], 0.0);

        let uniform = uniform_probs(4, m);
        let batch = EmbeddingBatch::new(vec![vec![0.0]; 4], uniform, vec![0, 1, 2, 3], m).unwrap();
        let report = score_entropy(&batch).unwrap();
        for &s in &report.scores {
            assert!((s - 4f64.ln()).abs() < 1e-12);
        }

        let half = vec![vec![0.5, 0.5, 0.0, 0.0]; 2];
        let batch = EmbeddingBatch::new(vec![vec![0.0]; 2], half, vec![2, 2], m).unwrap();
        let report = score_entropy(&batch).unwrap();
        assert!((report.scores[2] - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn ordering_sorts_descending() {
        let report = ConfusionReport {
            criterion: Criterion::Distance,
            scores: vec![0.1, 0.9, 0.5],
        };
        let ordering = order_classes(&report).unwrap();
        assert_eq!(ordering.order, vec![1, 2, 0]);
    }

    #[test]
    fn ordering_breaks_ties_by_index() {
        let report = ConfusionReport {
            criterion: Criterion::Entropy,
            scores: vec![0.3; 5],
        };
        let ordering = order_classes(&report).unwrap();
        assert_eq!(ordering.order, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn ordering_rejects_nan() {
        let report = ConfusionReport {
            criterion: Criterion::Distance,
            scores: vec![1.0, f64::NAN],
        };
        assert!(matches!(
            order_classes(&report),
            Err(CelError::NonFiniteScore { class: 1 })
        ));
    }

    #[test]
    fn random_ordering_is_seeded_permutation() {
        let a = ClassOrdering::random(7, 11);
        let b = ClassOrdering::random(7, 11);
        assert_eq!(a, b);
        let mut sorted = a.order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn embeddings_csv_roundtrip() {
        let embeddings = vec![vec![0.25, -1.5e-7], vec![3.75, 2.0 / 3.0]];
        let labels = vec![1, 0];
        let file = tempfile::NamedTempFile::new().unwrap();
        write_embeddings_csv(file.path(), &embeddings, &labels).unwrap();
        let (read_labels, read_embeddings) = read_embeddings_csv(file.path()).unwrap();
        assert_eq!(read_labels, labels);
        assert_eq!(read_embeddings, embeddings);
    }

    #[test]
    fn report_csv_roundtrip() {
        let report = ConfusionReport {
            criterion: Criterion::Distance,
            scores: vec![1.25, 1.0000001, 7.5],
        };
        let file = tempfile::NamedTempFile::new().unwrap();
        write_report_csv(file.path(), &report).unwrap();
        let read = read_report_csv(file.path(), Criterion::Distance).unwrap();
        assert_eq!(read, report);
    }

    #[test]
    fn score_from_embeddings_matches_batch_path() {
        let batch = batch_1d(&[(0.0, 0), (2.0, 0), (10.0, 1), (12.0, 1)], 2);
        let partition = ClassPartition {
            per_class: vec![vec![0, 1], vec![2, 3]],
        };
        let stats = class_centers(&batch, &partition).unwrap();
        let via_batch = score_distance(&batch, &stats).unwrap();
        let via_raw =
            score_distance_from_embeddings(batch.embeddings(), batch.labels(), 2).unwrap();
        assert_eq!(via_batch, via_raw);
    }
}
