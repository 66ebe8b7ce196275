//! Config-driven experiment harness: load or generate data, train a scorer,
//! order classes by confusion, build the expansion schedule, run warm-started
//! stages (or one normal run) per seed, and persist comparable reports.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::confusion::{
    class_centers, compute_embeddings, order_classes, score_distance, score_entropy, ClassOrdering,
    ConfusionReport, Criterion, EmbeddingBatch,
};
use crate::dataset::{
    generate_blobs, load_csv, load_idx, partition_by_class, split_train_test, BlobSpec,
    ClassPartition, LabeledDataset,
};
use crate::error::{CelError, Result};
use crate::scheduler::{build_schedule, measured_cost, pool_at_stage};
use crate::trainer::{evaluate, train_stage, Checkpoint, EpochMetrics, StageInit, TrainConfig};

/// Where the samples come from. In JSON the variant is the single key:
/// `{"csv": {...}}`, `{"idx": {...}}` or `{"blobs": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Csv(CsvSource),
    Idx(IdxSource),
    Blobs(BlobSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    pub label_column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSource {
    pub images: PathBuf,
    pub labels: PathBuf,
}

/// How classes are ordered before expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderingMode {
    Distance,
    Entropy,
    Natural,
    Random,
}

/// The confusion scorer: a (typically small) network trained with its own
/// budget. When `epochs` is absent it defaults to `round(E / lambda)`,
/// clamped to at least 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScorerSpec {
    pub hidden_dims: Vec<usize>,
    pub epochs: Option<usize>,
    pub train: TrainConfig,
}

impl Default for ScorerSpec {
    fn default() -> Self {
        Self {
            hidden_dims: vec![16],
            epochs: None,
            train: TrainConfig::default(),
        }
    }
}

/// The main classifier. `train.epochs` and `train.seed` are set by the
/// harness per stage and per run; values in the config are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub hidden_dims: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hidden_dims: vec![64, 64],
            train: TrainConfig::default(),
        }
    }
}

/// One experiment: data, ordering mode, schedule shape, model specs, seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_ordering")]
    pub ordering: OrderingMode,
    #[serde(default = "default_num_stages")]
    pub num_stages: usize,
    #[serde(default = "default_final_epochs")]
    pub final_epochs: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Optional per-stage epoch override; must list one entry per stage.
    #[serde(default)]
    pub stage_epochs: Option<Vec<usize>>,
    #[serde(default)]
    pub scorer: ScorerSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_test_fraction() -> f64 {
    0.2
}
fn default_ordering() -> OrderingMode {
    OrderingMode::Distance
}
fn default_num_stages() -> usize {
    5
}
fn default_final_epochs() -> usize {
    40
}
fn default_lambda() -> f64 {
    1.0
}
fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("cel-out")
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(json)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.test_fraction.is_finite() || self.test_fraction <= 0.0 || self.test_fraction >= 1.0
        {
            return Err(CelError::InvalidConfig(
                "test_fraction must lie in (0, 1)".into(),
            ));
        }
        if self.num_stages < 1 {
            return Err(CelError::InvalidConfig("num_stages must be >= 1".into()));
        }
        if self.final_epochs < 1 {
            return Err(CelError::InvalidConfig("final_epochs must be >= 1".into()));
        }
        if !self.lambda.is_finite() || self.lambda < 1.0 {
            return Err(CelError::InvalidConfig(
                "lambda must be a finite real >= 1".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(CelError::InvalidConfig("seeds must be nonempty".into()));
        }
        if let Some(epochs) = &self.stage_epochs {
            if epochs.len() != self.num_stages {
                return Err(CelError::InvalidConfig(format!(
                    "stage_epochs lists {} entries for {} stages",
                    epochs.len(),
                    self.num_stages
                )));
            }
            if epochs.contains(&0) {
                return Err(CelError::InvalidConfig(
                    "stage epochs must all be >= 1".into(),
                ));
            }
        }
        if self.scorer.hidden_dims.contains(&0) || self.model.hidden_dims.contains(&0) {
            return Err(CelError::InvalidConfig(
                "hidden layer widths must be >= 1".into(),
            ));
        }
        if self.scorer.epochs == Some(0) {
            return Err(CelError::InvalidConfig("scorer epochs must be >= 1".into()));
        }
        self.scorer.train.validate()?;
        self.model.train.validate()?;
        Ok(())
    }

    /// Scorer epoch budget: explicit, or `round(E / lambda)` clamped to 1.
    pub fn scorer_epochs(&self) -> usize {
        self.scorer
            .epochs
            .unwrap_or_else(|| ((self.final_epochs as f64 / self.lambda).round() as usize).max(1))
    }
}

/// Loads or generates the dataset named by the config.
pub fn load_data(source: &DataSource) -> Result<LabeledDataset> {
    match source {
        DataSource::Csv(csv) => load_csv(&csv.path, &csv.label_column),
        DataSource::Idx(idx) => load_idx(&idx.images, &idx.labels),
        DataSource::Blobs(spec) => generate_blobs(spec),
    }
}

/// Distinct deterministic seed streams per run seed.
pub(crate) fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_SCORER: u64 = 1;
const STREAM_MAIN: u64 = 2;
const STREAM_ORDER: u64 = 3;

/// One training stage as recorded in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub epochs: usize,
    /// Classes in this stage's pool, ascending.
    pub pool_classes: Vec<usize>,
    pub pool_size: usize,
    pub metrics: Vec<EpochMetrics>,
}

/// Results of one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub overall_error: f64,
    pub per_class_error: Vec<f64>,
    pub measured_cost: f64,
    pub stages: Vec<StageRecord>,
}

/// Mean, sample standard deviation and best across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub mean_overall_error: f64,
    pub std_overall_error: f64,
    pub best_overall_error: f64,
    pub mean_per_class_error: Vec<f64>,
    pub mean_measured_cost: f64,
}

/// The persistent result of `run_cel` / `run_normal`. Carries results only
/// (no mode or config echo), so degenerate runs compare bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub label_names: Vec<String>,
    pub test_class_counts: Vec<usize>,
    pub per_seed: Vec<SeedReport>,
    pub aggregate: AggregateReport,
}

const REPORT_SCHEMA_VERSION: u32 = 1;

impl ExperimentReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

enum Mode {
    Normal,
    Cel,
}

/// Runs class-based expansion learning for every seed: order classes (via
/// the scorer for the scored modes), build the K-stage schedule, train the
/// stages warm-started, evaluate, and persist all artifacts under the
/// config's output directory.
///
/// With `num_stages == 1` the schedule holds every class from the start, so
/// the ordering is irrelevant; the scorer is skipped and the run is
/// bit-identical to `run_normal`.
pub fn run_cel(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment(config, Mode::Cel)
}

/// Single-stage full-pool training with the final-stage budget, per seed.
/// The ordering mode, scorer and lambda are ignored.
pub fn run_normal(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment(config, Mode::Normal)
}

fn run_experiment(config: &ExperimentConfig, mode: Mode) -> Result<ExperimentReport> {
    config.validate()?;
    let ds = load_data(&config.data)?;
    let (train_ds, test_ds) = split_train_test(&ds, config.test_fraction, config.split_seed)?;
    let partition = partition_by_class(&train_ds);
    let num_stages = match mode {
        Mode::Normal => 1,
        Mode::Cel => config.num_stages,
    };
    if num_stages > train_ds.num_classes() {
        return Err(CelError::InvalidConfig(format!(
            "num_stages {} exceeds the {} classes",
            num_stages,
            train_ds.num_classes()
        )));
    }

    fs::create_dir_all(&config.output_dir)?;
    fs::write(
        config.output_dir.join("config.json"),
        serde_json::to_string_pretty(config)?,
    )?;

    let mut per_seed = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let seed_dir = config.output_dir.join(format!("seed_{seed}"));
        fs::create_dir_all(&seed_dir)?;
        let report = run_seed(
            config, &mode, num_stages, seed, &train_ds, &test_ds, &partition, &seed_dir,
        )?;
        per_seed.push(report);
    }

    let aggregate = aggregate(&per_seed);
    let report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        label_names: test_ds.label_names().to_vec(),
        test_class_counts: test_ds.class_counts(),
        per_seed,
        aggregate,
    };
    report.save(config.output_dir.join("report.json"))?;
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn run_seed(
    config: &ExperimentConfig,
    mode: &Mode,
    num_stages: usize,
    seed: u64,
    train_ds: &LabeledDataset,
    test_ds: &LabeledDataset,
    partition: &ClassPartition,
    seed_dir: &Path,
) -> Result<SeedReport> {
    let m = train_ds.num_classes();
    let ordering = match mode {
        Mode::Normal => ClassOrdering::natural(m),
        Mode::Cel if num_stages == 1 => ClassOrdering::natural(m),
        Mode::Cel => match config.ordering {
            OrderingMode::Natural => ClassOrdering::natural(m),
            OrderingMode::Random => {
                let ordering = ClassOrdering::random(m, derive_seed(seed, STREAM_ORDER));
                write_ordering_csv(
                    &seed_dir.join("ordering.csv"),
                    &ordering,
                    train_ds.label_names(),
                )?;
                ordering
            }
            OrderingMode::Distance | OrderingMode::Entropy => {
                let criterion = match config.ordering {
                    OrderingMode::Entropy => Criterion::Entropy,
                    _ => Criterion::Distance,
                };
                let (report, _) = scorer_report(
                    config,
                    criterion,
                    seed,
                    train_ds,
                    partition,
                    Some(&seed_dir.join("scorer")),
                )?;
                let ordering = order_classes(&report)?;
                write_ordering_csv(
                    &seed_dir.join("ordering.csv"),
                    &ordering,
                    train_ds.label_names(),
                )?;
                ordering
            }
        },
    };

    let lambda = match mode {
        Mode::Normal => 1.0,
        Mode::Cel => config.lambda,
    };
    let mut sched = build_schedule(&ordering, num_stages, config.final_epochs, lambda)?;
    if let (Mode::Cel, Some(overrides)) = (mode, &config.stage_epochs) {
        sched.override_stage_epochs(overrides.clone())?;
    }
    fs::write(
        seed_dir.join("schedule.json"),
        serde_json::to_string_pretty(&sched)?,
    )?;

    let layer_dims = full_dims(train_ds, &config.model.hidden_dims);
    let mut previous: Option<Checkpoint> = None;
    let mut stages = Vec::with_capacity(num_stages);
    for k in 1..=num_stages {
        let pool = pool_at_stage(&sched, k, partition)?;
        let stage_config = TrainConfig {
            epochs: sched.stage_epochs[k - 1],
            seed: derive_seed(seed, STREAM_MAIN),
            ..config.model.train.clone()
        };
        let init = match previous.take() {
            None => StageInit::Fresh {
                layer_dims: layer_dims.clone(),
            },
            Some(ckpt) => StageInit::Warm(Box::new(ckpt)),
        };
        let (ckpt, metrics) = train_stage(init, &pool, train_ds, Some(test_ds), &stage_config)?;

        let stage_dir = seed_dir.join(format!("stage_{k}"));
        fs::create_dir_all(&stage_dir)?;
        ckpt.save(stage_dir.join("checkpoint.json"))?;
        write_metrics_jsonl(&stage_dir.join("metrics.jsonl"), &metrics)?;

        let mut pool_classes: Vec<usize> =
            sched.ordering.order[..sched.stage_class_counts[k - 1]].to_vec();
        pool_classes.sort_unstable();
        stages.push(StageRecord {
            stage: k,
            epochs: sched.stage_epochs[k - 1],
            pool_classes,
            pool_size: pool.len(),
            metrics,
        });
        previous = Some(ckpt);
    }

    let final_model = previous.unwrap().to_model()?;
    let eval = evaluate(&final_model, test_ds)?;
    Ok(SeedReport {
        seed,
        overall_error: eval.overall_error(),
        per_class_error: eval.per_class_error,
        measured_cost: measured_cost(&sched, partition)?,
        stages,
    })
}

/// Everything a scoring pass yields: the per-class report, the embedding
/// batch it came from, and the class vocabulary.
#[derive(Debug, Clone)]
pub struct ScoringOutcome {
    pub report: ConfusionReport,
    pub batch: EmbeddingBatch,
    pub label_names: Vec<String>,
}

/// Trains the scorer and scores every class exactly as a CEL run does before
/// stage 1, without persisting artifacts: load data, split, train the scorer
/// on the training split, embed it, apply the criterion.
pub fn score_classes(
    config: &ExperimentConfig,
    criterion: Criterion,
    seed: u64,
) -> Result<ScoringOutcome> {
    config.validate()?;
    let ds = load_data(&config.data)?;
    let (train_ds, _) = split_train_test(&ds, config.test_fraction, config.split_seed)?;
    let partition = partition_by_class(&train_ds);
    let (report, batch) = scorer_report(config, criterion, seed, &train_ds, &partition, None)?;
    Ok(ScoringOutcome {
        report,
        batch,
        label_names: train_ds.label_names().to_vec(),
    })
}

/// Trains the scorer on the training split and applies a confusion
/// criterion, optionally persisting the scorer checkpoint and metrics.
fn scorer_report(
    config: &ExperimentConfig,
    criterion: Criterion,
    seed: u64,
    train_ds: &LabeledDataset,
    partition: &ClassPartition,
    persist_dir: Option<&Path>,
) -> Result<(ConfusionReport, EmbeddingBatch)> {
    let scorer_config = TrainConfig {
        epochs: config.scorer_epochs(),
        seed: derive_seed(seed, STREAM_SCORER),
        ..config.scorer.train.clone()
    };
    let pool: Vec<usize> = (0..train_ds.len()).collect();
    let dims = full_dims(train_ds, &config.scorer.hidden_dims);
    let (ckpt, metrics) = train_stage(
        StageInit::Fresh { layer_dims: dims },
        &pool,
        train_ds,
        None,
        &scorer_config,
    )?;

    if let Some(dir) = persist_dir {
        fs::create_dir_all(dir)?;
        ckpt.save(dir.join("checkpoint.json"))?;
        write_metrics_jsonl(&dir.join("metrics.jsonl"), &metrics)?;
    }

    let scorer = ckpt.to_model()?;
    let batch = compute_embeddings(&scorer, train_ds)?;
    let report = match criterion {
        Criterion::Distance => {
            let stats = class_centers(&batch, partition)?;
            score_distance(&batch, &stats)?
        }
        Criterion::Entropy => score_entropy(&batch)?,
    };
    Ok((report, batch))
}

fn full_dims(ds: &LabeledDataset, hidden: &[usize]) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(ds.feature_dim());
    dims.extend_from_slice(hidden);
    dims.push(ds.num_classes());
    dims
}

fn aggregate(per_seed: &[SeedReport]) -> AggregateReport {
    let n = per_seed.len() as f64;
    let mean_overall_error = per_seed.iter().map(|r| r.overall_error).sum::<f64>() / n;
    let std_overall_error = if per_seed.len() < 2 {
        0.0
    } else {
        let ss = per_seed
            .iter()
            .map(|r| (r.overall_error - mean_overall_error).powi(2))
            .sum::<f64>();
        (ss / (n - 1.0)).sqrt()
    };
    let best_overall_error = per_seed
        .iter()
        .map(|r| r.overall_error)
        .fold(f64::INFINITY, f64::min);
    let num_classes = per_seed[0].per_class_error.len();
    let mean_per_class_error = (0..num_classes)
        .map(|c| per_seed.iter().map(|r| r.per_class_error[c]).sum::<f64>() / n)
        .collect();
    let mean_measured_cost = per_seed.iter().map(|r| r.measured_cost).sum::<f64>() / n;
    AggregateReport {
        mean_overall_error,
        std_overall_error,
        best_overall_error,
        mean_per_class_error,
        mean_measured_cost,
    }
}

/// Writes the per-epoch metrics stream, one JSON object per line.
pub fn write_metrics_jsonl(path: &Path, metrics: &[EpochMetrics]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    for m in metrics {
        writeln!(file, "{}", serde_json::to_string(m)?)?;
    }
    Ok(())
}

/// Writes `rank,class_id,class_name,score` rows for an ordering; the score
/// column is empty for orderings without scores.
pub fn write_ordering_csv(
    path: &Path,
    ordering: &ClassOrdering,
    label_names: &[String],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rank", "class_id", "class_name", "score"])?;
    for (rank, &class) in ordering.order.iter().enumerate() {
        let score = ordering
            .source_scores
            .as_ref()
            .map(|r| r.scores[class].to_string())
            .unwrap_or_default();
        w.write_record([
            (rank + 1).to_string(),
            class.to_string(),
            label_names[class].clone(),
            score,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-class comparison row: mean errors of both reports and the delta,
/// positive when `b` improves on `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDelta {
    pub class: usize,
    pub name: String,
    pub a_mean_error: f64,
    pub b_mean_error: f64,
    pub delta: f64,
    /// Whether this class sat in `b`'s first stage pool in more than half of
    /// its seeds (the preferentially selected classes).
    pub preferred_in_b: bool,
}

/// Comparison of two experiment reports on the same test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub a_mean_overall_error: f64,
    pub b_mean_overall_error: f64,
    /// `a - b`: positive when `b` has the lower error.
    pub overall_delta: f64,
    pub per_class: Vec<ClassDelta>,
    /// Present when both reports ran the same seed list, in order.
    pub per_seed_overall_delta: Option<Vec<(u64, f64)>>,
}

/// Compares report `b` against baseline `a`. Errors if the reports cover
/// different vocabularies or test sets.
pub fn compare(a: &ExperimentReport, b: &ExperimentReport) -> Result<ComparisonReport> {
    if a.label_names != b.label_names || a.test_class_counts != b.test_class_counts {
        return Err(CelError::VocabularyMismatch);
    }
    let num_classes = a.label_names.len();
    let mut per_class = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        let preferred_count = b
            .per_seed
            .iter()
            .filter(|r| {
                r.stages
                    .first()
                    .is_some_and(|s| s.pool_classes.contains(&c))
            })
            .count();
        per_class.push(ClassDelta {
            class: c,
            name: a.label_names[c].clone(),
            a_mean_error: a.aggregate.mean_per_class_error[c],
            b_mean_error: b.aggregate.mean_per_class_error[c],
            delta: a.aggregate.mean_per_class_error[c] - b.aggregate.mean_per_class_error[c],
            preferred_in_b: 2 * preferred_count > b.per_seed.len(),
        });
    }
    let seeds_a: Vec<u64> = a.per_seed.iter().map(|r| r.seed).collect();
    let seeds_b: Vec<u64> = b.per_seed.iter().map(|r| r.seed).collect();
    let per_seed_overall_delta = (seeds_a == seeds_b).then(|| {
        a.per_seed
            .iter()
            .zip(&b.per_seed)
            .map(|(ra, rb)| (ra.seed, ra.overall_error - rb.overall_error))
            .collect()
    });
    Ok(ComparisonReport {
        a_mean_overall_error: a.aggregate.mean_overall_error,
        b_mean_overall_error: b.aggregate.mean_overall_error,
        overall_delta: a.aggregate.mean_overall_error - b.aggregate.mean_overall_error,
        per_class,
        per_seed_overall_delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob_config(out: &Path) -> ExperimentConfig {
        let json = format!(
            r#"{{
            "data": {{"blobs": {{
                "num_classes": 3,
                "per_class_count": 20,
                "feature_dim": 2,
                "class_stddev": 0.6,
                "overlap_pairs": [[0, 1]],
                "seed": 5
            }}}},
            "test_fraction": 0.25,
            "ordering": "distance",
            "num_stages": 2,
            "final_epochs": 3,
            "lambda": 1.0,
            "scorer": {{"hidden_dims": [4], "epochs": 2, "train": {{"batch_size": 8}}}},
            "model": {{"hidden_dims": [8], "train": {{"batch_size": 8}}}},
            "seeds": [3, 4],
            "output_dir": {}
        }}"#,
            serde_json::to_string(out).unwrap()
        );
        ExperimentConfig::from_json(&json).unwrap()
    }

    #[test]
    fn config_defaults_and_strictness() {
        let minimal = r#"{"data": {"blobs": {
            "num_classes": 4, "per_class_count": 10, "feature_dim": 2,
            "class_stddev": 1.0, "seed": 1
        }}}"#;
        let config = ExperimentConfig::from_json(minimal).unwrap();
        assert_eq!(config.num_stages, 5);
        assert_eq!(config.ordering, OrderingMode::Distance);
        assert_eq!(config.seeds, vec![1, 2, 3, 4, 5]);
        assert!((config.test_fraction - 0.2).abs() < 1e-15);

        let unknown_key = r#"{"data": {"blobs": {
            "num_classes": 4, "per_class_count": 10, "feature_dim": 2,
            "class_stddev": 1.0, "seed": 1
        }}, "typo_key": 3}"#;
        assert!(ExperimentConfig::from_json(unknown_key).is_err());

        let unknown_nested = r#"{"data": {"blobs": {
            "num_classes": 4, "per_class_count": 10, "feature_dim": 2,
            "class_stddev": 1.0, "seed": 1, "oops": true
        }}}"#;
        assert!(ExperimentConfig::from_json(unknown_nested).is_err());
    }

    #[test]
    fn config_rejects_bad_values() {
        let base = r#"{"data": {"blobs": {
            "num_classes": 4, "per_class_count": 10, "feature_dim": 2,
            "class_stddev": 1.0, "seed": 1
        }}, "seeds": []}"#;
        assert!(ExperimentConfig::from_json(base).is_err());
        let bad_lambda = r#"{"data": {"blobs": {
            "num_classes": 4, "per_class_count": 10, "feature_dim": 2,
            "class_stddev": 1.0, "seed": 1
        }}, "lambda": 0.25}"#;
        assert!(ExperimentConfig::from_json(bad_lambda).is_err());
    }

    #[test]
    fn scorer_epochs_default_follows_lambda() {
        let json = r#"{"data": {"blobs": {
            "num_classes": 4, "per_class_count": 10, "feature_dim": 2,
            "class_stddev": 1.0, "seed": 1
        }}, "final_epochs": 40, "lambda": 4.0}"#;
        let config = ExperimentConfig::from_json(json).unwrap();
        assert_eq!(config.scorer_epochs(), 10);
    }

    #[test]
    fn cel_pipeline_produces_consistent_report() {
        let dir = tempfile::tempdir().unwrap();
        let config = blob_config(dir.path());
        let report = run_cel(&config).unwrap();

        assert_eq!(report.per_seed.len(), 2);
        for seed_report in &report.per_seed {
            assert_eq!(seed_report.stages.len(), 2);
            // nested pools, growing sizes
            assert!(seed_report.stages[0].pool_size < seed_report.stages[1].pool_size);
            assert!(seed_report.stages[0]
                .pool_classes
                .iter()
                .all(|c| seed_report.stages[1].pool_classes.contains(c)));
            for stage in &seed_report.stages {
                assert_eq!(stage.metrics.len(), stage.epochs);
            }
            assert!(seed_report
                .per_class_error
                .iter()
                .all(|e| (0.0..=1.0).contains(e)));
        }
        // aggregate mean is the arithmetic mean of per-seed values
        let mean: f64 = report.per_seed.iter().map(|r| r.overall_error).sum::<f64>()
            / report.per_seed.len() as f64;
        assert!((report.aggregate.mean_overall_error - mean).abs() <= 1e-12);

        // artifacts exist
        assert!(dir.path().join("report.json").is_file());
        assert!(dir.path().join("seed_3/ordering.csv").is_file());
        assert!(dir.path().join("seed_3/schedule.json").is_file());
        assert!(dir.path().join("seed_3/scorer/checkpoint.json").is_file());
        assert!(dir.path().join("seed_3/stage_2/metrics.jsonl").is_file());
    }

    #[test]
    fn normal_run_is_single_full_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = blob_config(dir.path());
        config.seeds = vec![7];
        let report = run_normal(&config).unwrap();
        let seed_report = &report.per_seed[0];
        assert_eq!(seed_report.stages.len(), 1);
        assert_eq!(seed_report.stages[0].pool_classes, vec![0, 1, 2]);
        assert!((seed_report.measured_cost - 1.0).abs() < 1e-12);
        assert_eq!(seed_report.stages[0].epochs, config.final_epochs);
    }

    #[test]
    fn compare_identity_is_all_zero() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = blob_config(dir.path());
        config.seeds = vec![2];
        let report = run_normal(&config).unwrap();
        let cmp = compare(&report, &report).unwrap();
        assert_eq!(cmp.overall_delta, 0.0);
        assert!(cmp.per_class.iter().all(|c| c.delta == 0.0));
        let per_seed = cmp.per_seed_overall_delta.unwrap();
        assert!(per_seed.iter().all(|&(_, d)| d == 0.0));
    }

    fn fixture_report(per_class_error: Vec<f64>, first_stage: Vec<usize>) -> ExperimentReport {
        let num_classes = per_class_error.len();
        let overall = per_class_error.iter().sum::<f64>() / num_classes as f64;
        let seed_report = SeedReport {
            seed: 1,
            overall_error: overall,
            per_class_error: per_class_error.clone(),
            measured_cost: 1.0,
            stages: vec![StageRecord {
                stage: 1,
                epochs: 1,
                pool_classes: first_stage,
                pool_size: 10,
                metrics: vec![],
            }],
        };
        ExperimentReport {
            schema_version: 1,
            label_names: (0..num_classes).map(|c| c.to_string()).collect(),
            test_class_counts: vec![10; num_classes],
            aggregate: AggregateReport {
                mean_overall_error: overall,
                std_overall_error: 0.0,
                best_overall_error: overall,
                mean_per_class_error: per_class_error,
                mean_measured_cost: 1.0,
            },
            per_seed: vec![seed_report],
        }
    }

    #[test]
    fn compare_reports_injected_delta() {
        let a = fixture_report(vec![0.30, 0.20, 0.10], vec![0, 1, 2]);
        let b = fixture_report(vec![0.25, 0.20, 0.12], vec![0, 1]);
        let cmp = compare(&a, &b).unwrap();
        assert!((cmp.per_class[0].delta - 0.05).abs() < 1e-12);
        assert_eq!(cmp.per_class[1].delta, 0.0);
        assert!((cmp.per_class[2].delta + 0.02).abs() < 1e-12);
        assert!(cmp.per_class[0].preferred_in_b);
        assert!(!cmp.per_class[2].preferred_in_b);
        let expected_overall = (0.30 + 0.20 + 0.10) / 3.0 - (0.25 + 0.20 + 0.12) / 3.0;
        assert!((cmp.overall_delta - expected_overall).abs() <= 1e-12);
    }

    #[test]
    fn compare_rejects_mismatched_vocabulary() {
        let a = fixture_report(vec![0.1, 0.2], vec![0]);
        let b = fixture_report(vec![0.1, 0.2, 0.3], vec![0]);
        assert!(matches!(compare(&a, &b), Err(CelError::VocabularyMismatch)));
    }

    #[test]
    fn report_roundtrip() {
        let report = fixture_report(vec![0.5, 0.25], vec![1]);
        let file = tempfile::NamedTempFile::new().unwrap();
        report.save(file.path()).unwrap();
        assert_eq!(ExperimentReport::load(file.path()).unwrap(), report);
    }
}
