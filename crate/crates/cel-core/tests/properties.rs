//! Property tests for the library's structural invariants.

use proptest::prelude::*;

use cel_core::confusion::{
    class_centers, order_classes, score_distance, score_entropy, ClassOrdering, ConfusionReport,
    Criterion, EmbeddingBatch,
};
use cel_core::dataset::{partition_by_class, split_train_test, LabeledDataset, Sample};
use cel_core::scheduler::{build_schedule, pool_at_stage};
use cel_core::trainer::{cross_entropy, softmax};

fn dataset_from_labels(labels: &[usize], num_classes: usize) -> LabeledDataset {
    let samples = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| Sample {
            features: vec![i as f64],
            label: l,
        })
        .collect();
    let names = (0..num_classes).map(|c| c.to_string()).collect();
    LabeledDataset::new(samples, num_classes, 1, names).unwrap()
}

/// Random embedding batch covering every class at least once.
fn batch_strategy() -> impl Strategy<Value = EmbeddingBatch> {
    (2usize..=5, 1usize..=3).prop_flat_map(|(m, dim)| {
        let rows = proptest::collection::vec(
            (
                proptest::collection::vec(-5.0..5.0f64, dim),
                proptest::collection::vec(0.05..1.0f64, m),
            ),
            m..=4 * m,
        );
        rows.prop_map(move |rows| {
            let n = rows.len();
            let mut embeddings = Vec::with_capacity(n);
            let mut probabilities = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for (i, (g, raw)) in rows.into_iter().enumerate() {
                let sum: f64 = raw.iter().sum();
                embeddings.push(g);
                probabilities.push(raw.into_iter().map(|v| v / sum).collect());
                labels.push(i % m); // cycle so every class is populated
            }
            EmbeddingBatch::new(embeddings, probabilities, labels, m).unwrap()
        })
    })
}

fn partition_of(batch: &EmbeddingBatch) -> cel_core::dataset::ClassPartition {
    let mut per_class = vec![Vec::new(); batch.num_classes()];
    for (i, &l) in batch.labels().iter().enumerate() {
        per_class[l].push(i);
    }
    cel_core::dataset::ClassPartition { per_class }
}

// Independent per-class brute-force oracles (triple loops, no shared code
// with the implementation path).
fn brute_distance(batch: &EmbeddingBatch) -> Vec<f64> {
    let m = batch.num_classes();
    let dim = batch.embedding_dim();
    let mut centers = vec![vec![0.0; dim]; m];
    let mut counts = vec![0usize; m];
    for (g, &l) in batch.embeddings().iter().zip(batch.labels()) {
        for d in 0..dim {
            centers[l][d] += g[d];
        }
        counts[l] += 1;
    }
    for (c, &n) in centers.iter_mut().zip(&counts) {
        for v in c.iter_mut() {
            *v /= n as f64;
        }
    }
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    (0..m)
        .map(|class| {
            let mut total = 0.0;
            for (g, &l) in batch.embeddings().iter().zip(batch.labels()) {
                if l != class {
                    continue;
                }
                for j in 0..m {
                    if j != class {
                        total += d2(g, &centers[class]) / d2(g, &centers[j]);
                    }
                }
            }
            1.0 + total / counts[class] as f64
        })
        .collect()
}

fn brute_entropy(batch: &EmbeddingBatch) -> Vec<f64> {
    let m = batch.num_classes();
    (0..m)
        .map(|class| {
            let mut total = 0.0;
            let mut count = 0usize;
            for (p, &l) in batch.probabilities().iter().zip(batch.labels()) {
                if l != class {
                    continue;
                }
                for &q in p {
                    if q > 0.0 {
                        total += q * (1.0 / q).ln();
                    }
                }
                count += 1;
            }
            total / count as f64
        })
        .collect()
}

proptest! {
    #[test]
    fn partition_flattens_to_a_permutation(
        labels in proptest::collection::vec(0usize..5, 1..60)
    ) {
        let ds = dataset_from_labels(&labels, 5);
        let partition = partition_by_class(&ds);
        let mut flat: Vec<usize> = partition.per_class.iter().flatten().copied().collect();
        flat.sort_unstable();
        prop_assert_eq!(flat, (0..labels.len()).collect::<Vec<_>>());
    }

    #[test]
    fn split_preserves_per_class_counts(
        per_class in proptest::collection::vec(2usize..20, 2..6),
        fraction in 0.1f64..0.9,
        seed in any::<u64>()
    ) {
        let m = per_class.len();
        let mut labels = Vec::new();
        for (class, &n) in per_class.iter().enumerate() {
            labels.extend(std::iter::repeat_n(class, n));
        }
        let ds = dataset_from_labels(&labels, m);
        let (train, test) = split_train_test(&ds, fraction, seed).unwrap();
        let (tc, sc) = (train.class_counts(), test.class_counts());
        for class in 0..m {
            prop_assert_eq!(tc[class] + sc[class], per_class[class]);
            let expected_test = (per_class[class] as f64 * fraction).round() as usize;
            prop_assert_eq!(sc[class], expected_test);
        }
    }

    #[test]
    fn ordering_is_a_sorted_permutation(
        scores in proptest::collection::vec(-10.0f64..10.0, 2..9)
    ) {
        let report = ConfusionReport { criterion: Criterion::Distance, scores: scores.clone() };
        let ordering = order_classes(&report).unwrap();
        let mut sorted = ordering.order.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..scores.len()).collect::<Vec<_>>());
        for w in ordering.order.windows(2) {
            prop_assert!(scores[w[0]] >= scores[w[1]]);
        }
    }

    #[test]
    fn softmax_is_a_distribution_and_loss_nonnegative(
        logits in proptest::collection::vec(-50.0f64..50.0, 2..7),
        label_pick in any::<usize>()
    ) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        let label = label_pick % logits.len();
        prop_assert!(cross_entropy(&logits, label) >= 0.0);
    }

    #[test]
    fn pools_nest_strictly(
        m in 2usize..9,
        per_class in 1usize..5,
        k_pick in any::<usize>(),
        seed in any::<u64>()
    ) {
        let k = 1 + k_pick % m;
        let ordering = ClassOrdering::random(m, seed);
        let labels: Vec<usize> = (0..m * per_class).map(|i| i % m).collect();
        let ds = dataset_from_labels(&labels, m);
        let partition = partition_by_class(&ds);
        let sched = build_schedule(&ordering, k, 4, 2.0).unwrap();
        let mut prev = Vec::new();
        for stage in 1..=k {
            let pool = pool_at_stage(&sched, stage, &partition).unwrap();
            prop_assert!(pool.len() > prev.len());
            prop_assert!(prev.iter().all(|i| pool.binary_search(i).is_ok()));
            prev = pool;
        }
        prop_assert_eq!(prev.len(), m * per_class);
    }

    #[test]
    fn confusion_scores_match_bruteforce(batch in batch_strategy()) {
        let partition = partition_of(&batch);
        let stats = class_centers(&batch, &partition).unwrap();
        let dist = score_distance(&batch, &stats).unwrap();
        let ent = score_entropy(&batch).unwrap();
        let brute_d = brute_distance(&batch);
        let brute_e = brute_entropy(&batch);
        for ((a, b), (c, d)) in dist.scores.iter().zip(&brute_d).zip(ent.scores.iter().zip(&brute_e)) {
            prop_assert!((a - b).abs() <= 1e-9, "distance {} vs oracle {}", a, b);
            prop_assert!((c - d).abs() <= 1e-9, "entropy {} vs oracle {}", c, d);
        }
    }

    #[test]
    fn confusion_score_bounds_hold(batch in batch_strategy()) {
        let partition = partition_of(&batch);
        let stats = class_centers(&batch, &partition).unwrap();
        let dist = score_distance(&batch, &stats).unwrap();
        let ent = score_entropy(&batch).unwrap();
        let ln_m = (batch.num_classes() as f64).ln();
        for &s in &dist.scores {
            prop_assert!(s >= 1.0 - 1e-12);
        }
        for &s in &ent.scores {
            prop_assert!((0.0..=ln_m + 1e-12).contains(&s));
        }
    }
}
