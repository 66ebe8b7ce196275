//! Class-based expansion learning (CEL).
//!
//! Trains a classifier in `K` warm-started stages over a growing pool of
//! whole classes. Classes are scored by how confusable they are (distance- or
//! entropy-based), sorted hardest first, and admitted to the training pool a
//! chunk at a time, so the boundaries of the confusing classes receive
//! gradient updates in every stage. A cost model expresses the schedule's
//! total price in full-dataset-pass equivalents, and an experiment harness
//! runs CEL against normal training over multiple seeds.
//!
//! ```
//! use cel_core::confusion::{class_centers, order_classes, score_distance, compute_embeddings};
//! use cel_core::dataset::{generate_blobs, partition_by_class, BlobSpec};
//! use cel_core::scheduler::{build_schedule, pool_at_stage};
//! use cel_core::trainer::DenseModel;
//! use rand::SeedableRng;
//!
//! // four blob classes, the first two overlapping
//! let ds = generate_blobs(&BlobSpec {
//!     num_classes: 4,
//!     per_class_count: 25,
//!     feature_dim: 2,
//!     class_means: None,
//!     class_stddev: 1.0,
//!     overlap_pairs: vec![(0, 1)],
//!     seed: 11,
//! })?;
//! let partition = partition_by_class(&ds);
//!
//! // score classes with an untrained scorer and order them hardest first
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
//! let scorer = DenseModel::random(&[2, 8, 4], &mut rng)?;
//! let batch = compute_embeddings(&scorer, &ds)?;
//! let report = score_distance(&batch, &class_centers(&batch, &partition)?)?;
//! let ordering = order_classes(&report)?;
//!
//! // two stages: the hardest half enters first, everything by the end
//! let sched = build_schedule(&ordering, 2, 10, 2.0)?;
//! assert_eq!(sched.stage_class_counts, vec![2, 4]);
//! assert_eq!(pool_at_stage(&sched, 2, &partition)?.len(), ds.len());
//! # Ok::<(), cel_core::CelError>(())
//! ```

pub mod confusion;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod scheduler;
pub mod trainer;

pub use error::{CelError, Result};
