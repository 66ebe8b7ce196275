//! Expansion schedules: K stage pools growing over the class ordering, the
//! per-stage epoch budgets, and the training-cost model in units of one
//! full-dataset-pass training run.

use serde::{Deserialize, Serialize};

use crate::confusion::ClassOrdering;
use crate::dataset::ClassPartition;
use crate::error::{CelError, Result};

/// A K-stage expansion plan over an ordered class list.
///
/// `stage_class_counts[k]` is the cumulative number of ordered classes in
/// stage k+1's pool; the last count equals the number of classes. Stages
/// before the final one default to `round(E / lambda)` epochs (clamped to at
/// least 1), the final stage gets the full budget `E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionSchedule {
    pub ordering: ClassOrdering,
    pub stage_class_counts: Vec<usize>,
    pub stage_epochs: Vec<usize>,
    pub lambda: f64,
}

impl ExpansionSchedule {
    pub fn num_stages(&self) -> usize {
        self.stage_class_counts.len()
    }

    pub fn final_epochs(&self) -> usize {
        *self.stage_epochs.last().unwrap()
    }

    /// Replaces the per-stage epoch budgets wholesale.
    pub fn override_stage_epochs(&mut self, epochs: Vec<usize>) -> Result<()> {
        if epochs.len() != self.num_stages() {
            return Err(CelError::DimensionMismatch {
                what: "stage epochs",
                expected: self.num_stages(),
                got: epochs.len(),
            });
        }
        if epochs.contains(&0) {
            return Err(CelError::InvalidConfig(
                "stage epochs must all be >= 1".into(),
            ));
        }
        self.stage_epochs = epochs;
        Ok(())
    }

    /// Classes entering at stage `k` (1-based): the ordered slice between
    /// the previous and current cumulative counts.
    pub fn classes_added_at(&self, k: usize) -> Result<&[usize]> {
        if k < 1 || k > self.num_stages() {
            return Err(CelError::StageOutOfRange {
                stage: k,
                num_stages: self.num_stages(),
            });
        }
        let lo = if k == 1 {
            0
        } else {
            self.stage_class_counts[k - 2]
        };
        Ok(&self.ordering.order[lo..self.stage_class_counts[k - 1]])
    }
}

/// Builds the K-stage schedule over `ordering`. Per-stage class additions
/// are `floor(M / K)`, with the `M mod K` leftover classes giving one extra
/// to each of the earliest stages.
pub fn build_schedule(
    ordering: &ClassOrdering,
    num_stages: usize,
    final_epochs: usize,
    lambda: f64,
) -> Result<ExpansionSchedule> {
    let m = ordering.num_classes();
    if num_stages < 1 || num_stages > m {
        return Err(CelError::InvalidConfig(format!(
            "num_stages must lie in 1..={m}, got {num_stages}"
        )));
    }
    if final_epochs < 1 {
        return Err(CelError::InvalidConfig("final_epochs must be >= 1".into()));
    }
    if !lambda.is_finite() || lambda < 1.0 {
        return Err(CelError::InvalidConfig(
            "lambda must be a finite real >= 1".into(),
        ));
    }

    let base = m / num_stages;
    let extra = m % num_stages;
    let mut stage_class_counts = Vec::with_capacity(num_stages);
    let mut cumulative = 0;
    for k in 0..num_stages {
        cumulative += base + usize::from(k < extra);
        stage_class_counts.push(cumulative);
    }

    let early = ((final_epochs as f64 / lambda).round() as usize).max(1);
    let mut stage_epochs = vec![early; num_stages - 1];
    stage_epochs.push(final_epochs);

    Ok(ExpansionSchedule {
        ordering: ordering.clone(),
        stage_class_counts,
        stage_epochs,
        lambda,
    })
}

/// Sample indices in stage `k`'s pool (1-based): every sample whose class is
/// among the first `stage_class_counts[k-1]` ordered classes. Returned
/// sorted ascending, so the pool is a canonical set regardless of ordering.
pub fn pool_at_stage(
    sched: &ExpansionSchedule,
    k: usize,
    partition: &ClassPartition,
) -> Result<Vec<usize>> {
    if k < 1 || k > sched.num_stages() {
        return Err(CelError::StageOutOfRange {
            stage: k,
            num_stages: sched.num_stages(),
        });
    }
    if partition.per_class.len() != sched.ordering.num_classes() {
        return Err(CelError::DimensionMismatch {
            what: "partition classes",
            expected: sched.ordering.num_classes(),
            got: partition.per_class.len(),
        });
    }
    let count = sched.stage_class_counts[k - 1];
    let mut pool: Vec<usize> = sched.ordering.order[..count]
        .iter()
        .flat_map(|&class| partition.per_class[class].iter().copied())
        .collect();
    pool.sort_unstable();
    Ok(pool)
}

/// Predicted training cost in units of one normal run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// One normal full-budget run; the unit.
    pub normal_cost: f64,
    /// Equal-epoch expansion: (K + 1) / 2.
    pub equal_epoch_cost: f64,
    /// Early stages reduced by lambda: (K - 1) / (2 * lambda) + 1.
    pub reduced_cost: f64,
}

/// Closed-form cost of a K-stage schedule, assuming stage k's pool is the
/// fraction k/K of the data.
pub fn predicted_cost(num_stages: usize, lambda: f64) -> Result<CostModel> {
    if num_stages < 1 {
        return Err(CelError::InvalidConfig("num_stages must be >= 1".into()));
    }
    if !lambda.is_finite() || lambda < 1.0 {
        return Err(CelError::InvalidConfig(
            "lambda must be a finite real >= 1".into(),
        ));
    }
    let k = num_stages as f64;
    Ok(CostModel {
        normal_cost: 1.0,
        equal_epoch_cost: (k + 1.0) / 2.0,
        reduced_cost: (k - 1.0) / (2.0 * lambda) + 1.0,
    })
}

/// Actual sample-pass count of a schedule, normalized by one full-budget
/// run: `sum_k stage_epochs[k] * |pool_k| / (E * |D|)`. Matches the
/// closed-form predictions exactly when M is divisible by K, class sizes are
/// equal, and the epoch budgets follow the default recipe.
pub fn measured_cost(sched: &ExpansionSchedule, partition: &ClassPartition) -> Result<f64> {
    if partition.per_class.len() != sched.ordering.num_classes() {
        return Err(CelError::DimensionMismatch {
            what: "partition classes",
            expected: sched.ordering.num_classes(),
            got: partition.per_class.len(),
        });
    }
    let total = partition.total();
    if total == 0 {
        return Err(CelError::EmptyPool);
    }
    let mut passes = 0usize;
    for k in 1..=sched.num_stages() {
        let pool_size: usize = sched.ordering.order[..sched.stage_class_counts[k - 1]]
            .iter()
            .map(|&class| partition.per_class[class].len())
            .sum();
        passes += sched.stage_epochs[k - 1] * pool_size;
    }
    Ok(passes as f64 / (sched.final_epochs() as f64 * total as f64))
}
