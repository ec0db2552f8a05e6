use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?} (train|valid|test)"))),
        }
    }
}

/// Train/validation/test fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.8, valid: 0.1, test: 0.1 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config(format!("split ratios must lie in [0, 1]: {parts:?}")));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios sum to {total}, not 1")));
        }
        Ok(())
    }
}

/// Per-event split labels, indexed like `Dataset::events`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    labels: Vec<Split>,
}

impl SplitAssignment {
    /// Event-level random split: a seeded permutation of the events is cut at
    /// the rounded ratio boundaries, so bucket sizes are exact up to rounding.
    pub fn random(num_events: usize, ratios: SplitRatios, seed: u64) -> Result<Self> {
        ratios.validate()?;
        let mut order: Vec<usize> = (0..num_events).collect();
        order.shuffle(&mut rng::stream(seed, &[rng::TAG_SPLIT, num_events as u64]));
        let n_train = (ratios.train * num_events as f64).round() as usize;
        let n_valid = ((ratios.valid * num_events as f64).round() as usize).min(num_events - n_train);
        let mut labels = vec![Split::Test; num_events];
        for (rank, &idx) in order.iter().enumerate() {
            labels[idx] = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_valid {
                Split::Valid
            } else {
                Split::Test
            };
        }
        Ok(SplitAssignment { labels })
    }

    pub fn from_labels(labels: Vec<Split>) -> Self {
        SplitAssignment { labels }
    }

    pub fn label(&self, event: usize) -> Split {
        self.labels[event]
    }

    pub fn labels(&self) -> &[Split] {
        &self.labels
    }

    pub fn count(&self, split: Split) -> usize {
        self.labels.iter().filter(|l| **l == split).count()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}
