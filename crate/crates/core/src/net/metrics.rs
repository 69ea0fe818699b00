//! Decision-quality metrics: confusion counts and reward-weighted accuracy.
//!
//! Calling for a change in the wrong direction is worse than conservatively
//! predicting a constant LR, so correct Decrease/Increase calls earn weight 3
//! against weight 1 for Constant, and the weighted accuracy discounts
//! direction confusions accordingly.

use serde::{Deserialize, Serialize};

use crate::decision::LrDecision;
use crate::error::{Error, Result};

/// 3x3 predicted-vs-actual decision counts. Rows are predictions, columns
/// are actual labels, both in class-index order (Decrease, Constant,
/// Increase).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, predicted: LrDecision, actual: LrDecision) {
        self.counts[predicted.index()][actual.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Unweighted fraction of correct predictions.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let diag: u64 = (0..3).map(|i| self.counts[i][i]).sum();
        diag as f64 / total as f64
    }
}

impl std::fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "pred\\actual  decrease  constant  increase")?;
        for (i, d) in LrDecision::ALL.iter().enumerate() {
            writeln!(
                f,
                "{:<12} {:>8} {:>9} {:>9}",
                d.to_string(),
                self.counts[i][0],
                self.counts[i][1],
                self.counts[i][2]
            )?;
        }
        Ok(())
    }
}

/// Weights grading decision errors by severity. Rows are predictions,
/// columns actual labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardPenaltyMatrix {
    pub values: [[i32; 3]; 3],
}

impl Default for RewardPenaltyMatrix {
    fn default() -> Self {
        RewardPenaltyMatrix {
            values: [
                [3, -1, -3], // predicted decrease
                [-1, 1, -1], // predicted constant
                [-3, -1, 3], // predicted increase
            ],
        }
    }
}

/// Reward-weighted correct mass over reward-weighted total mass:
/// `sum_i cm[i][i]*|rpm[i][i]| / sum_ij cm[i][j]*|rpm[i][j]|`, in [0, 1].
pub fn weighted_accuracy(cm: &ConfusionMatrix, rpm: &RewardPenaltyMatrix) -> Result<f64> {
    if cm.total() == 0 {
        return Err(Error::usage("weighted_accuracy: empty confusion matrix"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let mass = cm.counts[i][j] as f64 * rpm.values[i][j].unsigned_abs() as f64;
            den += mass;
            if i == j {
                num += mass;
            }
        }
    }
    Ok(num / den)
}
