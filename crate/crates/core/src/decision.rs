//! The 3-class LR decision and its bound multipliers.

use serde::{Deserialize, Serialize};

/// Multiplier applied to the current LR for a `Decrease` decision.
pub const DECREASE_FACTOR: f64 = 0.618;
/// Multiplier applied to the current LR for an `Increase` decision.
pub const INCREASE_FACTOR: f64 = 1.618;

/// One controller decision. One increase followed by one decrease lands
/// within 0.01% of the starting LR (1.618 * 0.618 = 0.999924).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrDecision {
    Decrease,
    Constant,
    Increase,
}

impl LrDecision {
    /// All decisions in class-index order.
    pub const ALL: [LrDecision; 3] = [LrDecision::Decrease, LrDecision::Constant, LrDecision::Increase];

    /// Preference order used to break exact ties: conservative first.
    pub const TIE_ORDER: [LrDecision; 3] =
        [LrDecision::Constant, LrDecision::Decrease, LrDecision::Increase];

    pub const fn multiplier(self) -> f64 {
        match self {
            LrDecision::Decrease => DECREASE_FACTOR,
            LrDecision::Constant => 1.0,
            LrDecision::Increase => INCREASE_FACTOR,
        }
    }

    /// Class index used by the classifier and the confusion matrix.
    pub const fn index(self) -> usize {
        match self {
            LrDecision::Decrease => 0,
            LrDecision::Constant => 1,
            LrDecision::Increase => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Argmax over per-class scores with exact ties broken toward Constant,
    /// then Decrease.
    pub fn argmax(scores: [f64; 3]) -> Self {
        let mut best = LrDecision::Constant;
        let mut best_score = f64::NEG_INFINITY;
        for d in Self::TIE_ORDER {
            let s = scores[d.index()];
            if s > best_score {
                best = d;
                best_score = s;
            }
        }
        best
    }
}

impl std::fmt::Display for LrDecision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LrDecision::Decrease => write!(f, "decrease"),
            LrDecision::Constant => write!(f, "constant"),
            LrDecision::Increase => write!(f, "increase"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multipliers_bound_to_variants() {
        assert_eq!(LrDecision::Decrease.multiplier(), 0.618);
        assert_eq!(LrDecision::Constant.multiplier(), 1.0);
        assert_eq!(LrDecision::Increase.multiplier(), 1.618);
    }

    #[test]
    fn argmax_tie_breaks() {
        assert_eq!(LrDecision::argmax([0.2, 0.5, 0.3]), LrDecision::Constant);
        assert_eq!(LrDecision::argmax([0.4, 0.4, 0.2]), LrDecision::Constant);
        assert_eq!(LrDecision::argmax([0.45, 0.1, 0.45]), LrDecision::Decrease);
        assert_eq!(LrDecision::argmax([0.6, 0.2, 0.2]), LrDecision::Decrease);
        assert_eq!(LrDecision::argmax([0.1, 0.2, 0.7]), LrDecision::Increase);
    }

    #[test]
    fn index_round_trip() {
        for d in LrDecision::ALL {
            assert_eq!(LrDecision::from_index(d.index()), Some(d));
        }
        assert_eq!(LrDecision::from_index(3), None);
    }

    #[test]
    fn round_trip_factor_near_one() {
        let ratio: f64 = INCREASE_FACTOR * DECREASE_FACTOR;
        assert!((ratio - 1.0).abs() < 1e-4);
    }
}
