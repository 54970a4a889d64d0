//! Stage-1 scoring kernels: structural trajectory utility, grader-blended
//! utility, confidence normalization, node value, and the termination
//! predicate.
//!
//! Every kernel is generic over the scalar type (any [`Real`]); the pipeline
//! instantiates them at [`crate::Score`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Subtask;
use crate::{Real, Score};

#[derive(Debug, Error)]
pub enum ScoringError {
    /// Grader protocol violation: grades live on a 1..=10 scale.
    #[error("grade {0} outside 1..=10")]
    GradeOutOfRange(i64),
    #[error("{name} = {value} outside [0, 1]")]
    ValueOutOfRange { name: &'static str, value: f64 },
}

/// Bounded pair of Stage-1 scores for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryScores<F = Score> {
    /// Structural quality, coherence, and exploration diversity.
    pub utility: F,
    /// How strongly the collected observations support the subtask label.
    pub confidence: F,
}

/// Weights and thresholds for Stage-1 scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    /// Mixing weight between utility and confidence in the node value.
    pub lambda: Score,
    /// Per-subtask early-termination threshold on the score product.
    pub theta_text: Score,
    pub theta_image: Score,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            theta_text: 0.6,
            theta_image: 0.6,
        }
    }
}

impl ScoringConfig {
    pub fn theta(&self, subtask: Subtask) -> Score {
        match subtask {
            Subtask::Text => self.theta_text,
            Subtask::Image => self.theta_image,
        }
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(ScoringError::ValueOutOfRange {
                name: "scoring.lambda",
                value: self.lambda,
            });
        }
        for (name, theta) in [
            ("scoring.theta_text", self.theta_text),
            ("scoring.theta_image", self.theta_image),
        ] {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(ScoringError::ValueOutOfRange { name, value: theta });
            }
        }
        Ok(())
    }
}

/// Sigmoid progress term `1 / (1 + exp(-(L - 2)))`; strictly increasing in L.
pub fn progress<F: Real>(len: usize) -> F {
    let x = F::from_usize(len).unwrap() - F::from_f64(2.0).unwrap();
    F::one() / (F::one() + (-x).exp())
}

/// Fraction of distinct tools: `|{tools}| / max(1, L)`.
pub fn unique_ratio<F: Real>(tools: &[String]) -> F {
    let mut distinct: Vec<&str> = Vec::new();
    for t in tools {
        if !distinct.contains(&t.as_str()) {
            distinct.push(t);
        }
    }
    F::from_usize(distinct.len()).unwrap() / F::from_usize(tools.len().max(1)).unwrap()
}

/// One minus the fraction of adjacent repeats over `max(1, L - 1)` transitions.
pub fn non_repeat<F: Real>(tools: &[String]) -> F {
    let repeats = tools.windows(2).filter(|w| w[0] == w[1]).count();
    let transitions = tools.len().saturating_sub(1).max(1);
    F::one() - F::from_usize(repeats).unwrap() / F::from_usize(transitions).unwrap()
}

/// Structural base score: mean of progress, tool diversity, and non-redundancy.
pub fn base_utility<F: Real>(tools: &[String]) -> F {
    let three = F::from_f64(3.0).unwrap();
    (progress::<F>(tools.len()) + unique_ratio::<F>(tools) + non_repeat::<F>(tools)) / three
}

/// Equal-weight blend of the structural base and the grader's coherence,
/// clipped to [0, 1]. Both inputs must already be in [0, 1].
pub fn trajectory_utility<F: Real>(base: F, grader_coherence: F) -> Result<F, ScoringError> {
    for (name, v) in [("base", base), ("grader_coherence", grader_coherence)] {
        if v < F::zero() || v > F::one() {
            return Err(ScoringError::ValueOutOfRange {
                name: if name == "base" {
                    "trajectory_utility.base"
                } else {
                    "trajectory_utility.grader_coherence"
                },
                value: v.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let half = F::from_f64(0.5).unwrap();
    let blended = half * base + half * grader_coherence;
    Ok(blended.min(F::one()).max(F::zero()))
}

/// Normalize a 1..=10 grade to [0, 1].
pub fn confidence_from_grade<F: Real>(grade: i64) -> Result<F, ScoringError> {
    if !(1..=10).contains(&grade) {
        return Err(ScoringError::GradeOutOfRange(grade));
    }
    Ok(F::from_i64(grade).unwrap() / F::from_f64(10.0).unwrap())
}

/// Convex combination `lambda * utility + (1 - lambda) * confidence`.
pub fn node_value<F: Real>(scores: TrajectoryScores<F>, lambda: F) -> F {
    lambda * scores.utility + (F::one() - lambda) * scores.confidence
}

/// Early-termination criterion: the score product reaches the threshold.
/// The comparison is an exact `>=`; the criterion is a control threshold,
/// not a numerical identity.
pub fn termination_met<F: Real>(scores: TrajectoryScores<F>, theta: F) -> bool {
    scores.utility * scores.confidence >= theta
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tools(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn progress_known_values() {
        assert_eq!(progress::<f64>(2), 0.5);
        assert!((progress::<f64>(4) - 0.880797077977882).abs() < 1e-12);
        assert!((progress::<f64>(0) - 0.119202922022118).abs() < 1e-12);
    }

    #[test]
    fn progress_is_generic_over_f32() {
        assert_eq!(progress::<f32>(2), 0.5);
        assert!((progress::<f32>(4) - 0.880_797_1_f32).abs() < 1e-6);
    }

    #[test]
    fn unique_ratio_known_values() {
        assert!((unique_ratio::<f64>(&tools(&["search", "vqa", "search"])) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(unique_ratio::<f64>(&[]), 0.0);
        assert_eq!(unique_ratio::<f64>(&tools(&["a", "b", "c", "d"])), 1.0);
    }

    #[test]
    fn non_repeat_known_values() {
        assert_eq!(non_repeat::<f64>(&tools(&["a", "a", "b"])), 0.5);
        assert_eq!(non_repeat::<f64>(&tools(&["a"])), 1.0);
        assert_eq!(non_repeat::<f64>(&tools(&["a", "a", "a", "a"])), 0.0);
    }

    #[test]
    fn base_utility_known_values() {
        assert!((base_utility::<f64>(&tools(&["search", "vqa", "search"])) - 0.7992417484322237).abs() < 1e-12);
        assert!((base_utility::<f64>(&[]) - 0.3730676406740392).abs() < 1e-12);
        assert!((base_utility::<f64>(&tools(&["a", "a"])) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_utility_blend_and_clip() {
        assert!((trajectory_utility(0.8_f64, 0.6).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(trajectory_utility(0.5_f64, 0.5).unwrap(), 0.5);
        assert_eq!(trajectory_utility(1.0_f64, 1.0).unwrap(), 1.0);
        assert!(trajectory_utility(1.2_f64, 0.5).is_err());
        assert!(trajectory_utility(0.5_f64, -0.1).is_err());
    }

    #[test]
    fn confidence_from_grade_known_values() {
        assert_eq!(confidence_from_grade::<f64>(10).unwrap(), 1.0);
        assert!((confidence_from_grade::<f64>(7).unwrap() - 0.7).abs() < 1e-12);
        assert!(matches!(
            confidence_from_grade::<f64>(0),
            Err(ScoringError::GradeOutOfRange(0))
        ));
        assert!(confidence_from_grade::<f64>(11).is_err());
    }

    #[test]
    fn node_value_boundaries() {
        let s = TrajectoryScores::<f64> {
            utility: 0.6,
            confidence: 0.8,
        };
        assert_eq!(node_value(s, 1.0), 0.6);
        assert_eq!(node_value(s, 0.0), 0.8);
        assert!((node_value(s, 0.5) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn termination_boundary_is_inclusive() {
        let hit = TrajectoryScores {
            utility: 0.9,
            confidence: 0.7,
        };
        assert!(termination_met(hit, 0.6)); // 0.63 >= 0.6
        let miss = TrajectoryScores {
            utility: 0.9,
            confidence: 0.6,
        };
        assert!(!termination_met(miss, 0.6)); // 0.54 < 0.6
        let exact = TrajectoryScores {
            utility: 1.0,
            confidence: 0.6,
        };
        assert!(termination_met(exact, 0.6));
    }

    #[test]
    fn termination_matches_direct_product_over_grid() {
        // 10^3 grid of (utility, confidence, theta) triples.
        for i in 0..10 {
            for j in 0..10 {
                for k in 0..10 {
                    let s = TrajectoryScores {
                        utility: i as f64 / 9.0,
                        confidence: j as f64 / 9.0,
                    };
                    let theta = (k as f64 + 1.0) / 10.0;
                    assert_eq!(
                        termination_met(s, theta),
                        s.utility * s.confidence >= theta
                    );
                }
            }
        }
    }

    #[test]
    fn grade_roundtrip_is_identity_on_tenths() {
        for g in 1..=10 {
            let c: f64 = confidence_from_grade(g).unwrap();
            assert_eq!((c * 10.0).round() as i64, g);
        }
    }

    proptest! {
        #[test]
        fn progress_is_bounded_and_monotone(len in 0usize..=36) {
            // beyond L ~ 37 the sigmoid saturates to 1.0 in f64
            let p: f64 = progress(len);
            prop_assert!(p > 0.0 && p < 1.0);
            prop_assert!(progress::<f64>(len + 1) > p);
        }

        #[test]
        fn progress_saturates_without_overshoot(len in 0usize..10_000) {
            let p: f64 = progress(len);
            prop_assert!(p > 0.0 && p <= 1.0);
            prop_assert!(progress::<f64>(len + 1) >= p);
        }

        #[test]
        fn structural_terms_stay_in_unit_interval(
            names in proptest::collection::vec("[a-d]", 0..20)
        ) {
            let u: f64 = unique_ratio(&names);
            let n: f64 = non_repeat(&names);
            let b: f64 = base_utility(&names);
            prop_assert!((0.0..=1.0).contains(&u));
            prop_assert!((0.0..=1.0).contains(&n));
            prop_assert!((0.0..=1.0).contains(&b));
        }

        #[test]
        fn unique_ratio_sees_only_the_multiset(
            names in proptest::collection::vec("[a-d]", 1..20)
        ) {
            // reversal and rotation preserve the multiset, so the ratio
            // holds; adjacency-based non_repeat may change under rotation
            let mut reversed = names.clone();
            reversed.reverse();
            let mut rotated = names.clone();
            rotated.rotate_left(1);
            prop_assert_eq!(unique_ratio::<f64>(&names), unique_ratio::<f64>(&reversed));
            prop_assert_eq!(unique_ratio::<f64>(&names), unique_ratio::<f64>(&rotated));
            prop_assert_eq!(non_repeat::<f64>(&names), non_repeat::<f64>(&reversed));
        }

        #[test]
        fn blend_and_value_are_monotone(
            a in 0.0f64..=1.0, b in 0.0f64..=1.0,
            da in 0.0f64..=0.2, db in 0.0f64..=0.2,
            lambda in 0.0f64..=1.0
        ) {
            let a2 = (a + da).min(1.0);
            let b2 = (b + db).min(1.0);
            prop_assert!(trajectory_utility(a2, b).unwrap() >= trajectory_utility(a, b).unwrap());
            prop_assert!(trajectory_utility(a, b2).unwrap() >= trajectory_utility(a, b).unwrap());
            let lo = TrajectoryScores { utility: a, confidence: b };
            let hi = TrajectoryScores { utility: a2, confidence: b2 };
            prop_assert!(node_value(hi, lambda) >= node_value(lo, lambda));
        }
    }
}
