//! Parse, category and matching evaluations.

mod matching;
mod metrics;
pub mod svg;

pub use matching::{
    evaluate_matches, match_scores, role_match_eval, verb_match_eval, MatchReport, MatchScores, SceneSource,
};
pub use metrics::{
    branching_baseline, contingency, expected_random_f1, mean_stderr, paired_t_test, span_f1, span_set, v_measure,
    Contingency, Direction, Prf, SpanSet, TTest, VMeasure,
};
