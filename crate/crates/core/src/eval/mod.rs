//! Mask and box AP with area buckets, before/after reports, and routing
//! diagnostics.

mod ap;
mod breakdown;
mod matching;
mod predict;
mod report;

pub use ap::{average_precision, Scored, RECALL_POINTS};
pub use breakdown::{evaluate_class, iou_thresholds, mean_over_classes, ApBreakdown, AreaBuckets, AreaRange, ImageEval};
pub use matching::{iou_matrix, match_detections, match_with_ignore, score_order, MatchKind, MatchLabel};
pub use predict::{
    evaluate_model, evaluate_per_class, misrouting_rate, model_misrouting, predict_all, MisroutingStats, Predictor,
    RoutedRoi,
};
pub use report::{
    aggregate_delta, compare_reports, delta, render_bar_chart, render_csv, render_table, BarPair, ClassComparison,
    ClassEval, EvalReport, EvalSide,
};
