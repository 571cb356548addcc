//! Evaluation: PR curves and AUPR, F1 averages, cross-validation and the
//! data-size ablation.

mod cv;
mod eval;
mod pr;
mod report;

pub use cv::{ablate_data_size, ablation_csv, cross_validate, fit, AblationRow, FoldPlan, DEFAULT_FOLDS};
pub use eval::{
    evaluate_scores, evaluate_snapshot, f1_scores, Averaged, Confusion, EvalReport, LabelMetrics,
};
pub use pr::{average_precision, pr_curve, PrCurve};
pub use report::{AveragedSummary, CvReport, LabelSummary, MeanStd};
