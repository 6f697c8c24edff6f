//! Evaluation pipeline: suite configuration and execution, reports, radar
//! figures and dataset splits.

mod config;
mod perturbed;
pub mod radar;
mod report;
mod runner;
pub mod split;

pub use config::{SaliencySource, SuiteConfig, SuiteKind};
pub use perturbed::{
    completeness_image, continuity_image, original_saliency, perturbed_view, plan_perturbations,
    saliency_box, write_perturbations, PerturbationIndex, PerturbationIndexEntry, PerturbedView,
    PlanFailure, PlannedPerturbation,
};
pub use radar::{
    default_axis, radar_groups, radar_normalize, render_svg, AxisSpec, NormalizationMode,
    RadarSpec, RadarValue,
};
pub use report::{
    aggregate, combine_runs, EntityValue, MetricEntry, MetricReport, ReportBuilder, ReportFormat,
    RunGrouping, RunMetadata, Skip,
};
pub use runner::{run_suite, run_suites};
pub use split::{
    hsv_context_split, stratified_splits, ContextSplit, Fold, HsvSplitConfig, StratifiedSplits,
};
