//! Exit codes and the JSON error report.

use ers_core::classifier::ClassifierError;
use ers_core::dist::DistError;
use ers_core::metrics::MetricsError;
use ers_core::pipeline::PipelineError;
use ers_core::solver::SolveError;
use ers_core::store::StoreError;
use ers_core::synth::SynthError;
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_LIMIT: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

/// Bad flags, config values or input files.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

/// A solver stopped at a limit; outputs were written but are not proven
/// optimal.
#[derive(Debug)]
pub struct LimitReached(pub String);

impl std::fmt::Display for LimitReached {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for LimitReached {}

#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
}

fn solve_code(e: &SolveError) -> (&'static str, i32) {
    match e {
        SolveError::Timeout(_) | SolveError::NoIncumbent => ("solver_limit", EXIT_LIMIT),
        SolveError::Relaxation(_) => ("internal", EXIT_INTERNAL),
        _ => ("invalid_instance", EXIT_INPUT),
    }
}

fn classifier_code(e: &ClassifierError) -> (&'static str, i32) {
    match e {
        ClassifierError::NoConvergence(_) => ("classifier_no_convergence", EXIT_INTERNAL),
        _ => ("invalid_classifier_input", EXIT_INPUT),
    }
}

/// Classifies an error by the first recognised cause in its chain.
pub fn classify(err: &anyhow::Error) -> ErrorReport {
    let (kind, code) = err
        .chain()
        .find_map(|c| {
            if c.is::<InputError>() {
                Some(("input", EXIT_INPUT))
            } else if c.is::<LimitReached>() {
                Some(("solver_limit", EXIT_LIMIT))
            } else if let Some(e) = c.downcast_ref::<SolveError>() {
                Some(solve_code(e))
            } else if let Some(e) = c.downcast_ref::<ClassifierError>() {
                Some(classifier_code(e))
            } else if let Some(e) = c.downcast_ref::<PipelineError>() {
                Some(match e {
                    PipelineError::Solve(s) => solve_code(s),
                    PipelineError::Classifier(s) => classifier_code(s),
                    PipelineError::Metrics(_) => ("metrics", EXIT_INPUT),
                    _ => ("input", EXIT_INPUT),
                })
            } else if c.is::<StoreError>() {
                Some(("dataset", EXIT_INPUT))
            } else if c.is::<SynthError>() {
                Some(("scenario", EXIT_INPUT))
            } else if c.is::<DistError>() {
                Some(("distribution", EXIT_INPUT))
            } else if c.is::<MetricsError>() {
                Some(("metrics", EXIT_INPUT))
            } else if c.is::<csv::Error>() || c.is::<serde_json::Error>() {
                Some(("input", EXIT_INPUT))
            } else {
                None
            }
        })
        .unwrap_or(("internal", EXIT_INTERNAL));
    ErrorReport {
        kind,
        message: format!("{err:#}"),
        exit_code: code,
    }
}
