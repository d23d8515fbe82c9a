//! Discrimination metrics, concept fidelity and bootstrap intervals.
//!
//! All discrimination metrics pool timepoints across patients: every valid
//! hour contributes one `(score, label)` pair. Bootstrap resampling draws
//! whole patients.

mod bootstrap;
mod concepts;
mod curves;

pub use bootstrap::{bootstrap_compare, bootstrap_metric, Comparison};
pub use concepts::{concept_means, concept_regression_report, write_concept_pairs, ConceptReport, ConceptRow};
pub use curves::{auprc, auroc, pr_curve, roc_curve, write_curve};

use std::fmt;

use thiserror::Error;

use crate::cohort::PreparedPatient;
use crate::model::ModelOutput;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("{scores} scores but {labels} labels")]
    Length { scores: usize, labels: usize },
    #[error("score {0} is not a number")]
    NonFinite(f64),
    #[error("metric undefined: only one class present")]
    SingleClass,
    #[error("metric undefined: no positive labels")]
    NoPositives,
    #[error("no samples")]
    Empty,
    #[error("model samples do not cover the same patients and outcomes")]
    Unpaired,
    #[error("gave up after {0} single-class bootstrap redraws")]
    Resampling(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Auroc,
    Auprc,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Auroc => "auroc",
            Metric::Auprc => "auprc",
        }
    }

    pub fn compute(self, scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
        match self {
            Metric::Auroc => auroc(scores, labels),
            Metric::Auprc => auprc(scores, labels),
        }
    }
}

/// Predictions and labels of one stay, one entry per valid hour.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSample {
    pub patient_id: u64,
    pub y_true: Vec<bool>,
    pub y_pred: Vec<f64>,
    /// Per-hour concept labels and predictions; empty for the baseline.
    pub concept_labels: Vec<Vec<f64>>,
    pub concept_preds: Vec<Vec<f64>>,
}

impl EvalSample {
    pub fn from_output(output: &ModelOutput, patient: &PreparedPatient) -> Self {
        let t = output.mortality_prob.len();
        let (concept_labels, concept_preds) = match &output.concepts {
            Some(c) => (
                patient.labels.target.iter().map(|r| r.to_vec()).collect(),
                (0..t).map(|i| c.row(i).to_vec()).collect(),
            ),
            None => (Vec::new(), Vec::new()),
        };
        Self {
            patient_id: output.patient_id,
            y_true: patient.labels.mortality.iter().map(|&y| y == 1.0).collect(),
            y_pred: output.mortality_prob.clone(),
            concept_labels,
            concept_preds,
        }
    }
}

/// Pairs outputs with their patients (same order) into samples.
pub fn eval_samples(outputs: &[ModelOutput], patients: &[PreparedPatient]) -> Vec<EvalSample> {
    outputs
        .iter()
        .zip(patients)
        .map(|(o, p)| EvalSample::from_output(o, p))
        .collect()
}

/// Concatenated `(scores, labels)` over all hours of the given samples.
pub fn pooled<'a>(samples: impl IntoIterator<Item = &'a EvalSample>) -> (Vec<f64>, Vec<bool>) {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for s in samples {
        scores.extend_from_slice(&s.y_pred);
        labels.extend_from_slice(&s.y_true);
    }
    (scores, labels)
}

/// Point estimate with a 95% interval.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub name: String,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_resamples: usize,
}

impl MetricReport {
    /// `name,point,lower,upper,n_resamples`
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.name, self.point, self.lower, self.upper, self.n_resamples
        )
    }

    pub fn overlaps(&self, other: &MetricReport) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }
}

impl fmt::Display for MetricReport {
    /// `0.923[0.915-0.947]`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}[{:.3}-{:.3}]", self.point, self.lower, self.upper)
    }
}

#[cfg(test)]
mod tests;
