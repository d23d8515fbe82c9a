use std::io::Write;

use super::{EvalSample, MetricError};

#[derive(Clone, Debug, PartialEq)]
pub struct ConceptRow {
    pub concept: usize,
    pub mse: f64,
    /// MSE of always predicting the training-set mean label.
    pub baseline_mse: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConceptReport {
    pub rows: Vec<ConceptRow>,
    /// `(concept, actual, predicted)` for every valid hour.
    pub pairs: Vec<(usize, f64, f64)>,
}

/// Mean label of every concept over all hours.
pub fn concept_means(samples: &[EvalSample]) -> Result<Vec<f64>, MetricError> {
    let n_c = samples
        .iter()
        .find_map(|s| s.concept_labels.first().map(Vec::len))
        .ok_or(MetricError::Empty)?;
    let mut sum = vec![0.0; n_c];
    let mut n = 0usize;
    for row in samples.iter().flat_map(|s| &s.concept_labels) {
        for (acc, v) in sum.iter_mut().zip(row) {
            *acc += v;
        }
        n += 1;
    }
    Ok(sum.into_iter().map(|s| s / n as f64).collect())
}

/// Per-concept MSE against the labels, next to the MSE of predicting
/// `train_means`.
pub fn concept_regression_report(
    samples: &[EvalSample],
    train_means: &[f64],
) -> Result<ConceptReport, MetricError> {
    let n_c = train_means.len();
    let mut se = vec![0.0; n_c];
    let mut base = vec![0.0; n_c];
    let mut n = 0usize;
    let mut pairs = Vec::new();
    for s in samples {
        for (labels, preds) in s.concept_labels.iter().zip(&s.concept_preds) {
            if labels.len() != n_c || preds.len() != n_c {
                return Err(MetricError::Length {
                    scores: preds.len(),
                    labels: labels.len(),
                });
            }
            for j in 0..n_c {
                se[j] += (preds[j] - labels[j]).powi(2);
                base[j] += (train_means[j] - labels[j]).powi(2);
                pairs.push((j, labels[j], preds[j]));
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(MetricError::Empty);
    }
    Ok(ConceptReport {
        rows: (0..n_c)
            .map(|j| ConceptRow {
                concept: j,
                mse: se[j] / n as f64,
                baseline_mse: base[j] / n as f64,
                n,
            })
            .collect(),
        pairs,
    })
}

pub fn write_concept_pairs(out: &mut impl Write, report: &ConceptReport, names: &[&str]) -> std::io::Result<()> {
    writeln!(out, "concept,actual,predicted")?;
    for (j, a, p) in &report.pairs {
        let name = names.get(*j).copied().unwrap_or("?");
        writeln!(out, "{name},{a},{p}")?;
    }
    Ok(())
}
