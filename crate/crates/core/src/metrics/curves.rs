use std::cmp::Ordering;
use std::io::Write;

use super::MetricError;

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::Length {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(MetricError::NonFinite(*s));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

/// Indices ordered by descending score.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    idx
}

/// Cumulative (true positive, false positive) counts after each block of
/// tied scores, walking thresholds from high to low, with the threshold.
fn operating_points(scores: &[f64], labels: &[bool]) -> Vec<(usize, usize, f64)> {
    let idx = descending(scores);
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((tp, fp, s));
    }
    out
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half. Computed from the Mann-Whitney rank sum with
/// midranks for ties.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let mid = (i + 1 + j) as f64 / 2.0;
        let hits = idx[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum += mid * hits as f64;
        i = j;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Area under the precision-recall curve with the precision envelope:
/// each achievable recall level `r` is credited the highest precision
/// attained at any recall `≥ r`, and the curve is a step function between
/// recall levels starting from 0.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    let (pos, _) = check(scores, labels)?;
    if pos == 0 {
        return Err(MetricError::NoPositives);
    }
    let pts = operating_points(scores, labels);
    let pr: Vec<(f64, f64)> = pts
        .iter()
        .map(|&(tp, fp, _)| (tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64))
        .collect();
    // recall is non-decreasing along pts; envelope from the right
    let mut env = vec![0.0; pr.len()];
    let mut best: f64 = 0.0;
    for k in (0..pr.len()).rev() {
        best = best.max(pr[k].1);
        env[k] = best;
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (k, &(r, _)) in pr.iter().enumerate() {
        if r > prev_recall {
            area += (r - prev_recall) * env[k];
            prev_recall = r;
        }
    }
    Ok(area)
}

/// ROC points `(fpr, tpr, threshold)` from (0, 0) to (1, 1).
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64, f64)>, MetricError> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut out = vec![(0.0, 0.0, f64::INFINITY)];
    out.extend(
        operating_points(scores, labels)
            .into_iter()
            .map(|(tp, fp, s)| (fp as f64 / neg as f64, tp as f64 / pos as f64, s)),
    );
    Ok(out)
}

/// Precision-recall points `(recall, precision, threshold)`, one per
/// distinct score.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64, f64)>, MetricError> {
    let (pos, _) = check(scores, labels)?;
    if pos == 0 {
        return Err(MetricError::NoPositives);
    }
    Ok(operating_points(scores, labels)
        .into_iter()
        .map(|(tp, fp, s)| (tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64, s))
        .collect())
}

pub fn write_curve(
    out: &mut impl Write,
    header: &str,
    points: &[(f64, f64, f64)],
) -> std::io::Result<()> {
    writeln!(out, "{header}")?;
    for (x, y, t) in points {
        writeln!(out, "{x},{y},{t}")?;
    }
    Ok(())
}
