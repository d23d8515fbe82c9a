use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{pooled, EvalSample, Metric, MetricError, MetricReport};
use crate::cohort::percentile;

/// Redraws allowed per resample before giving up.
const MAX_REDRAWS: usize = 1000;

/// Paired bootstrap comparison of two models on the same patients.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub a: MetricReport,
    pub b: MetricReport,
    /// `metric(a) − metric(b)`
    pub delta: MetricReport,
    pub p_value: f64,
    /// Resamples discarded because the metric was undefined on them.
    pub redraws: usize,
}

fn resample_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

/// Metric values of both models on one patient-level resample, redrawing
/// while the metric is undefined.
fn one_resample(
    a: &[EvalSample],
    b: &[EvalSample],
    metric: Metric,
    seed: u64,
    r: usize,
) -> Result<(f64, f64, usize), MetricError> {
    let mut rng = resample_rng(seed, r);
    let n = a.len();
    for redraw in 0..MAX_REDRAWS {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let (sa, la) = pooled(idx.iter().map(|&i| &a[i]));
        match metric.compute(&sa, &la) {
            Ok(ma) => {
                let (sb, lb) = pooled(idx.iter().map(|&i| &b[i]));
                return Ok((ma, metric.compute(&sb, &lb)?, redraw));
            }
            Err(MetricError::SingleClass | MetricError::NoPositives) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(MetricError::Resampling(MAX_REDRAWS))
}

fn interval(values: &mut [f64], point: f64) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let lo = percentile(values, 2.5).unwrap_or(point);
    let hi = percentile(values, 97.5).unwrap_or(point);
    (lo.min(point), hi.max(point))
}

/// Patient-level paired bootstrap. Resample `r` draws from its own random
/// stream derived from `(seed, r)`, so results do not depend on how
/// resamples are scheduled. CIs are 2.5/97.5 percentiles widened, if
/// needed, to contain the point estimate. The p-value is two-sided:
/// twice the smaller fraction of resampled differences on either side of 0.
pub fn bootstrap_compare(
    a: &[EvalSample],
    b: &[EvalSample],
    metric: Metric,
    n_resamples: usize,
    seed: u64,
) -> Result<Comparison, MetricError> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.patient_id != y.patient_id || x.y_true != y.y_true) {
        return Err(MetricError::Unpaired);
    }
    if a.is_empty() || n_resamples == 0 {
        return Err(MetricError::Empty);
    }
    let (sa, la) = pooled(a.iter());
    let (sb, lb) = pooled(b.iter());
    let point_a = metric.compute(&sa, &la)?;
    let point_b = metric.compute(&sb, &lb)?;

    #[cfg(feature = "parallel")]
    let draws: Vec<(f64, f64, usize)> = {
        use rayon::prelude::*;
        (0..n_resamples)
            .into_par_iter()
            .map(|r| one_resample(a, b, metric, seed, r))
            .collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let draws: Vec<(f64, f64, usize)> = (0..n_resamples)
        .map(|r| one_resample(a, b, metric, seed, r))
        .collect::<Result<_, _>>()?;

    let redraws: usize = draws.iter().map(|d| d.2).sum();
    if redraws * 100 > n_resamples {
        log::warn!("{redraws} of {n_resamples} bootstrap resamples were redrawn");
    }
    let mut va: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let mut vb: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let mut vd: Vec<f64> = draws.iter().map(|d| d.0 - d.1).collect();
    let below = vd.iter().filter(|&&d| d <= 0.0).count() as f64 / n_resamples as f64;
    let above = vd.iter().filter(|&&d| d >= 0.0).count() as f64 / n_resamples as f64;
    let p_value = (2.0 * below.min(above)).min(1.0);

    let report = |name: String, point: f64, values: &mut [f64]| {
        let (lower, upper) = interval(values, point);
        MetricReport {
            name,
            point,
            lower,
            upper,
            n_resamples,
        }
    };
    Ok(Comparison {
        a: report(metric.name().into(), point_a, &mut va),
        b: report(metric.name().into(), point_b, &mut vb),
        delta: report(format!("delta_{}", metric.name()), point_a - point_b, &mut vd),
        p_value,
        redraws,
    })
}

/// Bootstrap CI for a single model.
pub fn bootstrap_metric(
    samples: &[EvalSample],
    metric: Metric,
    n_resamples: usize,
    seed: u64,
) -> Result<MetricReport, MetricError> {
    Ok(bootstrap_compare(samples, samples, metric, n_resamples, seed)?.a)
}
