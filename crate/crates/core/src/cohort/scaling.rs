//! Outlier clipping and robust standardization of time-series features.
//!
//! Parameters are fitted on the training split only: values are clipped to
//! the 1st/99th percentiles, then centred on the median and divided by the
//! interquartile range of the clipped values.

use std::fmt::Write as _;

use super::{CohortError, PatientRecord};

/// Linear-interpolation percentile of sorted data (`q` in `[0, 100]`):
/// rank `q/100 · (n − 1)` interpolated between neighbouring order
/// statistics.
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Median of the values, `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile(&v, 50.0)
}

/// One raw measurement, timestamped in fractional hours since admission.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub time_hours: f64,
    pub feature: usize,
    pub value: f64,
}

/// Buckets measurements into `steps` hourly cells per feature; repeated
/// values within an hour are reduced by their median. Measurements outside
/// `[0, steps)` hours are dropped.
pub fn aggregate_hourly(
    measurements: &[Measurement],
    steps: usize,
    features: usize,
) -> Vec<Vec<Option<f64>>> {
    let mut buckets: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); features]; steps];
    for m in measurements {
        if m.time_hours < 0.0 || m.feature >= features || !m.value.is_finite() {
            continue;
        }
        let h = m.time_hours.floor() as usize;
        if h < steps {
            buckets[h][m.feature].push(m.value);
        }
    }
    buckets
        .into_iter()
        .map(|row| row.iter().map(|vals| median(vals)).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalerParams {
    pub p01: Vec<f64>,
    pub p99: Vec<f64>,
    pub median: Vec<f64>,
    pub iqr: Vec<f64>,
    /// Features whose IQR was degenerate and replaced by 1.
    pub degenerate: Vec<usize>,
}

impl ScalerParams {
    pub fn fit(train: &[PatientRecord]) -> Result<Self, CohortError> {
        let first = train
            .first()
            .ok_or_else(|| CohortError::Invalid("cannot fit scalers on an empty training set".into()))?;
        let d = first.series.features();
        let mut params = Self {
            p01: Vec::with_capacity(d),
            p99: Vec::with_capacity(d),
            median: Vec::with_capacity(d),
            iqr: Vec::with_capacity(d),
            degenerate: Vec::new(),
        };
        let mut column = Vec::new();
        for f in 0..d {
            column.clear();
            for r in train {
                if r.is_scaled() {
                    return Err(CohortError::Invalid(format!(
                        "patient {} is already scaled",
                        r.patient_id
                    )));
                }
                if r.series.features() != d {
                    return Err(CohortError::Invalid(format!(
                        "patient {} has {} features, expected {d}",
                        r.patient_id,
                        r.series.features()
                    )));
                }
                column.extend((0..r.series.steps()).filter_map(|t| r.series.get(t, f)));
            }
            column.sort_by(f64::total_cmp);
            let lo = percentile(&column, 1.0).unwrap_or(0.0);
            let hi = percentile(&column, 99.0).unwrap_or(0.0);
            // clipping is monotone, so the clipped column stays sorted
            column.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
            let med = percentile(&column, 50.0).unwrap_or(0.0);
            let q1 = percentile(&column, 25.0).unwrap_or(0.0);
            let q3 = percentile(&column, 75.0).unwrap_or(0.0);
            let mut iqr = q3 - q1;
            if !(iqr > 0.0) {
                log::warn!("feature {f}: interquartile range is {iqr}, using 1");
                params.degenerate.push(f);
                iqr = 1.0;
            }
            params.p01.push(lo);
            params.p99.push(hi);
            params.median.push(med);
            params.iqr.push(iqr);
        }
        Ok(params)
    }

    pub fn features(&self) -> usize {
        self.median.len()
    }

    pub fn scale_value(&self, feature: usize, x: f64) -> f64 {
        (x.clamp(self.p01[feature], self.p99[feature]) - self.median[feature]) / self.iqr[feature]
    }

    /// Inverse of [`ScalerParams::scale_value`] for values inside the clip
    /// range.
    pub fn unscale_value(&self, feature: usize, z: f64) -> f64 {
        z * self.iqr[feature] + self.median[feature]
    }

    /// Returns a scaled copy. A record may be scaled once only.
    pub fn apply(&self, record: &PatientRecord) -> Result<PatientRecord, CohortError> {
        if record.is_scaled() {
            return Err(CohortError::AlreadyScaled(record.patient_id));
        }
        let d = record.series.features();
        if d != self.features() {
            return Err(CohortError::Invalid(format!(
                "patient {} has {d} features, scalers were fitted on {}",
                record.patient_id,
                self.features()
            )));
        }
        let mut out = record.clone();
        for t in 0..record.series.steps() {
            for f in 0..d {
                if let Some(x) = record.series.get(t, f) {
                    out.series.set(t, f, Some(self.scale_value(f, x)));
                }
            }
        }
        out.mark_scaled();
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("feature,p01,p99,median,iqr\n");
        for f in 0..self.features() {
            let _ = writeln!(
                s,
                "{f},{},{},{},{}",
                self.p01[f], self.p99[f], self.median[f], self.iqr[f]
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, CohortError> {
        let mut p = Self {
            p01: vec![],
            p99: vec![],
            median: vec![],
            iqr: vec![],
            degenerate: vec![],
        };
        for (i, line) in text.lines().skip(1).filter(|l| !l.trim().is_empty()).enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            let num = |k: usize| -> Result<f64, CohortError> {
                fields
                    .get(k)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| CohortError::Parse(format!("scaler line {}: {line:?}", i + 2)))
            };
            if fields.len() != 5 || num(0)? as usize != i {
                return Err(CohortError::Parse(format!("scaler line {}: {line:?}", i + 2)));
            }
            p.p01.push(num(1)?);
            p.p99.push(num(2)?);
            p.median.push(num(3)?);
            p.iqr.push(num(4)?);
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imputer::MaskedSeries;

    fn record(id: u64, column: &[f64]) -> PatientRecord {
        let mut raw: Vec<Vec<Option<f64>>> = column.iter().map(|&v| vec![Some(v)]).collect();
        while raw.len() < 48 {
            raw.push(vec![None]);
        }
        PatientRecord::new(id, vec![], MaskedSeries::build(&raw).unwrap(), None).unwrap()
    }

    fn reference_percentile(values: &[f64], q: f64) -> f64 {
        // direct definition: position q/100·(n−1) between order statistics
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let pos = q / 100.0 * (v.len() as f64 - 1.0);
        let i = pos as usize;
        if i + 1 >= v.len() {
            return v[v.len() - 1];
        }
        v[i] * (1.0 - (pos - i as f64)) + v[i + 1] * (pos - i as f64)
    }

    #[test]
    fn clip_bounds_for_one_to_hundred() {
        let vals: Vec<f64> = (1..=100).map(f64::from).collect();
        let p = ScalerParams::fit(&[record(0, &vals[..48]), record(1, &vals[48..96]), record(2, &vals[96..])]).unwrap();
        assert!((p.p01[0] - 1.99).abs() < 1e-12, "{}", p.p01[0]);
        assert!((p.p99[0] - 99.01).abs() < 1e-12, "{}", p.p99[0]);
        assert!((p.p01[0] - reference_percentile(&vals, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn constant_feature_scales_to_zero() {
        let p = ScalerParams::fit(&[record(0, &[3.0; 48])]).unwrap();
        assert_eq!(p.iqr[0], 1.0);
        assert_eq!(p.degenerate, vec![0]);
        let s = p.apply(&record(0, &[3.0; 48])).unwrap();
        assert!((0..48).all(|t| s.series.get(t, 0) == Some(0.0)));
    }

    #[test]
    fn applying_twice_is_forbidden() {
        let r = record(0, &[1.0, 2.0, 3.0, 4.0]);
        let p = ScalerParams::fit(std::slice::from_ref(&r)).unwrap();
        let once = p.apply(&r).unwrap();
        assert!(once.is_scaled());
        assert!(matches!(p.apply(&once), Err(CohortError::AlreadyScaled(0))));
    }

    #[test]
    fn empty_training_set_is_an_error() {
        assert!(ScalerParams::fit(&[]).is_err());
    }

    #[test]
    fn unscale_recovers_clipped_values() {
        let vals: Vec<f64> = (0..48).map(|i| (i as f64 * 0.37).sin() * 10.0 + if i == 5 { 500.0 } else { 0.0 }).collect();
        let r = record(0, &vals);
        let p = ScalerParams::fit(std::slice::from_ref(&r)).unwrap();
        for &x in &vals {
            let clipped = x.clamp(p.p01[0], p.p99[0]);
            let back = p.unscale_value(0, p.scale_value(0, x));
            assert!((back - clipped).abs() < 1e-12);
        }
    }

    #[test]
    fn refit_with_test_data_changes_parameters() {
        let train = record(0, &(0..48).map(f64::from).collect::<Vec<_>>());
        let test = record(1, &(100..148).map(f64::from).collect::<Vec<_>>());
        let a = ScalerParams::fit(std::slice::from_ref(&train)).unwrap();
        let b = ScalerParams::fit(&[train, test]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn hourly_median_aggregation() {
        let ms = [
            Measurement { time_hours: 0.1, feature: 0, value: 5.0 },
            Measurement { time_hours: 0.5, feature: 0, value: 1.0 },
            Measurement { time_hours: 0.9, feature: 0, value: 3.0 },
            Measurement { time_hours: 1.2, feature: 1, value: 2.0 },
            Measurement { time_hours: 1.7, feature: 1, value: 4.0 },
            Measurement { time_hours: 9.0, feature: 1, value: 4.0 },
        ];
        let grid = aggregate_hourly(&ms, 3, 2);
        assert_eq!(grid[0], vec![Some(3.0), None]);
        assert_eq!(grid[1], vec![None, Some(3.0)]);
        assert_eq!(grid[2], vec![None, None]);
    }

    #[test]
    fn text_round_trip() {
        let vals: Vec<f64> = (0..48).map(|i| (i as f64).sqrt()).collect();
        let p = ScalerParams::fit(&[record(0, &vals)]).unwrap();
        let back = ScalerParams::parse(&p.to_text()).unwrap();
        assert_eq!(back.p01, p.p01);
        assert_eq!(back.iqr, p.iqr);
    }

    proptest::proptest! {
        #[test]
        fn unscale_recovers_clipped_value(
            column in proptest::collection::vec(-1e3f64..1e3, 4..48),
            x in -2e3f64..2e3,
        ) {
            let p = ScalerParams::fit(&[record(1, &column)]).unwrap();
            let clipped = x.clamp(p.p01[0], p.p99[0]);
            let back = p.unscale_value(0, p.scale_value(0, x));
            proptest::prop_assert!((back - clipped).abs() <= 1e-12 * clipped.abs().max(1.0));
        }
    }
}
