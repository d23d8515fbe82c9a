use super::sofa::{SofaTable, N_ORGANS};
use super::{CohortError, PatientRecord};

/// Hours ahead covered by both the concept target window and the mortality
/// label.
pub const HORIZON_HOURS: usize = 24;

/// Supervision targets for one stay, one row per hour.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptLabels {
    pub sofa_raw: Vec<[u8; N_ORGANS]>,
    /// `sofa_raw / 4`
    pub sofa_scaled: Vec<[f64; N_ORGANS]>,
    /// Per-organ max of `sofa_scaled` over hours `(t, t + 24]`, truncated at
    /// the last hour of the stay.
    pub target: Vec<[f64; N_ORGANS]>,
    /// 1 when death falls in `(t, t + 24]`.
    pub mortality: Vec<f64>,
}

pub fn scale_scores(raw: &[[u8; N_ORGANS]]) -> Vec<[f64; N_ORGANS]> {
    raw.iter().map(|r| r.map(|s| f64::from(s) / 4.0)).collect()
}

/// Forward-looking window max. The final hour has an empty window and takes
/// its own value.
pub fn window_max(scaled: &[[f64; N_ORGANS]], horizon: usize) -> Vec<[f64; N_ORGANS]> {
    let n = scaled.len();
    (0..n)
        .map(|t| {
            let end = (t + horizon).min(n.saturating_sub(1));
            if end <= t {
                return scaled[t];
            }
            let mut m = [f64::NEG_INFINITY; N_ORGANS];
            for row in &scaled[t + 1..=end] {
                for (acc, v) in m.iter_mut().zip(row) {
                    *acc = acc.max(*v);
                }
            }
            m
        })
        .collect()
}

pub fn mortality_labels(steps: usize, death_hour: Option<usize>, horizon: usize) -> Vec<f64> {
    (0..steps)
        .map(|t| match death_hour {
            Some(d) if d > t && d <= t + horizon => 1.0,
            _ => 0.0,
        })
        .collect()
}

/// Derives concept and mortality targets from the raw (unscaled) series.
pub fn label_record(record: &PatientRecord, table: &SofaTable) -> Result<ConceptLabels, CohortError> {
    if record.is_scaled() {
        return Err(CohortError::Invalid(format!(
            "patient {}: labels must be computed from raw values",
            record.patient_id
        )));
    }
    let sofa_raw = table.score_series(&record.series)?;
    let sofa_scaled = scale_scores(&sofa_raw);
    let target = window_max(&sofa_scaled, HORIZON_HOURS);
    let mortality = mortality_labels(record.los_hours(), record.death_hour, HORIZON_HOURS);
    Ok(ConceptLabels {
        sofa_raw,
        sofa_scaled,
        target,
        mortality,
    })
}
