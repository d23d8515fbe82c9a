//! Synthetic ICU cohorts, rule-based SOFA concept labels and preprocessing.

mod generate;
mod io;
mod labels;
mod scaling;
mod sofa;

pub use generate::{
    generate_cohort, generate_cohort_with_latent, FeatureSpec, GeneratedPatient, GeneratorConfig,
    STATIC_FEATURES,
};
pub use io::{read_cohort, write_cohort, COHORT_FORMAT_VERSION};
pub use labels::{label_record, mortality_labels, scale_scores, window_max, ConceptLabels, HORIZON_HOURS};
pub use scaling::{aggregate_hourly, median, percentile, Measurement, ScalerParams};
pub use sofa::{Direction, Organ, OrganRule, SofaTable, N_ORGANS};

use thiserror::Error;

use crate::autodiff::TensorError;
use crate::imputer::MaskedSeries;

/// Shortest admissible stay.
pub const MIN_STAY_HOURS: usize = 48;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("patient {0} is already scaled")]
    AlreadyScaled(u64),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One ICU stay: static features, an hourly series and the outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct PatientRecord {
    pub patient_id: u64,
    pub static_features: Vec<f64>,
    pub series: MaskedSeries,
    /// Hour of death counted from admission; `None` for survivors.
    pub death_hour: Option<usize>,
    scaled: bool,
}

impl PatientRecord {
    pub fn new(
        patient_id: u64,
        static_features: Vec<f64>,
        series: MaskedSeries,
        death_hour: Option<usize>,
    ) -> Result<Self, CohortError> {
        let los = series.steps();
        if los < MIN_STAY_HOURS {
            return Err(CohortError::Invalid(format!(
                "patient {patient_id}: stay of {los} h is shorter than {MIN_STAY_HOURS} h"
            )));
        }
        if let Some(d) = death_hour {
            if d > los {
                return Err(CohortError::Invalid(format!(
                    "patient {patient_id}: death hour {d} after discharge at {los}"
                )));
            }
        }
        if let Some(x) = static_features.iter().find(|x| !x.is_finite()) {
            return Err(CohortError::Invalid(format!(
                "patient {patient_id}: non-finite static feature {x}"
            )));
        }
        Ok(Self {
            patient_id,
            static_features,
            series,
            death_hour,
            scaled: false,
        })
    }

    pub fn los_hours(&self) -> usize {
        self.series.steps()
    }

    pub fn died(&self) -> bool {
        self.death_hour.is_some()
    }

    pub fn is_scaled(&self) -> bool {
        self.scaled
    }

    pub fn mark_scaled(&mut self) {
        self.scaled = true;
    }
}

/// A scaled record with the labels derived from its raw values.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedPatient {
    pub record: PatientRecord,
    pub labels: ConceptLabels,
}

impl PreparedPatient {
    pub fn new(raw: &PatientRecord, scaler: &ScalerParams, table: &SofaTable) -> Result<Self, CohortError> {
        let labels = label_record(raw, table)?;
        let record = scaler.apply(raw)?;
        Ok(Self { record, labels })
    }
}

/// Labels then scales every record with pre-fitted parameters.
pub fn prepare(
    raw: &[PatientRecord],
    scaler: &ScalerParams,
    table: &SofaTable,
) -> Result<Vec<PreparedPatient>, CohortError> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        raw.par_iter()
            .map(|r| PreparedPatient::new(r, scaler, table))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    raw.iter()
        .map(|r| PreparedPatient::new(r, scaler, table))
        .collect()
}

/// Fraction of non-survivors.
pub fn prevalence(records: &[PatientRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.died()).count() as f64 / records.len() as f64
}
