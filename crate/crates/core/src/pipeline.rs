//! End-to-end steps shared by the command-line tool and the tests: split a
//! raw cohort, fit scalers on the training part, train a model and collect
//! evaluation samples.

use thiserror::Error;

use crate::cohort::{prepare, CohortError, N_ORGANS, PatientRecord, PreparedPatient, ScalerParams, SofaTable};
use crate::metrics::{eval_samples, EvalSample};
use crate::model::{Model, ModelConfig, ModelError, ModelKind};
use crate::trainer::{split_cohort, train, EpochRecord, TrainConfig, TrainError, TrainOutcome};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Scaled and labelled splits with the scaler fitted on the training split.
#[derive(Clone, Debug)]
pub struct PreparedCohort {
    pub scaler: ScalerParams,
    pub train: Vec<PreparedPatient>,
    pub val: Vec<PreparedPatient>,
    pub test: Vec<PreparedPatient>,
    pub d_series: usize,
    pub d_static: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            _ => Err(format!("unknown split {s:?} (expected train, val or test)")),
        }
    }
}

impl PreparedCohort {
    pub fn split(&self, name: SplitName) -> &[PreparedPatient] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }
}

/// Splits with `seed`, fits the scaler on the training records and
/// prepares all three splits.
pub fn prepare_cohort(
    records: &[PatientRecord],
    fractions: [f64; 3],
    seed: u64,
) -> Result<PreparedCohort, PipelineError> {
    let first = records
        .first()
        .ok_or_else(|| CohortError::Invalid("empty cohort".into()))?;
    let splits = split_cohort(records, fractions, seed)?;
    let scaler = ScalerParams::fit(&splits.train)?;
    prepare_with(&scaler, &splits.train, &splits.val, &splits.test, first)
}

/// Re-creates the splits of [`prepare_cohort`] with an already fitted
/// scaler, as stored in a checkpoint.
pub fn prepare_cohort_with_scaler(
    records: &[PatientRecord],
    fractions: [f64; 3],
    seed: u64,
    scaler: &ScalerParams,
) -> Result<PreparedCohort, PipelineError> {
    let first = records
        .first()
        .ok_or_else(|| CohortError::Invalid("empty cohort".into()))?;
    if scaler.features() != first.series.features() {
        return Err(CohortError::Invalid(format!(
            "scaler has {} features, cohort has {}",
            scaler.features(),
            first.series.features()
        ))
        .into());
    }
    let splits = split_cohort(records, fractions, seed)?;
    prepare_with(scaler, &splits.train, &splits.val, &splits.test, first)
}

fn prepare_with(
    scaler: &ScalerParams,
    train: &[PatientRecord],
    val: &[PatientRecord],
    test: &[PatientRecord],
    first: &PatientRecord,
) -> Result<PreparedCohort, PipelineError> {
    let table = SofaTable::default();
    Ok(PreparedCohort {
        scaler: scaler.clone(),
        train: prepare(train, scaler, &table)?,
        val: prepare(val, scaler, &table)?,
        test: prepare(test, scaler, &table)?,
        d_series: first.series.features(),
        d_static: first.static_features.len(),
    })
}

/// `base` with input widths taken from the cohort.
pub fn model_config_for(base: &ModelConfig, kind: ModelKind, cohort: &PreparedCohort) -> ModelConfig {
    ModelConfig {
        kind,
        d_series: cohort.d_series,
        d_static: cohort.d_static,
        ..base.clone()
    }
}

pub fn train_model(
    config: ModelConfig,
    cohort: &PreparedCohort,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome, PipelineError> {
    let model = Model::new(config)?;
    Ok(train(model, &cohort.train, &cohort.val, cfg, on_epoch)?)
}

/// Eval-mode predictions turned into metric samples.
pub fn evaluate_samples(model: &Model, patients: &[PreparedPatient]) -> Result<Vec<EvalSample>, PipelineError> {
    let outputs = model.predict(patients, 256)?;
    Ok(eval_samples(&outputs, patients))
}

/// Mean concept label per organ over all hours of `patients`.
pub fn concept_label_means(patients: &[PreparedPatient]) -> Vec<f64> {
    let mut sum = [0.0; N_ORGANS];
    let mut n = 0usize;
    for row in patients.iter().flat_map(|p| &p.labels.target) {
        for (acc, v) in sum.iter_mut().zip(row) {
            *acc += v;
        }
        n += 1;
    }
    sum.iter().map(|s| s / n.max(1) as f64).collect()
}
