use crate::autodiff::Tensor;
use crate::cohort::PreparedPatient;
use crate::nn::StepMask;

use super::ModelError;

/// Padded mini-batch. Per-step tensors are `[B × d]`; stacked tensors hold
/// row `t·B + b` for hour `t` of patient `b`. Padded cells are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub patient_ids: Vec<u64>,
    pub lengths: Vec<usize>,
    pub steps: StepMask,
    /// Series values with missing cells set to 0.
    pub values: Vec<Tensor>,
    pub masks: Vec<Tensor>,
    /// `[B × d_s]`
    pub statics: Tensor,
    /// `[T·B × N]`
    pub concept_labels: Tensor,
    /// `[T·B × 1]`
    pub mortality_labels: Tensor,
}

impl Batch {
    pub fn from_patients(patients: &[&PreparedPatient]) -> Result<Self, ModelError> {
        let first = patients
            .first()
            .ok_or_else(|| ModelError::Config("empty batch".into()))?;
        let b = patients.len();
        let d_x = first.record.series.features();
        let d_s = first.record.static_features.len();
        let n_c = first.labels.target.first().map_or(0, |r| r.len());
        let lengths: Vec<usize> = patients.iter().map(|p| p.record.los_hours()).collect();
        let t_max = lengths.iter().copied().max().unwrap_or(0);

        let mut statics = Vec::with_capacity(b * d_s);
        for p in patients {
            if !p.record.is_scaled() {
                return Err(ModelError::Config(format!(
                    "patient {} has not been scaled",
                    p.record.patient_id
                )));
            }
            if p.record.series.features() != d_x || p.record.static_features.len() != d_s {
                return Err(ModelError::Config(format!(
                    "patient {} dimensions differ within the batch",
                    p.record.patient_id
                )));
            }
            if p.labels.target.len() != p.record.los_hours() {
                return Err(ModelError::Config(format!(
                    "patient {} has {} label rows for {} hours",
                    p.record.patient_id,
                    p.labels.target.len(),
                    p.record.los_hours()
                )));
            }
            statics.extend_from_slice(&p.record.static_features);
        }

        let mut values = Vec::with_capacity(t_max);
        let mut masks = Vec::with_capacity(t_max);
        let mut concepts = vec![0.0; t_max * b * n_c];
        let mut mortality = vec![0.0; t_max * b];
        for t in 0..t_max {
            let mut v = vec![0.0; b * d_x];
            let mut m = vec![0.0; b * d_x];
            for (i, p) in patients.iter().enumerate() {
                if t >= lengths[i] {
                    continue;
                }
                let s = &p.record.series;
                for f in 0..d_x {
                    if let Some(x) = s.get(t, f) {
                        v[i * d_x + f] = x;
                        m[i * d_x + f] = 1.0;
                    }
                }
                let row = t * b + i;
                concepts[row * n_c..(row + 1) * n_c].copy_from_slice(&p.labels.target[t]);
                mortality[row] = p.labels.mortality[t];
            }
            values.push(Tensor::new(vec![b, d_x], v)?);
            masks.push(Tensor::new(vec![b, d_x], m)?);
        }
        Ok(Self {
            patient_ids: patients.iter().map(|p| p.record.patient_id).collect(),
            steps: StepMask::from_lengths(&lengths),
            lengths,
            values,
            masks,
            statics: Tensor::new(vec![b, d_s], statics)?,
            concept_labels: Tensor::new(vec![t_max * b, n_c], concepts)?,
            mortality_labels: Tensor::new(vec![t_max * b, 1], mortality)?,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.lengths.len()
    }

    pub fn n_steps(&self) -> usize {
        self.values.len()
    }

    /// Validity of each stacked row.
    pub fn valid_rows(&self) -> Vec<bool> {
        (0..self.n_steps())
            .flat_map(|t| self.steps.step(t).iter().copied())
            .collect()
    }

    pub fn n_valid(&self) -> usize {
        self.lengths.iter().sum()
    }
}
