use std::fmt::Write as _;
use std::io::Write;

use crate::cohort::{Organ, PreparedPatient};

use super::{ModelError, ModelOutput};

/// Column names of the explanation export.
pub const EXPLANATION_HEADER: &str = "patient_id,hour,y_true,y_pred,\
concept_respiratory,concept_cardiovascular,concept_hepatic,concept_coagulation,concept_renal,concept_neurological,\
label_respiratory,label_cardiovascular,label_hepatic,label_coagulation,label_renal,label_neurological,\
relevance_respiratory,relevance_cardiovascular,relevance_hepatic,relevance_coagulation,relevance_renal,relevance_neurological";

/// One row per (patient, hour): outcome, prediction, the six concept
/// predictions, their labels and the six relevance gates. Values use
/// shortest round-trip formatting.
pub fn write_explanations(
    out: &mut impl Write,
    outputs: &[ModelOutput],
    patients: &[&PreparedPatient],
) -> Result<(), ModelError> {
    writeln!(out, "{EXPLANATION_HEADER}")?;
    let mut line = String::new();
    for (o, p) in outputs.iter().zip(patients) {
        let (Some(c), Some(a)) = (&o.concepts, &o.relevance) else {
            return Err(ModelError::Config("baseline has no explanations".into()));
        };
        if o.patient_id != p.record.patient_id || c.shape()[1] != Organ::ALL.len() {
            return Err(ModelError::Config(format!(
                "explanation for patient {} does not match its record",
                o.patient_id
            )));
        }
        for (t, y_pred) in o.mortality_prob.iter().enumerate() {
            line.clear();
            let _ = write!(line, "{},{t},{},{y_pred}", o.patient_id, p.labels.mortality[t]);
            for v in c.row(t).iter().chain(&p.labels.target[t]).chain(a.row(t)) {
                let _ = write!(line, ",{v}");
            }
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}
