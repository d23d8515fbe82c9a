//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a JSON string so the page needs no generated
//! TypeScript types.

use icu_senn::cohort::{generate_cohort_with_latent, label_record, GeneratorConfig, Organ, SofaTable};
use icu_senn::metrics::{auprc, auroc, pr_curve, roc_curve};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn error(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

fn organ_names() -> Vec<&'static str> {
    Organ::ALL.iter().map(|o| o.name()).collect()
}

/// One synthetic stay: latent organ dysfunction, hourly SOFA sub-scores,
/// the 24-hour-ahead concept targets and the mortality labels.
#[wasm_bindgen]
pub fn simulate_stay(seed: u64, dies: bool) -> String {
    let config = GeneratorConfig {
        n_patients: 1,
        prevalence: if dies { 0.9 } else { 0.1 },
        seed,
        d_series: 12,
        ..GeneratorConfig::default()
    };
    let patient = match generate_cohort_with_latent(&config) {
        Ok(mut v) => v.remove(0),
        Err(e) => return error(e),
    };
    let labels = match label_record(&patient.record, &SofaTable::default()) {
        Ok(l) => l,
        Err(e) => return error(e),
    };
    json!({
        "organs": organ_names(),
        "hours": patient.record.los_hours(),
        "died": patient.record.died(),
        "latent": patient.latent,
        "sofa": labels.sofa_raw,
        "target": labels.target,
        "mortality": labels.mortality,
    })
    .to_string()
}

/// `sigmoid(Σ relevance_j · concept_j)` with the per-concept contributions.
#[wasm_bindgen]
pub fn recombine(concepts: &[f64], relevance: &[f64]) -> String {
    if concepts.len() != relevance.len() {
        return error(format!(
            "{} concepts but {} relevance scores",
            concepts.len(),
            relevance.len()
        ));
    }
    let contributions: Vec<f64> = concepts.iter().zip(relevance).map(|(c, a)| c * a).collect();
    let logit: f64 = contributions.iter().sum();
    json!({
        "contributions": contributions,
        "logit": logit,
        "probability": 1.0 / (1.0 + (-logit).exp()),
    })
    .to_string()
}

fn curve_points(points: &[(f64, f64, f64)]) -> Value {
    Value::Array(points.iter().map(|&(x, y, _)| json!([x, y])).collect())
}

/// AUROC, AUPRC and both curves for the given scores and 0/1 labels.
#[wasm_bindgen]
pub fn curves(scores: &[f64], labels: &[u8]) -> String {
    let labels: Vec<bool> = labels.iter().map(|&l| l != 0).collect();
    let result = (|| {
        Ok::<_, icu_senn::metrics::MetricError>(json!({
            "auroc": auroc(scores, &labels)?,
            "auprc": auprc(scores, &labels)?,
            "roc": curve_points(&roc_curve(scores, &labels)?),
            "pr": curve_points(&pr_curve(scores, &labels)?),
        }))
    })();
    match result {
        Ok(v) => v.to_string(),
        Err(e) => error(e),
    }
}
