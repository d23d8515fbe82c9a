//! Synthetic cohort generator.
//!
//! Every stay carries six latent organ-dysfunction trajectories in `[0, 1]`
//! (0 = healthy, 1 = failure), one per SOFA organ system. Each is a
//! mean-reverting random walk around a patient-specific baseline.
//! Most non-survivors deteriorate in two to four organs over the 28–40
//! hours before death; the rest die without warning signs. About a third of
//! survivors go through one transient episode in a single organ.
//!
//! Observed time-series features are noisy affine functions of the latent
//! state of one organ. Columns 0–5 are the SOFA marker features in organ
//! order, with physiological scales chosen so the default [`SofaTable`]
//! spans its full 0–4 range as the latent state goes from 0 to 1. Every
//! further column `f` is assigned to organ `(f − 6) mod 6`; its offset, gain,
//! noise and missingness come from a table drawn once from a fixed seed (see
//! [`FeatureSpec::table`]). Each observed hour holds one to three
//! measurements at random times within the hour, reduced by their median.
//!
//! Static features (24): age / 100, sex (2, one-hot), race (5, one-hot),
//! admission type (4, one-hot), twelve comorbidity flags.
//!
//! [`SofaTable`]: super::SofaTable

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::scaling::{aggregate_hourly, Measurement};
use super::sofa::{Organ, N_ORGANS};
use super::{CohortError, PatientRecord, MIN_STAY_HOURS};
use crate::imputer::MaskedSeries;

pub const STATIC_FEATURES: usize = 24;
const N_COMORBIDITIES: usize = 12;
const FEATURE_TABLE_SEED: u64 = 0x5EED_F00D;
/// Share of non-survivors who die without preceding organ deterioration.
const SUDDEN_DEATH_RATE: f64 = 0.15;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub n_patients: usize,
    pub prevalence: f64,
    pub seed: u64,
    pub d_series: usize,
    pub min_los: usize,
    pub max_los: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_patients: 2000,
            prevalence: 0.089,
            seed: 1,
            d_series: 87,
            min_los: MIN_STAY_HOURS,
            max_los: 72,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), CohortError> {
        let bad = |m: String| Err(CohortError::Invalid(m));
        if self.n_patients == 0 {
            return bad("n_patients must be at least 1".into());
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return bad(format!("prevalence must lie in (0, 1), got {}", self.prevalence));
        }
        if self.d_series < N_ORGANS {
            return bad(format!("d_series must be at least {N_ORGANS}, got {}", self.d_series));
        }
        if self.min_los < MIN_STAY_HOURS || self.max_los < self.min_los {
            return bad(format!(
                "stay lengths must satisfy {MIN_STAY_HOURS} <= min_los <= max_los, got {}..{}",
                self.min_los, self.max_los
            ));
        }
        Ok(())
    }
}

/// How one observed feature depends on the latent organ state.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub organ: Organ,
    pub offset: f64,
    pub gain: f64,
    pub noise_sd: f64,
    pub missing_rate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl FeatureSpec {
    pub fn sample(&self, z: f64, rng: &mut impl Rng) -> f64 {
        let e: f64 = StandardNormal.sample(rng);
        (self.offset + self.gain * z + self.noise_sd * e).clamp(self.lower, self.upper)
    }

    /// The fixed feature table for `d_series` columns.
    pub fn table(d_series: usize) -> Vec<FeatureSpec> {
        let marker = |name: &str, organ, healthy: f64, failed: f64, noise, lower, upper| FeatureSpec {
            name: name.to_string(),
            organ,
            offset: healthy,
            gain: failed - healthy,
            noise_sd: noise,
            missing_rate: 0.0,
            lower,
            upper,
        };
        let mut specs = vec![
            marker("pao2_fio2", Organ::Respiratory, 470.0, 60.0, 15.0, 20.0, 700.0),
            marker("vasopressor_dose", Organ::Cardiovascular, -0.06, 0.3, 0.01, 0.0, 1.0),
            marker("bilirubin", Organ::Hepatic, 0.4, 13.5, 0.3, 0.1, 40.0),
            marker("platelets", Organ::Coagulation, 300.0, 5.0, 10.0, 1.0, 900.0),
            marker("creatinine", Organ::Renal, 0.7, 5.8, 0.12, 0.1, 20.0),
            marker("gcs", Organ::Neurological, 15.6, 2.8, 0.4, 3.0, 15.0),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(FEATURE_TABLE_SEED);
        for s in specs.iter_mut() {
            s.missing_rate = rng.random_range(0.1..0.3);
        }
        for f in N_ORGANS..d_series {
            let scale = 10f64.powf(rng.random_range(-1.0..2.0));
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let offset = scale * rng.random_range(1.0..5.0);
            specs.push(FeatureSpec {
                name: format!("x{f:02}"),
                organ: Organ::ALL[(f - N_ORGANS) % N_ORGANS],
                offset,
                gain: sign * scale * rng.random_range(0.5..2.0),
                noise_sd: scale * rng.random_range(0.1..0.4),
                missing_rate: rng.random_range(0.1..0.9),
                lower: f64::NEG_INFINITY,
                upper: f64::INFINITY,
            });
        }
        specs.truncate(d_series);
        specs
    }
}

/// A generated stay together with its hidden organ states.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedPatient {
    pub record: PatientRecord,
    pub latent: Vec<[f64; N_ORGANS]>,
}

pub fn generate_cohort(config: &GeneratorConfig) -> Result<Vec<PatientRecord>, CohortError> {
    Ok(generate_cohort_with_latent(config)?
        .into_iter()
        .map(|p| p.record)
        .collect())
}

/// Generates `n_patients` stays with ids `1..=n`. Exactly
/// `round(n · prevalence)` of them die; which ones is a seeded shuffle.
/// Patient `id` draws from its own random stream, so the result does not
/// depend on thread scheduling.
pub fn generate_cohort_with_latent(
    config: &GeneratorConfig,
) -> Result<Vec<GeneratedPatient>, CohortError> {
    config.validate()?;
    let n = config.n_patients;
    let deaths = (n as f64 * config.prevalence).round() as usize;
    let mut outcomes: Vec<bool> = (0..n).map(|i| i < deaths).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    outcomes.shuffle(&mut rng);
    let specs = FeatureSpec::table(config.d_series);
    let jobs: Vec<(u64, bool)> = outcomes
        .into_iter()
        .enumerate()
        .map(|(i, d)| (i as u64 + 1, d))
        .collect();

    #[cfg(feature = "parallel")]
    let patients = {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(id, dies)| generate_patient(config, &specs, id, dies))
            .collect::<Result<Vec<_>, _>>()
    };
    #[cfg(not(feature = "parallel"))]
    let patients = jobs
        .iter()
        .map(|&(id, dies)| generate_patient(config, &specs, id, dies))
        .collect::<Result<Vec<_>, _>>();
    patients
}

fn patient_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn one_hot(out: &mut Vec<f64>, k: usize, n: usize) {
    out.extend((0..n).map(|i| if i == k { 1.0 } else { 0.0 }));
}

fn pick(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let mut u = rng.random::<f64>() * weights.iter().sum::<f64>();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn static_features(rng: &mut impl Rng, dies: bool) -> Vec<f64> {
    let mut s = Vec::with_capacity(STATIC_FEATURES);
    let age = if dies {
        Normal::new(70.0_f64, 13.0)
    } else {
        Normal::new(62.0, 16.0)
    }
    .expect("valid sd")
    .sample(rng)
    .clamp(18.0, 95.0);
    s.push(age / 100.0);
    one_hot(&mut s, usize::from(rng.random_bool(0.44)), 2);
    one_hot(&mut s, pick(rng, &[0.65, 0.12, 0.06, 0.04, 0.13]), 5);
    one_hot(&mut s, pick(rng, &[0.5, 0.25, 0.15, 0.1]), 4);
    let risk = if dies { 1.6 } else { 1.0 };
    for c in 0..N_COMORBIDITIES {
        let p = (0.05 + 0.02 * c as f64) * risk;
        s.push(if rng.random_bool(p.min(0.95)) { 1.0 } else { 0.0 });
    }
    s
}

/// Per-hour attractor of each organ's random walk.
fn latent_targets(rng: &mut impl Rng, los: usize, dies: bool) -> Vec<[f64; N_ORGANS]> {
    let mut baseline = [0.0; N_ORGANS];
    for b in baseline.iter_mut() {
        let u: f64 = rng.random();
        *b = 0.03 + 0.3 * u * u;
    }
    let mut targets = vec![baseline; los];
    let mut organs: Vec<usize> = (0..N_ORGANS).collect();
    organs.shuffle(rng);
    if dies && !rng.random_bool(SUDDEN_DEATH_RATE) {
        let k = rng.random_range(2..=4);
        let lead = rng.random_range(28..=40).min(los);
        let onset = los - lead;
        for &o in &organs[..k] {
            let peak = rng.random_range(0.75..1.0);
            for (t, row) in targets.iter_mut().enumerate().skip(onset) {
                let frac = (t + 1 - onset) as f64 / lead as f64;
                row[o] = baseline[o] + (peak - baseline[o]) * frac;
            }
        }
    } else if !dies && rng.random_bool(0.35) {
        let o = organs[0];
        let width = rng.random_range(6..=16);
        let start = rng.random_range(0..los - width);
        let peak = rng.random_range(0.4..0.7);
        let half = width as f64 / 2.0;
        for (i, row) in targets[start..start + width].iter_mut().enumerate() {
            let bump = 1.0 - ((i as f64 + 0.5) - half).abs() / half;
            row[o] = baseline[o] + (peak - baseline[o]) * bump;
        }
    }
    targets
}

fn generate_patient(
    config: &GeneratorConfig,
    specs: &[FeatureSpec],
    id: u64,
    dies: bool,
) -> Result<GeneratedPatient, CohortError> {
    let mut rng = patient_rng(config.seed, id);
    let los = rng.random_range(config.min_los..=config.max_los);
    let static_features = static_features(&mut rng, dies);
    let targets = latent_targets(&mut rng, los, dies);

    let mut latent = Vec::with_capacity(los);
    let mut z = [0.0; N_ORGANS];
    for (t, target) in targets.iter().enumerate() {
        for o in 0..N_ORGANS {
            let e: f64 = StandardNormal.sample(&mut rng);
            z[o] = if t == 0 {
                target[o] + 0.03 * e
            } else {
                z[o] + 0.3 * (target[o] - z[o]) + 0.03 * e
            }
            .clamp(0.0, 1.0);
        }
        latent.push(z);
    }

    let mut measurements = Vec::new();
    for (t, z) in latent.iter().enumerate() {
        for (f, spec) in specs.iter().enumerate() {
            if rng.random_bool(spec.missing_rate) {
                continue;
            }
            let k = rng.random_range(1..=3);
            for _ in 0..k {
                let time_hours = t as f64 + rng.random::<f64>();
                let value = spec.sample(z[spec.organ.index()], &mut rng);
                measurements.push(Measurement {
                    time_hours,
                    feature: f,
                    value,
                });
            }
        }
    }
    let grid = aggregate_hourly(&measurements, los, specs.len());
    let series = MaskedSeries::build(&grid)?;
    let record = PatientRecord::new(id, static_features, series, dies.then_some(los))?;
    Ok(GeneratedPatient { record, latent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{label_record, prevalence, SofaTable};

    fn small(n: usize, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            n_patients: n,
            seed,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for p in [0.0, 1.0, -0.1, f64::NAN] {
            let c = GeneratorConfig {
                prevalence: p,
                ..small(10, 1)
            };
            assert!(generate_cohort(&c).is_err(), "prevalence {p}");
        }
        assert!(generate_cohort(&small(0, 1)).is_err());
    }

    #[test]
    fn stays_are_long_enough_and_shaped() {
        let cohort = generate_cohort(&small(60, 3)).unwrap();
        for r in &cohort {
            assert!(r.los_hours() >= 48 && r.los_hours() <= 72);
            assert_eq!(r.series.features(), 87);
            assert_eq!(r.static_features.len(), STATIC_FEATURES);
            assert!(r.death_hour.is_none_or(|d| d <= r.los_hours()));
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate_cohort(&small(25, 9)).unwrap();
        let b = generate_cohort(&small(25, 9)).unwrap();
        // NaN sentinels defeat PartialEq, so compare bit patterns
        for (x, y) in a.iter().zip(&b) {
            let bits = |r: &PatientRecord| -> Vec<u64> {
                r.series.values.data().iter().map(|v| v.to_bits()).collect()
            };
            assert_eq!(bits(x), bits(y));
            assert_eq!(x.series.mask, y.series.mask);
            assert_eq!(x.static_features, y.static_features);
            assert_eq!(x.death_hour, y.death_hour);
        }
        let c = generate_cohort(&small(25, 10)).unwrap();
        assert_ne!(a[0].series.mask, c[0].series.mask);
    }

    #[test]
    fn exact_death_count() {
        let cohort = generate_cohort(&small(200, 5)).unwrap();
        assert_eq!(cohort.iter().filter(|r| r.died()).count(), 18);
        assert!((prevalence(&cohort) - 0.09).abs() < 1e-12);
    }

    #[test]
    fn missingness_rates_are_within_bounds() {
        for s in FeatureSpec::table(87) {
            assert!((0.1..=0.9).contains(&s.missing_rate), "{}", s.name);
        }
        let cohort = generate_cohort(&small(40, 2)).unwrap();
        let cells: usize = cohort.iter().map(|r| r.los_hours() * 87).sum();
        let observed: usize = cohort.iter().map(|r| r.series.n_observed()).sum();
        let frac = 1.0 - observed as f64 / cells as f64;
        assert!(frac > 0.1 && frac < 0.9, "{frac}");
    }

    #[test]
    fn deterioration_precedes_death() {
        let cohort = generate_cohort_with_latent(&GeneratorConfig {
            prevalence: 0.3,
            ..small(100, 4)
        })
        .unwrap();
        let mut pre_death = Vec::new();
        let mut survivors = Vec::new();
        for p in &cohort {
            let mean = |rows: &[[f64; 6]]| {
                rows.iter().flatten().sum::<f64>() / (rows.len() * N_ORGANS) as f64
            };
            match p.record.death_hour {
                Some(d) => pre_death.push(mean(&p.latent[d - 24..d])),
                None => survivors.push(mean(&p.latent)),
            }
        }
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(avg(&pre_death) > avg(&survivors) + 0.1);
    }

    #[test]
    fn concept_labels_use_the_full_score_range() {
        let cohort = generate_cohort(&GeneratorConfig {
            prevalence: 0.3,
            ..small(80, 6)
        })
        .unwrap();
        let table = SofaTable::default();
        let mut seen = [[false; 5]; N_ORGANS];
        for r in &cohort {
            for row in label_record(r, &table).unwrap().sofa_raw {
                for (j, s) in row.iter().enumerate() {
                    seen[j][*s as usize] = true;
                }
            }
        }
        for (j, s) in seen.iter().enumerate() {
            assert!(s.iter().all(|&b| b), "organ {j}: {s:?}");
        }
    }
}
