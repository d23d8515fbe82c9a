use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::cohort::PatientRecord;

/// Train, validation and test partitions of a cohort.
#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Vec<PatientRecord>,
    pub val: Vec<PatientRecord>,
    pub test: Vec<PatientRecord>,
}

fn allocate(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let a = (n as f64 * fractions[0]).round() as usize;
    let b = ((n as f64 * fractions[1]).round() as usize).min(n - a.min(n));
    let a = a.min(n);
    [a, b, n - a - b]
}

/// Stratified patient-level split. Split sizes are `round(n · f)` for the
/// first two partitions with the remainder going to test; deaths are
/// allocated the same way, so every split's prevalence tracks the cohort's.
/// Records keep their cohort order within each split.
pub fn split_cohort(
    records: &[PatientRecord],
    fractions: [f64; 3],
    seed: u64,
) -> Result<Splits, TrainError> {
    if records.len() < 3 {
        return Err(TrainError::Config(format!(
            "need at least 3 patients to split, got {}",
            records.len()
        )));
    }
    if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(TrainError::Config(format!(
            "split fractions must be non-negative and sum to 1, got {fractions:?}"
        )));
    }
    let mut deaths: Vec<usize> = (0..records.len()).filter(|&i| records[i].died()).collect();
    let mut survivors: Vec<usize> = (0..records.len()).filter(|&i| !records[i].died()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    deaths.shuffle(&mut rng);
    survivors.shuffle(&mut rng);

    let sizes = allocate(records.len(), fractions);
    let mut d_sizes = allocate(deaths.len(), fractions);
    // keep survivors non-negative in every split
    for k in 0..3 {
        while d_sizes[k] > sizes[k] {
            d_sizes[k] -= 1;
            d_sizes[(k + 1) % 3] += 1;
        }
    }
    let mut parts: [Vec<usize>; 3] = Default::default();
    let (mut di, mut si) = (0, 0);
    for k in 0..3 {
        parts[k].extend_from_slice(&deaths[di..di + d_sizes[k]]);
        di += d_sizes[k];
        let s = sizes[k] - d_sizes[k];
        parts[k].extend_from_slice(&survivors[si..si + s]);
        si += s;
    }
    let take = |mut idx: Vec<usize>| {
        idx.sort_unstable();
        idx.into_iter().map(|i| records[i].clone()).collect::<Vec<_>>()
    };
    let [a, b, c] = parts;
    Ok(Splits {
        train: take(a),
        val: take(b),
        test: take(c),
    })
}
