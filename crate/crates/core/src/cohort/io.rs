//! Plain-text cohort files.
//!
//! ```text
//! # icu-senn cohort v1
//! # static=24 series=87 patients=2000
//! P,<id>,<los_hours>,<death_hour or empty>,<static_1>,...,<static_24>
//! 0,<v_1>,...,<v_87>          (one line per hour, empty field = missing)
//! ...
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces the records bit for bit.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::{CohortError, PatientRecord};
use crate::imputer::MaskedSeries;

pub const COHORT_FORMAT_VERSION: u32 = 1;

pub fn write_cohort(out: &mut impl Write, records: &[PatientRecord]) -> Result<(), CohortError> {
    let (d_s, d_x) = records
        .first()
        .map_or((0, 0), |r| (r.static_features.len(), r.series.features()));
    writeln!(out, "# icu-senn cohort v{COHORT_FORMAT_VERSION}")?;
    writeln!(out, "# static={d_s} series={d_x} patients={}", records.len())?;
    let mut line = String::new();
    for r in records {
        if r.is_scaled() {
            return Err(CohortError::Invalid(format!(
                "patient {} is scaled; cohort files hold raw values",
                r.patient_id
            )));
        }
        if r.static_features.len() != d_s || r.series.features() != d_x {
            return Err(CohortError::Invalid(format!(
                "patient {} dimensions differ from the first record",
                r.patient_id
            )));
        }
        line.clear();
        let death = r.death_hour.map(|d| d.to_string()).unwrap_or_default();
        let _ = write!(line, "P,{},{},{death}", r.patient_id, r.los_hours());
        for v in &r.static_features {
            let _ = write!(line, ",{v}");
        }
        writeln!(out, "{line}")?;
        for t in 0..r.los_hours() {
            line.clear();
            let _ = write!(line, "{t}");
            for f in 0..d_x {
                line.push(',');
                if let Some(v) = r.series.get(t, f) {
                    let _ = write!(line, "{v}");
                }
            }
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

fn header_value(line: &str, key: &str) -> Result<usize, CohortError> {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CohortError::Parse(format!("header lacks {key}=: {line:?}")))
}

pub fn read_cohort(input: impl BufRead) -> Result<Vec<PatientRecord>, CohortError> {
    let mut lines = input.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String), CohortError> {
        match lines.next() {
            Some((i, l)) => Ok((i + 1, l?)),
            None => Err(CohortError::Parse(format!("unexpected end of file, expected {what}"))),
        }
    };
    let (_, magic) = next("format header")?;
    let version = magic
        .strip_prefix("# icu-senn cohort v")
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| CohortError::Parse(format!("not a cohort file: {magic:?}")))?;
    if version != COHORT_FORMAT_VERSION {
        return Err(CohortError::Parse(format!("unsupported cohort format v{version}")));
    }
    let (_, dims) = next("dimension header")?;
    let d_s = header_value(&dims, "static")?;
    let d_x = header_value(&dims, "series")?;
    let n = header_value(&dims, "patients")?;

    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, head) = next("patient header")?;
        let err = |m: &str| CohortError::Parse(format!("line {ln}: {m}"));
        let fields: Vec<&str> = head.split(',').collect();
        if fields.first() != Some(&"P") || fields.len() != 4 + d_s {
            return Err(err("malformed patient header"));
        }
        let id: u64 = fields[1].parse().map_err(|_| err("bad patient id"))?;
        let los: usize = fields[2].parse().map_err(|_| err("bad stay length"))?;
        let death = match fields[3] {
            "" => None,
            s => Some(s.parse().map_err(|_| err("bad death hour"))?),
        };
        let static_features = fields[4..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| err("bad static value")))
            .collect::<Result<Vec<_>, _>>()?;
        let mut grid = Vec::with_capacity(los);
        for t in 0..los {
            let (ln, row) = next("series row")?;
            let err = |m: &str| CohortError::Parse(format!("line {ln}: {m}"));
            let mut fields = row.split(',');
            if fields.next().and_then(|h| h.parse::<usize>().ok()) != Some(t) {
                return Err(err(&format!("expected hour {t}")));
            }
            let values = fields
                .map(|s| match s {
                    "" => Ok(None),
                    s => s.parse::<f64>().map(Some).map_err(|_| err("bad value")),
                })
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != d_x {
                return Err(err(&format!("expected {d_x} values, got {}", values.len())));
            }
            grid.push(values);
        }
        let series = MaskedSeries::build(&grid)?;
        records.push(PatientRecord::new(id, static_features, series, death)?);
    }
    if let Some((ln, extra)) = lines.find(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty())) {
        extra?;
        return Err(CohortError::Parse(format!("line {}: trailing data", ln + 1)));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{generate_cohort, GeneratorConfig};

    fn same(a: &PatientRecord, b: &PatientRecord) -> bool {
        let bits = |r: &PatientRecord| -> Vec<u64> {
            r.series.values.data().iter().map(|v| v.to_bits()).collect()
        };
        a.patient_id == b.patient_id
            && a.death_hour == b.death_hour
            && a.static_features == b.static_features
            && a.series.mask == b.series.mask
            && bits(a) == bits(b)
    }

    #[test]
    fn round_trip_is_exact() {
        let cohort = generate_cohort(&GeneratorConfig {
            n_patients: 12,
            prevalence: 0.25,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_cohort(&mut buf, &cohort).unwrap();
        let back = read_cohort(buf.as_slice()).unwrap();
        assert_eq!(back.len(), cohort.len());
        assert!(cohort.iter().zip(&back).all(|(a, b)| same(a, b)));
        let mut again = Vec::new();
        write_cohort(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(read_cohort("hello\n".as_bytes()).is_err());
        assert!(read_cohort("# icu-senn cohort v9\n".as_bytes()).is_err());
        let truncated = "# icu-senn cohort v1\n# static=0 series=1 patients=1\nP,1,48,\n0,1\n";
        assert!(read_cohort(truncated.as_bytes()).is_err());
    }
}
