//! Rule-based SOFA organ sub-scores.
//!
//! Each organ system is scored 0–4 from one designated marker feature using
//! four monotone cut-points. Bounds are closed: a marker exactly at a
//! cut-point earns the higher score. For markers where lower is worse
//! (P/F ratio, platelets, GCS) the cut-points are descending and a value at
//! or below cut-point `k` earns score `k + 1`.

use std::fmt;
use std::str::FromStr;

use super::CohortError;
use crate::imputer::MaskedSeries;

pub const N_ORGANS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Organ {
    Respiratory,
    Cardiovascular,
    Hepatic,
    Coagulation,
    Renal,
    Neurological,
}

impl Organ {
    pub const ALL: [Organ; N_ORGANS] = [
        Organ::Respiratory,
        Organ::Cardiovascular,
        Organ::Hepatic,
        Organ::Coagulation,
        Organ::Renal,
        Organ::Neurological,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Organ::Respiratory => "respiratory",
            Organ::Cardiovascular => "cardiovascular",
            Organ::Hepatic => "hepatic",
            Organ::Coagulation => "coagulation",
            Organ::Renal => "renal",
            Organ::Neurological => "neurological",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Organ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Organ {
    type Err = CohortError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Organ::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| CohortError::Parse(format!("unknown organ system {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Higher marker values are worse.
    Increasing,
    /// Lower marker values are worse.
    Decreasing,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrganRule {
    pub organ: Organ,
    pub marker: String,
    /// Column of the marker in the time-series matrix.
    pub feature: usize,
    pub direction: Direction,
    pub cuts: [f64; 4],
}

impl OrganRule {
    pub fn score(&self, value: f64) -> u8 {
        let hit = |c: f64| match self.direction {
            Direction::Increasing => value >= c,
            Direction::Decreasing => value <= c,
        };
        self.cuts.iter().take_while(|&&c| hit(c)).count() as u8
    }
}

/// One rule per organ system, in [`Organ::ALL`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct SofaTable {
    pub rules: [OrganRule; N_ORGANS],
}

impl Default for SofaTable {
    /// Conventional SOFA cut-points over the six synthetic marker features
    /// (columns 0–5 of the generated series).
    fn default() -> Self {
        use Direction::*;
        let rule = |organ, marker: &str, feature, direction, cuts| OrganRule {
            organ,
            marker: marker.to_string(),
            feature,
            direction,
            cuts,
        };
        Self {
            rules: [
                rule(Organ::Respiratory, "pao2_fio2", 0, Decreasing, [400.0, 300.0, 200.0, 100.0]),
                rule(Organ::Cardiovascular, "vasopressor_dose", 1, Increasing, [0.01, 0.05, 0.1, 0.2]),
                rule(Organ::Hepatic, "bilirubin", 2, Increasing, [1.2, 2.0, 6.0, 12.0]),
                rule(Organ::Coagulation, "platelets", 3, Decreasing, [150.0, 100.0, 50.0, 20.0]),
                rule(Organ::Renal, "creatinine", 4, Increasing, [1.2, 2.0, 3.5, 5.0]),
                rule(Organ::Neurological, "gcs", 5, Decreasing, [14.0, 12.0, 9.0, 5.0]),
            ],
        }
    }
}

impl SofaTable {
    /// Scores one hour from the six marker values (in organ order). A missing
    /// marker scores 0.
    pub fn score(&self, markers: &[Option<f64>; N_ORGANS]) -> [u8; N_ORGANS] {
        let mut out = [0u8; N_ORGANS];
        for (j, rule) in self.rules.iter().enumerate() {
            out[j] = markers[j].map_or(0, |v| rule.score(v));
        }
        out
    }

    /// Scores every hour of a raw series, carrying the last observation of
    /// each marker forward across gaps.
    pub fn score_series(&self, series: &MaskedSeries) -> Result<Vec<[u8; N_ORGANS]>, CohortError> {
        for rule in &self.rules {
            if rule.feature >= series.features() {
                return Err(CohortError::Invalid(format!(
                    "{} marker column {} outside series with {} features",
                    rule.organ,
                    rule.feature,
                    series.features()
                )));
            }
        }
        let mut last = [None; N_ORGANS];
        let mut out = Vec::with_capacity(series.steps());
        for t in 0..series.steps() {
            for (j, rule) in self.rules.iter().enumerate() {
                if let Some(v) = series.get(t, rule.feature) {
                    last[j] = Some(v);
                }
            }
            out.push(self.score(&last));
        }
        Ok(out)
    }

    /// Parses lines of `organ,marker,feature,direction,c1,c2,c3,c4`.
    /// Blank lines and `#` comments are skipped; all six organs are required.
    pub fn parse(text: &str) -> Result<Self, CohortError> {
        let mut rules: [Option<OrganRule>; N_ORGANS] = Default::default();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 8 {
                return Err(CohortError::Parse(format!("expected 8 fields: {line:?}")));
            }
            let organ: Organ = fields[0].parse()?;
            let feature = fields[2]
                .parse()
                .map_err(|_| CohortError::Parse(format!("bad feature index {:?}", fields[2])))?;
            let direction = match fields[3] {
                "increasing" => Direction::Increasing,
                "decreasing" => Direction::Decreasing,
                other => return Err(CohortError::Parse(format!("bad direction {other:?}"))),
            };
            let mut cuts = [0.0; 4];
            for (c, f) in cuts.iter_mut().zip(&fields[4..]) {
                *c = f
                    .parse()
                    .map_err(|_| CohortError::Parse(format!("bad cut-point {f:?}")))?;
            }
            let monotone = cuts.windows(2).all(|w| match direction {
                Direction::Increasing => w[0] < w[1],
                Direction::Decreasing => w[0] > w[1],
            });
            if !monotone {
                return Err(CohortError::Parse(format!(
                    "{organ} cut-points are not strictly monotone"
                )));
            }
            rules[organ.index()] = Some(OrganRule {
                organ,
                marker: fields[1].to_string(),
                feature,
                direction,
                cuts,
            });
        }
        let mut out = Vec::with_capacity(N_ORGANS);
        for (o, r) in Organ::ALL.iter().zip(rules) {
            out.push(r.ok_or_else(|| CohortError::Parse(format!("no rule for {o}")))?);
        }
        Ok(Self {
            rules: out.try_into().expect("six rules"),
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# organ,marker,feature,direction,c1,c2,c3,c4\n");
        for r in &self.rules {
            let dir = match r.direction {
                Direction::Increasing => "increasing",
                Direction::Decreasing => "decreasing",
            };
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.organ, r.marker, r.feature, dir, r.cuts[0], r.cuts[1], r.cuts[2], r.cuts[3]
            ));
        }
        s
    }
}
