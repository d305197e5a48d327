//! Assemblage-level conservation indicators: the most critical status present,
//! the probability-weighted share of each status (and of THREAT), and the Shannon
//! index of the assemblage weights.
//!
//! Members without a status are skipped by the most-critical indicator and are
//! removed, with the remaining weights renormalized, before status proportions
//! are computed. The number of skipped members is always reported.

use std::fmt;
use std::str::FromStr;

use crate::domain::{Assemblage, SpeciesCatalog, SpeciesStatuses, StatusCategory};
use crate::error::{AtlasError, Result};
use crate::prior::{renormalize, Renormalized};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IndicatorValue {
    Status(StatusCategory),
    Proportion(f64),
    Entropy(f64),
    NoData,
}

impl IndicatorValue {
    pub fn is_nodata(&self) -> bool {
        matches!(self, IndicatorValue::NoData)
    }

    /// Numeric form for rasterization: status rank, proportion or entropy.
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            IndicatorValue::Status(s) => Some(s.rank() as f64),
            IndicatorValue::Proportion(v) | IndicatorValue::Entropy(v) => Some(v),
            IndicatorValue::NoData => None,
        }
    }
}

/// A single status or the THREAT group (VU ∪ EN ∪ CR).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StatusTarget {
    Status(StatusCategory),
    Threat,
}

/// Most critical status among members that have one. `NoData` when the
/// assemblage is empty or no member has a status. Returns the skipped count.
pub fn indicator_io(a: &Assemblage, statuses: &SpeciesStatuses) -> (IndicatorValue, usize) {
    let mut missing = 0;
    let mut best: Option<StatusCategory> = None;
    for &m in a.members() {
        match statuses.get(m) {
            Some(s) => best = Some(best.map_or(s, |b| b.max(s))),
            None => missing += 1,
        }
    }
    (best.map_or(IndicatorValue::NoData, IndicatorValue::Status), missing)
}

/// Restricts `a` to members with a status and renormalizes their weights.
/// Returns the restricted assemblage (or `Empty`) and the number of members dropped.
pub fn status_bearing(a: &Assemblage, statuses: &SpeciesStatuses) -> (Renormalized, usize) {
    let kept = a.retain(|m| statuses.get(m).is_some());
    let dropped = a.len() - kept.len();
    (renormalize(&kept), dropped)
}

fn status_mass(a: &Assemblage, statuses: &SpeciesStatuses) -> [f64; 5] {
    let mut mass = [0.0; 5];
    for (m, w) in a.iter() {
        if let Some(s) = statuses.get(m) {
            mass[s.rank() as usize] += w;
        }
    }
    mass
}

/// Weighted proportion of `target` in an assemblage whose weights are normalized
/// over its status-bearing members. THREAT is `I_VU + I_EN + I_CR`.
pub fn indicator_ic(a: &Assemblage, statuses: &SpeciesStatuses, target: StatusTarget) -> IndicatorValue {
    if a.is_empty() {
        return IndicatorValue::NoData;
    }
    let mass = status_mass(a, statuses);
    IndicatorValue::Proportion(proportion(&mass, target))
}

fn proportion(mass: &[f64; 5], target: StatusTarget) -> f64 {
    match target {
        StatusTarget::Status(s) => mass[s.rank() as usize],
        StatusTarget::Threat => {
            mass[StatusCategory::VU.rank() as usize]
                + mass[StatusCategory::EN.rank() as usize]
                + mass[StatusCategory::CR.rank() as usize]
        }
    }
}

/// `-Σ w ln w` over normalized weights.
pub fn shannon(a: &Assemblage) -> IndicatorValue {
    if a.is_empty() {
        return IndicatorValue::NoData;
    }
    let h: f64 = a.weights().iter().map(|&w| -w * w.ln()).sum();
    // a singleton has weight exactly 1, so h is exactly 0 there
    IndicatorValue::Entropy(h.max(0.0))
}

/// Every indicator for one assemblage (already filtered and renormalized).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorSet {
    pub most_critical: IndicatorValue,
    /// `I_LC … I_CR`, indexed by status rank; `None` when no member has a status.
    pub proportions: Option<[f64; 5]>,
    pub threat: Option<f64>,
    pub shannon: IndicatorValue,
    /// Members skipped for lack of a status.
    pub missing_status: usize,
}

impl IndicatorSet {
    pub fn nodata() -> Self {
        IndicatorSet {
            most_critical: IndicatorValue::NoData,
            proportions: None,
            threat: None,
            shannon: IndicatorValue::NoData,
            missing_status: 0,
        }
    }

    pub fn value(&self, kind: IndicatorKind) -> IndicatorValue {
        match kind.measure {
            Measure::MostCritical => self.most_critical,
            Measure::Shannon => self.shannon,
            Measure::Proportion(target) => self
                .proportions
                .map(|p| {
                    IndicatorValue::Proportion(match target {
                        StatusTarget::Threat => self.threat.expect("threat set with proportions"),
                        StatusTarget::Status(_) => proportion(&p, target),
                    })
                })
                .unwrap_or(IndicatorValue::NoData),
        }
    }
}

/// Computes all indicators for a normalized assemblage.
pub fn evaluate(a: &Assemblage, statuses: &SpeciesStatuses) -> IndicatorSet {
    if a.is_empty() {
        return IndicatorSet::nodata();
    }
    let (most_critical, missing_status) = indicator_io(a, statuses);
    let (bearing, _) = status_bearing(a, statuses);
    let (proportions, threat) = match bearing {
        Renormalized::Assemblage(b) => {
            let mass = status_mass(&b, statuses);
            (Some(mass), Some(proportion(&mass, StatusTarget::Threat)))
        }
        Renormalized::Empty => (None, None),
    };
    IndicatorSet {
        most_critical,
        proportions,
        threat,
        shannon: shannon(a),
        missing_status,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    MostCritical,
    Proportion(StatusTarget),
    Shannon,
}

/// An indicator layer: a measure, optionally restricted to assessed statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndicatorKind {
    pub measure: Measure,
    pub assessed_only: bool,
}

impl IndicatorKind {
    pub const fn new(measure: Measure) -> Self {
        IndicatorKind {
            measure,
            assessed_only: false,
        }
    }

    pub const fn assessed(measure: Measure) -> Self {
        IndicatorKind {
            measure,
            assessed_only: true,
        }
    }

    pub fn most_critical() -> Self {
        Self::new(Measure::MostCritical)
    }

    pub fn threat() -> Self {
        Self::new(Measure::Proportion(StatusTarget::Threat))
    }

    pub fn status(s: StatusCategory) -> Self {
        Self::new(Measure::Proportion(StatusTarget::Status(s)))
    }

    pub fn shannon() -> Self {
        Self::new(Measure::Shannon)
    }

    /// Status-code rasters hold integer ranks.
    pub fn is_categorical(&self) -> bool {
        matches!(self.measure, Measure::MostCritical)
    }

    /// Every layer name the map stage knows about.
    pub fn all() -> Vec<IndicatorKind> {
        let mut base = vec![Self::most_critical()];
        base.extend(StatusCategory::ALL.iter().map(|&s| Self::status(s)));
        base.push(Self::threat());
        base.push(Self::shannon());
        let assessed: Vec<_> = base
            .iter()
            .map(|k| IndicatorKind {
                assessed_only: true,
                ..*k
            })
            .collect();
        base.extend(assessed);
        base
    }
}

impl fmt::Display for IndicatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.measure {
            Measure::MostCritical => f.write_str("I_O")?,
            Measure::Shannon => f.write_str("I_H")?,
            Measure::Proportion(StatusTarget::Threat) => f.write_str("I_THREAT")?,
            Measure::Proportion(StatusTarget::Status(s)) => write!(f, "I_{s}")?,
        }
        if self.assessed_only {
            f.write_str("_IUCN")?;
        }
        Ok(())
    }
}

impl FromStr for IndicatorKind {
    type Err = AtlasError;

    fn from_str(s: &str) -> Result<Self> {
        let (base, assessed_only) = match s.strip_suffix("_IUCN") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let measure = match base {
            "I_O" => Measure::MostCritical,
            "I_H" => Measure::Shannon,
            "I_THREAT" => Measure::Proportion(StatusTarget::Threat),
            other => match other.strip_prefix("I_").map(str::parse::<StatusCategory>) {
                Some(Ok(status)) => Measure::Proportion(StatusTarget::Status(status)),
                _ => return Err(AtlasError::InvalidArgument(format!("unknown indicator `{s}`"))),
            },
        };
        Ok(IndicatorKind { measure, assessed_only })
    }
}

/// CSV `species,weight,status,source` for one assemblage. Members without a
/// status get empty status and source fields.
pub fn explain_assemblage(a: &Assemblage, catalog: &SpeciesCatalog, statuses: &SpeciesStatuses) -> String {
    let mut out = String::from("species,weight,status,source\n");
    let mut rows: Vec<_> = a.iter().collect();
    rows.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    for (m, w) in rows {
        let (status, source) = match statuses.entry(m) {
            Some((s, src)) => (s.code(), src.as_str()),
            None => ("", ""),
        };
        out.push_str(&format!("{},{},{},{}\n", catalog.name(m), w, status, source));
    }
    out
}
