//! Species, extinction-risk statuses, occurrences, probability vectors and
//! assemblages, plus the CSV readers for occurrence and status tables.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AtlasError, Result};

/// Tolerance on the sum of a normalized probability vector or weight set.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Dense index into a [`SpeciesCatalog`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpeciesId(pub u32);

impl SpeciesId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SpeciesId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Species names with contiguous ids `0..C`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpeciesCatalog {
    names: Vec<String>,
    index: HashMap<String, SpeciesId>,
}

impl SpeciesCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a catalog from names in id order. Duplicate names are rejected.
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut catalog = Self::new();
        for name in names {
            let name = name.into();
            if catalog.index.contains_key(&name) {
                return Err(AtlasError::InvalidArgument(format!(
                    "duplicate species name `{name}`"
                )));
            }
            catalog.intern(&name);
        }
        Ok(catalog)
    }

    /// Returns the id of `name`, assigning the next free id on first sight.
    pub fn intern(&mut self, name: &str) -> SpeciesId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = SpeciesId(self.names.len() as u32);
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<SpeciesId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: SpeciesId) -> &str {
        &self.names[id.index()]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = SpeciesId> {
        (0..self.names.len() as u32).map(SpeciesId)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// IUCN Red List category, ordered from least to most critical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StatusCategory {
    LC,
    NT,
    VU,
    EN,
    CR,
}

impl StatusCategory {
    pub const ALL: [StatusCategory; 5] = [
        StatusCategory::LC,
        StatusCategory::NT,
        StatusCategory::VU,
        StatusCategory::EN,
        StatusCategory::CR,
    ];

    /// Position on the LC < NT < VU < EN < CR scale.
    pub fn rank(self) -> u8 {
        self as u8
    }

    pub fn from_rank(rank: u8) -> Option<Self> {
        Self::ALL.get(rank as usize).copied()
    }

    /// Membership in the derived THREAT group (VU, EN, CR).
    pub fn is_threatened(self) -> bool {
        self.rank() >= StatusCategory::VU.rank()
    }

    pub fn code(self) -> &'static str {
        match self {
            StatusCategory::LC => "LC",
            StatusCategory::NT => "NT",
            StatusCategory::VU => "VU",
            StatusCategory::EN => "EN",
            StatusCategory::CR => "CR",
        }
    }
}

impl fmt::Display for StatusCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for StatusCategory {
    type Err = AtlasError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "LC" => Ok(StatusCategory::LC),
            "NT" => Ok(StatusCategory::NT),
            "VU" => Ok(StatusCategory::VU),
            "EN" => Ok(StatusCategory::EN),
            "CR" => Ok(StatusCategory::CR),
            other => Err(AtlasError::UnknownStatus(other.to_owned())),
        }
    }
}

/// Where a status entry comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatusSource {
    Assessed,
    Predicted,
}

impl StatusSource {
    pub fn as_str(self) -> &'static str {
        match self {
            StatusSource::Assessed => "assessed",
            StatusSource::Predicted => "predicted",
        }
    }
}

impl FromStr for StatusSource {
    type Err = AtlasError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "assessed" => Ok(StatusSource::Assessed),
            "predicted" => Ok(StatusSource::Predicted),
            other => Err(AtlasError::UnknownSource(other.to_owned())),
        }
    }
}

/// Which source wins when a species carries both an assessed and a predicted status.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusPrecedence {
    #[default]
    AssessedFirst,
    PredictedFirst,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StatusEntry {
    pub assessed: Option<StatusCategory>,
    pub predicted: Option<StatusCategory>,
}

impl StatusEntry {
    pub fn resolve(&self, precedence: StatusPrecedence) -> Option<(StatusCategory, StatusSource)> {
        let assessed = self.assessed.map(|s| (s, StatusSource::Assessed));
        let predicted = self.predicted.map(|s| (s, StatusSource::Predicted));
        match precedence {
            StatusPrecedence::AssessedFirst => assessed.or(predicted),
            StatusPrecedence::PredictedFirst => predicted.or(assessed),
        }
    }
}

/// Status table keyed by species name, one slot per source.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StatusTable {
    entries: BTreeMap<String, StatusEntry>,
}

impl StatusTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one entry. A second entry for the same `(species, source)` pair is an error.
    pub fn insert(
        &mut self,
        species: &str,
        status: StatusCategory,
        source: StatusSource,
    ) -> Result<()> {
        let entry = self.entries.entry(species.to_owned()).or_default();
        let slot = match source {
            StatusSource::Assessed => &mut entry.assessed,
            StatusSource::Predicted => &mut entry.predicted,
        };
        if slot.is_some() {
            return Err(AtlasError::DuplicateStatus {
                species: species.to_owned(),
                source_kind: source.as_str(),
            });
        }
        *slot = Some(status);
        Ok(())
    }

    pub fn get(&self, species: &str) -> Option<&StatusEntry> {
        self.entries.get(species)
    }

    /// Number of species with at least one entry.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &StatusEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// A copy retaining only assessed entries.
    pub fn assessed_only(&self) -> StatusTable {
        let entries = self
            .entries
            .iter()
            .filter(|(_, e)| e.assessed.is_some())
            .map(|(k, e)| {
                (
                    k.clone(),
                    StatusEntry {
                        assessed: e.assessed,
                        predicted: None,
                    },
                )
            })
            .collect();
        StatusTable { entries }
    }

    /// Resolves names against `catalog`, applying `precedence`. Names not in the
    /// catalog are ignored.
    pub fn resolve(&self, catalog: &SpeciesCatalog, precedence: StatusPrecedence) -> SpeciesStatuses {
        let mut statuses = vec![None; catalog.len()];
        for (name, entry) in &self.entries {
            if let Some(id) = catalog.id(name) {
                statuses[id.index()] = entry.resolve(precedence);
            }
        }
        SpeciesStatuses {
            names: catalog.names().to_vec(),
            statuses,
        }
    }
}

/// Per-species status lookup by [`SpeciesId`], the φ function over a catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeciesStatuses {
    names: Vec<String>,
    statuses: Vec<Option<(StatusCategory, StatusSource)>>,
}

impl SpeciesStatuses {
    /// Builds a lookup directly from per-id statuses; names are synthesized.
    pub fn from_categories(statuses: Vec<Option<StatusCategory>>) -> Self {
        let names = (0..statuses.len()).map(|i| format!("species_{i}")).collect();
        let statuses = statuses
            .into_iter()
            .map(|s| s.map(|c| (c, StatusSource::Assessed)))
            .collect();
        SpeciesStatuses { names, statuses }
    }

    pub fn len(&self) -> usize {
        self.statuses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statuses.is_empty()
    }

    pub fn get(&self, species: SpeciesId) -> Option<StatusCategory> {
        self.statuses
            .get(species.index())
            .copied()
            .flatten()
            .map(|(status, _)| status)
    }

    pub fn entry(&self, species: SpeciesId) -> Option<(StatusCategory, StatusSource)> {
        self.statuses.get(species.index()).copied().flatten()
    }

    /// Status of `species`, or [`AtlasError::MissingStatus`] when neither source has it.
    pub fn status_of(&self, species: SpeciesId) -> Result<StatusCategory> {
        self.get(species).ok_or_else(|| {
            let name = self
                .names
                .get(species.index())
                .cloned()
                .unwrap_or_else(|| species.to_string());
            AtlasError::MissingStatus(name)
        })
    }

    /// Drops every predicted entry.
    pub fn assessed_only(&self) -> SpeciesStatuses {
        SpeciesStatuses {
            names: self.names.clone(),
            statuses: self
                .statuses
                .iter()
                .map(|e| e.filter(|(_, source)| *source == StatusSource::Assessed))
                .collect(),
        }
    }
}

/// One presence-only observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Occurrence {
    pub species: SpeciesId,
    pub lon: f64,
    pub lat: f64,
    pub region: String,
    pub continent: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OccurrenceDataset {
    pub catalog: SpeciesCatalog,
    pub occurrences: Vec<Occurrence>,
}

impl OccurrenceDataset {
    pub fn n_species(&self) -> usize {
        self.catalog.len()
    }

    pub fn len(&self) -> usize {
        self.occurrences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occurrences.is_empty()
    }

    /// Occurrence counts per species id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.catalog.len()];
        for occ in &self.occurrences {
            counts[occ.species.index()] += 1;
        }
        counts
    }

    /// Appends an occurrence after validating its coordinates.
    pub fn push(&mut self, species: &str, lon: f64, lat: f64, region: &str, continent: &str) -> Result<()> {
        check_coordinate("lon", lon, 180.0).map_err(|(field, value)| {
            AtlasError::InvalidArgument(format!("{field} = {value} outside [-180, 180]"))
        })?;
        check_coordinate("lat", lat, 90.0).map_err(|(field, value)| {
            AtlasError::InvalidArgument(format!("{field} = {value} outside [-90, 90]"))
        })?;
        let species = self.catalog.intern(species);
        self.occurrences.push(Occurrence {
            species,
            lon,
            lat,
            region: region.to_owned(),
            continent: continent.to_owned(),
        });
        Ok(())
    }
}

fn check_coordinate(field: &'static str, value: f64, bound: f64) -> std::result::Result<(), (&'static str, f64)> {
    if value.is_finite() && (-bound..=bound).contains(&value) {
        Ok(())
    } else {
        Err((field, value))
    }
}

pub const OCCURRENCE_HEADER: [&str; 5] = ["species", "lon", "lat", "region", "continent"];
pub const STATUS_HEADER: [&str; 3] = ["species", "status", "source"];

fn open_csv(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| AtlasError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| AtlasError::parse(path, 1, e.to_string()))?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(AtlasError::parse(
            path,
            1,
            format!(
                "header must be `{}`, found `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(reader)
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn csv_error(path: &Path, err: csv::Error) -> AtlasError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    AtlasError::parse(path, line, err.to_string())
}

/// Reads an occurrence CSV (`species,lon,lat,region,continent`). Species ids are
/// assigned densely in order of first appearance.
pub fn load_occurrences(path: impl AsRef<Path>) -> Result<OccurrenceDataset> {
    let path = path.as_ref();
    let mut reader = open_csv(path, &OCCURRENCE_HEADER)?;
    let mut dataset = OccurrenceDataset::default();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record_line(&record);
        let field = |i: usize| record.get(i).unwrap_or("");
        let coord = |i: usize, name: &'static str, bound: f64| -> Result<f64> {
            let value: f64 = field(i)
                .parse()
                .map_err(|_| AtlasError::parse(path, line, format!("`{name}` is not a number: `{}`", field(i))))?;
            check_coordinate(name, value, bound).map_err(|(field, value)| AtlasError::CoordinateRange {
                path: path.to_owned(),
                line,
                field,
                value,
            })?;
            Ok(value)
        };
        let lon = coord(1, "lon", 180.0)?;
        let lat = coord(2, "lat", 90.0)?;
        if field(0).is_empty() {
            return Err(AtlasError::parse(path, line, "empty species name"));
        }
        let species = dataset.catalog.intern(field(0));
        dataset.occurrences.push(Occurrence {
            species,
            lon,
            lat,
            region: field(3).to_owned(),
            continent: field(4).to_owned(),
        });
    }
    Ok(dataset)
}

/// Writes `dataset` in the occurrence CSV format.
pub fn save_occurrences(dataset: &OccurrenceDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("species,lon,lat,region,continent\n");
    for occ in &dataset.occurrences {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            dataset.catalog.name(occ.species),
            occ.lon,
            occ.lat,
            occ.region,
            occ.continent
        ));
    }
    std::fs::write(path, out).map_err(|e| AtlasError::io(path, e))
}

/// Reads a status CSV (`species,status,source`).
pub fn load_status_table(path: impl AsRef<Path>) -> Result<StatusTable> {
    let path = path.as_ref();
    let mut reader = open_csv(path, &STATUS_HEADER)?;
    let mut table = StatusTable::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record_line(&record);
        let at_line = |e: AtlasError| AtlasError::parse(path, line, e.to_string());
        let species = record.get(0).unwrap_or("");
        let status: StatusCategory = record.get(1).unwrap_or("").parse().map_err(at_line)?;
        let source: StatusSource = record.get(2).unwrap_or("").parse().map_err(at_line)?;
        table.insert(species, status, source).map_err(at_line)?;
    }
    Ok(table)
}

/// Writes a status table as CSV, assessed rows before predicted rows per species.
pub fn save_status_table(table: &StatusTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| AtlasError::io(path, e))?;
    let mut out = String::from("species,status,source\n");
    for (name, entry) in table.iter() {
        if let Some(s) = entry.assessed {
            out.push_str(&format!("{name},{s},assessed\n"));
        }
        if let Some(s) = entry.predicted {
            out.push_str(&format!("{name},{s},predicted\n"));
        }
    }
    file.write_all(out.as_bytes()).map_err(|e| AtlasError::io(path, e))
}

/// An estimated conditional distribution over the species catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    values: Vec<f64>,
    normalized: bool,
}

impl ProbabilityVector {
    /// Non-negative finite entries, no sum constraint.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AtlasError::NonFinite("probability vector"));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(AtlasError::InvalidArgument(
                "probability vector has a negative entry".into(),
            ));
        }
        Ok(Self {
            values,
            normalized: false,
        })
    }

    /// Like [`ProbabilityVector::new`] but also requires the entries to sum to one.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let mut pv = Self::new(values)?;
        let sum: f64 = pv.values.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(AtlasError::InvalidArgument(format!(
                "probability vector sums to {sum}, not 1"
            )));
        }
        pv.normalized = true;
        Ok(pv)
    }

    pub(crate) fn from_softmax(values: Vec<f64>) -> Self {
        Self {
            values,
            normalized: true,
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, species: SpeciesId) -> f64 {
        self.values[species.index()]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// A set of species with their presence weights.
///
/// Members are kept sorted by id and never carry a zero weight. Weights are the
/// raw conditional probabilities until [`Assemblage::is_normalized`] is true.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assemblage {
    members: Vec<SpeciesId>,
    weights: Vec<f64>,
    normalized: bool,
}

impl Assemblage {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds an assemblage from `(member, weight)` pairs. Zero-weight members are
    /// dropped; negative or non-finite weights and repeated members are errors.
    pub fn from_weighted<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (SpeciesId, f64)>,
    {
        let mut pairs: Vec<(SpeciesId, f64)> = pairs.into_iter().collect();
        if pairs.iter().any(|(_, w)| !w.is_finite()) {
            return Err(AtlasError::NonFinite("assemblage weight"));
        }
        if pairs.iter().any(|&(_, w)| w < 0.0) {
            return Err(AtlasError::InvalidArgument("negative assemblage weight".into()));
        }
        pairs.retain(|&(_, w)| w > 0.0);
        pairs.sort_by_key(|&(id, _)| id);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(AtlasError::InvalidArgument("repeated assemblage member".into()));
        }
        let (members, weights) = pairs.into_iter().unzip();
        Ok(Self {
            members,
            weights,
            normalized: false,
        })
    }

    /// Like [`Assemblage::from_weighted`], additionally asserting the weights sum to one.
    pub fn from_normalized<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (SpeciesId, f64)>,
    {
        let mut a = Self::from_weighted(pairs)?;
        let sum: f64 = a.weights.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(AtlasError::InvalidArgument(format!(
                "assemblage weights sum to {sum}, not 1"
            )));
        }
        a.normalized = true;
        Ok(a)
    }

    /// Internal constructor for already-validated, id-sorted parts.
    pub(crate) fn from_sorted_parts(members: Vec<SpeciesId>, weights: Vec<f64>, normalized: bool) -> Self {
        debug_assert_eq!(members.len(), weights.len());
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(weights.iter().all(|&w| w > 0.0));
        Self {
            members,
            weights,
            normalized,
        }
    }

    pub fn members(&self) -> &[SpeciesId] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (SpeciesId, f64)> + '_ {
        self.members.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn contains(&self, species: SpeciesId) -> bool {
        self.members.binary_search(&species).is_ok()
    }

    pub fn weight(&self, species: SpeciesId) -> Option<f64> {
        self.members
            .binary_search(&species)
            .ok()
            .map(|i| self.weights[i])
    }

    /// Keeps the members for which `keep` holds. Normalization is lost unless
    /// nothing was removed.
    pub fn retain(&self, mut keep: impl FnMut(SpeciesId) -> bool) -> Assemblage {
        let mut members = Vec::with_capacity(self.members.len());
        let mut weights = Vec::with_capacity(self.members.len());
        for (id, w) in self.iter() {
            if keep(id) {
                members.push(id);
                weights.push(w);
            }
        }
        let normalized = self.normalized && members.len() == self.members.len();
        Assemblage {
            members,
            weights,
            normalized,
        }
    }
}
