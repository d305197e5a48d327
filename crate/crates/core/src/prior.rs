//! Continent-level geographic prior and renormalization of filtered assemblages.

use std::collections::BTreeSet;
use std::path::Path;

use crate::domain::{Assemblage, OccurrenceDataset, SpeciesCatalog, SpeciesId};
use crate::error::{AtlasError, Result};

/// Continents where each species has been observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContinentPrior {
    continents: Vec<BTreeSet<String>>,
}

impl ContinentPrior {
    pub fn from_sets(continents: Vec<BTreeSet<String>>) -> Result<Self> {
        if let Some(i) = continents.iter().position(BTreeSet::is_empty) {
            return Err(AtlasError::NotInPrior(SpeciesId(i as u32).to_string()));
        }
        Ok(Self { continents })
    }

    pub fn continents_of(&self, species: SpeciesId) -> Option<&BTreeSet<String>> {
        self.continents.get(species.index())
    }

    pub fn allows(&self, species: SpeciesId, continent: &str) -> Option<bool> {
        self.continents_of(species).map(|set| set.contains(continent))
    }

    pub fn len(&self) -> usize {
        self.continents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.continents.is_empty()
    }

    /// Writes `species,continents` with `;`-joined continent codes.
    pub fn save_csv(&self, catalog: &SpeciesCatalog, path: impl AsRef<Path>, comment: Option<&str>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        if let Some(c) = comment {
            out.push_str(&format!("# {c}\n"));
        }
        out.push_str("species,continents\n");
        for id in catalog.ids() {
            let joined: Vec<&str> = self.continents[id.index()].iter().map(String::as_str).collect();
            out.push_str(&format!("{},{}\n", catalog.name(id), joined.join(";")));
        }
        std::fs::write(path, out).map_err(|e| AtlasError::io(path, e))
    }
}

/// Every species maps to the set of continents among its occurrences.
pub fn build_continent_prior(data: &OccurrenceDataset) -> Result<ContinentPrior> {
    let mut continents = vec![BTreeSet::new(); data.n_species()];
    for occ in &data.occurrences {
        continents[occ.species.index()].insert(occ.continent.clone());
    }
    if let Some(i) = continents.iter().position(BTreeSet::is_empty) {
        return Err(AtlasError::NotInPrior(
            data.catalog.name(SpeciesId(i as u32)).to_owned(),
        ));
    }
    Ok(ContinentPrior { continents })
}

/// Drops members not known from `continent`. The result may be empty.
pub fn filter_by_prior(a: &Assemblage, continent: &str, prior: &ContinentPrior) -> Result<Assemblage> {
    for &m in a.members() {
        if prior.continents_of(m).is_none() {
            return Err(AtlasError::NotInPrior(m.to_string()));
        }
    }
    Ok(a.retain(|m| prior.allows(m, continent).unwrap_or(false)))
}

/// Outcome of [`renormalize`]: an empty or all-zero assemblage is a value, not an error.
#[derive(Debug, Clone, PartialEq)]
pub enum Renormalized {
    Assemblage(Assemblage),
    Empty,
}

impl Renormalized {
    pub fn into_option(self) -> Option<Assemblage> {
        match self {
            Renormalized::Assemblage(a) => Some(a),
            Renormalized::Empty => None,
        }
    }
}

/// Divides every weight by the sum of surviving weights.
pub fn renormalize(a: &Assemblage) -> Renormalized {
    let total: f64 = a.weights().iter().sum();
    if a.is_empty() || total <= 0.0 {
        return Renormalized::Empty;
    }
    let weights = a.weights().iter().map(|w| w / total).collect();
    Renormalized::Assemblage(Assemblage::from_sorted_parts(a.members().to_vec(), weights, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prior(sets: &[&[&str]]) -> ContinentPrior {
        ContinentPrior::from_sets(
            sets.iter()
                .map(|s| s.iter().map(|c| c.to_string()).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn prior_from_occurrences() {
        let mut ds = OccurrenceDataset::default();
        ds.push("s", 0.0, 0.0, "r", "AF").unwrap();
        ds.push("s", 1.0, 0.0, "r", "AF").unwrap();
        ds.push("s", 2.0, 0.0, "r", "EU").unwrap();
        ds.push("t", 2.0, 0.0, "r", "SA").unwrap();
        let p = build_continent_prior(&ds).unwrap();
        let s: Vec<&str> = p.continents_of(SpeciesId(0)).unwrap().iter().map(String::as_str).collect();
        assert_eq!(s, ["AF", "EU"]);
        assert_eq!(p.continents_of(SpeciesId(1)).unwrap().len(), 1);
    }

    #[test]
    fn species_without_occurrence_is_an_error() {
        let mut ds = OccurrenceDataset::default();
        ds.push("s", 0.0, 0.0, "r", "AF").unwrap();
        ds.catalog.intern("ghost");
        assert!(matches!(build_continent_prior(&ds), Err(AtlasError::NotInPrior(n)) if n == "ghost"));
    }

    #[test]
    fn filter_examples() {
        let p = prior(&[&["AF"], &["AF", "SA"]]);
        let a = Assemblage::from_weighted([(SpeciesId(0), 0.5), (SpeciesId(1), 0.3)]).unwrap();
        assert_eq!(filter_by_prior(&a, "SA", &p).unwrap().members(), &[SpeciesId(1)]);
        assert_eq!(filter_by_prior(&a, "AF", &p).unwrap(), a);
        assert!(filter_by_prior(&a, "EU", &p).unwrap().is_empty());
        let outsider = Assemblage::from_weighted([(SpeciesId(5), 0.5)]).unwrap();
        assert!(filter_by_prior(&outsider, "AF", &p).is_err());
    }

    #[test]
    fn renormalize_examples() {
        let a = Assemblage::from_weighted([(SpeciesId(0), 0.2), (SpeciesId(1), 0.05), (SpeciesId(2), 0.05)]).unwrap();
        let r = renormalize(&a).into_option().unwrap();
        let expect = [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0];
        for (w, e) in r.weights().iter().zip(expect) {
            assert!((w - e).abs() < 1e-15);
        }
        assert!(r.is_normalized());

        let single = Assemblage::from_weighted([(SpeciesId(3), 0.01)]).unwrap();
        assert_eq!(renormalize(&single).into_option().unwrap().weights(), &[1.0]);

        let unit = Assemblage::from_weighted([(SpeciesId(0), 0.25), (SpeciesId(1), 0.75)]).unwrap();
        let r = renormalize(&unit).into_option().unwrap();
        assert!((r.weights()[0] - 0.25).abs() < 1e-12);
        assert_eq!(renormalize(&Assemblage::empty()), Renormalized::Empty);
    }

    proptest! {
        #[test]
        fn filter_invariants(
            weights in prop::collection::vec(0.001f64..1.0, 1..15),
            masks in prop::collection::vec(0u8..4, 15),
            continent in 0u8..2,
        ) {
            let names = ["AF", "SA"];
            let sets: Vec<BTreeSet<String>> = masks
                .iter()
                .take(weights.len())
                .map(|m| {
                    let mut s = BTreeSet::new();
                    if m & 1 != 0 { s.insert("AF".to_string()); }
                    if m & 2 != 0 || m & 1 == 0 { s.insert("SA".to_string()); }
                    s
                })
                .collect();
            let p = ContinentPrior::from_sets(sets).unwrap();
            let a = Assemblage::from_weighted(
                weights.iter().enumerate().map(|(i, &w)| (SpeciesId(i as u32), w)),
            ).unwrap();
            let c = names[continent as usize];
            let once = filter_by_prior(&a, c, &p).unwrap();
            prop_assert!(once.len() <= a.len());
            prop_assert_eq!(&filter_by_prior(&once, c, &p).unwrap(), &once);
            if let Renormalized::Assemblage(r) = renormalize(&once) {
                prop_assert_eq!(r.members(), once.members());
                let s: f64 = r.weights().iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-9);
                for i in 1..r.len() {
                    let before = once.weights()[i] / once.weights()[0];
                    let after = r.weights()[i] / r.weights()[0];
                    prop_assert!((before - after).abs() <= 1e-9 * before.max(1.0));
                }
            }
        }
    }
}
