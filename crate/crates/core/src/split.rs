//! Spatial block hold-out.
//!
//! Occurrences are binned into square lon/lat blocks; blocks are assigned to
//! train/validation/test within each region stratum, and species left without a
//! training occurrence have their blocks pulled back into train.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::OccurrenceDataset;
use crate::error::{AtlasError, Result};

/// Default block edge in degrees (about 2.8 km at the equator).
pub const DEFAULT_BLOCK_SIZE: f64 = 0.025;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId {
    pub i: i64,
    pub j: i64,
}

impl BlockId {
    pub fn of(lon: f64, lat: f64, block_size: f64) -> Self {
        BlockId {
            i: (lon / block_size).floor() as i64,
            j: (lat / block_size).floor() as i64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = AtlasError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(AtlasError::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

/// Block of every occurrence, by occurrence index.
pub fn assign_blocks(data: &OccurrenceDataset, block_size: f64) -> Result<Vec<BlockId>> {
    if !(block_size > 0.0 && block_size.is_finite()) {
        return Err(AtlasError::InvalidArgument(format!(
            "block size must be positive, got {block_size}"
        )));
    }
    Ok(data
        .occurrences
        .iter()
        .map(|o| BlockId::of(o.lon, o.lat, block_size))
        .collect())
}

/// Stratum of each block: the region holding most of its occurrences, ties going
/// to the lexicographically smallest region id.
pub fn block_strata(data: &OccurrenceDataset, blocks: &[BlockId]) -> BTreeMap<BlockId, String> {
    let mut tallies: BTreeMap<BlockId, BTreeMap<&str, usize>> = BTreeMap::new();
    for (occ, block) in data.occurrences.iter().zip(blocks) {
        *tallies
            .entry(*block)
            .or_default()
            .entry(occ.region.as_str())
            .or_default() += 1;
    }
    tallies
        .into_iter()
        .map(|(block, counts)| {
            // BTreeMap iterates regions in ascending order; keep the first maximum.
            let mut best: Option<(&str, usize)> = None;
            for (region, n) in counts {
                if best.is_none_or(|(_, m)| n > m) {
                    best = Some((region, n));
                }
            }
            (block, best.expect("non-empty block").0.to_owned())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.90,
            validation: 0.05,
            test: 0.05,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(AtlasError::InvalidArgument("split ratios must lie in [0, 1]".into()));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(AtlasError::InvalidArgument("split ratios must sum to 1".into()));
        }
        Ok(())
    }

    /// `(train, validation, test)` block counts for a stratum of `n` blocks:
    /// validation and test are rounded to nearest and train takes the remainder.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let validation = ((self.validation * n as f64).round() as usize).min(n);
        let test = ((self.test * n as f64).round() as usize).min(n - validation);
        (n - validation - test, validation, test)
    }
}

/// Block-level split plus any warnings raised while building it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitAssignment {
    pub blocks: BTreeMap<BlockId, Split>,
    pub warnings: Vec<String>,
}

impl SplitAssignment {
    pub fn split_of(&self, block: BlockId) -> Option<Split> {
        self.blocks.get(&block).copied()
    }

    /// Split of every occurrence given its block.
    pub fn occurrence_splits(&self, blocks: &[BlockId]) -> Vec<Split> {
        blocks
            .iter()
            .map(|b| self.blocks.get(b).copied().unwrap_or(Split::Train))
            .collect()
    }

    /// Occurrence indices belonging to `split`.
    pub fn indices(&self, blocks: &[BlockId], split: Split) -> Vec<usize> {
        self.occurrence_splits(blocks)
            .into_iter()
            .enumerate()
            .filter(|&(_, s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.blocks.values().filter(|&&s| s == split).count()
    }

    /// Writes `block_i,block_j,split`.
    pub fn save_csv(&self, path: impl AsRef<Path>, comment: Option<&str>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        if let Some(c) = comment {
            out.push_str(&format!("# {c}\n"));
        }
        out.push_str("block_i,block_j,split\n");
        for (b, s) in &self.blocks {
            out.push_str(&format!("{},{},{}\n", b.i, b.j, s));
        }
        std::fs::write(path, out).map_err(|e| AtlasError::io(path, e))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AtlasError::io(path, e))?;
        let mut blocks = BTreeMap::new();
        let mut header_seen = false;
        for (n, line) in text.lines().enumerate() {
            let line_no = n as u64 + 1;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if !header_seen {
                if line.trim() != "block_i,block_j,split" {
                    return Err(AtlasError::parse(path, line_no, "expected header `block_i,block_j,split`"));
                }
                header_seen = true;
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(AtlasError::parse(path, line_no, "expected 3 fields"));
            }
            let int = |s: &str| {
                s.parse::<i64>()
                    .map_err(|_| AtlasError::parse(path, line_no, format!("bad block index `{s}`")))
            };
            let split = parts[2]
                .parse()
                .map_err(|e: AtlasError| AtlasError::parse(path, line_no, e.to_string()))?;
            blocks.insert(BlockId { i: int(parts[0])?, j: int(parts[1])? }, split);
        }
        Ok(SplitAssignment {
            blocks,
            warnings: Vec::new(),
        })
    }
}

/// Stratified, seeded block split. `strata` maps every block to its region.
///
/// Within a stratum blocks are sorted, shuffled with a ChaCha stream seeded by
/// `seed` and the stratum name, and cut into validation, test and train in that
/// order. The result depends only on the block set, strata and seed.
pub fn split_blocks(strata: &BTreeMap<BlockId, String>, ratios: SplitRatios, seed: u64) -> Result<SplitAssignment> {
    ratios.validate()?;
    let mut by_region: BTreeMap<&str, Vec<BlockId>> = BTreeMap::new();
    for (block, region) in strata {
        by_region.entry(region.as_str()).or_default().push(*block);
    }

    let mut assignment = SplitAssignment::default();
    for (region, mut blocks) in by_region {
        let (_, n_val, n_test) = ratios.counts(blocks.len());
        if n_val == 0 || n_test == 0 {
            let msg = format!(
                "region `{region}` has {} block(s); validation/test receive {n_val}/{n_test}",
                blocks.len()
            );
            log::warn!("{msg}");
            assignment.warnings.push(msg);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stable_hash(region));
        blocks.shuffle(&mut rng);
        for (pos, block) in blocks.into_iter().enumerate() {
            let split = if pos < n_val {
                Split::Validation
            } else if pos < n_val + n_test {
                Split::Test
            } else {
                Split::Train
            };
            assignment.blocks.insert(block, split);
        }
    }
    Ok(assignment)
}

/// FNV-1a, so stratum seeds do not depend on std's randomized hasher.
fn stable_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Moves every block containing a species with no training occurrence to train,
/// repeating until no species is orphaned. Whole blocks move, never single rows.
pub fn repair_orphans(split: &SplitAssignment, data: &OccurrenceDataset, blocks: &[BlockId]) -> SplitAssignment {
    let mut repaired = split.clone();
    loop {
        let splits = repaired.occurrence_splits(blocks);
        let mut in_train = vec![false; data.n_species()];
        for (occ, s) in data.occurrences.iter().zip(&splits) {
            if *s == Split::Train {
                in_train[occ.species.index()] = true;
            }
        }
        let to_move: BTreeSet<BlockId> = data
            .occurrences
            .iter()
            .zip(blocks)
            .filter(|(occ, _)| !in_train[occ.species.index()])
            .map(|(_, b)| *b)
            .collect();
        if to_move.is_empty() {
            return repaired;
        }
        for b in to_move {
            repaired.blocks.insert(b, Split::Train);
        }
    }
}

/// Full hold-out pipeline: blocks, strata, stratified split and orphan repair.
#[derive(Debug, Clone)]
pub struct HoldOut {
    pub blocks: Vec<BlockId>,
    pub assignment: SplitAssignment,
}

impl HoldOut {
    pub fn build(data: &OccurrenceDataset, block_size: f64, ratios: SplitRatios, seed: u64) -> Result<Self> {
        let blocks = assign_blocks(data, block_size)?;
        let strata = block_strata(data, &blocks);
        let initial = split_blocks(&strata, ratios, seed)?;
        let assignment = repair_orphans(&initial, data, &blocks);
        Ok(HoldOut { blocks, assignment })
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.assignment.indices(&self.blocks, split)
    }
}
