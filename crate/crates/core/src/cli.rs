//! `atlas` subcommands. Every stage reads the same TOML config, writes under the
//! output directory with fixed file names and prefixes text outputs with a
//! `# config: {...}` line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::atlas::grid::GridSpec;
use crate::atlas::inference::{check_map_inputs, layer_kind, run_map, MapContext, MapTally};
use crate::atlas::raster::{format_sig6, AsciiGridWriter, RasterLayer, ValueKind, DEFAULT_NODATA};
use crate::atlas::stack::FeatureStack;
use crate::atlas::stats::spearman;
use crate::atlas::zonal::{
    by_name, rank_regions, restrict, zonal_area_pct_all, zonal_mean, Direction, RegionCatalog, RegionRaster,
};
use crate::conformal::{calibrate, mean_set_size, set_coverage, CalibrationResult, SetSizeSummary};
use crate::config::RunConfig;
use crate::domain::{load_occurrences, load_status_table, OccurrenceDataset, StatusCategory};
use crate::error::{AtlasError, Result};
use crate::indicators::{IndicatorKind, Measure, StatusTarget};
use crate::metrics::{evaluate_top_k, TopKAccumulator};
use crate::model::{train, train_with_observer, ProbabilityEstimator, Samples, SoftmaxModel};
use crate::prior::build_continent_prior;
use crate::split::{assign_blocks, HoldOut, Split, SplitAssignment};
use crate::synth::{NicheWorld, Niches, SyntheticWorld, WorldSpec, N_BANDS};

pub const MODEL_FILE: &str = "model.bin";
pub const FULL_MODEL_FILE: &str = "model_full.bin";
pub const SPLIT_FILE: &str = "split.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PRIOR_FILE: &str = "prior.csv";
pub const CALIBRATION_TXT: &str = "calibration.txt";
pub const CALIBRATION_JSON: &str = "calibration.json";
pub const MAPS_DIR: &str = "maps";
pub const MAP_REPORT: &str = "map_report.txt";
pub const AREA_FILE: &str = "zonal_area_pct.csv";
pub const MEAN_FILE: &str = "zonal_mean.csv";
pub const RANKINGS_FILE: &str = "rankings.csv";
pub const RATIOS_FILE: &str = "ratios.csv";
pub const SPEARMAN_FILE: &str = "spearman.csv";
pub const EVAL_FILE: &str = "eval.csv";

#[derive(Debug, Parser)]
#[command(name = "atlas", version, about = "Species assemblage and threat-status mapping")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split occurrences, fit the classifier, write per-epoch curves.
    Train(StageArgs),
    /// Choose the set threshold on the validation split.
    Calibrate(StageArgs),
    /// Write one raster per requested indicator.
    Map(StageArgs),
    /// Aggregate indicator rasters per region.
    Zonal(StageArgs),
    /// Top-k accuracy on the test split.
    Eval(StageArgs),
    /// Write a synthetic fixture (inputs plus config.toml).
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct StageArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config value, e.g. `--set train.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (overrides `paths.out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Drop the repeated +180° column of global grids.
    #[arg(long)]
    pub drop_antimeridian: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub species: usize,
    #[arg(long, default_value_t = 6000)]
    pub occurrences: usize,
    /// Cells per side of the square grid.
    #[arg(long, default_value_t = 100)]
    pub side: usize,
    /// Two species with disjoint niches instead of Gaussian niches.
    #[arg(long)]
    pub disjoint: bool,
}

/// A failure tagged with the stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: AtlasError,
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        match self.error {
            AtlasError::Config(_) => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "atlas {}: {}", self.stage, self.error)
    }
}

/// Parses `args` (program name first) and runs the subcommand; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(command: Command) -> std::result::Result<(), StageError> {
    let (stage, result) = match command {
        Command::Train(a) => ("train", load_config(&a).and_then(|c| cmd_train(&c))),
        Command::Calibrate(a) => ("calibrate", load_config(&a).and_then(|c| cmd_calibrate(&c).map(|_| ()))),
        Command::Map(a) => ("map", load_config(&a).and_then(|c| cmd_map(&c).map(|_| ()))),
        Command::Zonal(a) => ("zonal", load_config(&a).and_then(|c| cmd_zonal(&c))),
        Command::Eval(a) => ("eval", load_config(&a).and_then(|c| cmd_eval(&c).map(|_| ()))),
        Command::Synth(a) => ("synth", cmd_synth(&a)),
    };
    result.map_err(|error| StageError { stage, error })
}

pub fn load_config(args: &StageArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config, &args.overrides)?;
    if let Some(out) = &args.out {
        cfg.paths.out = Some(out.clone());
    }
    if args.drop_antimeridian {
        cfg.map.drop_antimeridian = true;
    }
    Ok(cfg)
}

fn effective_grid(cfg: &RunConfig, stack: &FeatureStack) -> GridSpec {
    let mut grid = cfg.map.grid.unwrap_or_else(|| stack.grid());
    grid.drop_antimeridian |= cfg.map.drop_antimeridian;
    grid
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| AtlasError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| AtlasError::io(path, e))
}

fn header(cfg: &RunConfig) -> String {
    format!("# config: {}\n", cfg.echo())
}

/// Occurrences with their covariates read from the stack.
pub struct Prepared {
    pub data: OccurrenceDataset,
    pub stack: FeatureStack,
    /// `None` where a covariate is missing.
    pub features: Vec<Option<Vec<f64>>>,
}

impl Prepared {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let data = load_occurrences(cfg.input_path("occurrences")?)?;
        if data.is_empty() {
            return Err(AtlasError::Empty("occurrence file"));
        }
        let stack = FeatureStack::load(cfg.input_path("stack")?)?;
        let features: Vec<Option<Vec<f64>>> = data
            .occurrences
            .iter()
            .map(|o| {
                let x = stack.features_at(o.lon, o.lat, &cfg.features);
                x.iter().all(|v| v.is_finite()).then_some(x)
            })
            .collect();
        let dropped = features.iter().filter(|f| f.is_none()).count();
        if dropped > 0 {
            log::warn!("{dropped} occurrence(s) have missing covariates and are skipped");
        }
        Ok(Prepared { data, stack, features })
    }

    pub fn n_features(&self, cfg: &RunConfig) -> usize {
        self.stack.n_features(&cfg.features)
    }

    pub fn samples(&self, cfg: &RunConfig, indices: impl IntoIterator<Item = usize>) -> Samples {
        let mut s = Samples::new(self.n_features(cfg));
        for i in indices {
            if let Some(x) = &self.features[i] {
                s.push(x, self.data.occurrences[i].species).expect("stack dimension");
            }
        }
        s
    }

    /// Samples of one split according to the split file in the output directory.
    pub fn split_samples(&self, cfg: &RunConfig, split: Split) -> Result<Samples> {
        let assignment = SplitAssignment::load_csv(cfg.out_dir().join(SPLIT_FILE))?;
        let blocks = assign_blocks(&self.data, cfg.split.block_size)?;
        Ok(self.samples(cfg, assignment.indices(&blocks, split)))
    }
}

fn load_model(cfg: &RunConfig, prepared: &Prepared) -> Result<SoftmaxModel> {
    let model = SoftmaxModel::load(cfg.out_dir().join(MODEL_FILE))?;
    let d = prepared.n_features(cfg);
    if model.n_features() != d || model.n_classes() != prepared.data.n_species() {
        return Err(AtlasError::DimensionMismatch {
            expected: model.n_features() * model.n_classes(),
            actual: d * prepared.data.n_species(),
            context: "model shape vs inputs (features x species)",
        });
    }
    Ok(model)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let prepared = Prepared::load(cfg)?;
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    let c = prepared.data.n_species();
    let holdout = HoldOut::build(&prepared.data, cfg.split.block_size, cfg.split.ratios(), cfg.split.seed)?;
    for w in &holdout.assignment.warnings {
        log::warn!("{w}");
    }
    let train_set = prepared.samples(cfg, holdout.indices(Split::Train));
    let val_set = prepared.samples(cfg, holdout.indices(Split::Validation));
    if train_set.is_empty() {
        return Err(AtlasError::Empty("training split"));
    }
    log::info!(
        "train/validation/test occurrences: {}/{}/{}",
        train_set.len(),
        val_set.len(),
        holdout.indices(Split::Test).len()
    );

    let k = cfg.train.curve_k.clamp(1, c);
    let mut metrics = header(cfg);
    writeln!(metrics, "epoch,learning_rate,loss,clamped,val_micro_top{k},val_macro_top{k}").unwrap();
    let mut curve_error = None;
    let outcome = train_with_observer(&train_set, c, &cfg.train.model, |report, model| {
        let (micro, macro_) = if val_set.is_empty() {
            (String::new(), String::new())
        } else {
            match evaluate_top_k(model, &val_set, k) {
                Ok(s) => (format_sig6(s.micro), format_sig6(s.macro_)),
                Err(e) => {
                    curve_error.get_or_insert(e);
                    (String::new(), String::new())
                }
            }
        };
        log::info!("epoch {} loss {:.6} val top-{k} {micro}/{macro_}", report.epoch, report.loss);
        writeln!(
            metrics,
            "{},{},{},{},{micro},{macro_}",
            report.epoch,
            format_sig6(report.learning_rate),
            format_sig6(report.loss),
            report.clamped
        )
        .unwrap();
    })?;
    if let Some(e) = curve_error {
        return Err(e);
    }
    outcome.model.save(out.join(MODEL_FILE))?;
    holdout
        .assignment
        .save_csv(out.join(SPLIT_FILE), Some(&format!("config: {}", cfg.echo())))?;
    write_text(&out.join(METRICS_FILE), &metrics)?;
    let prior = build_continent_prior(&prepared.data)?;
    prior.save_csv(&prepared.data.catalog, out.join(PRIOR_FILE), Some(&format!("config: {}", cfg.echo())))?;

    if cfg.train.retrain_full {
        let all = prepared.samples(cfg, 0..prepared.data.len());
        let full = train(&all, c, &cfg.train.model)?;
        full.model.save(out.join(FULL_MODEL_FILE))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    #[serde(flatten)]
    pub result: CalibrationResult,
    pub set_size: SetSizeSummary,
    pub coverage_micro: f64,
    pub coverage_macro: f64,
    pub config: RunConfig,
}

impl CalibrationReport {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AtlasError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| AtlasError::parse(path, e.line() as u64, e.to_string()))
    }
}

pub fn cmd_calibrate(cfg: &RunConfig) -> Result<CalibrationReport> {
    let prepared = Prepared::load(cfg)?;
    let model = load_model(cfg, &prepared)?;
    let val = prepared.split_samples(cfg, Split::Validation)?;
    if val.is_empty() {
        return Err(AtlasError::Empty("validation split"));
    }
    let preds = model.predict_proba_batch(&val)?;
    let true_probs: Vec<f64> = preds.iter().zip(val.labels()).map(|(p, &y)| p.get(y)).collect();
    let mut result = calibrate(&true_probs, cfg.calibration.epsilon)?;
    let set_size = mean_set_size(&preds, result.lambda)?;
    result.mean_set_size = Some(set_size.mean);
    let (coverage_micro, coverage_macro) = set_coverage(&preds, val.labels(), result.lambda)?;
    let report = CalibrationReport {
        result,
        set_size,
        coverage_micro,
        coverage_macro,
        config: cfg.clone(),
    };

    let out = cfg.out_dir();
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_text(&out.join(CALIBRATION_JSON), &(json + "\n"))?;

    let mut txt = header(cfg);
    let r = &report.result;
    writeln!(txt, "epsilon {}", r.epsilon).unwrap();
    writeln!(txt, "lambda {:e}", r.lambda).unwrap();
    writeln!(txt, "empirical_error {}", format_sig6(r.empirical_error)).unwrap();
    writeln!(txt, "n_calibration {}", r.n_calibration).unwrap();
    writeln!(txt, "coverage_micro {}", format_sig6(coverage_micro)).unwrap();
    writeln!(txt, "coverage_macro {}", format_sig6(coverage_macro)).unwrap();
    writeln!(txt, "set_size count mean std min 25% 50% 75% max").unwrap();
    let s = &report.set_size;
    writeln!(
        txt,
        "set_size {} {} {} {} {} {} {} {}",
        s.count,
        format_sig6(s.mean),
        format_sig6(s.std),
        s.min,
        s.q25,
        s.median,
        s.q75,
        s.max
    )
    .unwrap();
    write_text(&out.join(CALIBRATION_TXT), &txt)?;
    Ok(report)
}

fn map_file(kind: IndicatorKind) -> String {
    format!("{kind}.asc")
}

pub fn cmd_map(cfg: &RunConfig) -> Result<MapTally> {
    let prepared = Prepared::load(cfg)?;
    let model = load_model(cfg, &prepared)?;
    let lambda = match cfg.map.lambda {
        Some(l) => l,
        None => CalibrationReport::load(cfg.out_dir().join(CALIBRATION_JSON))?.result.lambda,
    };
    let prior = build_continent_prior(&prepared.data)?;
    let statuses =
        load_status_table(cfg.input_path("statuses")?)?.resolve(&prepared.data.catalog, cfg.map.precedence);
    let kinds = cfg.map.kinds()?;
    let grid = effective_grid(cfg, &prepared.stack);
    let opts = cfg.map.options();
    let ctx = MapContext {
        model: &model,
        stack: &prepared.stack,
        features: cfg.features,
        lambda,
        prior: &prior,
        statuses: &statuses,
    };
    check_map_inputs(&ctx, &grid, &kinds, &opts)?;

    let dir = cfg.out_dir().join(MAPS_DIR);
    ensure_dir(&dir)?;
    let paths: Vec<PathBuf> = kinds.iter().map(|k| dir.join(map_file(*k))).collect();
    let mut writers = kinds
        .iter()
        .zip(&paths)
        .map(|(k, p)| AsciiGridWriter::create(p, &grid, DEFAULT_NODATA, layer_kind(*k)))
        .collect::<Result<Vec<_>>>()?;
    let result = run_map(&ctx, &grid, &kinds, &opts, |_, rows| {
        for row in rows {
            for (w, values) in writers.iter_mut().zip(&row) {
                w.write_row(values)?;
            }
        }
        Ok(())
    })
    .and_then(|tally| {
        for w in writers {
            w.finish()?;
        }
        Ok(tally)
    });
    let tally = match result {
        Ok(t) => t,
        Err(e) => {
            for p in &paths {
                let mut partial = p.clone().into_os_string();
                partial.push(".partial");
                let _ = std::fs::remove_file(PathBuf::from(partial));
            }
            return Err(e);
        }
    };

    let mut report = header(cfg);
    writeln!(report, "lambda {lambda:e}").unwrap();
    writeln!(report, "grid {}x{} cells", grid.nrows(), grid.ncols()).unwrap();
    for (name, n) in [
        ("land_cells", tally.land_cells),
        ("water_cells", tally.water_cells),
        ("nodata_features", tally.nodata_features),
        ("no_continent", tally.no_continent),
        ("empty_assemblages", tally.empty_assemblages),
        ("missing_status_members", tally.missing_status_members),
    ] {
        writeln!(report, "{name} {n}").unwrap();
    }
    writeln!(report, "layers {}", kinds.iter().map(|k| map_file(*k)).collect::<Vec<_>>().join(" ")).unwrap();
    write_text(&dir.join(MAP_REPORT), &report)?;
    log::info!("map tally: {tally:?}");
    Ok(tally)
}

fn read_map(dir: &Path, kind: IndicatorKind) -> Result<Option<RasterLayer>> {
    let path = dir.join(map_file(kind));
    if !path.exists() {
        return Ok(None);
    }
    let value_kind = if kind.is_categorical() {
        ValueKind::StatusCode
    } else {
        ValueKind::Real
    };
    RasterLayer::read_ascii_as(&path, value_kind).map(Some)
}

fn csv_value(v: f64) -> String {
    format!("{v}")
}

pub fn cmd_zonal(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir();
    let maps = out.join(MAPS_DIR);
    let regions = RegionRaster::new(RasterLayer::read_ascii(cfg.input_path("regions")?)?);
    let catalog = match &cfg.paths.region_catalog {
        Some(_) => RegionCatalog::load_csv(cfg.input_path("region_catalog")?)?,
        None => RegionCatalog::default(),
    };
    let eligible = regions.eligible(&catalog, cfg.zonal.min_area_km2);
    if eligible.is_empty() {
        log::warn!("no region reaches {} km²", cfg.zonal.min_area_km2);
    }

    let mut layers: BTreeMap<IndicatorKind, RasterLayer> = BTreeMap::new();
    for kind in IndicatorKind::all() {
        if let Some(layer) = read_map(&maps, kind)? {
            layers.insert(kind, layer);
        }
    }
    if layers.is_empty() {
        return Err(AtlasError::Empty("indicator rasters (run `atlas map` first)"));
    }

    // statistic name -> region name -> value
    let mut stats: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut area_csv = header(cfg) + "region,statistic,value\n";
    let mut mean_csv = header(cfg) + "region,statistic,value\n";
    for (kind, layer) in &layers {
        if kind.is_categorical() {
            let pct = restrict(&zonal_area_pct_all(layer, &regions)?, &eligible);
            for (region, values) in &pct {
                for c in StatusCategory::ALL {
                    let stat = format!("Area_%[{kind}={c}]");
                    let v = values[c.rank() as usize];
                    writeln!(area_csv, "{},{stat},{}", catalog.name(*region), csv_value(v)).unwrap();
                    stats.entry(stat).or_default().insert(catalog.name(*region), v);
                }
            }
        } else {
            let mean = restrict(&zonal_mean(layer, &regions)?, &eligible);
            let stat = format!("mean[{kind}]");
            for (region, v) in &mean {
                writeln!(mean_csv, "{},{stat},{}", catalog.name(*region), csv_value(*v)).unwrap();
            }
            stats.insert(stat, by_name(&mean, &catalog));
        }
    }
    write_text(&out.join(AREA_FILE), &area_csv)?;
    write_text(&out.join(MEAN_FILE), &mean_csv)?;

    let mut rankings = header(cfg) + "statistic,rank,region,value\n";
    for (stat, values) in &stats {
        if values.is_empty() {
            continue;
        }
        for r in rank_regions(values, cfg.zonal.top_k, Direction::Descending)? {
            writeln!(rankings, "{stat},{},{},{}", r.rank, r.region, r.display_value()).unwrap();
        }
    }
    write_text(&out.join(RANKINGS_FILE), &rankings)?;

    // all-status over assessed-only mean per region, e.g. mean[I_CR]/mean[I_CR_IUCN]
    let mut ratios = header(cfg) + "region,statistic,value\n";
    for kind in IndicatorKind::all().into_iter().filter(|k| !k.assessed_only && !k.is_categorical()) {
        if matches!(kind.measure, Measure::Shannon) {
            continue;
        }
        let assessed = IndicatorKind { assessed_only: true, ..kind };
        let (Some(num), Some(den)) = (stats.get(&format!("mean[{kind}]")), stats.get(&format!("mean[{assessed}]")))
        else {
            continue;
        };
        for (region, n) in num {
            if let Some(d) = den.get(region).filter(|d| **d > 0.0) {
                writeln!(ratios, "{region},mean[{kind}]/mean[{assessed}],{}", csv_value(n / d)).unwrap();
            }
        }
    }
    write_text(&out.join(RATIOS_FILE), &ratios)?;

    let threat = IndicatorKind::new(Measure::Proportion(StatusTarget::Threat));
    let mut sp = header(cfg) + "x,y,n,rho,p_value,method\n";
    if let (Some(x), Some(y)) = (
        stats.get(&format!("mean[{threat}]")),
        stats.get(&format!("mean[{}]", IndicatorKind::shannon())),
    ) {
        let common: Vec<&String> = x.keys().filter(|r| y.contains_key(*r)).collect();
        let xs: Vec<f64> = common.iter().map(|r| x[*r]).collect();
        let ys: Vec<f64> = common.iter().map(|r| y[*r]).collect();
        match spearman(&xs, &ys) {
            Ok(s) => {
                let method = serde_json::to_value(s.method).expect("enum serializes");
                writeln!(
                    sp,
                    "mean[{threat}],mean[I_H],{},{},{},{}",
                    s.n,
                    csv_value(s.rho),
                    csv_value(s.p_value),
                    method.as_str().unwrap_or_default()
                )
                .unwrap();
            }
            Err(e) => log::warn!("spearman not computed: {e}"),
        }
    }
    write_text(&out.join(SPEARMAN_FILE), &sp)?;
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<Vec<(usize, f64, f64)>> {
    let prepared = Prepared::load(cfg)?;
    let model = load_model(cfg, &prepared)?;
    let test = prepared.split_samples(cfg, Split::Test)?;
    if test.is_empty() {
        return Err(AtlasError::Empty("test split"));
    }
    let c = model.n_classes();
    let preds = model.predict_proba_batch(&test)?;
    let mut rows = Vec::new();
    let mut csv = header(cfg) + "k,micro,macro\n";
    for &k in &cfg.eval.k {
        if k > c {
            log::warn!("skipping k = {k} > {c} species");
            continue;
        }
        let mut acc = TopKAccumulator::new(k, c)?;
        for (p, &y) in preds.iter().zip(test.labels()) {
            acc.add(p, y);
        }
        let s = acc.finish()?;
        writeln!(csv, "{k},{},{}", csv_value(s.micro), csv_value(s.macro_)).unwrap();
        rows.push((k, s.micro, s.macro_));
    }
    write_text(&cfg.out_dir().join(EVAL_FILE), &csv)?;
    Ok(rows)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = WorldSpec {
        side: args.side,
        n_occurrences: args.occurrences,
        seed: args.seed,
        ..WorldSpec::default()
    };
    let niches = if args.disjoint {
        Niches::Disjoint
    } else {
        Niches::Gaussian(NicheWorld::random(args.species, N_BANDS, args.seed))
    };
    let world = SyntheticWorld::generate(&spec, &niches)?;
    ensure_dir(&args.out)?;
    world.write_fixture(&args.out)
}
