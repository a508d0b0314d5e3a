//! Dataset-size and cross-domain segmentation studies, report tables and
//! NDVI.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::train_pix2pix_on;
use crate::nets::{ArchSpec, DiscSpec};
use crate::raster::{subsample_indices, BandName, DatasetManifest, RasterTile, Split};
use crate::seg::{evaluate_segmentation_on, train_segmentation_on, ChannelMode, ModeKind, NirSource, SegEvaluation};
use crate::synth::{build_synth_dataset, DomainStyle, Preset, SceneSpec};
use crate::train::{Checkpoint, GanLossSpec, Sample, TrainConfig, TrainingSet};

/// A style given by built-in name or spelled out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StyleRef {
    Name(String),
    Custom(DomainStyle),
}

impl StyleRef {
    pub fn resolve(&self) -> Result<DomainStyle> {
        match self {
            StyleRef::Name(n) => DomainStyle::builtin(n),
            StyleRef::Custom(s) => Ok(s.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetRecipe {
    pub preset: Preset,
    pub scenes: usize,
    pub scene_size: usize,
    pub first_seed: u64,
    pub styles: Vec<StyleRef>,
    pub tile_size: usize,
    pub train_fraction: f64,
    pub split_seed: u64,
}

impl Default for DatasetRecipe {
    fn default() -> Self {
        DatasetRecipe {
            preset: Preset::Ambiguity,
            scenes: 24,
            scene_size: 128,
            first_seed: 0,
            styles: vec![StyleRef::Name("spotlike".into())],
            tile_size: 64,
            train_fraction: 0.75,
            split_seed: 0,
        }
    }
}

impl DatasetRecipe {
    pub fn specs(&self) -> Vec<SceneSpec> {
        (0..self.scenes as u64)
            .map(|i| SceneSpec::from_preset(self.preset, self.scene_size, self.first_seed + i))
            .collect()
    }

    pub fn styles(&self) -> Result<Vec<DomainStyle>> {
        self.styles.iter().map(StyleRef::resolve).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenes == 0 || self.styles.is_empty() || self.tile_size == 0 || self.scene_size < self.tile_size {
            return Err(Error::Config(
                "dataset recipe needs scenes, styles and a tile no larger than the scene".into(),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::Config(format!("train fraction must lie in (0,1], got {}", self.train_fraction)));
        }
        Ok(())
    }

    /// Renders the dataset to `out_dir` and returns its manifest.
    pub fn build(&self, out_dir: &Path) -> Result<DatasetManifest> {
        self.validate()?;
        build_synth_dataset(&self.specs(), &self.styles()?, self.tile_size, self.train_fraction, self.split_seed, out_dir)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorPlan {
    /// Use this trained checkpoint instead of training one.
    pub checkpoint: Option<PathBuf>,
    /// Separate paired dataset for the generator; the experiment's training
    /// split is used when absent.
    pub recipe: Option<DatasetRecipe>,
    pub model: ArchSpec,
    pub discriminator: DiscSpec,
    pub loss: GanLossSpec,
    pub schedule: TrainConfig,
}

impl Default for GeneratorPlan {
    fn default() -> Self {
        GeneratorPlan {
            checkpoint: None,
            recipe: None,
            model: ArchSpec::gen_desk(),
            discriminator: DiscSpec::rf70(16),
            loss: GanLossSpec::default(),
            schedule: TrainConfig::gan_desk(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub name: String,
    pub output_dir: PathBuf,
    pub dataset: DatasetRecipe,
    pub fractions: Vec<f64>,
    pub modes: Vec<ModeKind>,
    pub seeds: Vec<u64>,
    /// Segmenter architecture; input channels follow each mode.
    pub segmenter: ArchSpec,
    pub schedule: TrainConfig,
    pub nir_source_at_train: NirSource,
    pub generator: GeneratorPlan,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            name: "experiment".into(),
            output_dir: PathBuf::from("experiment_out"),
            dataset: DatasetRecipe::default(),
            fractions: vec![1.0, 0.5, 1.0 / 3.0],
            modes: ModeKind::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            segmenter: ArchSpec::seg_desk(3),
            schedule: TrainConfig::seg_desk(),
            nir_source_at_train: NirSource::Real,
            generator: GeneratorPlan::default(),
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("experiment needs at least one seed".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("experiment needs at least one mode".into()));
        }
        if self.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) || self.fractions.is_empty() {
            return Err(Error::Config(format!("fractions must lie in (0,1], got {:?}", self.fractions)));
        }
        self.dataset.validate()?;
        self.schedule.validate()
    }

    fn needs_generator(&self) -> bool {
        self.modes.contains(&ModeKind::RgbGennir)
    }
}

/// Training and test samples of one experiment.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub train: TrainingSet,
    pub test: Vec<Sample>,
    /// Domain rows in display order.
    pub domain_order: Vec<String>,
}

impl ExperimentData {
    pub fn from_manifest(manifest: &DatasetManifest, domain_order: Vec<String>) -> Result<Self> {
        let train = TrainingSet::from_manifest(manifest, Some(Split::Train))?;
        let test = TrainingSet::from_manifest(manifest, Some(Split::Test))?.samples;
        Ok(ExperimentData {
            train,
            test,
            domain_order,
        })
    }

    fn test_domains(&self) -> Vec<String> {
        let mut present: Vec<String> = self.test.iter().map(|s| s.tile.domain.clone()).collect();
        present.sort();
        present.dedup();
        let mut out: Vec<String> = self.domain_order.iter().filter(|d| present.contains(d)).cloned().collect();
        out.extend(present.into_iter().filter(|d| !self.domain_order.contains(d)));
        out
    }
}

/// Report label of a domain tag.
pub fn display_domain(domain: &str) -> String {
    match domain {
        "spotlike" => "SPOT".into(),
        "planetlike" => "Planet".into(),
        other => other.into(),
    }
}

fn pooled_label(domains: &[String]) -> String {
    domains.iter().map(|d| display_domain(d)).collect::<Vec<_>>().join("+")
}

pub fn fraction_label(f: f64) -> String {
    if f == 1.0 {
        return "all data".into();
    }
    let k = (1.0 / f).round();
    if (1.0 / k - f).abs() < 1e-9 {
        format!("1/{k}")
    } else {
        format!("{f:.3}")
    }
}

pub fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Value(f64),
    /// Difference against a reference column, printed with a sign.
    Delta(f64),
    Failed,
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Value(v) => format!("{v:.3}"),
            Cell::Delta(v) => format!("{v:+.3}"),
            Cell::Failed => "failed".into(),
            Cell::Empty => String::new(),
        }
    }

    fn markdown(&self) -> String {
        match self {
            Cell::Delta(v) => format!("({v:+.3})"),
            other => other.csv(),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Cell::Value(v) | Cell::Delta(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub labels: Vec<String>,
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub title: String,
    pub label_headers: Vec<String>,
    pub value_headers: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    pub fn to_csv(&self) -> String {
        let esc = |s: &str| {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        let mut out = String::new();
        let header: Vec<String> = self.label_headers.iter().chain(&self.value_headers).map(|s| esc(s)).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for r in &self.rows {
            let fields: Vec<String> = r.labels.iter().map(|s| esc(s)).chain(r.cells.iter().map(Cell::csv)).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "## {}\n", self.title);
        let header: Vec<&str> = self.label_headers.iter().chain(&self.value_headers).map(String::as_str).collect();
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
        for r in &self.rows {
            let fields: Vec<String> = r.labels.iter().cloned().chain(r.cells.iter().map(Cell::markdown)).collect();
            let _ = writeln!(out, "| {} |", fields.join(" | "));
        }
        out
    }

    pub fn failed_cells(&self) -> usize {
        self.rows.iter().flat_map(|r| &r.cells).filter(|c| matches!(c, Cell::Failed)).count()
    }

    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.labels.iter().any(|l| l == label))
    }

    pub fn column(&self, header: &str) -> Option<usize> {
        self.value_headers.iter().position(|h| h == header)
    }
}

/// Writes `<stem>.csv` and `<stem>.md` into `dir` and returns their paths.
pub fn emit_report(table: &ReportTable, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(format!("{stem}.csv"));
    let md = dir.join(format!("{stem}.md"));
    fs::write(&csv, table.to_csv()).map_err(|e| Error::io(&csv, e))?;
    fs::write(&md, table.to_markdown()).map_err(|e| Error::io(&md, e))?;
    Ok((csv, md))
}

fn mode_for(kind: ModeKind, generator: Option<&Arc<Checkpoint>>, source: NirSource) -> Result<ChannelMode> {
    Ok(match kind {
        ModeKind::Rgb => ChannelMode::Rgb,
        ModeKind::RgbNir => ChannelMode::RgbNir,
        ModeKind::RgbGennir => ChannelMode::RgbGenNir {
            generator: generator
                .cloned()
                .ok_or_else(|| Error::Config("RGB+artificial NIR mode needs a generator".into()))?,
            nir_source_at_train: source,
        },
    })
}

/// One trained-and-evaluated segmentation run.
fn run_cell(
    plan: &ExperimentPlan,
    train: &TrainingSet,
    test: &[Sample],
    mode: &ChannelMode,
    seed: u64,
    tag: &str,
) -> Result<SegEvaluation> {
    let arch = plan.segmenter.clone().with_in_channels(mode.kind().channels());
    let cfg = TrainConfig {
        name: format!("{}_{tag}_seed{seed}", plan.name),
        seed,
        run_dir: None,
        ..plan.schedule.clone()
    };
    let ckpt = train_segmentation_on(train, mode, &arch, &cfg)?;
    evaluate_segmentation_on(&ckpt, test, mode)
}

fn group_f1(eval: &SegEvaluation, group: &Group) -> Option<f64> {
    match group {
        Group::Domain(d) => eval.domains.get(d).map(|g| g.scores.f1),
        Group::Pooled => eval.pooled.map(|g| g.scores.f1),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Group {
    Domain(String),
    Pooled,
}

fn groups(domains: &[String]) -> Vec<(String, Group)> {
    let mut g: Vec<(String, Group)> = domains.iter().map(|d| (display_domain(d), Group::Domain(d.clone()))).collect();
    if domains.len() > 1 {
        g.push((pooled_label(domains), Group::Pooled));
    }
    g
}

/// Per-seed results of one (fraction or dataset, mode) cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellRuns {
    pub fraction: f64,
    pub mode: ModeKind,
    pub train_tiles: usize,
    /// `Err` message for failed seeds.
    pub runs: Vec<std::result::Result<SegEvaluation, String>>,
}

impl CellRuns {
    pub fn failed(&self) -> bool {
        self.runs.iter().any(|r| r.is_err())
    }

    fn median_for(&self, group: &Group) -> Option<f64> {
        let v: Vec<f64> = self.runs.iter().filter_map(|r| r.as_ref().ok()).filter_map(|e| group_f1(e, group)).collect();
        median(&v)
    }

    /// Median pooled F1 (the single domain's F1 when only one is present).
    pub fn median_f1(&self) -> Option<f64> {
        if self.failed() {
            return None;
        }
        let v: Vec<f64> = self
            .runs
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .filter_map(|e| e.pooled.map(|g| g.scores.f1))
            .collect();
        median(&v)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationReport {
    pub table: ReportTable,
    pub cells: Vec<CellRuns>,
    pub dataset_fingerprint: String,
    pub generator_fingerprint: Option<String>,
}

impl AblationReport {
    pub fn cell(&self, fraction: f64, mode: ModeKind) -> Option<&CellRuns> {
        self.cells.iter().find(|c| c.fraction == fraction && c.mode == mode)
    }
}

fn check_generator_needed(plan: &ExperimentPlan, generator: Option<&Arc<Checkpoint>>) -> Result<()> {
    if plan.needs_generator() && generator.is_none() {
        return Err(Error::Config("plan includes RGB+artificial NIR but no generator was supplied".into()));
    }
    Ok(())
}

/// Trains every (fraction, mode, seed) combination on nested subsets of the
/// training split and reports median F1 per test group. Failures mark the
/// cell and the run continues.
pub fn run_size_ablation_with(
    plan: &ExperimentPlan,
    data: &ExperimentData,
    generator: Option<Arc<Checkpoint>>,
) -> Result<AblationReport> {
    plan.validate()?;
    check_generator_needed(plan, generator.as_ref())?;
    let domains = data.test_domains();
    let groups = groups(&domains);
    let mut cells = Vec::new();
    for &fraction in &plan.fractions {
        for &kind in &plan.modes {
            let mode = mode_for(kind, generator.as_ref(), plan.nir_source_at_train)?;
            let mut runs = Vec::new();
            let mut train_tiles = 0;
            for &seed in &plan.seeds {
                let subset = if fraction == 1.0 {
                    data.train.clone()
                } else {
                    let keep = subsample_indices(data.train.len(), fraction, seed)?;
                    TrainingSet::from_samples(keep.into_iter().map(|i| data.train.samples[i].clone()).collect())
                };
                train_tiles = subset.len();
                let tag = format!("{}_{}", fraction_label(fraction).replace(['/', ' '], "_"), kind.label());
                let r = run_cell(plan, &subset, &data.test, &mode, seed, &tag);
                if let Err(e) = &r {
                    log::warn!("cell {tag} seed {seed} failed: {e}");
                }
                runs.push(r.map_err(|e| e.to_string()));
            }
            cells.push(CellRuns {
                fraction,
                mode: kind,
                train_tiles,
                runs,
            });
        }
    }
    let mut rows = Vec::new();
    for (label, group) in &groups {
        for &kind in &plan.modes {
            let cells_row = plan
                .fractions
                .iter()
                .map(|&f| {
                    let c = cells.iter().find(|c| c.fraction == f && c.mode == kind).expect("cell exists");
                    if c.failed() {
                        Cell::Failed
                    } else {
                        c.median_for(group).map(|v| Cell::Value(round3(v))).unwrap_or(Cell::Empty)
                    }
                })
                .collect();
            rows.push(ReportRow {
                labels: vec![label.clone(), kind.label().into()],
                cells: cells_row,
            });
        }
    }
    let table = ReportTable {
        title: format!("{}: F1 by training-set size", plan.name),
        label_headers: vec!["test set".into(), "bands".into()],
        value_headers: plan.fractions.iter().map(|&f| fraction_label(f)).collect(),
        rows,
    };
    Ok(AblationReport {
        table,
        cells,
        dataset_fingerprint: data.train.fingerprint.clone(),
        generator_fingerprint: generator.map(|g| g.fingerprint()),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossDomainReport {
    pub table: ReportTable,
    pub cells: Vec<CellRuns>,
    pub dataset_fingerprint: String,
    pub generator_fingerprint: Option<String>,
}

pub const AVERAGE_LABEL: &str = "Average";
pub const DELTA_LABEL: &str = "delta vs RGB";

/// Trains each mode on the pooled domains and reports median F1 per test
/// domain, the pooled test set and their average, plus the difference of
/// each mode's average against RGB. Averages and deltas are computed from
/// the rounded table entries so they can be recomputed from the CSV.
pub fn run_crossdomain_with(
    plan: &ExperimentPlan,
    data: &ExperimentData,
    generator: Option<Arc<Checkpoint>>,
) -> Result<CrossDomainReport> {
    plan.validate()?;
    check_generator_needed(plan, generator.as_ref())?;
    let domains = data.test_domains();
    if domains.len() < 2 {
        return Err(Error::Config(format!(
            "cross-domain study needs at least two test domains, found {domains:?}"
        )));
    }
    let groups = groups(&domains);
    let mut cells = Vec::new();
    for &kind in &plan.modes {
        let mode = mode_for(kind, generator.as_ref(), plan.nir_source_at_train)?;
        let runs = plan
            .seeds
            .iter()
            .map(|&seed| {
                run_cell(plan, &data.train, &data.test, &mode, seed, kind.label()).map_err(|e| {
                    log::warn!("cell {} seed {seed} failed: {e}", kind.label());
                    e.to_string()
                })
            })
            .collect();
        cells.push(CellRuns {
            fraction: 1.0,
            mode: kind,
            train_tiles: data.train.len(),
            runs,
        });
    }
    let mut rows: Vec<ReportRow> = groups
        .iter()
        .map(|(label, group)| ReportRow {
            labels: vec![label.clone()],
            cells: cells
                .iter()
                .map(|c| {
                    if c.failed() {
                        Cell::Failed
                    } else {
                        c.median_for(group).map(|v| Cell::Value(round3(v))).unwrap_or(Cell::Empty)
                    }
                })
                .collect(),
        })
        .collect();
    let averages: Vec<Option<f64>> = (0..cells.len())
        .map(|j| {
            let col: Option<Vec<f64>> = rows.iter().map(|r| r.cells[j].value()).collect();
            col.map(|v| round3(v.iter().sum::<f64>() / v.len() as f64))
        })
        .collect();
    rows.push(ReportRow {
        labels: vec![AVERAGE_LABEL.into()],
        cells: averages.iter().map(|a| a.map(Cell::Value).unwrap_or(Cell::Failed)).collect(),
    });
    if let Some(rgb) = plan.modes.iter().position(|m| *m == ModeKind::Rgb) {
        rows.push(ReportRow {
            labels: vec![DELTA_LABEL.into()],
            cells: plan
                .modes
                .iter()
                .enumerate()
                .map(|(j, _)| match (j == rgb, averages[j], averages[rgb]) {
                    (true, _, _) => Cell::Empty,
                    (false, Some(a), Some(b)) => Cell::Delta(round3(a - b)),
                    _ => Cell::Empty,
                })
                .collect(),
        });
    }
    let table = ReportTable {
        title: format!("{}: F1 by test domain", plan.name),
        label_headers: vec!["Test images".into()],
        value_headers: plan.modes.iter().map(|m| m.label().to_string()).collect(),
        rows,
    };
    Ok(CrossDomainReport {
        table,
        cells,
        dataset_fingerprint: data.train.fingerprint.clone(),
        generator_fingerprint: generator.map(|g| g.fingerprint()),
    })
}

/// Builds the plan's dataset under `<output_dir>/data` and returns it with
/// the trained or loaded generator when the plan needs one.
pub fn prepare_experiment(plan: &ExperimentPlan) -> Result<(ExperimentData, Option<Arc<Checkpoint>>)> {
    plan.validate()?;
    let manifest = plan.dataset.build(&plan.output_dir.join("data"))?;
    let order = plan.dataset.styles()?.into_iter().map(|s| s.name).collect();
    let data = ExperimentData::from_manifest(&manifest, order)?;
    let generator = if plan.needs_generator() {
        let g = &plan.generator;
        let ckpt = match (&g.checkpoint, &g.recipe) {
            (Some(path), _) => Checkpoint::load(path)?,
            (None, Some(recipe)) => {
                let m = recipe.build(&plan.output_dir.join("generator_data"))?;
                let set = TrainingSet::from_manifest(&m, Some(Split::Train))?;
                train_pix2pix_on(&set, &g.model, &g.discriminator, &g.loss, &generator_schedule(plan))?
            }
            (None, None) => train_pix2pix_on(&data.train, &g.model, &g.discriminator, &g.loss, &generator_schedule(plan))?,
        };
        Some(Arc::new(ckpt))
    } else {
        None
    };
    Ok((data, generator))
}

fn generator_schedule(plan: &ExperimentPlan) -> TrainConfig {
    TrainConfig {
        run_dir: Some(plan.output_dir.clone()),
        ..plan.generator.schedule.clone()
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn run_size_ablation(plan: &ExperimentPlan) -> Result<AblationReport> {
    let (data, generator) = prepare_experiment(plan)?;
    let report = run_size_ablation_with(plan, &data, generator)?;
    emit_report(&report.table, &plan.output_dir, "ablation")?;
    write_json(&report, &plan.output_dir.join("ablation.json"))?;
    Ok(report)
}

pub fn run_crossdomain(plan: &ExperimentPlan) -> Result<CrossDomainReport> {
    let (data, generator) = prepare_experiment(plan)?;
    let report = run_crossdomain_with(plan, &data, generator)?;
    emit_report(&report.table, &plan.output_dir, "crossdomain")?;
    write_json(&report, &plan.output_dir.join("crossdomain.json"))?;
    Ok(report)
}

/// A per-pixel index in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexArray {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

/// `(NIR - R) / (NIR + R)`, 0 where both are 0.
pub fn ndvi(tile: &RasterTile) -> Result<IndexArray> {
    let nir = tile.require(BandName::Nir)?;
    let red = tile.require(BandName::R)?;
    let values = nir
        .values()
        .iter()
        .zip(red.values())
        .map(|(&n, &r)| {
            let (n, r) = (n as f64, r as f64);
            let s = n + r;
            if s == 0.0 {
                0.0
            } else {
                ((n - r) / s) as f32
            }
        })
        .collect();
    let (height, width) = tile.dims();
    Ok(IndexArray { height, width, values })
}

/// Table of NIR errors for several models on one held-out set.
pub fn nir_error_table(title: &str, rows: &[(String, crate::metrics::BandErrorReport)]) -> ReportTable {
    ReportTable {
        title: title.into(),
        label_headers: vec!["model".into()],
        value_headers: vec!["MAE".into(), "RMSE".into(), "Mean Bias".into()],
        rows: rows
            .iter()
            .map(|(name, r)| ReportRow {
                labels: vec![name.clone()],
                cells: vec![Cell::Value(r.mae), Cell::Value(r.rmse), Cell::Value(r.mbe)],
            })
            .collect(),
    }
}
