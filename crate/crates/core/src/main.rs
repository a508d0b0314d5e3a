use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::info;

use spectrasynth::config::{load_plan, load_value, TrainFile};
use spectrasynth::experiments::{
    emit_report, ndvi, nir_error_table, run_crossdomain, run_size_ablation, DatasetRecipe, ExperimentPlan, StyleRef,
};
use spectrasynth::gan::{evaluate_nir, fine_tune, generate_nir, train_pix2pix, train_regression};
use spectrasynth::nets::{ArchSpec, HeadActivation};
use spectrasynth::raster::{write_png16, BandName, DatasetManifest, Split};
use spectrasynth::seg::{evaluate_segmentation_on, train_segmentation, ChannelMode, ModeKind};
use spectrasynth::synth::Preset;
use spectrasynth::train::{Checkpoint, ModelRole, Sample, TrainConfig, TrainingSet};
use spectrasynth::{Error, Result};

#[derive(Parser)]
#[command(name = "spectrasynth", version, about = "Synthesize NIR from RGB and measure its value for forest segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML or JSON config or plan file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic paired dataset with forest masks.
    Synth {
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated domain styles.
        #[arg(long, default_value = "spotlike", value_delimiter = ',')]
        styles: Vec<String>,
        #[arg(long, default_value = "ambiguity")]
        preset: String,
        #[arg(long, default_value_t = 64)]
        tile_size: usize,
        #[arg(long, default_value_t = 0.75)]
        train_fraction: f64,
        #[arg(long, default_value = "synth_data")]
        out: PathBuf,
    },
    /// Train the pix2pix NIR generator.
    #[command(alias = "train-gen")]
    TrainGan(Common),
    /// Train the plain regression baseline.
    TrainReg(Common),
    /// Train a forest segmenter.
    TrainSeg(Common),
    /// Continue a generator on a new domain at reduced learning rate.
    FineTune(Common),
    /// Write generated NIR for every tile of a manifest.
    GenNir(Common),
    /// Evaluate a checkpoint on the test split.
    Eval(Common),
    /// Dataset-size ablation study.
    Ablation(Common),
    /// Cross-domain study.
    Crossdomain(Common),
    /// Write NDVI for every tile of a manifest that has NIR.
    Ndvi(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failed) => {
            eprintln!("{failed} experiment cell(s) failed");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_configuration() { 2 } else { 1 })
        }
    }
}

fn train_file(common: &Common, model: ArchSpec, schedule: TrainConfig) -> Result<TrainFile> {
    let mut file = match &common.config {
        Some(path) => TrainFile::load(path, model, schedule)?,
        None => TrainFile::from_value(&serde_json::Value::Null, model, schedule)?,
    };
    if let Some(seed) = common.seed {
        file.schedule.seed = seed;
    }
    file.schedule.run_dir = Some(
        common
            .out
            .clone()
            .or_else(|| file.schedule.run_dir.clone())
            .unwrap_or_else(|| PathBuf::from(".")),
    );
    Ok(file)
}

fn required<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("[data] {what} is required for this command")))
}

fn out_dir(common: &Common, default: &str) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    Ok(dir)
}

fn final_path(cfg: &TrainConfig) -> PathBuf {
    Checkpoint::run_path(cfg.run_dir.as_deref().unwrap_or(Path::new(".")), &cfg.name, cfg.epochs)
}

fn channel_mode(kind: ModeKind, generator: Option<&PathBuf>, file: &TrainFile) -> Result<ChannelMode> {
    Ok(match kind {
        ModeKind::Rgb => ChannelMode::Rgb,
        ModeKind::RgbNir => ChannelMode::RgbNir,
        ModeKind::RgbGennir => {
            let path = generator.ok_or_else(|| Error::Config("[data] generator is required for rgb_gennir".into()))?;
            ChannelMode::RgbGenNir {
                generator: Arc::new(Checkpoint::load(path)?),
                nir_source_at_train: file.data.nir_source_at_train,
            }
        }
    })
}

fn config_value(common: &Common) -> Result<serde_json::Value> {
    match &common.config {
        Some(p) => load_value(p),
        None => Ok(serde_json::Value::Null),
    }
}

fn plan(common: &Common) -> Result<ExperimentPlan> {
    let mut plan = match &common.config {
        Some(p) => load_plan(p)?,
        None => ExperimentPlan::default(),
    };
    if let Some(seed) = common.seed {
        plan.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        plan.output_dir = out.clone();
    }
    plan.validate()?;
    Ok(plan)
}

fn test_samples(manifest: &DatasetManifest, split: Option<Split>) -> Result<Vec<Sample>> {
    Ok(TrainingSet::from_manifest(manifest, Some(split.unwrap_or(Split::Test)))?.samples)
}

fn run(command: Command) -> Result<usize> {
    match command {
        Command::Synth {
            count,
            size,
            seed,
            styles,
            preset,
            tile_size,
            train_fraction,
            out,
        } => {
            let preset: Preset = serde_json::from_value(serde_json::Value::String(preset.clone()))
                .map_err(|_| Error::Config(format!("unknown preset `{preset}`, expected ambiguity or plain")))?;
            let recipe = DatasetRecipe {
                preset,
                scenes: count,
                scene_size: size,
                first_seed: seed,
                styles: styles.into_iter().map(StyleRef::Name).collect(),
                tile_size,
                train_fraction,
                split_seed: seed,
            };
            let m = recipe.build(&out)?;
            info!(
                "wrote {} tiles ({} train, {} test) to {}",
                m.records.len(),
                m.count(Split::Train),
                m.count(Split::Test),
                out.display()
            );
            Ok(0)
        }
        Command::TrainGan(c) => {
            let f = train_file(&c, ArchSpec::gen_desk(), TrainConfig::gan_desk())?;
            let m = DatasetManifest::load(required(&f.data.manifest, "manifest")?)?;
            train_pix2pix(&m, &f.model, &f.discriminator, &f.loss, &f.schedule)?;
            info!("checkpoint written to {}", final_path(&f.schedule).display());
            Ok(0)
        }
        Command::TrainReg(c) => {
            let arch = ArchSpec::gen_desk().with_head(HeadActivation::Linear);
            let f = train_file(&c, arch, TrainConfig::regression_desk())?;
            let m = DatasetManifest::load(required(&f.data.manifest, "manifest")?)?;
            train_regression(&m, &f.model, &f.schedule)?;
            info!("checkpoint written to {}", final_path(&f.schedule).display());
            Ok(0)
        }
        Command::TrainSeg(c) => {
            let f = train_file(&c, ArchSpec::seg_desk(3), TrainConfig::seg_desk())?;
            let kind = f.data.mode.unwrap_or(ModeKind::Rgb);
            let mode = channel_mode(kind, f.data.generator.as_ref(), &f)?;
            let m = DatasetManifest::load(required(&f.data.manifest, "manifest")?)?;
            let arch = f.model.clone().with_in_channels(kind.channels());
            train_segmentation(&m, &mode, &arch, &f.schedule)?;
            info!("checkpoint written to {}", final_path(&f.schedule).display());
            Ok(0)
        }
        Command::FineTune(c) => {
            let probe = TrainFile::from_value(&config_value(&c)?, ArchSpec::gen_desk(), TrainConfig::gan_desk())?;
            let parent = Checkpoint::load(required(&probe.data.checkpoint, "checkpoint")?)?;
            let schedule = match parent.role {
                ModelRole::Regression => TrainConfig::regression_desk(),
                _ => TrainConfig::gan_desk(),
            };
            let f = train_file(&c, parent.model.spec().clone(), schedule)?;
            let m = DatasetManifest::load(required(&f.data.manifest, "manifest")?)?;
            fine_tune(&parent, &m, &f.model, &f.schedule)?;
            info!("checkpoint written to {}", final_path(&f.schedule).display());
            Ok(0)
        }
        Command::GenNir(c) => {
            let f = train_file(&c, ArchSpec::gen_desk(), TrainConfig::gan_desk())?;
            let ckpt = Checkpoint::load(required(&f.data.checkpoint, "checkpoint")?)?;
            let m = DatasetManifest::load(required(&f.data.manifest, "manifest")?)?;
            let dir = out_dir(&c, "generated_nir")?;
            let size = m.tile_size;
            let stride = f.data.stride.unwrap_or(size);
            let tiles = m.load_tiles(f.data.split)?;
            for t in &tiles {
                let nir = generate_nir(&ckpt, &t.tile, size, stride)?;
                let (h, w) = nir.dims();
                write_png16(&dir.join(format!("{}_nir.png", t.tile.tile_id)), h, w, &nir.quantize(65535))?;
            }
            info!("wrote {} generated NIR tiles to {}", tiles.len(), dir.display());
            Ok(0)
        }
        Command::Eval(c) => {
            let f = train_file(&c, ArchSpec::gen_desk(), TrainConfig::gan_desk())?;
            let ckpt = Checkpoint::load(required(&f.data.checkpoint, "checkpoint")?)?;
            let m = DatasetManifest::load(required(&f.data.manifest, "manifest")?)?;
            let samples = test_samples(&m, f.data.split)?;
            let dir = out_dir(&c, "eval")?;
            let json = match ckpt.role {
                ModelRole::Generator | ModelRole::Regression => {
                    let r = evaluate_nir(&ckpt, &samples)?;
                    let name = format!("{:?}", ckpt.role).to_lowercase();
                    emit_report(&nir_error_table("Held-out NIR error", &[(name, r.clone())]), &dir, "nir_errors")?;
                    serde_json::to_string_pretty(&r)
                }
                ModelRole::Segmenter => {
                    let kind = match (f.data.mode, ckpt.input_bands.contains(&BandName::Nir)) {
                        (Some(k), _) => k,
                        (None, false) => ModeKind::Rgb,
                        (None, true) if f.data.generator.is_some() => ModeKind::RgbGennir,
                        (None, true) => ModeKind::RgbNir,
                    };
                    let mode = channel_mode(kind, f.data.generator.as_ref(), &f)?;
                    serde_json::to_string_pretty(&evaluate_segmentation_on(&ckpt, &samples, &mode)?)
                }
            }
            .expect("report serializes");
            let path = dir.join("eval.json");
            fs::write(&path, &json).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            println!("{json}");
            Ok(0)
        }
        Command::Ablation(c) => {
            let p = plan(&c)?;
            let r = run_size_ablation(&p)?;
            print!("{}", r.table.to_markdown());
            Ok(r.table.failed_cells())
        }
        Command::Crossdomain(c) => {
            let p = plan(&c)?;
            let r = run_crossdomain(&p)?;
            print!("{}", r.table.to_markdown());
            Ok(r.table.failed_cells())
        }
        Command::Ndvi(c) => {
            let f = train_file(&c, ArchSpec::gen_desk(), TrainConfig::gan_desk())?;
            let m = DatasetManifest::load(required(&f.data.manifest, "manifest")?)?;
            let dir = out_dir(&c, "ndvi")?;
            let mut summary = String::from("tile_id,mean_ndvi\n");
            for t in m.load_tiles(f.data.split)? {
                let v = ndvi(&t.tile)?;
                let scaled: Vec<u16> = v.values.iter().map(|x| (((x + 1.0) / 2.0) * 65535.0).round() as u16).collect();
                write_png16(&dir.join(format!("{}_ndvi.png", t.tile.tile_id)), v.height, v.width, &scaled)?;
                let mean = v.values.iter().map(|&x| x as f64).sum::<f64>() / v.values.len() as f64;
                summary.push_str(&format!("{},{mean:.4}\n", t.tile.tile_id));
            }
            let path = dir.join("ndvi_summary.csv");
            fs::write(&path, summary).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            Ok(0)
        }
    }
}
