//! End-to-end acceptance suite. Runs every criterion in sequence, prints one
//! PASS/FAIL line per criterion to stderr and fails if any criterion fails.
//!
//! Criteria 4 to 8 train real models on the synthetic ambiguity data and take
//! roughly half an hour on one CPU core.

use std::io::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spectrasynth::autograd::Graph;
use spectrasynth::experiments::{median, nir_error_table, run_size_ablation_with, ExperimentData, ExperimentPlan};
use spectrasynth::gan::{
    evaluate_nir, fine_tune_on, generate_nir, seam_discontinuity, train_pix2pix_on, train_regression_on,
};
use spectrasynth::losses::bce_with_logits_map;
use spectrasynth::metrics::{band_errors, confusion, seg_scores, ConfusionCounts};
use spectrasynth::nets::{receptive_field, ArchSpec, DiscLayer, DiscSpec, Discriminator, HeadActivation, UNet};
use spectrasynth::raster::{stitch_tiles, tile_scene, BandArray, BandName, Blend, DatasetManifest, ForestMask};
use spectrasynth::seg::{evaluate_segmentation_on, train_segmentation_on, ChannelMode, ModeKind};
use spectrasynth::synth::{
    build_synth_dataset, class_band_mean, class_statistics, generate_scene, generate_scene_layers, synth_tiles,
    DomainStyle, LandClass, SceneSpec,
};
use spectrasynth::tensor::Tensor;
use spectrasynth::train::{Checkpoint, GanLossSpec, Sample, TrainConfig, TrainingSet};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Writes straight to stderr so the line shows up without `--nocapture`.
fn announce(id: &str, name: &str, o: &Outcome, secs: f64) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] {id} {name}: {} ({secs:.1} s)", o.detail);
}

fn run(id: &str, name: &str, limit_secs: f64, results: &mut Vec<(String, bool)>, f: impl FnOnce() -> Outcome) {
    let t = Instant::now();
    let mut o = f();
    let secs = t.elapsed().as_secs_f64();
    if secs > limit_secs {
        o.pass = false;
        o.detail.push_str(&format!("; exceeded {limit_secs:.0} s budget"));
    }
    announce(id, name, &o, secs);
    results.push((format!("{id} {name}"), o.pass));
}

fn samples(seeds: std::ops::Range<u64>, style: &DomainStyle) -> Vec<Sample> {
    let specs: Vec<SceneSpec> = seeds.map(|s| SceneSpec::ambiguity(128, s)).collect();
    synth_tiles(&specs, style, 64)
        .unwrap()
        .into_iter()
        .map(|(tile, mask)| Sample { tile, mask: Some(mask) })
        .collect()
}

// ---------------------------------------------------------------- criterion 1

fn oracle_band_errors(y: &[f32], yhat: &[f32]) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let (mut abs, mut sq, mut bias) = (0.0, 0.0, 0.0);
    for i in 0..y.len() {
        let d = y[i] as f64 - yhat[i] as f64;
        abs += d.abs();
        sq += d * d;
        bias += d;
    }
    (abs / n, (sq / n).sqrt(), bias / n)
}

fn oracle_f1(pred: &[u8], truth: &[u8]) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for i in 0..pred.len() {
        match (pred[i], truth[i]) {
            (1, 1) => tp += 1.0,
            (1, 0) => fp += 1.0,
            (0, 1) => fn_ += 1.0,
            _ => {}
        }
    }
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else if fn_ == 0.0 { 1.0 } else { 0.0 };
    let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else if fp == 0.0 { 1.0 } else { 0.0 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

fn criterion_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let (h, w) = (rng.random_range(1..24), rng.random_range(1..24));
        let n = h * w;
        let y: Vec<f32> = (0..n).map(|_| rng.random()).collect();
        let yhat: Vec<f32> = (0..n).map(|_| rng.random()).collect();
        let r = band_errors(&BandArray::new(h, w, y.clone()).unwrap(), &BandArray::new(h, w, yhat.clone()).unwrap())
            .unwrap();
        let (mae, rmse, mbe) = oracle_band_errors(&y, &yhat);
        worst = worst.max((r.mae - mae).abs()).max((r.rmse - rmse).abs()).max((r.mbe - mbe).abs());
        // every few cases force degenerate masks
        let density = match case % 10 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random(),
        };
        let pred: Vec<u8> = (0..n).map(|_| rng.random_bool(density) as u8).collect();
        let truth_density: f64 = rng.random();
        let truth: Vec<u8> = (0..n).map(|_| rng.random_bool(truth_density) as u8).collect();
        let c = confusion(&ForestMask::new(h, w, pred.clone()).unwrap(), &ForestMask::new(h, w, truth.clone()).unwrap())
            .unwrap();
        let s = seg_scores(&c);
        let (p, rr, f) = oracle_f1(&pred, &truth);
        worst = worst.max((s.precision - p).abs()).max((s.recall - rr).abs()).max((s.f1 - f).abs());
    }
    let empty = seg_scores(&ConfusionCounts::default());
    let ok = worst <= 1e-9 && empty.f1 == 1.0;
    outcome(ok, format!("1000 random cases, max abs deviation {worst:.2e}"))
}

// ---------------------------------------------------------------- criterion 2

/// Width of the input region whose pixels influence the centre logit.
fn footprint(layers: &[(usize, usize)]) -> usize {
    let spec = DiscSpec {
        in_channels: 1,
        layers: layers
            .iter()
            .enumerate()
            .map(|(i, &(kernel, stride))| DiscLayer {
                kernel,
                stride,
                filters: if i + 1 == layers.len() { 1 } else { 2 },
            })
            .collect(),
        padding: 1,
    };
    let disc = Discriminator::new(spec, 5).unwrap();
    let size = 4 * receptive_field(layers).unwrap() + 16;
    let (oh, ow) = disc.spec().output_dims(size, size).unwrap();
    let mut g = Graph::<f64>::new();
    let store = disc.params.cast::<f64>();
    let p = store.bind_constant(&mut g);
    let x = g.leaf(Tensor::full([1, 1, size, size], 0.5));
    let out = disc.forward(&mut g, &p, x);
    assert_eq!(g.value(out).shape(), [1, 1, oh, ow]);
    let mut seed = Tensor::zeros([1, 1, oh, ow]);
    seed.data_mut()[(oh / 2) * ow + ow / 2] = 1.0;
    g.backward(vec![(out, seed)]);
    let grad = g.grad(x).unwrap();
    let (mut lo, mut hi) = (usize::MAX, 0);
    for r in 0..size {
        for c in 0..size {
            if grad.at(0, 0, r, c) != 0.0 {
                lo = lo.min(c);
                hi = hi.max(c);
            }
        }
    }
    hi + 1 - lo
}

fn criterion_receptive_field() -> Outcome {
    let rf70 = [(4, 2), (4, 2), (4, 2), (4, 1), (4, 1)];
    let analytic = receptive_field(&rf70).unwrap();
    let mut details = vec![format!("rf70 stack = {analytic}")];
    let mut ok = analytic == 70 && DiscSpec::rf70(16).receptive_field().unwrap() == 70;
    let configs: [&[(usize, usize)]; 7] = [
        &[(4, 2)],
        &[(3, 2)],
        &[(4, 2), (4, 1)],
        &[(3, 2), (3, 2)],
        &[(4, 2), (4, 2), (4, 1)],
        &[(4, 2), (3, 1), (5, 2)],
        &[(2, 2), (4, 1), (4, 1)],
    ];
    let mut checked = 0;
    for layers in configs {
        let (a, b) = (receptive_field(layers).unwrap(), footprint(layers));
        if a != b {
            ok = false;
            details.push(format!("{layers:?}: formula {a} vs footprint {b}"));
        }
        checked += 1;
    }
    let full = footprint(&rf70);
    ok &= full == 70;
    details.push(format!("{checked} depth<=3 stacks agree with gradient footprint; rf70 footprint {full}"));
    outcome(ok, details.join("; "))
}

// ---------------------------------------------------------------- criterion 3

fn loss_of(model: &UNet, store: &spectrasynth::autograd::ParamStore<f64>, x: &Tensor<f64>, target: &Tensor<f64>) -> f64 {
    let mut g = Graph::<f64>::new();
    let p = store.bind_constant(&mut g);
    let xv = g.input(x.clone());
    let logits = model.forward_logits(&mut g, &p, xv);
    bce_with_logits_map(g.value(logits), target).0
}

/// Returns (compared, worst relative error).
fn grad_check(model: &UNet, in_channels: usize, picks: usize, seed: u64) -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::from_vec([2, in_channels, 8, 8], (0..2 * in_channels * 64).map(|_| rng.random::<f64>()).collect());
    let target = Tensor::from_vec([2, 1, 8, 8], (0..128).map(|_| rng.random_bool(0.5) as u8 as f64).collect());
    let store = model.params.cast::<f64>();
    let mut g = Graph::<f64>::new();
    let p = store.bind(&mut g);
    let xv = g.input(x.clone());
    let logits = model.forward_logits(&mut g, &p, xv);
    let (_, dl) = bce_with_logits_map(g.value(logits), &target);
    g.backward(vec![(logits, dl)]);
    let analytic: Vec<Tensor<f64>> = p.iter().map(|v| g.grad(*v).unwrap().clone()).collect();
    let h = 1e-6;
    let (mut compared, mut worst) = (0, 0.0f64);
    let mut attempts = 0;
    while compared < picks && attempts < picks * 20 {
        attempts += 1;
        let k = rng.random_range(0..analytic.len());
        let j = rng.random_range(0..analytic[k].len());
        let a = analytic[k].data()[j];
        let mut plus = store.clone();
        plus.values_mut()[k].data_mut()[j] += h;
        let mut minus = store.clone();
        minus.values_mut()[k].data_mut()[j] -= h;
        let numeric = (loss_of(model, &plus, &x, &target) - loss_of(model, &minus, &x, &target)) / (2.0 * h);
        let scale = a.abs().max(numeric.abs());
        if scale < 1e-7 {
            continue;
        }
        worst = worst.max((a - numeric).abs() / scale);
        compared += 1;
    }
    (compared, worst)
}

fn criterion_gradients() -> Outcome {
    let tiny = |in_channels, head| ArchSpec {
        in_channels,
        depth: 2,
        base_filters: 4,
        stage_blocks: vec![1, 1],
        ..ArchSpec::gen_desk().with_head(head)
    };
    let gen = UNet::new(tiny(3, HeadActivation::Sigmoid), 3).unwrap();
    let seg = UNet::new(tiny(4, HeadActivation::Sigmoid), 4).unwrap();
    let (n1, w1) = grad_check(&gen, 3, 16, 11);
    let (n2, w2) = grad_check(&seg, 4, 16, 12);
    let worst = w1.max(w2);
    outcome(
        n1 + n2 >= 20 && worst <= 1e-3,
        format!("{} parameters checked (generator {n1}, segmenter {n2}), worst relative error {worst:.2e}", n1 + n2),
    )
}

// ---------------------------------------------------------------- criterion 4

const GAN_EPOCHS: usize = 8;

fn gan_train_set() -> TrainingSet {
    TrainingSet::from_samples(samples(0..256, &DomainStyle::spotlike()))
}

/// Held-out full-scene MAE and mean forest-minus-roof generated NIR gap.
fn held_out_scores(ckpt: &Checkpoint) -> (f64, f64) {
    let (mut maes, mut gaps) = (Vec::new(), Vec::new());
    for s in 10_000..10_008u64 {
        let (scene, _, layers) = generate_scene_layers(&SceneSpec::ambiguity(128, s), &DomainStyle::spotlike()).unwrap();
        let nir = generate_nir(ckpt, &scene, 64, 64).unwrap();
        maes.push(band_errors(scene.band(BandName::Nir).unwrap(), &nir).unwrap().mae);
        let tile = spectrasynth::raster::RasterTile::new(vec![nir], vec![BandName::Nir], "g", "d", (0, 0)).unwrap();
        let stats = class_statistics(&tile, &layers.classes).unwrap();
        if let (Some(f), Some(r)) = (
            class_band_mean(&stats, LandClass::Forest as u8, BandName::Nir),
            class_band_mean(&stats, LandClass::Roof as u8, BandName::Nir),
        ) {
            gaps.push(f - r);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&maes), mean(&gaps))
}

fn criterion_gan(set: &TrainingSet, generators: &mut Vec<Checkpoint>) -> Outcome {
    let (mut maes, mut gaps) = (Vec::new(), Vec::new());
    for seed in 0..3u64 {
        let cfg = TrainConfig {
            name: format!("gan_seed{seed}"),
            epochs: GAN_EPOCHS,
            seed,
            ..TrainConfig::gan_desk()
        };
        match train_pix2pix_on(set, &ArchSpec::gen_desk(), &DiscSpec::rf70(16), &GanLossSpec::default(), &cfg) {
            Ok(ckpt) => {
                let (mae, gap) = held_out_scores(&ckpt);
                let _ = writeln!(std::io::stderr(), "       GAN seed {seed}: held-out MAE {mae:.4}, forest-roof gap {gap:.3}");
                maes.push(mae);
                gaps.push(gap);
                generators.push(ckpt);
            }
            Err(e) => return outcome(false, format!("seed {seed} failed to train: {e}")),
        }
    }
    let (mae, gap) = (median(&maes).unwrap(), median(&gaps).unwrap());
    outcome(
        mae <= 0.10 && gap >= 0.3,
        format!("{} tiles, median MAE {mae:.4} (<= 0.10), median gap {gap:.3} (>= 0.3)", set.len()),
    )
}

fn seam_check(gen: &Checkpoint) -> Outcome {
    let (scene, _) = generate_scene(&SceneSpec::ambiguity(512, 777), &DomainStyle::spotlike()).unwrap();
    let (seam, other) = seam_discontinuity(gen, &scene, 64, 32).unwrap();
    outcome(
        seam < 3.0 * other,
        format!("512x512 scene, stride 32: max border discontinuity {seam:.4} vs in-tile median {other:.4}"),
    )
}

// ---------------------------------------------------------------- criterion 5

fn criterion_regression(set: &TrainingSet, gan: &Checkpoint) -> Outcome {
    let cfg = TrainConfig {
        name: "regression".into(),
        epochs: GAN_EPOCHS,
        ..TrainConfig::regression_desk()
    };
    let arch = ArchSpec::gen_desk().with_head(HeadActivation::Linear);
    let reg = match train_regression_on(set, &arch, &cfg) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("regression failed to train: {e}")),
    };
    let test = samples(10_000..10_008, &DomainStyle::spotlike());
    let rows = vec![
        ("regression".to_string(), evaluate_nir(&reg, &test).unwrap()),
        ("pix2pix".to_string(), evaluate_nir(gan, &test).unwrap()),
    ];
    let table = nir_error_table("Held-out NIR error", &rows);
    let dir = tempfile::tempdir().unwrap();
    let emitted = spectrasynth::experiments::emit_report(&table, dir.path(), "nir_errors").is_ok();
    let _ = write!(std::io::stderr(), "{}", table.to_markdown());
    let finite = rows.iter().all(|(_, r)| r.mae.is_finite());
    outcome(
        emitted && finite && table.rows.len() == 2,
        format!("regression MAE {:.4}, pix2pix MAE {:.4}", rows[0].1.mae, rows[1].1.mae),
    )
}

// ---------------------------------------------------------------- criterion 6

fn criterion_feature_value(gen: &Arc<Checkpoint>) -> Outcome {
    let spot = DomainStyle::spotlike();
    let train = TrainingSet::from_samples(samples(20_000..20_012, &spot));
    let test = samples(30_000..30_016, &spot);
    let modes = [ChannelMode::Rgb, ChannelMode::RgbNir, ChannelMode::generated(gen.clone())];
    let mut f1 = vec![Vec::new(); 3];
    for seed in 0..3u64 {
        for (i, mode) in modes.iter().enumerate() {
            let cfg = TrainConfig { seed, ..TrainConfig::seg_desk() };
            let arch = ArchSpec::seg_desk(mode.kind().channels());
            let r = train_segmentation_on(&train, mode, &arch, &cfg).and_then(|c| evaluate_segmentation_on(&c, &test, mode));
            match r {
                Ok(e) => f1[i].push(e.pooled.unwrap().scores.f1),
                Err(e) => return outcome(false, format!("{} seed {seed} failed: {e}", mode.kind().label())),
            }
        }
    }
    let [rgb, nir, gennir] = [0, 1, 2].map(|i| median(&f1[i]).unwrap());
    outcome(
        gennir - rgb >= 0.01 && nir >= gennir - 0.02,
        format!(
            "{} train tiles, median F1 RGB {rgb:.3}, RGB+NIR {nir:.3}, RGB+artificial NIR {gennir:.3}",
            train.len()
        ),
    )
}

// ---------------------------------------------------------------- criterion 7

fn criterion_ablation() -> Outcome {
    let spot = DomainStyle::spotlike();
    let data = ExperimentData {
        train: TrainingSet::from_samples(samples(20_000..20_024, &spot)),
        test: samples(30_000..30_016, &spot),
        domain_order: vec![spot.name.clone()],
    };
    let plan = ExperimentPlan {
        name: "size ablation".into(),
        modes: vec![ModeKind::Rgb, ModeKind::RgbNir],
        ..ExperimentPlan::default()
    };
    let report = match run_size_ablation_with(&plan, &data, None) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("ablation failed: {e}")),
    };
    let _ = write!(std::io::stderr(), "{}", report.table.to_markdown());
    let cell = |f: f64, m: ModeKind| report.cell(f, m).and_then(|c| c.median_f1());
    let third = 1.0 / 3.0;
    let (Some(rgb_full), Some(rgb_third), Some(nir_full), Some(nir_third)) = (
        cell(1.0, ModeKind::Rgb),
        cell(third, ModeKind::Rgb),
        cell(1.0, ModeKind::RgbNir),
        cell(third, ModeKind::RgbNir),
    ) else {
        return outcome(false, format!("{} failed cells", report.table.failed_cells()));
    };
    let (gap_full, gap_third) = (nir_full - rgb_full, nir_third - rgb_third);
    outcome(
        rgb_full >= rgb_third && nir_full >= nir_third && gap_third >= gap_full - 0.02,
        format!(
            "RGB {rgb_full:.3} vs {rgb_third:.3} at 1/3, RGB+NIR {nir_full:.3} vs {nir_third:.3}, NIR gain {gap_full:.3} full vs {gap_third:.3} at 1/3"
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

fn criterion_fine_tune(parent: &Checkpoint) -> Outcome {
    let planet = DomainStyle::planetlike();
    let train = TrainingSet::from_samples(samples(40_000..40_032, &planet));
    let test = samples(50_000..50_008, &planet);
    let before = evaluate_nir(parent, &test).unwrap().mae;
    let cfg = TrainConfig {
        name: "fine_tune".into(),
        epochs: 3,
        ..TrainConfig::gan_desk()
    };
    match fine_tune_on(parent, &train, parent.model.spec(), &cfg) {
        Ok(child) => {
            let after = evaluate_nir(&child, &test).unwrap().mae;
            outcome(
                after < before && child.parent_fingerprint.as_deref() == Some(parent.fingerprint().as_str()),
                format!("planetlike held-out MAE {before:.4} -> {after:.4}"),
            )
        }
        Err(e) => outcome(false, format!("fine-tune failed: {e}")),
    }
}

// ---------------------------------------------------------------- criterion 9

fn criterion_round_trips(gen: &Checkpoint) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let dir = tempfile::tempdir().unwrap();

    let ck_dir = dir.path().join("ckpt");
    gen.save(&ck_dir).unwrap();
    let loaded = Checkpoint::load(&ck_dir).unwrap();
    let probe = samples(60_000..60_001, &DomainStyle::spotlike());
    let a = spectrasynth::gan::predict_nir_tile(&gen.model, &probe[0].tile).unwrap();
    let b = spectrasynth::gan::predict_nir_tile(&loaded.model, &probe[0].tile).unwrap();
    let same = a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits());
    ok &= same && loaded.fingerprint() == gen.fingerprint();
    notes.push(format!("checkpoint inference bit-identical: {same}"));

    let (scene, _) = generate_scene(&SceneSpec::ambiguity(256, 61), &DomainStyle::planetlike()).unwrap();
    let mut exact = true;
    for (stride, blend) in [(64, Blend::Overwrite), (32, Blend::AverageOverlap), (48, Blend::AverageOverlap)] {
        for band in BandName::ALL {
            let tiles = tile_scene(&scene, 64, stride).unwrap();
            let parts: Vec<(BandArray, (usize, usize))> =
                tiles.iter().map(|t| (t.band(band).unwrap().clone(), t.origin)).collect();
            let stitched = stitch_tiles(&parts, 256, 256, blend).unwrap();
            let orig = scene.band(band).unwrap();
            exact &= stitched.values().iter().zip(orig.values()).all(|(x, y)| x.to_bits() == y.to_bits());
        }
    }
    ok &= exact;
    notes.push(format!("tile->stitch bit-exact: {exact}"));

    let specs: Vec<SceneSpec> = (70..72).map(|s| SceneSpec::ambiguity(128, s)).collect();
    let styles = [DomainStyle::spotlike(), DomainStyle::planetlike()];
    build_synth_dataset(&specs, &styles, 64, 0.75, 0, &dir.path().join("data")).unwrap();
    let manifest = DatasetManifest::load(&dir.path().join("data")).unwrap();
    let mut worst = 0.0f64;
    let mut masks_equal = true;
    for style in &styles {
        for (tile, mask) in synth_tiles(&specs, style, 64).unwrap() {
            let rec = manifest.records.iter().find(|r| r.tile_id == tile.tile_id).unwrap();
            let back = manifest.load_record(rec).unwrap();
            for band in BandName::ALL {
                let (x, y) = (tile.band(band).unwrap(), back.tile.band(band).unwrap());
                for (p, q) in x.values().iter().zip(y.values()) {
                    worst = worst.max((*p as f64 - *q as f64).abs());
                }
            }
            masks_equal &= back.mask.as_ref() == Some(&mask);
        }
    }
    ok &= worst <= 1.0 / 65535.0 && masks_equal;
    notes.push(format!("dataset write->read max pixel error {worst:.2e} (<= {:.2e}), masks equal: {masks_equal}", 1.0 / 65535.0));
    outcome(ok, notes.join("; "))
}

#[test]
fn acceptance_suite() {
    let mut results = Vec::new();
    run("C1", "metrics oracle equivalence", 10.0, &mut results, criterion_metrics);
    run("C2", "receptive-field correctness", 120.0, &mut results, criterion_receptive_field);
    run("C3", "gradient sanity", 300.0, &mut results, criterion_gradients);

    let set = gan_train_set();
    let mut generators = Vec::new();
    run("C4", "GAN learns context", 45.0 * 60.0, &mut results, || criterion_gan(&set, &mut generators));
    if let Some(gen) = generators.first() {
        let t = Instant::now();
        let seams = seam_check(gen);
        announce("--", "stitched generation has no seams", &seams, t.elapsed().as_secs_f64());
        results.push(("seam check".into(), seams.pass));

        run("C5", "regression vs GAN comparison", 45.0 * 60.0, &mut results, || criterion_regression(&set, gen));
        let shared = Arc::new(gen.clone());
        run("C6", "artificial NIR feature value", 60.0 * 60.0, &mut results, || criterion_feature_value(&shared));
    } else {
        for id in ["C5", "C6"] {
            let o = outcome(false, "no trained generator available");
            announce(id, "skipped", &o, 0.0);
            results.push((id.into(), false));
        }
    }
    run("C7", "size-ablation trend", 90.0 * 60.0, &mut results, criterion_ablation);
    match generators.first() {
        Some(gen) => {
            run("C8", "fine-tuning on a shifted domain", 15.0 * 60.0, &mut results, || criterion_fine_tune(gen));
            run("C9", "determinism and round-trips", 300.0, &mut results, || criterion_round_trips(gen));
        }
        None => {
            for id in ["C8", "C9"] {
                let o = outcome(false, "no trained generator available");
                announce(id, "skipped", &o, 0.0);
                results.push((id.into(), false));
            }
        }
    }
    let failed: Vec<&String> = results.iter().filter(|(_, p)| !p).map(|(n, _)| n).collect();
    let _ = writeln!(
        std::io::stderr(),
        "acceptance: {}/{} passed",
        results.len() - failed.len(),
        results.len()
    );
    assert!(failed.is_empty(), "failed: {failed:?}");
}
