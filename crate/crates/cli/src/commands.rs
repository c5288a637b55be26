use std::fs;
use std::path::{Path, PathBuf};

use radar_fewshot::episode::{
    checkpoint_dir, confusion_csv, evaluate, results_csv, scenario_csv, scenario_sweep, train as train_model,
    LabeledSet, RunMetrics, ScenarioFilter, ScenarioRow, TrainState, STATE_FILE,
};
use radar_fewshot::fewshot::{ChannelDn4, MetricKind, ModelConfig};
use radar_fewshot::nn::Checkpoint;
use radar_fewshot::radar::io::{
    build_manifest, entry_path, open_dataset, read_json, read_raw, read_rdm, write_json, write_rdm, DatasetEntry,
    MANIFEST_FILE,
};
use radar_fewshot::radar::colormap::write_png;
use radar_fewshot::radar::{frame_to_rdmap, ChirpConfig};
use radar_fewshot::synth::{synth_dataset, MotionClass, OutputKind};
use radar_fewshot::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{CommonArgs, EvalArgs, InspectArgs, MetricArg, PreprocessArgs, SynthArgs, TrainArgs};

/// Model configuration stored next to the checkpoints of a run.
const MODEL_FILE: &str = "model.json";

fn base_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

fn metric(m: MetricArg) -> MetricKind {
    match m {
        MetricArg::Knn => MetricKind::Knn,
        MetricArg::Proto => MetricKind::Proto,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn require_dataset(dir: &Path) -> Result<()> {
    let manifest = dir.join(MANIFEST_FILE);
    if manifest.exists() {
        return Ok(());
    }
    Err(Error::Io {
        path: manifest,
        source: std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!(
                "no dataset here; create one with `radar-fewshot synth --out {}`",
                dir.display()
            ),
        ),
    })
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let mut cfg = base_config(&args.common)?;
    if let Some(names) = &args.classes {
        cfg.synth.classes = names.iter().map(|n| n.parse::<MotionClass>()).collect::<Result<_>>()?;
    }
    if let Some(a) = &args.aspects {
        cfg.synth.aspects = a.clone();
    }
    if let Some(f) = args.frames {
        cfg.synth.frames_per_class_per_aspect = f;
    }
    if args.noiseless {
        cfg.synth.noiseless = true;
    }
    cfg.synth.validate()?;
    let out = cfg.out_dir()?.to_path_buf();
    let kind = if args.raw { OutputKind::Raw } else { OutputKind::Rdm };
    let manifest = synth_dataset(&cfg.synth, &cfg.radar, cfg.seed, &out, kind)?;
    cfg.write(&out)?;
    println!(
        "{} frames, {} classes x {} aspects -> {}",
        manifest.total,
        manifest.classes.len(),
        manifest.aspects.len(),
        out.display()
    );
    Ok(())
}

pub fn preprocess(args: PreprocessArgs) -> Result<()> {
    let cfg = base_config(&args.common)?;
    let out = cfg.out_dir()?.to_path_buf();
    require_dataset(&args.input)?;
    let (manifest, entries) = open_dataset(&args.input)?;
    if manifest.kind != "raw" {
        return Err(Error::Format {
            path: args.input.join(MANIFEST_FILE),
            detail: format!("expected a raw-frame dataset, found `{}`", manifest.kind),
        });
    }
    let radar = manifest.radar.clone().unwrap_or_else(|| cfg.radar.clone());
    radar.validate()?;
    let written: Vec<DatasetEntry> = entries
        .par_iter()
        .map(|e| {
            let (frame, meta) = read_raw(&e.path, &radar)?;
            let path = entry_path(&out, &e.class, e.aspect_deg, e.frame_index, "rdm");
            let dir = path.parent().expect("entry path has a parent");
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            write_rdm(&path, &frame_to_rdmap(&frame, meta)?)?;
            Ok(DatasetEntry { path, ..e.clone() })
        })
        .collect::<Result<_>>()?;
    let mut out_manifest = build_manifest("rdm", &written, &manifest.classes, &manifest.aspects);
    out_manifest.radar = Some(radar);
    out_manifest.generator = manifest.generator;
    write_json(&out.join(MANIFEST_FILE), &out_manifest)?;
    cfg.write(&out)?;
    println!("{} range-Doppler maps -> {}", out_manifest.total, out.display());
    Ok(())
}

fn load_set(cfg: &RunConfig, model: &ModelConfig) -> Result<LabeledSet> {
    let data = cfg.data_dir()?;
    require_dataset(data)?;
    LabeledSet::load(data, &model.input)
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = base_config(&args.common)?;
    if let Some(d) = &args.data {
        cfg.data = Some(d.clone());
    }
    let t = &mut cfg.train;
    t.n_way = args.n.unwrap_or(t.n_way);
    t.k_shot = args.k.unwrap_or(t.k_shot);
    t.queries = args.t.unwrap_or(t.queries);
    t.epochs = args.epochs.unwrap_or(t.epochs);
    t.episodes_per_epoch = args.episodes.unwrap_or(t.episodes_per_epoch);
    if let Some(m) = args.metric {
        cfg.model.metric = metric(m);
    }
    if args.no_se {
        cfg.model.se_enabled = false;
    }
    cfg.train.validate()?;
    cfg.model.validate()?;
    cfg.split.validate()?;
    let out = cfg.out_dir()?.to_path_buf();

    let set = load_set(&cfg, &cfg.model)?;
    let view = cfg.split.train_view(&set)?;
    let ckpt = checkpoint_dir(&out);
    fs::create_dir_all(&ckpt).map_err(io_err(&ckpt))?;
    cfg.write(&out)?;
    write_json(&ckpt.join(MODEL_FILE), &cfg.model)?;

    let mut model = ChannelDn4::<f32>::new(cfg.model.clone(), cfg.seed)?;
    let state = train_model(&mut model, &set, &view, &cfg.train, cfg.seed, Some(&ckpt), args.resume)?;
    write_json(&out.join("metrics.json"), &state)?;
    let last = state.loss_curve.last().copied().unwrap_or(f64::NAN);
    println!(
        "{} epochs, final loss {last:.4}, checkpoints in {}",
        state.epochs_completed,
        ckpt.display()
    );
    if let (Some(epoch), Some(acc)) = (state.best_epoch, state.best_validation) {
        println!("best validation accuracy {acc:.2}% after epoch {epoch}");
    }
    Ok(())
}

/// Loads the model config saved next to `ckpt`, if any.
fn model_config_for(ckpt: &Path) -> Result<Option<ModelConfig>> {
    let path = ckpt.with_file_name(MODEL_FILE);
    if path.exists() {
        Ok(Some(read_json(&path)?))
    } else {
        Ok(None)
    }
}

#[derive(Serialize)]
struct EvalReport {
    runs: Vec<RunMetrics>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    scenarios: Vec<ScenarioRow>,
}

fn scenario_filters(set: &LabeledSet, kind: &str) -> Result<Vec<ScenarioFilter>> {
    match kind {
        "subject" => {
            let mut ids: Vec<u32> = set.samples.iter().map(|s| s.meta.subject_id).collect();
            ids.sort_unstable();
            ids.dedup();
            Ok(ids
                .into_iter()
                .map(|id| ScenarioFilter {
                    label: format!("subject {id}"),
                    subject_id: Some(id),
                    distance_m: None,
                })
                .collect())
        }
        "distance" => {
            let mut ds: Vec<f64> = set.samples.iter().map(|s| s.meta.distance_m).collect();
            ds.sort_by(f64::total_cmp);
            ds.dedup();
            Ok(ds
                .into_iter()
                .map(|d| ScenarioFilter {
                    label: format!("{d} m"),
                    subject_id: None,
                    distance_m: Some(d),
                })
                .collect())
        }
        other => Err(Error::Config(format!(
            "unknown scenario `{other}`; use `subject` or `distance`"
        ))),
    }
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let mut cfg = base_config(&args.common)?;
    if let Some(d) = &args.data {
        cfg.data = Some(d.clone());
    }
    if let Some(c) = &args.checkpoint {
        cfg.checkpoint = Some(c.clone());
    }
    let e = &mut cfg.eval;
    e.n_way = args.n.unwrap_or(e.n_way);
    if let Some(k) = &args.k {
        e.shots = k.clone();
    }
    e.queries = args.t.unwrap_or(e.queries);
    e.episodes = args.episodes.unwrap_or(e.episodes);
    if let Some(s) = &args.split {
        e.split = s.clone();
    }
    if let Some(s) = &args.scenario {
        e.scenario = Some(s.clone());
    }
    if let Some(ckpt) = &cfg.checkpoint {
        if let Some(m) = model_config_for(ckpt)? {
            cfg.model = m;
        }
    }
    if let Some(m) = args.metric {
        cfg.model.metric = metric(m);
    }
    let protocols = cfg.eval.protocols();
    if protocols.is_empty() {
        return Err(Error::Config("no shot counts to evaluate".into()));
    }
    for p in &protocols {
        p.validate()?;
    }
    cfg.model.validate()?;
    cfg.split.validate()?;
    let out = cfg.out_dir()?.to_path_buf();

    let set = load_set(&cfg, &cfg.model)?;
    let view = match cfg.eval.split.as_str() {
        "test" => cfg.split.test_view(&set)?,
        "train" => cfg.split.train_view(&set)?,
        other => return Err(Error::Config(format!("unknown split `{other}`; use `test` or `train`"))),
    };
    let mut model = ChannelDn4::<f32>::new(cfg.model.clone(), cfg.seed)?;
    let mut loss_curve = Vec::new();
    match &cfg.checkpoint {
        Some(path) => {
            model.load_checkpoint(&Checkpoint::read(path)?)?;
            let state_path = path.with_file_name(STATE_FILE);
            if state_path.exists() {
                loss_curve = read_json::<TrainState>(&state_path)?.loss_curve;
            }
        }
        None => log::warn!("no checkpoint given; evaluating an untrained model"),
    }
    if args.ablate && model.se().is_none() {
        return Err(Error::Config("--ablate needs a model with channel attention".into()));
    }
    cfg.write(&out)?;

    let mut runs = evaluate(&mut model, &set, &view, &protocols, cfg.eval.episodes, cfg.seed)?;
    if args.ablate {
        model.force_unit_attention = true;
        let ablated = evaluate(&mut model, &set, &view, &protocols, cfg.eval.episodes, cfg.seed)?;
        model.force_unit_attention = false;
        for (with, without) in runs.iter().zip(&ablated) {
            println!(
                "ablation {}: {} {:.2}% vs {} {:.2}% (delta {:+.2})",
                with.protocol,
                with.method,
                with.mean_accuracy,
                without.method,
                without.mean_accuracy,
                with.mean_accuracy - without.mean_accuracy
            );
        }
        runs.extend(ablated);
    }
    for r in &mut runs {
        r.loss_curve = loss_curve.clone();
    }
    let scenarios = match &cfg.eval.scenario {
        Some(kind) => {
            let filters = scenario_filters(&set, kind)?;
            let mut rows = Vec::new();
            for p in &protocols {
                rows.extend(scenario_sweep(&mut model, &set, &view, &filters, *p, cfg.eval.episodes, cfg.seed)?);
            }
            write_text(&out.join("scenarios.csv"), &scenario_csv(&rows))?;
            rows
        }
        None => Vec::new(),
    };

    write_text(&out.join("results.csv"), &results_csv(&runs))?;
    write_text(&out.join("confusion.csv"), &confusion_csv(&runs))?;
    write_json(&out.join("metrics.json"), &EvalReport { runs: runs.clone(), scenarios })?;
    for r in &runs {
        println!(
            "{} {} {}: {:.2}% +/- {:.2} over {} episodes",
            r.method, r.split, r.protocol, r.mean_accuracy, r.ci95, r.episodes
        );
    }
    Ok(())
}

/// Radar parameters for `file`: the run config if given, else the manifest
/// of the dataset holding the file, else the defaults.
fn radar_for(file: &Path, config: Option<&PathBuf>) -> Result<ChirpConfig> {
    if let Some(c) = config {
        return Ok(RunConfig::load(c)?.radar);
    }
    for dir in file.ancestors().skip(1).take(3) {
        let m = dir.join(MANIFEST_FILE);
        if m.exists() {
            if let Ok(manifest) = read_json::<radar_fewshot::radar::io::DatasetManifest>(&m) {
                if let Some(r) = manifest.radar {
                    return Ok(r);
                }
            }
        }
    }
    Ok(ChirpConfig::default())
}

pub fn inspect(args: InspectArgs) -> Result<()> {
    let map = read_rdm(&args.file)?;
    let radar = radar_for(&args.file, args.config.as_ref())?;
    let v = &map.values;
    let (pr, pc) = v.argmax();
    let offset = pc as i64 - radar.zero_doppler_bin() as i64;
    println!("file: {}", args.file.display());
    println!("shape: {} x {} (range x doppler)", v.rows, v.cols);
    println!("min: {:.6}", v.min());
    println!("max: {:.6}", v.max());
    println!("peak: range bin {pr}, doppler bin {pc} (offset {offset:+})");
    println!(
        "peak physical: {:.3} m, {:+.3} m/s",
        pr as f64 / radar.range_bin(1.0),
        offset as f64 / radar.doppler_bin_offset(1.0)
    );
    let m = &map.meta;
    if !m.class_label.is_empty() {
        println!(
            "label: {} at {} deg, subject {}, {} m, frame {}",
            m.class_label, m.aspect_deg, m.subject_id, m.distance_m, m.frame_index
        );
    }
    if let Some(png) = &args.png {
        write_png(v, png)?;
        println!("png: {}", png.display());
    }
    Ok(())
}
