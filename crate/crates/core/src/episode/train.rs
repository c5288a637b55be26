use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::data::{LabeledSet, SplitView};
use super::eval::evaluate;
use super::sampler::{sample_episode, EpisodeTask, Protocol};
use crate::error::{Error, Result};
use crate::fewshot::ChannelDn4;
use crate::nn::{Checkpoint, Optimizer, OptimizerConfig};
use crate::radar::io::{read_json, write_json};
use crate::seed;

const TRAIN_STREAM: u64 = 0x7a17;
const VALID_STREAM: u64 = 0x7a18;

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const STATE_FILE: &str = "state.json";
pub const DIVERGENCE_FILE: &str = "divergence.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_way: usize,
    pub k_shot: usize,
    /// Queries per episode, split across its classes.
    pub queries: usize,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub optimizer: OptimizerConfig,
    /// Fraction of each training class held out for checkpoint selection.
    pub validation_fraction: f64,
    pub validation_episodes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_way: 9,
            k_shot: 5,
            queries: 15,
            epochs: 100,
            episodes_per_epoch: 100,
            optimizer: OptimizerConfig::default(),
            validation_fraction: 0.1,
            validation_episodes: 50,
        }
    }
}

impl TrainConfig {
    pub fn protocol(&self) -> Protocol {
        Protocol::new(self.n_way, self.k_shot, self.queries)
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol().validate()?;
        if self.epochs == 0 || self.episodes_per_epoch == 0 {
            return Err(Error::Config("epochs and episodes_per_epoch must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// Progress record written next to every checkpoint.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epochs_completed: usize,
    pub optimizer_steps: u64,
    /// Mean query cross-entropy per epoch.
    pub loss_curve: Vec<f64>,
    /// Mean training-episode accuracy per epoch, percent.
    pub train_accuracy: Vec<f64>,
    /// Validation accuracy per epoch, percent; empty without validation.
    pub validation_accuracy: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub best_validation: Option<f64>,
}

#[derive(Serialize)]
struct DivergenceDump<'a> {
    epoch: usize,
    episode: usize,
    detail: String,
    classes: Vec<&'a str>,
    task: &'a EpisodeTask,
}

fn save(dir: &Path, name: &str, model: &ChannelDn4<f32>, opt: &Optimizer<f32>, state: &TrainState) -> Result<()> {
    let mut ck = model.to_checkpoint();
    let names = model.param_names();
    let shapes: Vec<Vec<usize>> = model.named_params().iter().map(|(_, t)| t.shape().to_vec()).collect();
    for (i, (slot, data)) in opt.state(&names).into_iter().enumerate() {
        let shape = shapes[i % shapes.len()].clone();
        ck.push_raw(slot, shape, &data);
    }
    ck.write(&dir.join(name))?;
    write_json(&dir.join(STATE_FILE), state)
}

/// Restores parameters, optimizer moments and progress from `dir`.
pub fn resume_from(dir: &Path, model: &mut ChannelDn4<f32>, opt: &mut Optimizer<f32>) -> Result<TrainState> {
    let ck = Checkpoint::read(&dir.join(LAST_CHECKPOINT))?;
    model.load_checkpoint(&ck)?;
    let state: TrainState = read_json(&dir.join(STATE_FILE))?;
    let names = model.param_names();
    opt.load_state(&names, state.optimizer_steps, |n| ck.get(n).map(|e| e.data.clone()))?;
    Ok(state)
}

/// Episodic training of `model` on `view`.
///
/// Each epoch runs `episodes_per_epoch` episodes with one optimizer update
/// per episode; episode `e` of epoch `p` is drawn from a stream derived
/// from `(seed, p, e)`, so a resumed run continues the exact trajectory.
/// With `ckpt_dir`, `last.ckpt`/`state.json` are written after every epoch
/// and `best.ckpt` whenever validation accuracy improves. On return the
/// model holds the best-on-validation parameters, or the last ones when
/// validation is disabled.
pub fn train(
    model: &mut ChannelDn4<f32>,
    set: &LabeledSet,
    view: &SplitView,
    config: &TrainConfig,
    seed: u64,
    ckpt_dir: Option<&Path>,
    resume: bool,
) -> Result<TrainState> {
    config.validate()?;
    let protocol = config.protocol();
    let (train_view, val_view) = split_validation(set, view, config, seed);
    // Fail early with the sampler's descriptive error.
    sample_episode(&train_view, &set.classes, protocol, &mut seed::rng(seed, &[TRAIN_STREAM]))?;
    if let Some(dir) = ckpt_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut opt = config.optimizer.build::<f32>();
    let mut state = TrainState::default();
    let mut best: Option<Checkpoint> = None;
    if resume {
        let dir = ckpt_dir.ok_or_else(|| Error::Config("resume requires a checkpoint directory".into()))?;
        state = resume_from(dir, model, &mut opt)?;
        let best_path = dir.join(BEST_CHECKPOINT);
        if state.best_epoch.is_some() && best_path.exists() {
            best = Some(Checkpoint::read(&best_path)?);
        }
        log::info!("resuming after epoch {}", state.epochs_completed);
    }
    for epoch in state.epochs_completed..config.epochs {
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut total = 0usize;
        for e in 0..config.episodes_per_epoch {
            let mut rng = seed::rng(seed, &[TRAIN_STREAM, epoch as u64, e as u64]);
            let task = sample_episode(&train_view, &set.classes, protocol, &mut rng)?;
            let tensors = task.tensors(set)?;
            let step = model.train_episode(&tensors).and_then(|out| {
                opt.step(&mut model.named_params_mut())?;
                if model.is_finite() {
                    Ok(out)
                } else {
                    Err(Error::NonFinite("parameters after update".into()))
                }
            });
            let out = match step {
                Ok(out) => out,
                Err(Error::NonFinite(what)) => {
                    let detail = format!("non-finite {what}");
                    let dump = DivergenceDump {
                        epoch,
                        episode: e,
                        detail: detail.clone(),
                        classes: task.classes.iter().map(|&c| set.classes[c].as_str()).collect(),
                        task: &task,
                    };
                    match ckpt_dir {
                        Some(dir) => write_json(&dir.join(DIVERGENCE_FILE), &dump)?,
                        None => log::error!("{}", serde_json::to_string(&dump).unwrap_or_default()),
                    }
                    return Err(Error::Divergence {
                        epoch,
                        episode: e,
                        detail,
                    });
                }
                Err(other) => return Err(other),
            };
            loss_sum += out.loss;
            correct += out.correct(&tensors.query_labels);
            total += tensors.n_query();
        }
        state.loss_curve.push(loss_sum / config.episodes_per_epoch as f64);
        state.train_accuracy.push(100.0 * correct as f64 / total.max(1) as f64);
        state.epochs_completed = epoch + 1;
        state.optimizer_steps = opt.steps();
        let mut improved = false;
        if let Some(val) = &val_view {
            let acc = evaluate(model, set, val, &[protocol], config.validation_episodes, seed::derive(seed, &[VALID_STREAM, epoch as u64]))?[0]
                .mean_accuracy;
            state.validation_accuracy.push(acc);
            if state.best_validation.is_none_or(|b| acc > b) {
                state.best_validation = Some(acc);
                state.best_epoch = Some(epoch + 1);
                best = Some(model.to_checkpoint());
                improved = true;
            }
        }
        log::info!(
            "epoch {}/{}: loss {:.4}, train acc {:.2}%{}",
            epoch + 1,
            config.epochs,
            state.loss_curve[epoch],
            state.train_accuracy[epoch],
            state
                .validation_accuracy
                .get(epoch)
                .map(|a| format!(", val acc {a:.2}%"))
                .unwrap_or_default()
        );
        if let Some(dir) = ckpt_dir {
            if improved {
                if let Some(b) = &best {
                    b.write(&dir.join(BEST_CHECKPOINT))?;
                }
            }
            save(dir, LAST_CHECKPOINT, model, &opt, &state)?;
        }
    }
    if let Some(b) = &best {
        model.load_checkpoint(b)?;
    }
    Ok(state)
}

/// Splits off the validation holdout, or returns `None` when the holdout
/// cannot supply a training-protocol episode.
fn split_validation(set: &LabeledSet, view: &SplitView, config: &TrainConfig, seed: u64) -> (SplitView, Option<SplitView>) {
    if config.validation_fraction == 0.0 || config.validation_episodes == 0 {
        return (view.clone(), None);
    }
    let (train, val) = view.hold_out(config.validation_fraction, seed);
    let protocol = config.protocol();
    let ok = sample_episode(&val, &set.classes, protocol, &mut seed::rng(seed, &[VALID_STREAM])).is_ok()
        && sample_episode(&train, &set.classes, protocol, &mut seed::rng(seed, &[VALID_STREAM])).is_ok();
    if ok {
        (train, Some(val))
    } else {
        log::warn!(
            "validation holdout too small for {protocol} episodes; training on all data and keeping the last checkpoint"
        );
        (view.clone(), None)
    }
}

/// Directory of the checkpoints of a run.
pub fn checkpoint_dir(run_dir: &Path) -> PathBuf {
    run_dir.join("ckpt")
}
