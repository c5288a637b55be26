use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{LabeledSet, SplitView};
use super::sampler::{sample_episode, Protocol};
use crate::error::{Error, Result};
use crate::fewshot::{ChannelDn4, EmbeddedFeature};
use crate::nn::Tensor;
use crate::seed;

const EVAL_STREAM: u64 = 0xe7a1;

/// Accuracy statistics of one protocol over many episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub method: String,
    pub split: String,
    pub protocol: Protocol,
    pub episodes: usize,
    /// Per-episode accuracy, percent.
    pub episode_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    /// Half-width of the 95% interval: `1.96 σ / sqrt(episodes)` with the
    /// population standard deviation.
    pub ci95: f64,
    /// `[true episode label][predicted episode label]` query counts.
    pub confusion: Vec<Vec<u64>>,
    /// Mean training loss per epoch of the evaluated model, when known.
    #[serde(default)]
    pub loss_curve: Vec<f64>,
}

/// Mean and 95% half-width of per-episode accuracies.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

/// Eval-mode features of every sample in `view`, indexed by sample.
pub fn embed_view(
    model: &mut ChannelDn4<f32>,
    set: &LabeledSet,
    view: &SplitView,
) -> Result<Vec<Option<EmbeddedFeature<f32>>>> {
    let idx = view.indices();
    let mut cache = vec![None; set.samples.len()];
    let [c, h, w] = set.input.shape();
    for chunk in idx.chunks(model.config().batch_size) {
        let mut data = Vec::with_capacity(chunk.len() * set.input.len());
        for &i in chunk {
            data.extend_from_slice(&set.samples[i].input);
        }
        let feats = model.features(&Tensor::from_vec(&[chunk.len(), c, h, w], data)?)?;
        for (&i, f) in chunk.iter().zip(feats) {
            cache[i] = Some(f);
        }
    }
    Ok(cache)
}

/// Accuracy of `episodes` seeded episodes per protocol. Features are
/// computed once per sample, so results equal per-episode evaluation.
pub fn evaluate(
    model: &mut ChannelDn4<f32>,
    set: &LabeledSet,
    view: &SplitView,
    protocols: &[Protocol],
    episodes: usize,
    seed: u64,
) -> Result<Vec<RunMetrics>> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let cache = embed_view(model, set, view)?;
    let model = &*model;
    protocols
        .iter()
        .map(|&p| {
            let results = (0..episodes)
                .into_par_iter()
                .map(|e| {
                    let mut rng = seed::rng(seed, &[EVAL_STREAM, p.n_way as u64, p.k_shot as u64, p.queries as u64, e as u64]);
                    let task = sample_episode(view, &set.classes, p, &mut rng)?;
                    let feat = |i: &usize| cache[*i].as_ref().expect("view samples are embedded");
                    let support: Vec<_> = task.support.iter().map(feat).collect();
                    let query: Vec<_> = task.query.iter().map(feat).collect();
                    let preds = model.classify_features(p.n_way, &support, &task.support_labels, &query)?;
                    Ok(preds
                        .iter()
                        .zip(&task.query_labels)
                        .map(|(c, &l)| (l, c.prediction))
                        .collect::<Vec<_>>())
                })
                .collect::<Result<Vec<_>>>()?;
            let mut confusion = vec![vec![0u64; p.n_way]; p.n_way];
            let episode_accuracy: Vec<f64> = results
                .iter()
                .map(|pairs| {
                    let mut correct = 0;
                    for &(l, pred) in pairs {
                        confusion[l][pred] += 1;
                        correct += usize::from(l == pred);
                    }
                    100.0 * correct as f64 / pairs.len() as f64
                })
                .collect();
            let (mean_accuracy, ci95) = mean_ci95(&episode_accuracy);
            Ok(RunMetrics {
                method: model.method_name().to_string(),
                split: view.name.clone(),
                protocol: p,
                episodes,
                episode_accuracy,
                mean_accuracy,
                ci95,
                confusion,
                loss_curve: Vec::new(),
            })
        })
        .collect()
}

/// One subset of a scenario study, e.g. a subject or a distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFilter {
    pub label: String,
    pub subject_id: Option<u32>,
    pub distance_m: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub label: String,
    pub metrics: RunMetrics,
}

/// Evaluates `view` restricted to each filter in turn. Filters that match
/// no sample are skipped with a warning.
pub fn scenario_sweep(
    model: &mut ChannelDn4<f32>,
    set: &LabeledSet,
    view: &SplitView,
    filters: &[ScenarioFilter],
    protocol: Protocol,
    episodes: usize,
    seed: u64,
) -> Result<Vec<ScenarioRow>> {
    let mut rows = Vec::new();
    for f in filters {
        let by_class = view
            .by_class
            .iter()
            .map(|idx| {
                idx.iter()
                    .copied()
                    .filter(|&i| {
                        let m = &set.samples[i].meta;
                        f.subject_id.is_none_or(|s| s == m.subject_id)
                            && f.distance_m.is_none_or(|d| (d - m.distance_m).abs() < 1e-9)
                    })
                    .collect()
            })
            .collect();
        let sub = SplitView {
            name: format!("{}:{}", view.name, f.label),
            by_class,
        };
        if sub.is_empty() {
            log::warn!("scenario `{}` matches no sample; skipped", f.label);
            continue;
        }
        let metrics = evaluate(model, set, &sub, &[protocol], episodes, seed)?.remove(0);
        rows.push(ScenarioRow {
            label: f.label.clone(),
            metrics,
        });
    }
    Ok(rows)
}
