use super::config::{MetricKind, ModelConfig};
use super::embedding::conv64f;
use super::feature::EmbeddedFeature;
use super::metric::{argmax, class_score_with, Classification, ClassSupportPool, KnnGrad, QueryDescriptors};
use super::proto::{global_average, prototype, prototype_scores};
use super::se::{SeBlock, SeTape};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, Checkpoint, Mode, Real, Sequential, Tensor};
use crate::seed;

/// Stream id of the parameter initialization RNG.
const INIT_STREAM: u64 = 0x1417;

/// Images of one episode, support first, with episode-local labels in
/// `0..n_way`.
#[derive(Clone, Debug)]
pub struct EpisodeTensors<T> {
    pub n_way: usize,
    /// `[support + query, C, H, W]`
    pub images: Tensor<T>,
    pub support_labels: Vec<usize>,
    pub query_labels: Vec<usize>,
}

impl<T: Real> EpisodeTensors<T> {
    pub fn n_support(&self) -> usize {
        self.support_labels.len()
    }

    pub fn n_query(&self) -> usize {
        self.query_labels.len()
    }

    fn validate(&self) -> Result<()> {
        let b = self.images.shape().first().copied().unwrap_or(0);
        if b != self.n_support() + self.n_query() {
            return Err(Error::dim("episode images", self.n_support() + self.n_query(), b));
        }
        if self.n_way < 2 {
            return Err(Error::Config(format!("episodes need at least 2 classes, got {}", self.n_way)));
        }
        for &l in self.support_labels.iter().chain(&self.query_labels) {
            if l >= self.n_way {
                return Err(Error::Label {
                    label: l,
                    classes: self.n_way,
                });
            }
        }
        for c in 0..self.n_way {
            if !self.support_labels.contains(&c) {
                return Err(Error::Config(format!("class {c} has no support sample")));
            }
        }
        Ok(())
    }
}

/// Loss and accuracy of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome<T> {
    pub loss: f64,
    pub predictions: Vec<Classification<T>>,
}

impl<T> EpisodeOutcome<T> {
    pub fn correct(&self, labels: &[usize]) -> usize {
        self.predictions.iter().zip(labels).filter(|(p, &l)| p.prediction == l).count()
    }
}

/// Channel-attention DN4: Conv64F embedding, optional SE recalibration and
/// an image-to-class metric.
#[derive(Clone, Debug)]
pub struct ChannelDn4<T> {
    config: ModelConfig,
    embedding: Sequential<T>,
    se: Option<SeBlock<T>>,
    /// Replaces the SE weights by ones (ablation identity check).
    pub force_unit_attention: bool,
}

/// Support-side metric state of one episode.
enum Support<T> {
    Pools(Vec<ClassSupportPool<T>>),
    Prototypes(Vec<Vec<T>>),
}

/// Everything a training backward pass needs.
struct Forward<T> {
    raw: Vec<EmbeddedFeature<T>>,
    se_tape: Option<SeTape<T>>,
    feats: Vec<EmbeddedFeature<T>>,
    support: Support<T>,
    members: Vec<Vec<usize>>,
}

impl<T: Real> ChannelDn4<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed, &[INIT_STREAM]);
        let embedding = Sequential::new(&conv64f(config.input.channels, config.d), &mut rng)?;
        let se = if config.se_enabled {
            Some(SeBlock::new(config.d, config.reduction, &mut rng)?)
        } else {
            None
        };
        Ok(Self {
            config,
            embedding,
            se,
            force_unit_attention: false,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Short method label for result tables.
    pub fn method_name(&self) -> &'static str {
        let attention = self.se.is_some() && !self.force_unit_attention;
        match (self.config.metric, attention) {
            (MetricKind::Knn, true) => "channel-dn4",
            (MetricKind::Knn, false) => "dn4",
            (MetricKind::Proto, true) => "protonet-se",
            (MetricKind::Proto, false) => "protonet",
        }
    }

    pub fn se(&self) -> Option<&SeBlock<T>> {
        self.se.as_ref()
    }

    pub fn se_mut(&mut self) -> Option<&mut SeBlock<T>> {
        self.se.as_mut()
    }

    pub fn embedding_mut(&mut self) -> &mut Sequential<T> {
        &mut self.embedding
    }

    /// Conv64F features of a `[B, C, H, W]` batch, in chunks of
    /// `batch_size`. Train mode leaves one tape per chunk.
    pub fn embed(&mut self, images: &Tensor<T>, mode: Mode) -> Result<Vec<EmbeddedFeature<T>>> {
        let (b, c, h, w) = images.dims4()?;
        let expect = self.config.input.shape();
        if [c, h, w] != expect {
            return Err(Error::shape("embedding input", format!("expected [B, {}, {}, {}], got {:?}", expect[0], expect[1], expect[2], images.shape())));
        }
        let d = self.config.d;
        let mut out = Vec::with_capacity(b);
        let mut start = 0;
        while start < b {
            let end = (start + self.config.batch_size).min(b);
            let y = self.embedding.forward(&images.slice_outer(start, end)?, mode)?;
            let (n, yd, fh, fw) = y.dims4()?;
            debug_assert_eq!(yd, d);
            let per = yd * fh * fw;
            for i in 0..n {
                out.push(EmbeddedFeature::from_chw(&y.data()[i * per..(i + 1) * per], yd, fh, fw)?);
            }
            start = end;
        }
        Ok(out)
    }

    fn attend(&self, raw: &[EmbeddedFeature<T>]) -> Result<(Vec<EmbeddedFeature<T>>, Option<SeTape<T>>)> {
        match &self.se {
            Some(se) if !self.force_unit_attention => {
                let (f, tape) = se.forward(raw)?;
                Ok((f, Some(tape)))
            }
            _ => Ok((raw.to_vec(), None)),
        }
    }

    /// Recalibrated descriptors of a batch (eval mode).
    pub fn features(&mut self, images: &Tensor<T>) -> Result<Vec<EmbeddedFeature<T>>> {
        let raw = self.embed(images, Mode::Eval)?;
        Ok(self.attend(&raw)?.0)
    }

    fn build_support(&self, feats: &[&EmbeddedFeature<T>], members: &[Vec<usize>]) -> Result<Support<T>> {
        match self.config.metric {
            MetricKind::Knn => Ok(Support::Pools(
                members
                    .iter()
                    .map(|idx| ClassSupportPool::from_features(&idx.iter().map(|&i| feats[i]).collect::<Vec<_>>()))
                    .collect::<Result<_>>()?,
            )),
            MetricKind::Proto => Ok(Support::Prototypes(
                members
                    .iter()
                    .map(|idx| prototype(&idx.iter().map(|&i| global_average(feats[i])).collect::<Vec<_>>()))
                    .collect::<Result<_>>()?,
            )),
        }
    }

    /// Classifies query features against support features (both already
    /// embedded and recalibrated), e.g. from a per-image feature cache.
    pub fn classify_features(
        &self,
        n_way: usize,
        support: &[&EmbeddedFeature<T>],
        support_labels: &[usize],
        queries: &[&EmbeddedFeature<T>],
    ) -> Result<Vec<Classification<T>>> {
        if n_way < 2 {
            return Err(Error::Config(format!("classification needs at least 2 classes, got {n_way}")));
        }
        if support.len() != support_labels.len() {
            return Err(Error::dim("support labels", support.len(), support_labels.len()));
        }
        let members = group_by_label(support_labels, n_way)?;
        let sup = self.build_support(support, &members)?;
        queries
            .iter()
            .map(|q| {
                let scores = self.score(&sup, q)?;
                Ok(Classification {
                    prediction: argmax(&scores),
                    scores,
                })
            })
            .collect()
    }

    fn score(&self, support: &Support<T>, query: &EmbeddedFeature<T>) -> Result<Vec<T>> {
        match support {
            Support::Pools(pools) => {
                let q = QueryDescriptors::new(query);
                pools.iter().map(|p| Ok(class_score_with(&q, p, self.config.k)?.score)).collect()
            }
            Support::Prototypes(protos) => Ok(prototype_scores(&global_average(query), protos)),
        }
    }

    fn forward_episode(&mut self, ep: &EpisodeTensors<T>, mode: Mode) -> Result<(EpisodeOutcome<T>, Forward<T>, Vec<Vec<T>>)> {
        ep.validate()?;
        let raw = self.embed(&ep.images, mode)?;
        let (feats, se_tape) = self.attend(&raw)?;
        let ns = ep.n_support();
        let members = group_by_label(&ep.support_labels, ep.n_way)?;
        let support = self.build_support(&feats[..ns].iter().collect::<Vec<_>>(), &members)?;
        let mut predictions = Vec::with_capacity(ep.n_query());
        let mut dlogits = Vec::with_capacity(ep.n_query());
        let mut loss = 0.0;
        let inv_q = T::one() / T::lit(ep.n_query().max(1) as f64);
        for (f, &label) in feats[ns..].iter().zip(&ep.query_labels) {
            let scores = self.score(&support, f)?;
            let (l, mut g) = cross_entropy(&scores, label)?;
            loss += l.as_f64();
            g.iter_mut().for_each(|v| *v *= inv_q);
            dlogits.push(g);
            predictions.push(Classification {
                prediction: argmax(&scores),
                scores,
            });
        }
        loss /= ep.n_query().max(1) as f64;
        if !loss.is_finite() {
            self.embedding.clear_tapes();
            return Err(Error::NonFinite(format!("episode loss ({loss})")));
        }
        let fwd = Forward {
            raw,
            se_tape,
            feats,
            support,
            members,
        };
        Ok((EpisodeOutcome { loss, predictions }, fwd, dlogits))
    }

    /// Scores every query of an episode with frozen parameters.
    pub fn evaluate_episode(&mut self, ep: &EpisodeTensors<T>) -> Result<EpisodeOutcome<T>> {
        Ok(self.forward_episode(ep, Mode::Eval)?.0)
    }

    /// Training-mode loss without a backward pass (batch statistics, no
    /// gradient bookkeeping).
    pub fn episode_loss(&mut self, ep: &EpisodeTensors<T>) -> Result<f64> {
        let out = self.forward_episode(ep, Mode::Train).map(|r| r.0.loss);
        self.embedding.clear_tapes();
        out
    }

    /// Training forward and backward. Parameter gradients are reset first
    /// and hold `d(mean query cross-entropy)/dθ` afterwards.
    pub fn train_episode(&mut self, ep: &EpisodeTensors<T>) -> Result<EpisodeOutcome<T>> {
        self.zero_grad();
        self.embedding.clear_tapes();
        let (outcome, fwd, dlogits) = self.forward_episode(ep, Mode::Train)?;
        let result = self.backward_episode(ep, fwd, &dlogits);
        self.embedding.clear_tapes();
        result?;
        Ok(outcome)
    }

    fn backward_episode(&mut self, ep: &EpisodeTensors<T>, fwd: Forward<T>, dlogits: &[Vec<T>]) -> Result<()> {
        let ns = ep.n_support();
        let d = self.config.d;
        let mut dhat: Vec<Vec<T>> = fwd.feats.iter().map(|f| vec![T::zero(); f.data.len()]).collect();
        match &fwd.support {
            Support::Pools(pools) => {
                let m = fwd.feats[0].m();
                let mut acc = KnnGrad::new(m, d, pools);
                for (qi, (f, g)) in fwd.feats[ns..].iter().zip(dlogits).enumerate() {
                    let q = QueryDescriptors::new(f);
                    for (c, pool) in pools.iter().enumerate() {
                        let s = class_score_with(&q, pool, self.config.k)?;
                        acc.add_query(&q, c, pool, &s, g[c]);
                    }
                    dhat[ns + qi] = acc.take_query(&q);
                }
                for (grad, idx) in acc.pool_grads(pools).iter().zip(&fwd.members) {
                    for (chunk, &i) in grad.chunks_exact(m * d).zip(idx) {
                        dhat[i].iter_mut().zip(chunk).for_each(|(a, &b)| *a += b);
                    }
                }
            }
            Support::Prototypes(protos) => {
                let mut dproto = vec![vec![T::zero(); d]; protos.len()];
                for (qi, (f, g)) in fwd.feats[ns..].iter().zip(dlogits).enumerate() {
                    let gq = global_average(f);
                    let mut dq = vec![T::zero(); d];
                    for (c, proto) in protos.iter().enumerate() {
                        let two = T::lit(2.0) * g[c];
                        for j in 0..d {
                            let diff = gq[j] - proto[j];
                            dq[j] -= two * diff;
                            dproto[c][j] += two * diff;
                        }
                    }
                    spread_average(&mut dhat[ns + qi], &dq, f.m());
                }
                for (dp, idx) in dproto.iter().zip(&fwd.members) {
                    let share: Vec<T> = dp.iter().map(|&v| v / T::lit(idx.len() as f64)).collect();
                    for &i in idx {
                        spread_average(&mut dhat[i], &share, fwd.feats[i].m());
                    }
                }
            }
        }
        let draw = match (&mut self.se, &fwd.se_tape) {
            (Some(se), Some(tape)) => se.backward(&fwd.raw, tape, &dhat)?,
            _ => dhat,
        };
        let b = draw.len();
        let bs = self.config.batch_size;
        let starts: Vec<usize> = (0..b).step_by(bs).collect();
        for &start in starts.iter().rev() {
            let end = (start + bs).min(b);
            let f0 = &fwd.raw[start];
            let mut chw = Vec::with_capacity((end - start) * f0.data.len());
            for (f, g) in fwd.raw[start..end].iter().zip(&draw[start..end]) {
                EmbeddedFeature::new(f.h, f.w, f.d, g.clone())?.write_chw(&mut chw);
            }
            let grad = Tensor::from_vec(&[end - start, d, f0.h, f0.w], chw)?;
            self.embedding.backward(&grad)?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.named_params_mut() {
            p.zero_grad();
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = self.embedding.named_params("embedding.");
        if let Some(se) = &self.se {
            out.push(("se.w1".into(), &se.w1.weight));
            out.push(("se.w2".into(), &se.w2.weight));
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = self.embedding.named_params_mut("embedding.");
        if let Some(se) = &mut self.se {
            out.push(("se.w1".into(), &mut se.w1.weight));
            out.push(("se.w2".into(), &mut se.w2.weight));
        }
        out
    }

    pub fn named_buffers(&self) -> Vec<(String, &Tensor<T>)> {
        self.embedding.named_buffers("embedding.")
    }

    pub fn param_names(&self) -> Vec<String> {
        self.named_params().into_iter().map(|(n, _)| n).collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        for (name, t) in self.named_params().into_iter().chain(self.named_buffers()) {
            ck.push_tensor(name, t);
        }
        ck
    }

    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        for (name, t) in self.named_params_mut() {
            ck.load_into(&name, t)?;
        }
        for (name, t) in self.embedding.named_buffers_mut("embedding.") {
            ck.load_into(&name, t)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.named_params().iter().all(|(_, t)| t.is_finite())
    }
}

/// Support positions of every label; each label must occur.
fn group_by_label(labels: &[usize], n_way: usize) -> Result<Vec<Vec<usize>>> {
    let mut members = vec![Vec::new(); n_way];
    for (i, &l) in labels.iter().enumerate() {
        members
            .get_mut(l)
            .ok_or(Error::Label { label: l, classes: n_way })?
            .push(i);
    }
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(Error::Config(format!("class {c} has no support sample")));
    }
    Ok(members)
}

/// Gradient of a global average: every descriptor receives `g / m`.
fn spread_average<T: Real>(out: &mut [T], g: &[T], m: usize) {
    let inv = T::one() / T::lit(m as f64);
    let d = g.len();
    for x in out.chunks_exact_mut(d) {
        x.iter_mut().zip(g).for_each(|(a, &b)| *a += b * inv);
    }
}
