use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::{LabeledSet, SplitView};
use crate::error::{Error, Result};
use crate::fewshot::EpisodeTensors;
use crate::nn::Tensor;

/// An N-way K-shot task with `t` queries in total.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protocol {
    pub n_way: usize,
    pub k_shot: usize,
    pub queries: usize,
}

impl Protocol {
    pub fn new(n_way: usize, k_shot: usize, queries: usize) -> Self {
        Self { n_way, k_shot, queries }
    }

    /// Queries drawn for episode class `c`: `t / N`, plus one for the first
    /// `t mod N` classes.
    pub fn queries_for(&self, c: usize) -> usize {
        self.queries / self.n_way + usize::from(c < self.queries % self.n_way)
    }

    /// Samples every class must hold: `K + ceil(t / N)`.
    pub fn samples_needed(&self) -> usize {
        self.k_shot + self.queries.div_ceil(self.n_way)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_way < 2 || self.k_shot == 0 || self.queries == 0 {
            return Err(Error::Config(format!(
                "protocol needs N >= 2, K >= 1 and t >= 1, got N={} K={} t={}",
                self.n_way, self.k_shot, self.queries
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-way {}-shot", self.n_way, self.k_shot)
    }
}

/// Sample indices of one episode. Episode label `l` stands for dataset
/// class `classes[l]`; support and query lists are class-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeTask {
    pub classes: Vec<usize>,
    pub support: Vec<usize>,
    pub support_labels: Vec<usize>,
    pub query: Vec<usize>,
    pub query_labels: Vec<usize>,
}

impl EpisodeTask {
    pub fn n_way(&self) -> usize {
        self.classes.len()
    }

    /// Stacks the network inputs, support first.
    pub fn tensors(&self, set: &LabeledSet) -> Result<EpisodeTensors<f32>> {
        let per = set.input.len();
        let mut data = Vec::with_capacity((self.support.len() + self.query.len()) * per);
        for &i in self.support.iter().chain(&self.query) {
            data.extend_from_slice(&set.samples[i].input);
        }
        let [c, h, w] = set.input.shape();
        Ok(EpisodeTensors {
            n_way: self.n_way(),
            images: Tensor::from_vec(&[self.support.len() + self.query.len(), c, h, w], data)?,
            support_labels: self.support_labels.clone(),
            query_labels: self.query_labels.clone(),
        })
    }
}

/// Draws `N` classes uniformly, then `K` support and the class's share of
/// the `t` queries without replacement. Labels are assigned in draw order.
pub fn sample_episode<R: Rng + ?Sized>(
    view: &SplitView,
    class_names: &[String],
    protocol: Protocol,
    rng: &mut R,
) -> Result<EpisodeTask> {
    protocol.validate()?;
    let present = view.present_classes();
    let needed = protocol.samples_needed();
    if let Some(&c) = present.iter().find(|&&c| view.by_class[c].len() < needed) {
        return Err(Error::InsufficientSamples {
            class: class_names.get(c).cloned().unwrap_or_else(|| c.to_string()),
            needed,
            available: view.by_class[c].len(),
        });
    }
    if present.len() < protocol.n_way {
        return Err(Error::Config(format!(
            "split `{}` has {} classes, episode needs {}",
            view.name,
            present.len(),
            protocol.n_way
        )));
    }
    let classes: Vec<usize> = index::sample(rng, present.len(), protocol.n_way)
        .into_iter()
        .map(|i| present[i])
        .collect();
    let mut task = EpisodeTask {
        classes: classes.clone(),
        support: Vec::new(),
        support_labels: Vec::new(),
        query: Vec::new(),
        query_labels: Vec::new(),
    };
    let mut queries = Vec::new();
    for (label, &c) in classes.iter().enumerate() {
        let pool = &view.by_class[c];
        let q = protocol.queries_for(label);
        let picks = index::sample(rng, pool.len(), protocol.k_shot + q).into_vec();
        for &p in &picks[..protocol.k_shot] {
            task.support.push(pool[p]);
            task.support_labels.push(label);
        }
        queries.push(picks[protocol.k_shot..].iter().map(|&p| pool[p]).collect::<Vec<_>>());
    }
    for (label, q) in queries.into_iter().enumerate() {
        task.query_labels.extend(std::iter::repeat_n(label, q.len()));
        task.query.extend(q);
    }
    Ok(task)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::data::tests::toy_set;
    use crate::seed;
    use std::collections::HashSet;

    #[test]
    fn three_way_five_shot_shapes() {
        let set = toy_set(5, 20, &[0.0]);
        let mut rng = seed::rng(1, &[]);
        let task = sample_episode(&set.all(), &set.classes, Protocol::new(3, 5, 15), &mut rng).unwrap();
        assert_eq!(task.support.len(), 15);
        assert_eq!(task.query.len(), 15);
        let s: HashSet<_> = task.support.iter().collect();
        assert!(task.query.iter().all(|q| !s.contains(q)));
        for l in 0..3 {
            assert_eq!(task.support_labels.iter().filter(|&&x| x == l).count(), 5);
            assert_eq!(task.query_labels.iter().filter(|&&x| x == l).count(), 5);
        }
        for (&i, &l) in task.support.iter().zip(&task.support_labels).chain(task.query.iter().zip(&task.query_labels)) {
            assert_eq!(set.samples[i].class, task.classes[l]);
        }
    }

    #[test]
    fn all_way_one_shot_covers_every_class() {
        let set = toy_set(9, 10, &[0.0]);
        let mut rng = seed::rng(2, &[]);
        let task = sample_episode(&set.all(), &set.classes, Protocol::new(9, 1, 15), &mut rng).unwrap();
        let mut cls = task.classes.clone();
        cls.sort_unstable();
        assert_eq!(cls, (0..9).collect::<Vec<_>>());
        assert_eq!(task.support.len(), 9);
        assert_eq!(task.query.len(), 15);
    }

    #[test]
    fn same_seed_same_episode() {
        let set = toy_set(5, 20, &[0.0]);
        let draw = |s| sample_episode(&set.all(), &set.classes, Protocol::new(3, 5, 15), &mut seed::rng(s, &[])).unwrap();
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn deficient_class_is_named() {
        let set = toy_set(3, 20, &[0.0]);
        let mut view = set.all();
        view.by_class[1].truncate(6);
        let err = sample_episode(&view, &set.classes, Protocol::new(3, 5, 15), &mut seed::rng(0, &[])).unwrap_err();
        match err {
            Error::InsufficientSamples { class, needed, available } => {
                assert_eq!((class.as_str(), needed, available), ("c1", 10, 6));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn uneven_queries_go_to_first_classes() {
        let p = Protocol::new(9, 5, 15);
        let counts: Vec<usize> = (0..9).map(|c| p.queries_for(c)).collect();
        assert_eq!(counts, vec![2, 2, 2, 2, 2, 2, 1, 1, 1]);
        assert_eq!(p.samples_needed(), 7);
    }
}
