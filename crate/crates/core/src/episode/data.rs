use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fewshot::InputSpec;
use crate::radar::io::{open_dataset, read_rdm};
use crate::radar::{ChirpConfig, MapMeta, RangeDopplerMap};
use crate::synth::{synth_maps_with, SynthSpec};
use crate::seed;

/// One prepared network input with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Index into [`LabeledSet::classes`].
    pub class: usize,
    pub meta: MapMeta,
    /// `[C, H, W]` network input.
    pub input: Vec<f32>,
}

/// All samples of a dataset, prepared for one input layout.
#[derive(Clone, Debug)]
pub struct LabeledSet {
    pub classes: Vec<String>,
    pub input: InputSpec,
    pub samples: Vec<Sample>,
}

impl LabeledSet {
    /// Builds the set from in-memory maps; `classes` fixes the class order
    /// and every map's class must be listed.
    pub fn from_maps(classes: Vec<String>, input: &InputSpec, maps: &[RangeDopplerMap]) -> Result<Self> {
        let samples = maps
            .par_iter()
            .map(|m| {
                let class = classes
                    .iter()
                    .position(|c| *c == m.meta.class_label)
                    .ok_or_else(|| Error::Config(format!("map class `{}` is not in the class list", m.meta.class_label)))?;
                Ok(Sample {
                    class,
                    meta: m.meta.clone(),
                    input: input.prepare(&m.values)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            classes,
            input: input.clone(),
            samples,
        })
    }

    /// Synthesizes a dataset in memory, preparing each map as it is rendered.
    pub fn synthesize(spec: &SynthSpec, radar: &ChirpConfig, seed: u64, input: &InputSpec) -> Result<Self> {
        let classes = spec.classes.iter().map(|c| c.name().to_string()).collect();
        let samples = synth_maps_with(spec, radar, seed, |job, map| {
            Ok(Sample {
                class: spec.classes.iter().position(|&c| c == job.class).expect("planned class"),
                meta: map.meta,
                input: input.prepare(&map.values)?,
            })
        })?;
        Ok(Self {
            classes,
            input: input.clone(),
            samples,
        })
    }

    /// Reads every map of a dataset directory.
    pub fn load(root: &Path, input: &InputSpec) -> Result<Self> {
        let (manifest, entries) = open_dataset(root)?;
        if manifest.kind != "rdm" {
            return Err(Error::format(
                root.join(crate::radar::io::MANIFEST_FILE),
                format!("dataset holds `{}` frames; range-Doppler maps are required", manifest.kind),
            ));
        }
        let samples = entries
            .par_iter()
            .map(|e| {
                let map = read_rdm(&e.path)?;
                let class = manifest
                    .classes
                    .iter()
                    .position(|c| *c == e.class)
                    .ok_or_else(|| Error::format(&e.path, format!("class `{}` missing from manifest", e.class)))?;
                Ok(Sample {
                    class,
                    meta: map.meta,
                    input: input.prepare(&map.values)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            classes: manifest.classes,
            input: input.clone(),
            samples,
        })
    }

    /// Concatenates two sets with the same classes and input layout.
    pub fn merge(mut self, other: LabeledSet) -> Result<Self> {
        if self.classes != other.classes || self.input != other.input {
            return Err(Error::Config("cannot merge datasets with different classes or input layouts".into()));
        }
        self.samples.extend(other.samples);
        Ok(self)
    }

    pub fn view(&self, name: &str, keep: impl Fn(&Sample) -> bool) -> SplitView {
        let mut by_class = vec![Vec::new(); self.classes.len()];
        for (i, s) in self.samples.iter().enumerate() {
            if keep(s) {
                by_class[s.class].push(i);
            }
        }
        SplitView {
            name: name.to_string(),
            by_class,
        }
    }

    pub fn all(&self) -> SplitView {
        self.view("all", |_| true)
    }
}

/// A subset of a [`LabeledSet`], grouped by class.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitView {
    pub name: String,
    /// Sample indices per dataset class (empty for absent classes).
    pub by_class: Vec<Vec<usize>>,
}

impl SplitView {
    pub fn len(&self) -> usize {
        self.by_class.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dataset classes present in the view.
    pub fn present_classes(&self) -> Vec<usize> {
        (0..self.by_class.len()).filter(|&c| !self.by_class[c].is_empty()).collect()
    }

    pub fn indices(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.by_class.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    /// Moves a seeded `fraction` of every class into a second view.
    pub fn hold_out(&self, fraction: f64, seed: u64) -> (SplitView, SplitView) {
        let mut rng = seed::rng(seed, &[0x7a1]);
        let mut keep = Vec::with_capacity(self.by_class.len());
        let mut held = Vec::with_capacity(self.by_class.len());
        for idx in &self.by_class {
            let mut idx = idx.clone();
            idx.shuffle(&mut rng);
            let n = (idx.len() as f64 * fraction).floor() as usize;
            let mut rest = idx.split_off(n);
            idx.sort_unstable();
            rest.sort_unstable();
            held.push(idx);
            keep.push(rest);
        }
        (
            SplitView {
                name: self.name.clone(),
                by_class: keep,
            },
            SplitView {
                name: format!("{}-holdout", self.name),
                by_class: held,
            },
        )
    }
}

/// Aspect-based train/test split with optional scenario filters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_aspects: Vec<f64>,
    pub test_aspects: Vec<f64>,
    pub subjects: Option<Vec<u32>>,
    pub distances: Option<Vec<f64>>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_aspects: vec![0.0],
            test_aspects: vec![90.0],
            subjects: None,
            distances: None,
        }
    }
}

fn same_angle(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_aspects.is_empty() || self.test_aspects.is_empty() {
            return Err(Error::Config("train and test aspect sets must be non-empty".into()));
        }
        if let Some(a) = self
            .train_aspects
            .iter()
            .find(|a| self.test_aspects.iter().any(|b| same_angle(**a, *b)))
        {
            return Err(Error::Config(format!("aspect {a} is in both the train and test sets")));
        }
        Ok(())
    }

    fn scenario_ok(&self, s: &Sample) -> bool {
        self.subjects.as_ref().is_none_or(|v| v.contains(&s.meta.subject_id))
            && self
                .distances
                .as_ref()
                .is_none_or(|v| v.iter().any(|d| same_angle(*d, s.meta.distance_m)))
    }

    pub fn train_view(&self, set: &LabeledSet) -> Result<SplitView> {
        self.validate()?;
        Ok(set.view("train", |s| {
            self.scenario_ok(s) && self.train_aspects.iter().any(|a| same_angle(*a, s.meta.aspect_deg))
        }))
    }

    pub fn test_view(&self, set: &LabeledSet) -> Result<SplitView> {
        self.validate()?;
        Ok(set.view("test", |s| {
            self.scenario_ok(s) && self.test_aspects.iter().any(|a| same_angle(*a, s.meta.aspect_deg))
        }))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::radar::RealMatrix;

    pub(crate) fn toy_set(classes: usize, per_class: usize, aspects: &[f64]) -> LabeledSet {
        let names: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
        let input = InputSpec {
            height: 4,
            width: 4,
            channels: 1,
            crop: None,
        };
        let mut maps = Vec::new();
        for c in 0..classes {
            for &a in aspects {
                for i in 0..per_class {
                    let v = (c * 1000 + i) as f64 / 1e4;
                    maps.push(RangeDopplerMap {
                        values: RealMatrix::from_vec(4, 4, vec![v; 16]).unwrap(),
                        meta: MapMeta {
                            class_label: names[c].clone(),
                            aspect_deg: a,
                            subject_id: (i % 2) as u32,
                            distance_m: 1.2,
                            frame_index: i as u64,
                        },
                    });
                }
            }
        }
        LabeledSet::from_maps(names, &input, &maps).unwrap()
    }

    #[test]
    fn aspect_split_separates_views() {
        let set = toy_set(3, 5, &[0.0, 90.0]);
        let spec = SplitSpec::default();
        let train = spec.train_view(&set).unwrap();
        let test = spec.test_view(&set).unwrap();
        assert_eq!(train.len(), 15);
        assert_eq!(test.len(), 15);
        assert!(train.indices().iter().all(|&i| set.samples[i].meta.aspect_deg == 0.0));
        assert!(test.indices().iter().all(|&i| set.samples[i].meta.aspect_deg == 90.0));
    }

    #[test]
    fn overlapping_aspects_are_rejected() {
        let spec = SplitSpec {
            test_aspects: vec![0.0, 90.0],
            ..SplitSpec::default()
        };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn subject_filter_applies() {
        let set = toy_set(2, 6, &[0.0, 90.0]);
        let spec = SplitSpec {
            subjects: Some(vec![1]),
            ..SplitSpec::default()
        };
        let v = spec.train_view(&set).unwrap();
        assert_eq!(v.len(), 6);
        assert!(v.indices().iter().all(|&i| set.samples[i].meta.subject_id == 1));
    }

    #[test]
    fn hold_out_partitions_each_class() {
        let set = toy_set(3, 20, &[0.0]);
        let (keep, held) = set.all().hold_out(0.1, 4);
        for c in 0..3 {
            assert_eq!(held.by_class[c].len(), 2);
            assert_eq!(keep.by_class[c].len(), 18);
            assert!(held.by_class[c].iter().all(|i| !keep.by_class[c].contains(i)));
        }
        assert_eq!(set.all().hold_out(0.1, 4), (keep, held));
    }
}
