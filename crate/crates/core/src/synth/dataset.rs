use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::frame::synth_frame;
use super::motion::{MotionClass, MotionModel, DEFAULT_RADAR_HEIGHT, REFERENCE_HEIGHT};
use crate::error::{Error, Result};
use crate::radar::io::{build_manifest, entry_path, write_json, write_raw, write_rdm, DatasetEntry, DatasetManifest, MANIFEST_FILE};
use crate::radar::{frame_to_rdmap, ChirpConfig, MapMeta, RangeDopplerMap, RawFrame};
use crate::seed;

/// What to generate. One recording is a run of consecutive frames of one
/// class, seen from one aspect, by one subject, at one distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub classes: Vec<MotionClass>,
    pub aspects: Vec<f64>,
    /// Frames per recording.
    pub frames_per_class_per_aspect: usize,
    /// Subject heights in metres; the subject id is the list index.
    pub subject_heights: Vec<f64>,
    pub distances: Vec<f64>,
    pub snr_db: f64,
    /// Skip receiver noise entirely (`snr_db` is then ignored).
    pub noiseless: bool,
    /// Time between consecutive frames of a recording, s.
    pub frame_interval: f64,
    /// Relative spread of per-recording motion and amplitude jitter.
    pub variation: f64,
    pub radar_height: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: MotionClass::ALL.to_vec(),
            aspects: vec![0.0, 90.0],
            frames_per_class_per_aspect: 100,
            subject_heights: vec![REFERENCE_HEIGHT],
            distances: vec![1.2],
            snr_db: 20.0,
            noiseless: false,
            frame_interval: 0.1,
            variation: 0.1,
            radar_height: DEFAULT_RADAR_HEIGHT,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() || self.aspects.is_empty() || self.subject_heights.is_empty() || self.distances.is_empty() {
            return Err(Error::Config("classes, aspects, subjects and distances must be non-empty".into()));
        }
        if self.frames_per_class_per_aspect == 0 {
            return Err(Error::Config("frames_per_class_per_aspect must be positive".into()));
        }
        if let Some(a) = self.aspects.iter().find(|a| !(0.0..360.0).contains(*a)) {
            return Err(Error::Config(format!("aspect must lie in [0, 360), got {a}")));
        }
        if self.subject_heights.iter().chain(&self.distances).any(|v| !(*v > 0.0)) {
            return Err(Error::Config("subject heights and distances must be positive".into()));
        }
        if !(self.frame_interval > 0.0) || !(0.0..1.0).contains(&self.variation) {
            return Err(Error::Config("frame_interval must be positive and variation in [0, 1)".into()));
        }
        let mut seen = self.classes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.classes.len() {
            return Err(Error::Config("duplicate class in synth spec".into()));
        }
        Ok(())
    }

    /// SNR handed to the frame synthesizer, `None` when noiseless.
    pub fn noise_snr(&self) -> Option<f64> {
        (!self.noiseless).then_some(self.snr_db)
    }

    pub fn frames_per_cell(&self) -> usize {
        self.frames_per_class_per_aspect * self.subject_heights.len() * self.distances.len()
    }

    /// Every frame to render, ordered by class, aspect, subject, distance
    /// and frame.
    pub fn plan(&self) -> Result<Vec<FrameJob>> {
        self.validate()?;
        let mut jobs = Vec::new();
        for (ci, &class) in self.classes.iter().enumerate() {
            for (ai, &aspect) in self.aspects.iter().enumerate() {
                for (si, &height) in self.subject_heights.iter().enumerate() {
                    for (di, &distance) in self.distances.iter().enumerate() {
                        let recording = [ci as u64, ai as u64, si as u64, di as u64];
                        for i in 0..self.frames_per_class_per_aspect {
                            let cell_offset = (si * self.distances.len() + di) * self.frames_per_class_per_aspect;
                            jobs.push(FrameJob {
                                class,
                                aspect_deg: aspect,
                                subject_id: si as u32,
                                subject_scale: height / REFERENCE_HEIGHT,
                                distance_m: distance,
                                recording,
                                frame_in_recording: i,
                                frame_index: (cell_offset + i) as u64,
                            });
                        }
                    }
                }
            }
        }
        Ok(jobs)
    }
}

/// One frame of a [`SynthSpec`] plan.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameJob {
    pub class: MotionClass,
    pub aspect_deg: f64,
    pub subject_id: u32,
    pub subject_scale: f64,
    pub distance_m: f64,
    recording: [u64; 4],
    pub frame_in_recording: usize,
    pub frame_index: u64,
}

impl FrameJob {
    pub fn meta(&self) -> MapMeta {
        MapMeta {
            class_label: self.class.name().to_string(),
            aspect_deg: self.aspect_deg,
            subject_id: self.subject_id,
            distance_m: self.distance_m,
            frame_index: self.frame_index,
        }
    }

    /// The jittered model of this frame's recording and the frame start time.
    pub fn model(&self, spec: &SynthSpec, seed: u64) -> Result<(MotionModel, f64)> {
        let mut rng = seed::rng(seed, &self.recording);
        let mut model = MotionModel::new(self.class, self.aspect_deg, self.subject_scale, self.distance_m)?
            .with_variation(&mut rng, spec.variation);
        model.radar_height = spec.radar_height;
        let start: f64 = rng.random_range(0.0..20.0);
        Ok((model, start + self.frame_in_recording as f64 * spec.frame_interval))
    }

    pub fn render(&self, spec: &SynthSpec, config: &ChirpConfig, seed: u64) -> Result<RawFrame> {
        let (model, t0) = self.model(spec, seed)?;
        let mut path = self.recording.to_vec();
        path.push(self.frame_in_recording as u64);
        synth_frame(&model, config, t0, spec.noise_snr(), seed::derive(seed, &path))
    }

    pub fn render_map(&self, spec: &SynthSpec, config: &ChirpConfig, seed: u64) -> Result<RangeDopplerMap> {
        frame_to_rdmap(&self.render(spec, config, seed)?, self.meta())
    }
}

/// Renders every planned frame in parallel and applies `f` to each map.
/// Results keep plan order.
pub fn synth_maps_with<T, F>(spec: &SynthSpec, config: &ChirpConfig, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&FrameJob, RangeDopplerMap) -> Result<T> + Sync,
{
    config.validate()?;
    spec.plan()?
        .par_iter()
        .map(|job| f(job, job.render_map(spec, config, seed)?))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    /// Normalized range-Doppler maps (`.rdm`).
    #[default]
    Rdm,
    /// Raw dechirped frames (`.raw`).
    Raw,
}

impl OutputKind {
    fn ext(self) -> &'static str {
        match self {
            OutputKind::Rdm => "rdm",
            OutputKind::Raw => "raw",
        }
    }
}

/// Synthesizes a labeled dataset under `out_dir` and writes its manifest.
pub fn synth_dataset(
    spec: &SynthSpec,
    config: &ChirpConfig,
    seed: u64,
    out_dir: &Path,
    kind: OutputKind,
) -> Result<DatasetManifest> {
    config.validate()?;
    let jobs = spec.plan()?;
    let class_names: Vec<String> = spec.classes.iter().map(|c| c.name().to_string()).collect();
    for job in &jobs {
        if job.frame_index == 0 {
            let dir = entry_path(out_dir, job.class.name(), job.aspect_deg, 0, kind.ext());
            let dir = dir.parent().expect("entry path has a parent");
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let entries: Vec<DatasetEntry> = jobs
        .par_iter()
        .map(|job| {
            let path = entry_path(out_dir, job.class.name(), job.aspect_deg, job.frame_index, kind.ext());
            let frame = job.render(spec, config, seed)?;
            match kind {
                OutputKind::Rdm => write_rdm(&path, &frame_to_rdmap(&frame, job.meta())?)?,
                OutputKind::Raw => write_raw(&path, &frame, &job.meta())?,
            }
            Ok(DatasetEntry {
                class: job.meta().class_label,
                aspect_deg: job.aspect_deg,
                frame_index: job.frame_index,
                path,
            })
        })
        .collect::<Result<_>>()?;
    let mut manifest = build_manifest(kind.ext(), &entries, &class_names, &spec.aspects);
    manifest.radar = Some(config.clone());
    manifest.generator = Some(serde_json::json!({ "seed": seed, "spec": spec }));
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    log::info!("wrote {} frames to {}", manifest.total, out_dir.display());
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (SynthSpec, ChirpConfig) {
        let spec = SynthSpec {
            classes: vec![MotionClass::Squat, MotionClass::Rotate],
            aspects: vec![0.0, 45.0],
            frames_per_class_per_aspect: 3,
            subject_heights: vec![1.92, 1.7],
            ..SynthSpec::default()
        };
        let cfg = ChirpConfig {
            samples_per_chirp: 32,
            chirps_per_frame: 32,
            sample_rate: 2.5e6 / 8.0,
            ..ChirpConfig::default()
        };
        (spec, cfg)
    }

    #[test]
    fn plan_indexes_frames_per_cell() {
        let (spec, _) = tiny();
        let jobs = spec.plan().unwrap();
        assert_eq!(jobs.len(), 2 * 2 * 2 * 3);
        assert_eq!(spec.frames_per_cell(), 6);
        let cell: Vec<u64> = jobs.iter().filter(|j| j.class == MotionClass::Rotate && j.aspect_deg == 45.0).map(|j| j.frame_index).collect();
        assert_eq!(cell, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn rendering_is_reproducible() {
        let (spec, cfg) = tiny();
        let job = &spec.plan().unwrap()[4];
        assert_eq!(job.render(&spec, &cfg, 5).unwrap(), job.render(&spec, &cfg, 5).unwrap());
        assert_ne!(job.render(&spec, &cfg, 5).unwrap(), job.render(&spec, &cfg, 6).unwrap());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = [
            SynthSpec { classes: vec![], ..SynthSpec::default() },
            SynthSpec { aspects: vec![360.0], ..SynthSpec::default() },
            SynthSpec { frames_per_class_per_aspect: 0, ..SynthSpec::default() },
            SynthSpec { classes: vec![MotionClass::Stand, MotionClass::Stand], ..SynthSpec::default() },
        ];
        for s in bad {
            assert!(matches!(s.plan(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn dataset_round_trips_through_manifest() {
        let (spec, cfg) = tiny();
        let dir = tempfile::tempdir().unwrap();
        let m = synth_dataset(&spec, &cfg, 1, dir.path(), OutputKind::Rdm).unwrap();
        assert_eq!(m.total, 24);
        let (m2, entries) = crate::radar::io::open_dataset(dir.path()).unwrap();
        assert_eq!(m2.counts, m.counts);
        assert_eq!(entries.len(), 24);
        let map = crate::radar::io::read_rdm(&entries[0].path).unwrap();
        assert_eq!((map.values.rows, map.values.cols), (32, 32));
        assert!((map.values.min() - 0.0).abs() < 1e-6);
    }
}
