//! On-disk formats.
//!
//! * `.rdm`: magic `RDM1`, `u32` rows, `u32` cols (little-endian), then
//!   row-major little-endian `f32` values. Metadata lives in a `.json`
//!   sidecar with the same stem.
//! * `.raw`: magic `RAW1`, `u32` chirps, `u32` samples, then interleaved
//!   little-endian `f32` (re, im) pairs in chirp-major order.
//! * Dataset directories: `<root>/<class>/<aspect_deg>/<frame_index>.rdm`
//!   with a top-level `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radar::{ChirpConfig, ComplexMatrix, MapMeta, RangeDopplerMap, RawFrame, RealMatrix};

pub const RDM_MAGIC: &[u8; 4] = b"RDM1";
pub const RAW_MAGIC: &[u8; 4] = b"RAW1";
pub const MANIFEST_FILE: &str = "manifest.json";

fn header(magic: &[u8; 4], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(12);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    out
}

fn parse_header(bytes: &[u8], magic: &[u8; 4], path: &Path) -> Result<(usize, usize)> {
    if bytes.len() < 12 {
        return Err(Error::format(path, "file shorter than its 12-byte header"));
    }
    if &bytes[..4] != magic {
        return Err(Error::format(
            path,
            format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(&bytes[..4]), String::from_utf8_lossy(magic)),
        ));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    Ok((rows, cols))
}

fn f32s(bytes: &[u8]) -> impl Iterator<Item = f32> + '_ {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn encode_rdm(values: &RealMatrix) -> Vec<u8> {
    let mut out = header(RDM_MAGIC, values.rows, values.cols);
    out.reserve(values.data.len() * 4);
    for &v in &values.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_rdm(bytes: &[u8], path: &Path) -> Result<RealMatrix> {
    let (rows, cols) = parse_header(bytes, RDM_MAGIC, path)?;
    let body = &bytes[12..];
    if body.len() != rows * cols * 4 {
        return Err(Error::format(path, format!("expected {} value bytes for {rows}x{cols}, found {}", rows * cols * 4, body.len())));
    }
    RealMatrix::from_vec(rows, cols, f32s(body).map(f64::from).collect())
}

/// Writes the map and its JSON sidecar.
pub fn write_rdm(path: &Path, map: &RangeDopplerMap) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode_rdm(&map.values)).map_err(|e| Error::io(path, e))?;
    write_json(&sidecar_path(path), &map.meta)
}

/// Reads only the matrix of a `.rdm` file.
pub fn read_rdm_values(path: &Path) -> Result<RealMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_rdm(&bytes, path)
}

/// Reads a `.rdm` file together with its sidecar.
pub fn read_rdm(path: &Path) -> Result<RangeDopplerMap> {
    let values = read_rdm_values(path)?;
    let meta = read_json(&sidecar_path(path))?;
    Ok(RangeDopplerMap { values, meta })
}

pub fn write_raw(path: &Path, frame: &RawFrame, meta: &MapMeta) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let s = &frame.samples;
    let mut out = header(RAW_MAGIC, s.rows, s.cols);
    out.reserve(s.data.len() * 8);
    for v in &s.data {
        out.extend_from_slice(&(v.re as f32).to_le_bytes());
        out.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    write_json(&sidecar_path(path), meta)
}

pub fn read_raw(path: &Path, config: &ChirpConfig) -> Result<(RawFrame, MapMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (rows, cols) = parse_header(&bytes, RAW_MAGIC, path)?;
    let body = &bytes[12..];
    if body.len() != rows * cols * 8 {
        return Err(Error::format(path, format!("expected {} sample bytes for {rows}x{cols}, found {}", rows * cols * 8, body.len())));
    }
    let vals: Vec<f32> = f32s(body).collect();
    let data = vals
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0] as f64, p[1] as f64))
        .collect();
    let frame = RawFrame::new(ComplexMatrix::from_vec(rows, cols, data)?, config.clone())
        .map_err(|e| Error::format(path, e.to_string()))?;
    let meta = read_json(&sidecar_path(path))?;
    Ok((frame, meta))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Directory name of an aspect angle: integral degrees print without a
/// fractional part.
pub fn aspect_dir_name(aspect_deg: f64) -> String {
    if aspect_deg.fract() == 0.0 {
        format!("{}", aspect_deg as i64)
    } else {
        format!("{aspect_deg}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestCount {
    pub class: String,
    pub aspect_deg: f64,
    pub count: usize,
}

/// Top-level `manifest.json` of a dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    /// `"rdm"` for range-Doppler datasets, `"raw"` for raw frame dumps.
    pub kind: String,
    pub classes: Vec<String>,
    pub aspects: Vec<f64>,
    pub counts: Vec<ManifestCount>,
    pub total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radar: Option<ChirpConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

/// One file of a dataset directory.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetEntry {
    pub class: String,
    pub aspect_deg: f64,
    pub frame_index: u64,
    pub path: PathBuf,
}

pub fn entry_path(root: &Path, class: &str, aspect_deg: f64, frame_index: u64, ext: &str) -> PathBuf {
    root.join(class)
        .join(aspect_dir_name(aspect_deg))
        .join(format!("{frame_index}.{ext}"))
}

/// Builds the manifest from the entries that were written.
pub fn build_manifest(kind: &str, entries: &[DatasetEntry], classes: &[String], aspects: &[f64]) -> DatasetManifest {
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for e in entries {
        let ci = classes.iter().position(|c| *c == e.class).unwrap_or(usize::MAX);
        let ai = aspects.iter().position(|a| *a == e.aspect_deg).unwrap_or(usize::MAX);
        *counts.entry((ci, ai)).or_default() += 1;
    }
    DatasetManifest {
        format_version: 1,
        kind: kind.to_string(),
        classes: classes.to_vec(),
        aspects: aspects.to_vec(),
        counts: counts
            .into_iter()
            .filter(|((ci, ai), _)| *ci != usize::MAX && *ai != usize::MAX)
            .map(|((ci, ai), count)| ManifestCount {
                class: classes[ci].clone(),
                aspect_deg: aspects[ai],
                count,
            })
            .collect(),
        total: entries.len(),
        radar: None,
        generator: None,
    }
}

/// Reads the manifest and enumerates all files it promises, verifying the
/// per-cell counts against the directory contents.
pub fn open_dataset(root: &Path) -> Result<(DatasetManifest, Vec<DatasetEntry>)> {
    let mpath = root.join(MANIFEST_FILE);
    if !mpath.exists() {
        return Err(Error::io(
            &mpath,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset manifest not found"),
        ));
    }
    let manifest: DatasetManifest = read_json(&mpath)?;
    let ext = if manifest.kind == "raw" { "raw" } else { "rdm" };
    let mut entries = Vec::with_capacity(manifest.total);
    for cell in &manifest.counts {
        let dir = root.join(&cell.class).join(aspect_dir_name(cell.aspect_deg));
        let mut indices = Vec::new();
        let rd = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for item in rd {
            let item = item.map_err(|e| Error::io(&dir, e))?;
            let p = item.path();
            if p.extension().and_then(|s| s.to_str()) != Some(ext) {
                continue;
            }
            let idx = p
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse::<u64>().ok())
                .ok_or_else(|| Error::format(&p, "file name is not a frame index"))?;
            indices.push(idx);
        }
        if indices.len() != cell.count {
            return Err(Error::format(
                &dir,
                format!("manifest lists {} frames, directory holds {}", cell.count, indices.len()),
            ));
        }
        indices.sort_unstable();
        entries.extend(indices.into_iter().map(|frame_index| DatasetEntry {
            class: cell.class.clone(),
            aspect_deg: cell.aspect_deg,
            frame_index,
            path: entry_path(root, &cell.class, cell.aspect_deg, frame_index, ext),
        }));
    }
    Ok((manifest, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn rdm_bytes_round_trip(rows in 1usize..6, cols in 1usize..6, seed in 0u64..1000) {
            let data: Vec<f64> = (0..rows * cols)
                .map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 999.0)
                .map(|v| v as f32 as f64)
                .collect();
            let m = RealMatrix::from_vec(rows, cols, data).unwrap();
            let back = decode_rdm(&encode_rdm(&m), Path::new("mem.rdm")).unwrap();
            prop_assert_eq!(back, m);
        }
    }

    #[test]
    fn header_is_little_endian() {
        let m = RealMatrix::from_vec(2, 3, vec![0.0; 6]).unwrap();
        let b = encode_rdm(&m);
        assert_eq!(&b[..12], &[b'R', b'D', b'M', b'1', 2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(b.len(), 12 + 24);
    }

    #[test]
    fn bad_magic_names_file() {
        let mut b = encode_rdm(&RealMatrix::from_vec(1, 1, vec![0.5]).unwrap());
        b[3] = b'9';
        let err = decode_rdm(&b, Path::new("frames/7.rdm")).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        assert!(err.to_string().contains("frames/7.rdm"));
    }

    #[test]
    fn dataset_layout_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let classes = vec!["a".to_string(), "b".to_string()];
        let aspects = vec![0.0, 90.0];
        let mut entries = Vec::new();
        for (ci, c) in classes.iter().enumerate() {
            for &a in &aspects {
                for i in 0..3u64 {
                    let meta = MapMeta {
                        class_label: c.clone(),
                        aspect_deg: a,
                        subject_id: 0,
                        distance_m: 1.2,
                        frame_index: i,
                    };
                    let values = RealMatrix::from_vec(2, 2, vec![0.0, 0.25, ci as f64 * 0.5, 0.75]).unwrap();
                    let path = entry_path(dir.path(), c, a, i, "rdm");
                    write_rdm(&path, &RangeDopplerMap { values, meta }).unwrap();
                    entries.push(DatasetEntry {
                        class: c.clone(),
                        aspect_deg: a,
                        frame_index: i,
                        path,
                    });
                }
            }
        }
        let manifest = build_manifest("rdm", &entries, &classes, &aspects);
        assert_eq!(manifest.total, 12);
        assert!(manifest.counts.iter().all(|c| c.count == 3));
        write_json(&dir.path().join(MANIFEST_FILE), &manifest).unwrap();
        let (back, listed) = open_dataset(dir.path()).unwrap();
        assert_eq!(back, manifest);
        assert_eq!(listed, entries);
        let map = read_rdm(&listed[4].path).unwrap();
        assert_eq!(map.meta.aspect_deg, 90.0);
        assert!(listed[4].path.ends_with("a/90/1.rdm"));
    }

    #[test]
    fn missing_manifest_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let err = open_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("manifest.json"));
    }
}
