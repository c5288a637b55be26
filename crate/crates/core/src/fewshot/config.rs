use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};
use crate::radar::{resize, RealMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Image-to-class k-nearest-neighbour cosine metric over local
    /// descriptors.
    #[default]
    #[serde(alias = "knn_cosine")]
    Knn,
    /// Negative squared distance to the mean of globally pooled support
    /// embeddings.
    #[serde(alias = "prototype")]
    Proto,
}

/// Region of a range-major map kept before resizing: the first
/// `range_bins` rows and the `doppler_bins` columns centred on zero Doppler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropSpec {
    pub range_bins: usize,
    pub doppler_bins: usize,
}

/// How a normalized range-Doppler map becomes a network input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub crop: Option<CropSpec>,
}

impl Default for InputSpec {
    fn default() -> Self {
        Self {
            height: 84,
            width: 84,
            channels: 3,
            crop: None,
        }
    }
}

impl InputSpec {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn crop(&self, map: &RealMatrix) -> Result<RealMatrix> {
        let Some(c) = self.crop else {
            return Ok(map.clone());
        };
        if c.range_bins == 0 || c.doppler_bins == 0 || c.range_bins > map.rows || c.doppler_bins > map.cols {
            return Err(Error::dim(
                "input crop",
                format!("at most {}x{} and non-empty", map.rows, map.cols),
                format!("{}x{}", c.range_bins, c.doppler_bins),
            ));
        }
        let first = (map.cols / 2).saturating_sub(c.doppler_bins / 2);
        let first = first.min(map.cols - c.doppler_bins);
        let data = (0..c.range_bins)
            .flat_map(|r| map.data[r * map.cols + first..r * map.cols + first + c.doppler_bins].iter().copied())
            .collect();
        RealMatrix::from_vec(c.range_bins, c.doppler_bins, data)
    }

    /// Crops, resizes with area-aware bilinear weights, clamps to `[0, 1]`
    /// and replicates the plane across channels (`[C, H, W]` order).
    pub fn prepare<T: Real>(&self, map: &RealMatrix) -> Result<Vec<T>> {
        let plane = resize(&self.crop(map)?, self.height, self.width)?;
        let mut out = Vec::with_capacity(self.len());
        for _ in 0..self.channels {
            out.extend(plane.data.iter().map(|&v| T::lit(v.clamp(0.0, 1.0))));
        }
        Ok(out)
    }

    pub fn prepare_tensor<T: Real>(&self, map: &RealMatrix) -> Result<Tensor<T>> {
        Tensor::from_vec(&self.shape(), self.prepare(map)?)
    }
}

/// Architecture and metric of a few-shot model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Conv64F layout revision; only 1 exists.
    pub layout_version: u32,
    pub input: InputSpec,
    /// Embedding channels (descriptor length).
    pub d: usize,
    /// SE reduction ratio; must divide `d`.
    pub reduction: usize,
    /// Neighbours per query descriptor in the image-to-class metric.
    pub k: usize,
    pub se_enabled: bool,
    pub metric: MetricKind,
    /// Images per embedding forward; batchnorm statistics are per chunk.
    pub batch_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layout_version: 1,
            input: InputSpec::default(),
            d: 64,
            reduction: 16,
            k: 3,
            se_enabled: true,
            metric: MetricKind::Knn,
            batch_size: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layout_version != 1 {
            return Err(Error::Config(format!("unknown conv64f layout version {}", self.layout_version)));
        }
        if self.d == 0 || self.reduction == 0 || !self.d.is_multiple_of(self.reduction) {
            return Err(Error::Config(format!(
                "SE reduction {} must be a positive divisor of d = {}",
                self.reduction, self.d
            )));
        }
        if self.k == 0 || self.batch_size == 0 {
            return Err(Error::Config("k and batch_size must be positive".into()));
        }
        if self.input.channels == 0 || self.input.height < 4 || self.input.width < 4 {
            return Err(Error::Config(format!(
                "input must have channels and be at least 4x4, got {:?}",
                self.input.shape()
            )));
        }
        Ok(())
    }

    /// Spatial size `(h, w)` of the embedded feature map.
    pub fn feature_size(&self) -> (usize, usize) {
        (self.input.height / 4, self.input.width / 4)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_gives_441_descriptors() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.feature_size(), (21, 21));
    }

    #[test]
    fn reduction_must_divide_d() {
        let c = ModelConfig {
            reduction: 5,
            ..ModelConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn crop_keeps_low_range_and_centre_doppler() {
        let map = RealMatrix::from_vec(4, 6, (0..24).map(f64::from).collect()).unwrap();
        let spec = InputSpec {
            crop: Some(CropSpec {
                range_bins: 2,
                doppler_bins: 2,
            }),
            ..InputSpec::default()
        };
        let c = spec.crop(&map).unwrap();
        assert_eq!(c.data, vec![2.0, 3.0, 8.0, 9.0]);
    }

    #[test]
    fn metric_names_accept_long_forms() {
        let m: MetricKind = serde_json::from_str("\"knn_cosine\"").unwrap();
        assert_eq!(m, MetricKind::Knn);
        let m: MetricKind = serde_json::from_str("\"prototype\"").unwrap();
        assert_eq!(m, MetricKind::Proto);
    }
}
