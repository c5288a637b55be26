use crate::error::{Error, Result};
use crate::nn::Real;

/// Embedded feature map stored position-major (`[h, w, d]`), so descriptor
/// `p` is the contiguous slice `data[p*d .. (p+1)*d]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedFeature<T> {
    pub h: usize,
    pub w: usize,
    pub d: usize,
    pub data: Vec<T>,
}

impl<T: Real> EmbeddedFeature<T> {
    pub fn new(h: usize, w: usize, d: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != h * w * d {
            return Err(Error::dim("embedded feature", format!("{h}x{w}x{d}"), data.len()));
        }
        Ok(Self { h, w, d, data })
    }

    /// Number of local descriptors.
    pub fn m(&self) -> usize {
        self.h * self.w
    }

    pub fn descriptor(&self, p: usize) -> &[T] {
        &self.data[p * self.d..(p + 1) * self.d]
    }

    pub fn descriptors(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.d)
    }

    /// Transposes one `[d, h, w]` network output into descriptor layout.
    pub fn from_chw(chw: &[T], d: usize, h: usize, w: usize) -> Result<Self> {
        let m = h * w;
        if chw.len() != d * m {
            return Err(Error::dim("channel-major feature", format!("{d}x{h}x{w}"), chw.len()));
        }
        let mut data = vec![T::zero(); d * m];
        for c in 0..d {
            for p in 0..m {
                data[p * d + c] = chw[c * m + p];
            }
        }
        Ok(Self { h, w, d, data })
    }

    /// Inverse of [`from_chw`](Self::from_chw), appended to `out`.
    pub fn write_chw(&self, out: &mut Vec<T>) {
        let m = self.m();
        let base = out.len();
        out.resize(base + self.data.len(), T::zero());
        for p in 0..m {
            for c in 0..self.d {
                out[base + c * m + p] = self.data[p * self.d + c];
            }
        }
    }

    pub fn scale(&mut self, alpha: T) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }
}
