use crate::error::{Error, Result};
use crate::nn::Real;

/// Dense row-major n-dimensional array with an optional gradient buffer.
///
/// Parameters carry a gradient buffer of the same length as `data`;
/// activations flowing through the network do not.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
            grad: None,
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::dim(
                "tensor construction",
                format!("{len} elements for shape {shape:?}"),
                data.len(),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    /// Allocates a zeroed gradient buffer, marking the tensor as trainable.
    pub fn requires_grad(mut self) -> Self {
        self.grad = Some(vec![T::zero(); self.data.len()]);
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [T]> {
        self.grad.as_deref_mut()
    }

    /// Simultaneous access to values and gradient, for optimizers.
    pub fn data_and_grad_mut(&mut self) -> (&mut [T], Option<&mut [T]>) {
        (&mut self.data, self.grad.as_deref_mut())
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::dim(
                "reshape",
                format!("{} elements", self.data.len()),
                format!("{shape:?}"),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Interprets the tensor as a `[batch, channels, height, width]` stack.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::dim("4-d tensor", "[n, c, h, w]", format!("{:?}", self.shape))),
        }
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::dim("2-d tensor", "[rows, cols]", format!("{:?}", self.shape))),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
            && self
                .grad
                .as_ref()
                .is_none_or(|g| g.iter().all(|v| v.is_finite()))
    }

    /// Fails with [`Error::NonFinite`] when any value is NaN or infinite.
    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    /// Concatenates tensors along the leading axis.
    pub fn concat(parts: &[&Tensor<T>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Config("concat of zero tensors".into()))?;
        let tail = &first.shape[1..];
        let mut lead = 0;
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for p in parts {
            if &p.shape[1..] != tail {
                return Err(Error::dim("concat", format!("{tail:?}"), format!("{:?}", &p.shape[1..])));
            }
            lead += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(tail);
        Tensor::from_vec(&shape, data)
    }

    /// Copies rows `[start, end)` of the leading axis.
    pub fn slice_outer(&self, start: usize, end: usize) -> Result<Self> {
        let lead = *self.shape.first().unwrap_or(&0);
        if start > end || end > lead {
            return Err(Error::dim("slice_outer", format!("range within 0..{lead}"), format!("{start}..{end}")));
        }
        let stride: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Tensor::from_vec(&shape, self.data[start * stride..end * stride].to_vec())
    }

    /// Converts element precision.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
            grad: self
                .grad
                .as_ref()
                .map(|g| g.iter().map(|v| U::lit(v.as_f64())).collect()),
        }
    }
}
