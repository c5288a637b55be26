use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Layer, LayerSpec, Mode, Real, Saved, Tensor};

/// A fixed chain of layers with a tape of saved activations.
///
/// Each training-mode forward pushes one tape entry; `backward` pops the
/// most recent one. Several forwards may be outstanding (e.g. one per
/// mini-batch chunk); they are unwound in LIFO order.
#[derive(Clone, Debug)]
pub struct Sequential<T> {
    layers: Vec<(String, Layer<T>)>,
    tapes: Vec<Vec<Saved<T>>>,
}

impl<T: Real> Sequential<T> {
    pub fn new<R: Rng + ?Sized>(specs: &[(String, LayerSpec)], rng: &mut R) -> Result<Self> {
        let layers = specs
            .iter()
            .map(|(name, spec)| Ok((name.clone(), Layer::new(spec, rng)?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            layers,
            tapes: Vec::new(),
        })
    }

    pub fn layers(&self) -> &[(String, Layer<T>)] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [(String, Layer<T>)] {
        &mut self.layers
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut tape = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (name, layer) in &mut self.layers {
            let (y, saved) = layer.forward(&cur, mode).map_err(|e| match e {
                Error::Shape { layer, detail } => Error::Shape {
                    layer: format!("{name} ({layer})"),
                    detail,
                },
                other => other,
            })?;
            if mode == Mode::Train {
                tape.push(saved);
            }
            cur = y;
        }
        if mode == Mode::Train {
            self.tapes.push(tape);
        }
        Ok(cur)
    }

    /// Back-propagates through the most recent training forward and releases
    /// its tape.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = self
            .tapes
            .pop()
            .ok_or_else(|| Error::State("backward called before a training-mode forward".into()))?;
        let mut g = grad.clone();
        for ((_, layer), saved) in self.layers.iter_mut().zip(&tape).rev() {
            g = layer.backward(saved, &g)?;
        }
        Ok(g)
    }

    pub fn pending_tapes(&self) -> usize {
        self.tapes.len()
    }

    pub fn clear_tapes(&mut self) {
        self.tapes.clear();
    }

    /// Parameters as `(qualified name, tensor)`, in layer order.
    pub fn named_params_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor<T>)> {
        self.layers
            .iter_mut()
            .flat_map(|(name, layer)| {
                let name = name.clone();
                layer
                    .params_mut()
                    .into_iter()
                    .map(move |(p, t)| (format!("{prefix}{name}.{p}"), t))
            })
            .collect()
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .flat_map(|(name, layer)| {
                layer
                    .params()
                    .into_iter()
                    .map(move |(p, t)| (format!("{prefix}{name}.{p}"), t))
            })
            .collect()
    }

    pub fn named_buffers(&self, prefix: &str) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .flat_map(|(name, layer)| {
                layer
                    .buffers()
                    .into_iter()
                    .map(move |(p, t)| (format!("{prefix}{name}.{p}"), t))
            })
            .collect()
    }

    pub fn named_buffers_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor<T>)> {
        self.layers
            .iter_mut()
            .flat_map(|(name, layer)| {
                let name = name.clone();
                layer
                    .buffers_mut()
                    .into_iter()
                    .map(move |(p, t)| (format!("{prefix}{name}.{p}"), t))
            })
            .collect()
    }
}
