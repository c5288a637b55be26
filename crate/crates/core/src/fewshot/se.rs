use rand::Rng;

use super::feature::EmbeddedFeature;
use crate::error::{Error, Result};
use crate::nn::{sigmoid, FullyConnected, Layer, LayerSpec, Real, Tensor};

/// Squeeze-and-excitation channel attention: `s = σ(W2 relu(W1 z))` with
/// `z` the per-channel spatial mean, applied as `F̂ = s ⊙ F`.
#[derive(Clone, Debug)]
pub struct SeBlock<T> {
    /// `[d/r, d]`
    pub w1: FullyConnected<T>,
    /// `[d, d/r]`
    pub w2: FullyConnected<T>,
    pub reduction: usize,
}

/// Intermediate values of a batched SE forward.
#[derive(Clone, Debug)]
pub struct SeTape<T> {
    z: Tensor<T>,
    u1: Tensor<T>,
    r: Tensor<T>,
    s: Vec<T>,
}

impl<T> SeTape<T> {
    /// Channel weights, `[batch, d]` row-major.
    pub fn weights(&self) -> &[T] {
        &self.s
    }
}

fn fc<T: Real, R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Result<FullyConnected<T>> {
    let spec = LayerSpec::FullyConnected {
        in_features,
        out_features,
        bias: false,
    };
    match Layer::new(&spec, rng)? {
        Layer::FullyConnected(l) => Ok(l),
        _ => unreachable!("fully connected spec builds a fully connected layer"),
    }
}

/// Per-channel spatial mean of a feature map.
pub fn squeeze<T: Real>(f: &EmbeddedFeature<T>) -> Vec<T> {
    let mut z = vec![T::zero(); f.d];
    for x in f.descriptors() {
        z.iter_mut().zip(x).for_each(|(a, &v)| *a += v);
    }
    let inv = T::one() / T::lit(f.m() as f64);
    z.iter_mut().for_each(|a| *a *= inv);
    z
}

/// Channel-wise scaling `F̂_c = s_c F_c`.
pub fn recalibrate<T: Real>(f: &EmbeddedFeature<T>, s: &[T]) -> Result<EmbeddedFeature<T>> {
    if s.len() != f.d {
        return Err(Error::dim("channel weights", f.d, s.len()));
    }
    let mut out = f.clone();
    for x in out.data.chunks_exact_mut(f.d) {
        x.iter_mut().zip(s).for_each(|(v, &w)| *v *= w);
    }
    Ok(out)
}

impl<T: Real> SeBlock<T> {
    pub fn new<R: Rng + ?Sized>(d: usize, reduction: usize, rng: &mut R) -> Result<Self> {
        if reduction == 0 || !d.is_multiple_of(reduction) {
            return Err(Error::Config(format!("SE reduction {reduction} must divide d = {d}")));
        }
        let hidden = d / reduction;
        Ok(Self {
            w1: fc(d, hidden, rng)?,
            w2: fc(hidden, d, rng)?,
            reduction,
        })
    }

    pub fn d(&self) -> usize {
        self.w1.in_features
    }

    pub fn excite(&self, z: &[T]) -> Result<Vec<T>> {
        let z = Tensor::from_vec(&[1, z.len()], z.to_vec())?;
        Ok(self.excite_batch(&z)?.s)
    }

    fn excite_batch(&self, z: &Tensor<T>) -> Result<SeTape<T>> {
        let u1 = self.w1.forward(z)?;
        let mut r = u1.clone();
        r.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
        let u2 = self.w2.forward(&r)?;
        let s = u2.data().iter().map(|&v| sigmoid(v)).collect();
        Ok(SeTape { z: z.clone(), u1, r, s })
    }

    /// Recalibrates a batch of features, returning the tape for
    /// [`backward`](Self::backward).
    pub fn forward(&self, feats: &[EmbeddedFeature<T>]) -> Result<(Vec<EmbeddedFeature<T>>, SeTape<T>)> {
        let d = self.d();
        if let Some(f) = feats.iter().find(|f| f.d != d) {
            return Err(Error::shape("se", format!("descriptor length {}, expected {d}", f.d)));
        }
        let mut z = Vec::with_capacity(feats.len() * d);
        for f in feats {
            z.extend(squeeze(f));
        }
        let tape = self.excite_batch(&Tensor::from_vec(&[feats.len(), d], z)?)?;
        let out = feats
            .iter()
            .zip(tape.s.chunks_exact(d))
            .map(|(f, s)| recalibrate(f, s))
            .collect::<Result<_>>()?;
        Ok((out, tape))
    }

    /// Given `dL/dF̂` per image, accumulates `dL/dW1`, `dL/dW2` and returns
    /// `dL/dF` per image.
    pub fn backward(
        &mut self,
        feats: &[EmbeddedFeature<T>],
        tape: &SeTape<T>,
        dhat: &[Vec<T>],
    ) -> Result<Vec<Vec<T>>> {
        let d = self.d();
        let b = feats.len();
        if dhat.len() != b || tape.s.len() != b * d {
            return Err(Error::State("SE backward does not match its forward".into()));
        }
        let mut ds = vec![T::zero(); b * d];
        let mut dfeat: Vec<Vec<T>> = Vec::with_capacity(b);
        for (i, (f, g)) in feats.iter().zip(dhat).enumerate() {
            let s = &tape.s[i * d..(i + 1) * d];
            let dsi = &mut ds[i * d..(i + 1) * d];
            let mut df = vec![T::zero(); f.data.len()];
            for ((x, gx), dx) in f.descriptors().zip(g.chunks_exact(d)).zip(df.chunks_exact_mut(d)) {
                for c in 0..d {
                    dsi[c] += gx[c] * x[c];
                    dx[c] = s[c] * gx[c];
                }
            }
            dfeat.push(df);
        }
        let du2: Vec<T> = ds.iter().zip(&tape.s).map(|(&g, &s)| g * s * (T::one() - s)).collect();
        let du2 = Tensor::from_vec(&[b, d], du2)?;
        let mut du1 = self.w2.backward(&tape.r, &du2)?;
        du1.data_mut()
            .iter_mut()
            .zip(tape.u1.data())
            .for_each(|(g, &u)| if u <= T::zero() { *g = T::zero() });
        let dz = self.w1.backward(&tape.z, &du1)?;
        for (i, (f, df)) in feats.iter().zip(dfeat.iter_mut()).enumerate() {
            let inv = T::one() / T::lit(f.m() as f64);
            let dzi = &dz.data()[i * d..(i + 1) * d];
            for dx in df.chunks_exact_mut(d) {
                dx.iter_mut().zip(dzi).for_each(|(g, &v)| *g += v * inv);
            }
        }
        Ok(dfeat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn feature(h: usize, w: usize, d: usize, seed: u64) -> EmbeddedFeature<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmbeddedFeature::new(h, w, d, (0..h * w * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn squeeze_of_constant_and_one_hot_channels() {
        let mut f = EmbeddedFeature::new(2, 2, 2, vec![0.0; 8]).unwrap();
        for p in 0..4 {
            f.data[p * 2] = 3.5;
        }
        f.data[3 * 2 + 1] = 1.0;
        assert_eq!(squeeze(&f), vec![3.5, 0.25]);
    }

    #[test]
    fn squeeze_matches_double_loop() {
        let f = feature(3, 5, 4, 1);
        let z = squeeze(&f);
        for c in 0..4 {
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..5 {
                    acc += f.data[(i * 5 + j) * 4 + c];
                }
            }
            assert!((z[c] - acc / 15.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_give_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut se = SeBlock::<f64>::new(8, 4, &mut rng).unwrap();
        se.w2.weight.data_mut().fill(0.0);
        assert!(se.excite(&[0.3; 8]).unwrap().iter().all(|&s| s == 0.5));
        let mut se = SeBlock::<f64>::new(8, 4, &mut rng).unwrap();
        se.w1.weight.data_mut().fill(0.0);
        assert!(se.excite(&[0.3; 8]).unwrap().iter().all(|&s| s == 0.5));
    }

    #[test]
    fn excite_matches_dense_matvec() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let se = SeBlock::<f64>::new(8, 2, &mut rng).unwrap();
        let z: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin()).collect();
        let w1 = se.w1.weight.data();
        let w2 = se.w2.weight.data();
        let hidden: Vec<f64> = (0..4).map(|j| (0..8).map(|i| w1[j * 8 + i] * z[i]).sum::<f64>().max(0.0)).collect();
        let expect: Vec<f64> = (0..8)
            .map(|c| 1.0 / (1.0 + (-(0..4).map(|j| w2[c * 4 + j] * hidden[j]).sum::<f64>()).exp()))
            .collect();
        let s = se.excite(&z).unwrap();
        for (a, b) in s.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-9);
            assert!(*a > 0.0 && *a < 1.0);
        }
    }

    #[test]
    fn recalibrate_scales_channels() {
        let f = feature(2, 2, 3, 4);
        assert_eq!(recalibrate(&f, &[1.0; 3]).unwrap(), f);
        assert!(recalibrate(&f, &[0.0; 3]).unwrap().data.iter().all(|&v| v == 0.0));
        let half = recalibrate(&f, &[1.0, 0.5, 1.0]).unwrap();
        for p in 0..4 {
            assert_eq!(half.descriptor(p)[0], f.descriptor(p)[0]);
            assert_eq!(half.descriptor(p)[1], 0.5 * f.descriptor(p)[1]);
            assert_eq!(half.descriptor(p)[2], f.descriptor(p)[2]);
        }
        assert!(recalibrate(&f, &[1.0; 2]).is_err());
    }
}
