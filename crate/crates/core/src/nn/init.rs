use rand::Rng;

use crate::nn::{Real, Tensor};

/// Kaiming-uniform (ReLU gain): `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
pub fn kaiming_uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    uniform(shape, (6.0 / fan_in as f64).sqrt(), rng)
}

/// Bias initializer: `U(-1 / sqrt(fan_in), 1 / sqrt(fan_in))`.
pub fn fan_in_uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    uniform(shape, 1.0 / (fan_in as f64).sqrt(), rng)
}

fn uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor<T> {
    let len = shape.iter().product();
    let data = (0..len).map(|_| T::lit(rng.random_range(-bound..bound))).collect();
    Tensor::from_vec(shape, data)
        .expect("length matches shape")
        .requires_grad()
}
