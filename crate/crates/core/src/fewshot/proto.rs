use super::feature::EmbeddedFeature;
use super::metric::{argmax, Classification};
use crate::error::{Error, Result};
use crate::nn::Real;

/// Mean descriptor of a feature map (global average pooling).
pub fn global_average<T: Real>(f: &EmbeddedFeature<T>) -> Vec<T> {
    super::se::squeeze(f)
}

/// Element-wise mean of equally long vectors.
pub fn prototype<T: Real>(vectors: &[Vec<T>]) -> Result<Vec<T>> {
    let first = vectors.first().ok_or_else(|| Error::Config("prototype of an empty support set".into()))?;
    let mut out = vec![T::zero(); first.len()];
    for v in vectors {
        if v.len() != out.len() {
            return Err(Error::dim("support embedding", out.len(), v.len()));
        }
        out.iter_mut().zip(v).for_each(|(a, &b)| *a += b);
    }
    let inv = T::one() / T::lit(vectors.len() as f64);
    out.iter_mut().for_each(|a| *a *= inv);
    Ok(out)
}

/// `-|q - c|²` for every prototype `c`.
pub fn prototype_scores<T: Real>(query: &[T], prototypes: &[Vec<T>]) -> Vec<T> {
    prototypes
        .iter()
        .map(|c| -query.iter().zip(c).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>())
        .collect()
}

/// Nearest-prototype classification of a pooled query embedding.
pub fn prototype_classify<T: Real>(query: &[T], prototypes: &[Vec<T>]) -> Result<Classification<T>> {
    if prototypes.len() < 2 {
        return Err(Error::Config(format!("classification needs at least 2 classes, got {}", prototypes.len())));
    }
    if let Some(p) = prototypes.iter().find(|p| p.len() != query.len()) {
        return Err(Error::dim("prototype", query.len(), p.len()));
    }
    let scores = prototype_scores(query, prototypes);
    Ok(Classification {
        prediction: argmax(&scores),
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_shot_self_match_wins() {
        let protos = vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5]];
        for (i, p) in protos.iter().enumerate() {
            assert_eq!(prototype_classify(p, &protos).unwrap().prediction, i);
        }
    }

    #[test]
    fn equidistant_prototypes_tie_low() {
        let protos = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        assert_eq!(prototype_classify(&[0.0, 3.0], &protos).unwrap().prediction, 0);
    }

    #[test]
    fn hand_placed_triangle() {
        let protos = vec![
            prototype(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap(),
            prototype(&[vec![0.0, 4.0]]).unwrap(),
            prototype(&[vec![5.0, 5.0], vec![5.0, 3.0]]).unwrap(),
        ];
        assert_eq!(protos[0], vec![1.0, 0.0]);
        let c = prototype_classify(&[1.0, 2.5], &protos).unwrap();
        assert_eq!(c.scores, vec![-6.25, -3.25, -18.25]);
        assert_eq!(c.prediction, 1);
    }
}
