use thiserror::Error;

use crate::model::EmbeddingVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("entity has no reference images")]
    EmptyReferences,
    #[error("quantile level {0} outside (0, 1]")]
    InvalidQuantile(f64),
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("reference vector has zero norm")]
    DegenerateReference,
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, SimError> {
    if a.dim() != b.dim() {
        return Err(SimError::DimMismatch(a.dim(), b.dim()));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.values().iter().zip(b.values()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    // sqrt(fl(x * x)) == x, so cosine(v, v) is exactly 1
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Cosine similarity mapped to [0, 1].
pub fn normalized_cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, SimError> {
    Ok((cosine(a, b)? + 1.0) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn reference_values() {
        let v = emb(&[0.3, -2.0, 5.5]);
        assert_eq!(cosine(&v, &v).unwrap(), 1.0);
        assert_eq!(cosine(&emb(&[1.0, 0.0]), &emb(&[0.0, 1.0])).unwrap(), 0.0);
        // 32 / (sqrt(14) * sqrt(77))
        let expected = 32.0 / (14.0f64.sqrt() * 77.0f64.sqrt());
        let got = cosine(&emb(&[1.0, 2.0, 3.0]), &emb(&[4.0, 5.0, 6.0])).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.974631846).abs() < 1e-9);
    }

    #[test]
    fn normalized_endpoints() {
        let v = emb(&[1.0, 2.0]);
        let w = emb(&[-1.0, -2.0]);
        assert_eq!(normalized_cosine(&v, &v).unwrap(), 1.0);
        assert_eq!(normalized_cosine(&v, &w).unwrap(), 0.0);
        assert_eq!(
            normalized_cosine(&emb(&[1.0, 0.0]), &emb(&[0.0, 3.0])).unwrap(),
            0.5
        );
    }

    #[test]
    fn dim_mismatch() {
        assert_eq!(
            cosine(&emb(&[1.0]), &emb(&[1.0, 0.0])),
            Err(SimError::DimMismatch(1, 2))
        );
    }
}
