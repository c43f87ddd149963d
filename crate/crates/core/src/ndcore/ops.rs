//! Forward kernels shared by the tape and by forward-only callers.
//!
//! Every kernel works on batches: a vector argument is a `1 × n` matrix and a
//! batch of vectors has one row per sample.

use super::matrix::gemm;
use super::Matrix;
use crate::error::{Error, Result};

/// `y = x·Wᵀ + b` for every row `x` of `input`.
///
/// `weight` is `out × in` so that a single row computes `W·x + b`.
pub fn affine(input: &Matrix, weight: &Matrix, bias: Option<&Matrix>) -> Result<Matrix> {
    if input.cols() != weight.cols() {
        return Err(Error::shape("affine", format!("x {}", input.shape_str()), format!("W {}", weight.shape_str())));
    }
    let mut out = Matrix::zeros(input.rows(), weight.rows());
    if let Some(b) = bias {
        if b.rows() != 1 || b.cols() != weight.rows() {
            return Err(Error::shape("affine", format!("W {}", weight.shape_str()), format!("b {}", b.shape_str())));
        }
        for r in 0..out.rows() {
            out.row_mut(r).copy_from_slice(b.as_slice());
        }
        gemm(1.0, input, false, weight, true, 1.0, &mut out);
    } else {
        gemm(1.0, input, false, weight, true, 0.0, &mut out);
    }
    Ok(out)
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Logistic function, evaluated without overflow for large `|z|`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max-logit subtraction.
pub fn softmax_rows(z: &Matrix) -> Result<Matrix> {
    if z.cols() == 0 {
        return Err(Error::shape("softmax", z.shape_str(), "at least one logit"));
    }
    let mut out = z.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(out)
}

/// `Σ_j weights[:, j] · vectors[j]`, row by row.
pub fn weighted_sum(vectors: &[&Matrix], weights: &Matrix) -> Result<Matrix> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::shape("weighted_sum", "0 vectors", weights.shape_str()))?;
    let (rows, cols) = first.shape();
    if weights.cols() != vectors.len() || weights.rows() != rows {
        return Err(Error::shape(
            "weighted_sum",
            format!("{} vectors of {}", vectors.len(), first.shape_str()),
            format!("weights {}", weights.shape_str()),
        ));
    }
    let mut out = Matrix::zeros(rows, cols);
    for (j, v) in vectors.iter().enumerate() {
        if v.shape() != (rows, cols) {
            return Err(Error::shape("weighted_sum", first.shape_str(), v.shape_str()));
        }
        for r in 0..rows {
            let w = weights.get(r, j);
            for (o, x) in out.row_mut(r).iter_mut().zip(v.row(r)) {
                *o += w * x;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> Matrix {
        Matrix::row_vector(v)
    }

    #[test]
    fn affine_examples() {
        let w = Matrix::from_rows(&[&[2.0, 3.0], &[4.0, 5.0]]).unwrap();
        let y = affine(&row(&[1.0, 0.0]), &w, Some(&row(&[0.0, 0.0]))).unwrap();
        assert_eq!(y.as_slice(), &[2.0, 4.0]);

        let y = affine(&row(&[0.0, 0.0]), &w, Some(&row(&[7.0, -1.0]))).unwrap();
        assert_eq!(y.as_slice(), &[7.0, -1.0]);

        let w1 = Matrix::from_rows(&[&[1.0, 1.0]]).unwrap();
        let y = affine(&row(&[1.0, 2.0]), &w1, Some(&row(&[1.0]))).unwrap();
        // 1·1 + 1·2 + 1
        assert_eq!(y.as_slice(), &[4.0]);
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let w = Matrix::zeros(2, 3);
        let err = affine(&row(&[1.0, 2.0]), &w, None).unwrap_err().to_string();
        assert!(err.contains("1x2") && err.contains("2x3"), "{err}");
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu(&row(&[-1.0, 0.0, 2.0])).as_slice(), &[0.0, 0.0, 2.0]);
        assert_eq!(relu(&row(&[0.0, 0.0])).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn softmax_examples() {
        let p = softmax_rows(&row(&[0.0; 6])).unwrap();
        for &v in p.as_slice() {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
        assert_eq!(softmax_rows(&row(&[42.5])).unwrap().as_slice(), &[1.0]);
        let p = softmax_rows(&row(&[1f64.ln(), 3f64.ln()])).unwrap();
        assert!((p.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((p.get(0, 1) - 0.75).abs() < 1e-15);
        assert!(softmax_rows(&Matrix::zeros(1, 0)).is_err());
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let p = softmax_rows(&row(&[1000.0, 999.0, -1000.0])).unwrap();
        assert!(p.is_finite());
        assert!((p.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0), 0.5);
        for z in [-5.0, 1.0, 17.0] {
            assert!((sigmoid(z) - (1.0 - sigmoid(-z))).abs() < 1e-15);
        }
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn weighted_sum_examples() {
        let a = row(&[1.0, 0.0]);
        let b = row(&[0.0, 1.0]);
        assert_eq!(weighted_sum(&[&a], &row(&[1.0])).unwrap().as_slice(), &[1.0, 0.0]);
        assert_eq!(
            weighted_sum(&[&a, &b], &row(&[0.25, 0.75])).unwrap().as_slice(),
            &[0.25, 0.75]
        );
        let c = row(&[3.0, -7.0]);
        assert_eq!(
            weighted_sum(&[&a, &c], &row(&[0.0, 0.0])).unwrap().as_slice(),
            &[0.0, 0.0]
        );
        assert!(weighted_sum(&[&a, &b], &row(&[1.0])).is_err());
        assert!(weighted_sum(&[&a, &row(&[1.0, 2.0, 3.0])], &row(&[0.5, 0.5])).is_err());
    }
}
