//! RBF Gram matrices and the median bandwidth heuristic shared by the
//! regressors and the independence test.

use crate::data::Matrix;

/// Cap on rows used for the median heuristic; larger inputs are strided.
const MEDIAN_SUBSAMPLE: usize = 1000;

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Rows of `x` as contiguous vectors.
pub fn rows(x: &Matrix) -> Vec<Vec<f64>> {
    (0..x.nrows())
        .map(|i| x.row(i).iter().copied().collect())
        .collect()
}

/// Median of pairwise Euclidean distances between distinct rows.
///
/// Zero distances (duplicate rows) are ignored; returns 1.0 when every pair
/// coincides so callers always get a usable bandwidth.
pub fn median_pairwise_distance(x: &Matrix) -> f64 {
    let n = x.nrows();
    let stride = n.div_ceil(MEDIAN_SUBSAMPLE).max(1);
    let pts: Vec<Vec<f64>> = (0..n)
        .step_by(stride)
        .map(|i| x.row(i).iter().copied().collect())
        .collect();
    let mut d = Vec::with_capacity(pts.len() * pts.len() / 2);
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let v = sq_dist(&pts[i], &pts[j]);
            if v > 0.0 {
                d.push(v);
            }
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    m.sqrt()
}

/// Gram matrix `K[i,j] = exp(-|x_i - x_j|^2 / (2 h^2))`.
pub fn rbf_gram(x: &Matrix, bandwidth: f64) -> Matrix {
    let pts = rows(x);
    let n = pts.len();
    let g = 1.0 / (2.0 * bandwidth * bandwidth);
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let v = (-g * sq_dist(&pts[i], &pts[j])).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cross-kernel between the rows of `a` and `b`.
pub fn rbf_cross(a: &Matrix, b: &Matrix, bandwidth: f64) -> Matrix {
    let (pa, pb) = (rows(a), rows(b));
    let g = 1.0 / (2.0 * bandwidth * bandwidth);
    Matrix::from_fn(pa.len(), pb.len(), |i, j| {
        (-g * sq_dist(&pa[i], &pb[j])).exp()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_three_points() {
        // distances 1, 2, 3
        let x = Matrix::from_row_slice(3, 1, &[0.0, 1.0, 3.0]);
        assert!((median_pairwise_distance(&x) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_rows_fall_back_to_unit_bandwidth() {
        let x = Matrix::from_row_slice(3, 1, &[2.0, 2.0, 2.0]);
        assert_eq!(median_pairwise_distance(&x), 1.0);
    }

    #[test]
    fn gram_is_symmetric_with_unit_diagonal() {
        let x = Matrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 2.0]);
        let k = rbf_gram(&x, 1.0);
        assert_eq!(k, k.transpose());
        assert!((k[(0, 1)] - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(k[(2, 2)], 1.0);
    }
}
