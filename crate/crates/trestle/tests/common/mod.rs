//! Independent numeric oracles shared by the integration tests.
//!
//! Everything here is deliberately written from scratch against the
//! documented contracts -- naive loops and a hand-rolled Jacobi
//! eigensolver -- so that agreement with the library is evidence, not
//! circularity.

use nalgebra::{DMatrix, DVector};

/// Flips a vector in place so the component of largest magnitude (lowest
/// index on magnitude ties) is non-negative. This mirrors the documented
/// sign convention of the library's mode extraction.
pub fn orient(v: &mut DVector<f64>) {
    let mut pivot = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    if v[pivot] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Mean feature vector computed by a naive loop: each input is flipped when
/// its dot product with the first input is negative, then the aligned
/// vectors are averaged component by component.
pub fn naive_mean_baseline(modes: &[Vec<f64>]) -> Vec<f64> {
    let first = &modes[0];
    let dim = first.len();
    let mut sum = vec![0.0f64; dim];
    for mode in modes {
        let mut dot = 0.0;
        for i in 0..dim {
            dot += mode[i] * first[i];
        }
        let sign = if dot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..dim {
            sum[i] += sign * mode[i];
        }
    }
    for value in &mut sum {
        *value /= modes.len() as f64;
    }
    sum
}

/// Novelty index computed by a naive loop: the smaller of the Euclidean
/// distances from the mode and from its negation to the baseline.
pub fn naive_novelty(mode: &[f64], baseline: &[f64]) -> f64 {
    let mut direct = 0.0;
    let mut flipped = 0.0;
    for i in 0..mode.len() {
        let d = mode[i] - baseline[i];
        let f = mode[i] + baseline[i];
        direct += d * d;
        flipped += f * f;
    }
    direct.sqrt().min(flipped.sqrt())
}

/// Eigendecomposition of a small symmetric matrix by the cyclic Jacobi
/// rotation method. Returns `(eigenvalues, eigenvectors)` with eigenvector
/// `k` stored in column `k`; the pairs are unsorted.
pub fn jacobi_eigen(matrix: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "Jacobi needs a square matrix");
    let mut a = matrix.clone();
    let mut v = DMatrix::<f64>::identity(n, n);

    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() < 1e-300 + 1e-15 * a.norm() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                // Rotation angle that zeroes a[p][q].
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let eigenvalues = (0..n).map(|i| a[(i, i)]).collect();
    (eigenvalues, v)
}

/// Dominant left singular vector of `entries` by a route independent of the
/// library: the top eigenvector of the Gram matrix `E * E^T`, extracted with
/// [`jacobi_eigen`], unit-normalized, and oriented by [`orient`]. Also
/// returns the spectral gap `(l1 - l2) / l1` so callers can reject
/// near-degenerate instances where the dominant direction is ill-defined.
pub fn gram_dominant_mode(entries: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let gram = entries * entries.transpose();
    let (eigenvalues, vectors) = jacobi_eigen(&gram);
    let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eigenvalues[j].total_cmp(&eigenvalues[i]));
    let top = order[0];
    let l1 = eigenvalues[top];
    let l2 = if order.len() > 1 {
        eigenvalues[order[1]]
    } else {
        0.0
    };
    let mut mode: DVector<f64> = vectors.column(top).into_owned();
    mode /= mode.norm();
    orient(&mut mode);
    let gap = if l1 > 0.0 { (l1 - l2) / l1 } else { 0.0 };
    (mode, gap)
}
