//! Plain-loop oracles shared by the integration tests. Nothing here calls
//! into the library's linear algebra.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tenips::decomposition::TuckerDecomposition;
use tenips::tensor::{DenseTensor, Matrix, Shape};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &Shape, rng: &mut ChaCha8Rng) -> DenseTensor {
    DenseTensor::from_fn(shape.clone(), |_| rng.random_range(-1.0..1.0))
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Column-major linear index.
pub fn lin(dims: &[usize], idx: &[usize]) -> usize {
    let mut k = 0;
    let mut stride = 1;
    for (&i, &d) in idx.iter().zip(dims) {
        k += i * stride;
        stride *= d;
    }
    k
}

/// Every multi-index of `dims` in column-major order.
pub fn indices(dims: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0; dims.len()];
    for _ in 0..total {
        out.push(idx.clone());
        for (i, &d) in idx.iter_mut().zip(dims) {
            *i += 1;
            if *i < d {
                break;
            }
            *i = 0;
        }
    }
    out
}

/// `(X x_n U)[i] = sum_j X[i with i_n = j] U[i_n, j]`, by the definition.
pub fn mode_product_oracle(x: &DenseTensor, u: &Matrix, n: usize) -> Vec<f64> {
    let dims = x.dims();
    let mut out_dims = dims.to_vec();
    out_dims[n] = u.nrows();
    let mut out = vec![0.0; out_dims.iter().product()];
    for idx in indices(&out_dims) {
        let mut s = 0.0;
        let mut src = idx.clone();
        for j in 0..dims[n] {
            src[n] = j;
            s += x.data()[lin(dims, &src)] * u[(idx[n], j)];
        }
        out[lin(&out_dims, &idx)] = s;
    }
    out
}

/// `sum_j G[j] prod_n U_n[i_n, j_n]` for every entry.
pub fn tucker_oracle(d: &TuckerDecomposition) -> Vec<f64> {
    let core = d.core();
    let dims: Vec<usize> = d.factors().iter().map(|u| u.nrows()).collect();
    let core_idx = indices(core.dims());
    indices(&dims)
        .iter()
        .map(|i| {
            core_idx
                .iter()
                .map(|j| {
                    let mut v = core.data()[lin(core.dims(), j)];
                    for (n, u) in d.factors().iter().enumerate() {
                        v *= u[(i[n], j[n])];
                    }
                    v
                })
                .sum()
        })
        .collect()
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// `M M^T` with plain loops.
pub fn gram_rows(m: &Matrix) -> Vec<Vec<f64>> {
    let (r, c) = (m.nrows(), m.ncols());
    let mut g = vec![vec![0.0; r]; r];
    for i in 0..r {
        for j in 0..=i {
            let s: f64 = (0..c).map(|k| m[(i, k)] * m[(j, k)]).sum();
            g[i][j] = s;
            g[j][i] = s;
        }
    }
    g
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns the
/// eigenvalues in non-increasing order and the eigenvectors as columns
/// (`vecs[i][k]` is entry `i` of vector `k`).
#[allow(clippy::needless_range_loop)]
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let scale: f64 = a
        .iter()
        .flatten()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(1e-300);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    let vals = order.iter().map(|&i| a[i][i]).collect();
    let vecs = (0..n)
        .map(|i| order.iter().map(|&k| v[i][k]).collect())
        .collect();
    (vals, vecs)
}

/// Projector onto the span of the first `r` columns of `cols` (given as rows
/// of column entries, `cols[i][k]`).
pub fn projector(cols: &[Vec<f64>], r: usize) -> Vec<Vec<f64>> {
    let n = cols.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..r).map(|k| cols[i][k] * cols[j][k]).sum())
                .collect()
        })
        .collect()
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn rel_err(a: &DenseTensor, b: &DenseTensor) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm()
}
