//! SVD building blocks: truncated singular spaces, fixed-rank HOSVD, Tucker
//! reconstruction, tail energies and the projections used by the convex
//! propensity solver.

use faer::MatRef;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Matrix, Shape};

/// Relative cutoff below which a singular value counts as zero.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Multilinear rank `(r_1, ..., r_N)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RankProfile {
    ranks: Vec<usize>,
}

impl RankProfile {
    pub fn new(ranks: Vec<usize>) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::InvalidParameter("empty rank profile".into()));
        }
        if ranks.contains(&0) {
            return Err(Error::RankOutOfRange {
                rank: 0,
                max: usize::MAX,
            });
        }
        Ok(Self { ranks })
    }

    /// The same rank `r` on every one of `order` modes.
    pub fn uniform(r: usize, order: usize) -> Result<Self> {
        Self::new(vec![r; order])
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn order(&self) -> usize {
        self.ranks.len()
    }

    /// Checks `r_n <= I_n` for every mode.
    pub fn validate_for(&self, shape: &Shape) -> Result<()> {
        if self.order() != shape.order() {
            return Err(Error::DimensionMismatch {
                context: "rank profile order",
                expected: shape.order(),
                found: self.order(),
            });
        }
        for (&r, &d) in self.ranks.iter().zip(shape.dims()) {
            if r > d {
                return Err(Error::RankOutOfRange { rank: r, max: d });
            }
        }
        Ok(())
    }
}

/// Core tensor plus one factor matrix per mode.
#[derive(Clone, Debug, PartialEq)]
pub struct TuckerDecomposition {
    core: DenseTensor,
    factors: Vec<Matrix>,
}

impl TuckerDecomposition {
    /// Factor `n` must have `core.dims()[n]` columns.
    pub fn new(core: DenseTensor, factors: Vec<Matrix>) -> Result<Self> {
        if factors.len() != core.order() {
            return Err(Error::DimensionMismatch {
                context: "number of Tucker factors",
                expected: core.order(),
                found: factors.len(),
            });
        }
        for (f, &r) in factors.iter().zip(core.dims()) {
            if f.ncols() != r {
                return Err(Error::DimensionMismatch {
                    context: "Tucker factor columns",
                    expected: r,
                    found: f.ncols(),
                });
            }
            if f.nrows() == 0 {
                return Err(Error::InvalidShape("Tucker factor with zero rows".into()));
            }
        }
        Ok(Self { core, factors })
    }

    pub fn core(&self) -> &DenseTensor {
        &self.core
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn into_parts(self) -> (DenseTensor, Vec<Matrix>) {
        (self.core, self.factors)
    }

    /// Shape of the represented tensor.
    pub fn shape(&self) -> Shape {
        Shape::new(self.factors.iter().map(|f| f.nrows()).collect())
            .expect("factor row counts are positive")
    }

    pub fn ranks(&self) -> RankProfile {
        RankProfile::new(self.core.dims().to_vec()).expect("core dims are positive")
    }

    /// `G x_1 U_1 x_2 ... x_N U_N`
    pub fn reconstruct(&self) -> DenseTensor {
        self.core
            .multi_mode_product(
                self.factors
                    .iter()
                    .enumerate()
                    .map(|(n, u)| (n, u.as_ref())),
            )
            .expect("dimensions were validated at construction")
    }

    /// Largest `||U_n^T U_n - I||_F` over the modes.
    pub fn orthonormality_defect(&self) -> f64 {
        self.factors
            .iter()
            .map(|u| {
                let g = u.transpose() * u;
                let mut s = 0.0;
                for j in 0..g.ncols() {
                    for i in 0..g.nrows() {
                        let e = g[(i, j)] - if i == j { 1.0 } else { 0.0 };
                        s += e * e;
                    }
                }
                s.sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Thin SVD `M = U diag(s) V^T` under the sign convention that the
/// largest-magnitude entry of every column of `U` is positive.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Matrix,
    /// Non-increasing.
    pub s: Vec<f64>,
    pub v: Matrix,
}

fn check_finite(m: MatRef<'_, f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite("matrix passed to SVD"));
            }
        }
    }
    Ok(())
}

/// Flips column pairs so the largest-magnitude entry of each `u` column is
/// positive; the first such entry wins on ties.
fn fix_signs(u: &mut Matrix, mut v: Option<&mut Matrix>) {
    for k in 0..u.ncols() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for i in 0..u.nrows() {
            let x = u[(i, k)];
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            for i in 0..u.nrows() {
                u[(i, k)] = -u[(i, k)];
            }
            if let Some(v) = v.as_deref_mut() {
                if k < v.ncols() {
                    for i in 0..v.nrows() {
                        v[(i, k)] = -v[(i, k)];
                    }
                }
            }
        }
    }
}

pub fn svd(m: MatRef<'_, f64>) -> Result<Svd> {
    check_finite(m)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::InvalidShape("SVD of an empty matrix".into()));
    }
    let dec = m.thin_svd().map_err(|_| Error::SvdNoConvergence)?;
    let mut u = dec.U().to_owned();
    let mut v = dec.V().to_owned();
    let s: Vec<f64> = dec.S().column_vector().iter().copied().collect();
    fix_signs(&mut u, Some(&mut v));
    Ok(Svd { u, s, v })
}

/// Singular values, non-increasing.
pub fn singular_values(m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    check_finite(m)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    m.singular_values().map_err(|_| Error::SvdNoConvergence)
}

/// Top-`r` left singular vectors and the matching singular values.
///
/// When `sigma_r == sigma_{r+1}` the first `r` vectors in the SVD routine's
/// output order are kept.
pub fn truncated_left_singular(m: MatRef<'_, f64>, r: usize) -> Result<(Matrix, Vec<f64>)> {
    let max = m.nrows().min(m.ncols());
    if r == 0 || r > max {
        return Err(Error::RankOutOfRange { rank: r, max });
    }
    let dec = svd(m)?;
    let u = dec.u.subcols(0, r).to_owned();
    Ok((u, dec.s[..r].to_vec()))
}

/// Like [`truncated_left_singular`] but allows `min(rows, cols) < r <= rows`
/// by completing the basis with left singular vectors of zero singular value.
fn left_basis(m: MatRef<'_, f64>, r: usize) -> Result<Matrix> {
    if r <= m.nrows().min(m.ncols()) {
        return truncated_left_singular(m, r).map(|(u, _)| u);
    }
    if r > m.nrows() {
        return Err(Error::RankOutOfRange {
            rank: r,
            max: m.nrows(),
        });
    }
    check_finite(m)?;
    let dec = m.svd().map_err(|_| Error::SvdNoConvergence)?;
    let mut u = dec.U().subcols(0, r).to_owned();
    fix_signs(&mut u, None);
    Ok(u)
}

/// Count of singular values above `RANK_TOLERANCE * sigma_1`.
pub fn numerical_rank(m: MatRef<'_, f64>) -> Result<usize> {
    let s = singular_values(m)?;
    let Some(&top) = s.first() else { return Ok(0) };
    if top == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&x| x > RANK_TOLERANCE * top).count())
}

/// Fixed-rank HOSVD: `Q_n` are the top-`r_n` left singular vectors of the
/// mode-n unfolding and the core is `t x_1 Q_1^T ... x_N Q_N^T`.
pub fn hosvd_fixed_rank(t: &DenseTensor, ranks: &RankProfile) -> Result<TuckerDecomposition> {
    ranks.validate_for(t.shape())?;
    let mut factors = Vec::with_capacity(t.order());
    for (n, &r) in ranks.ranks().iter().enumerate() {
        factors.push(left_basis(t.mode_unfold(n)?.as_ref(), r)?);
    }
    let core = t.multi_mode_product(factors.iter().enumerate().map(|(n, q)| (n, q.transpose())))?;
    TuckerDecomposition::new(core, factors)
}

pub fn reconstruct(d: &TuckerDecomposition) -> DenseTensor {
    d.reconstruct()
}

/// `sum_{i > r} sigma_i(M)^2`; `r = 0` gives `||M||_F^2` and any `r` past
/// the number of singular values gives 0.
pub fn tail_energy(m: MatRef<'_, f64>, r: usize) -> Result<f64> {
    let s = singular_values(m)?;
    Ok(s.iter().skip(r).map(|x| x * x).sum())
}

/// Euclidean projection of `v` onto `{w : ||w||_1 <= radius}` by the
/// sort-and-threshold method.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    assert!(radius >= 0.0, "l1 radius must be nonnegative");
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &m) in mags.iter().enumerate() {
        cumsum += m;
        let t = (cumsum - radius) / (j + 1) as f64;
        if m - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    v.iter()
        .map(|&x| x.signum() * (x.abs() - theta).max(0.0))
        .collect()
}

/// Result of a nuclear-ball projection.
#[derive(Clone, Debug)]
pub struct NuclearProjection {
    pub matrix: Matrix,
    /// Nuclear norm of the input.
    pub input_nuclear: f64,
    /// Nuclear norm of the output.
    pub nuclear: f64,
    /// Rank of the output.
    pub rank: usize,
}

/// Frobenius projection onto `{X : ||X||_* <= radius}`.
pub fn project_nuclear_ball(m: MatRef<'_, f64>, radius: f64) -> Result<Matrix> {
    project_nuclear_ball_detailed(m, radius).map(|p| p.matrix)
}

pub fn project_nuclear_ball_detailed(m: MatRef<'_, f64>, radius: f64) -> Result<NuclearProjection> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "nuclear radius must be positive and finite, got {radius}"
        )));
    }
    let dec = svd(m)?;
    let input_nuclear: f64 = dec.s.iter().sum();
    if input_nuclear <= radius {
        let rank = dec.s.iter().filter(|&&x| x > 0.0).count();
        return Ok(NuclearProjection {
            matrix: m.to_owned(),
            input_nuclear,
            nuclear: input_nuclear,
            rank,
        });
    }
    let s = project_l1_ball(&dec.s, radius);
    let rank = s.iter().take_while(|&&x| x > 0.0).count();
    let us = Matrix::from_fn(m.nrows(), rank, |i, k| dec.u[(i, k)] * s[k]);
    let matrix = &us * dec.v.subcols(0, rank).transpose();
    Ok(NuclearProjection {
        matrix,
        input_nuclear,
        nuclear: s.iter().sum(),
        rank,
    })
}

/// Entrywise clamp to `[-gamma, gamma]`.
pub fn project_box(t: &DenseTensor, gamma: f64) -> DenseTensor {
    t.map(|x| x.clamp(-gamma, gamma))
}

/// Entrywise clamp of a matrix to `[-gamma, gamma]`, in place.
pub fn project_box_matrix(m: &mut Matrix, gamma: f64) {
    for j in 0..m.ncols() {
        for x in m.col_as_slice_mut(j) {
            *x = x.clamp(-gamma, gamma);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(values: &[f64]) -> Matrix {
        let k = values.len();
        Matrix::from_fn(k, k, |i, j| if i == j { values[i] } else { 0.0 })
    }

    #[test]
    fn truncated_left_singular_of_diagonal() {
        let (u, s) = truncated_left_singular(diag(&[3.0, 2.0, 1.0]).as_ref(), 2).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s[0] - 3.0).abs() < 1e-12 && (s[1] - 2.0).abs() < 1e-12);
        for i in 0..3 {
            for k in 0..2 {
                let e = if i == k { 1.0 } else { 0.0 };
                assert!((u[(i, k)] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn truncated_left_singular_rank_checks() {
        let m = diag(&[1.0, 1.0]);
        assert!(truncated_left_singular(m.as_ref(), 0).is_err());
        assert!(truncated_left_singular(m.as_ref(), 3).is_err());
    }

    #[test]
    fn rank_one_left_vector_is_normalized_column_factor() {
        let a = [1.0, -2.0, 2.0];
        let b = [0.5, 4.0];
        let m = Matrix::from_fn(3, 2, |i, j| a[i] * b[j]);
        let (u, s) = truncated_left_singular(m.as_ref(), 1).unwrap();
        let na = 3.0;
        let nb = (0.25f64 + 16.0).sqrt();
        assert!((s[0] - na * nb).abs() < 1e-12);
        // Largest-magnitude entry (-2 and 2 tie; the first wins) is positive.
        let expect = [-1.0 / na, 2.0 / na, -2.0 / na];
        for i in 0..3 {
            assert!((u[(i, 0)] - expect[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn svd_sign_convention_and_reassembly() {
        let m = Matrix::from_fn(4, 6, |i, j| {
            ((i * 7 + j * 3) % 5) as f64 - 1.7 + 0.1 * j as f64
        });
        let d = svd(m.as_ref()).unwrap();
        for k in 0..d.u.ncols() {
            let col: Vec<f64> = (0..4).map(|i| d.u[(i, k)]).collect();
            let big = col
                .iter()
                .copied()
                .fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(big > 0.0);
        }
        let us = Matrix::from_fn(4, d.s.len(), |i, k| d.u[(i, k)] * d.s[k]);
        let back = &us * d.v.transpose();
        for j in 0..6 {
            for i in 0..4 {
                assert!((back[(i, j)] - m[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tail_energy_cases() {
        let m = diag(&[3.0, 2.0, 1.0]);
        assert!((tail_energy(m.as_ref(), 1).unwrap() - 5.0).abs() < 1e-12);
        assert!((tail_energy(m.as_ref(), 0).unwrap() - 14.0).abs() < 1e-12);
        assert_eq!(tail_energy(m.as_ref(), 3).unwrap(), 0.0);
    }

    #[test]
    fn l1_projection_examples() {
        assert_eq!(project_l1_ball(&[4.0], 1.0), vec![1.0]);
        assert_eq!(project_l1_ball(&[0.2, -0.3], 1.0), vec![0.2, -0.3]);
        let p = project_l1_ball(&[3.0, 1.0, 0.5], 2.0);
        assert!((p[0] - 2.0).abs() < 1e-15 && p[1] == 0.0 && p[2] == 0.0);
        let p = project_l1_ball(&[3.0, 2.5, 0.1], 2.0);
        assert!((p[0] - 1.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15 && p[2] == 0.0);
    }

    #[test]
    fn nuclear_projection_examples() {
        let p = project_nuclear_ball(diag(&[4.0]).as_ref(), 1.0).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-15);
        let small = diag(&[0.3, 0.2]);
        assert_eq!(project_nuclear_ball(small.as_ref(), 1.0).unwrap(), small);
        assert!(project_nuclear_ball(small.as_ref(), 0.0).is_err());
    }

    #[test]
    fn box_projection() {
        let t = DenseTensor::new(Shape::new(vec![3]).unwrap(), vec![5.0, -0.5, -7.0]).unwrap();
        assert_eq!(project_box(&t, 1.0).data(), &[1.0, -0.5, -1.0]);
    }

    #[test]
    fn rank_profile_validation() {
        assert!(RankProfile::new(vec![]).is_err());
        assert!(RankProfile::new(vec![1, 0]).is_err());
        let shape = Shape::new(vec![3, 4]).unwrap();
        assert!(RankProfile::new(vec![4, 4])
            .unwrap()
            .validate_for(&shape)
            .is_err());
        assert!(RankProfile::new(vec![3])
            .unwrap()
            .validate_for(&shape)
            .is_err());
        assert!(RankProfile::new(vec![3, 4])
            .unwrap()
            .validate_for(&shape)
            .is_ok());
    }

    #[test]
    fn hosvd_full_rank_on_tall_mode_reproduces_input() {
        // Mode 0 has 5 rows but its unfolding only 2 columns.
        let shape = Shape::new(vec![5, 2]).unwrap();
        let t = DenseTensor::from_fn(shape, |i| {
            (i[0] as f64 + 1.0) * (i[1] as f64 - 0.3) + i[0] as f64
        });
        let d = hosvd_fixed_rank(&t, &RankProfile::new(vec![5, 2]).unwrap()).unwrap();
        assert!(d.orthonormality_defect() < 1e-12);
        let r = d.reconstruct();
        assert!(r.sub(&t).unwrap().frobenius_norm() < 1e-12 * t.frobenius_norm());
    }

    #[test]
    fn numerical_rank_of_zero_matrix() {
        assert_eq!(numerical_rank(Matrix::zeros(3, 3).as_ref()).unwrap(), 0);
        assert_eq!(numerical_rank(diag(&[1.0, 1e-9, 0.5]).as_ref()).unwrap(), 2);
    }

    #[test]
    fn nan_is_rejected() {
        let mut m = diag(&[1.0, 2.0]);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(svd(m.as_ref()), Err(Error::NonFinite(_))));
    }
}
