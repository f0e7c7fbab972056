//! Dense order-N tensors, binary masks and the index algebra between them.
//!
//! Every tensor is stored in the canonical linearization where the first
//! mode varies fastest (generalized column-major). Unfoldings are defined
//! relative to that ordering: the S-unfolding permutes the modes in `S` to
//! the front (ascending), the remaining modes after them (ascending), and
//! reads the permuted tensor column-wise into an `I_S x I_{S^C}` matrix.
//! The mode-n unfolding is the S-unfolding with `S = {n}`.
//!
//! Mode indices are zero-based throughout the API.

use std::fmt;

use faer::linalg::matmul::matmul;
use faer::{Accum, MatMut, MatRef, Par};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix used for unfoldings and factor matrices (column-major).
pub type Matrix = faer::Mat<f64>;

/// Mode sizes `I_1 x ... x I_N` of a tensor.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Shape {
    dims: Vec<usize>,
}

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidShape(
                "a tensor needs at least one mode".into(),
            ));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidShape(format!("mode {pos} has size 0")));
        }
        let mut total: usize = 1;
        for &d in &dims {
            total = total
                .checked_mul(d)
                .filter(|&t| t <= isize::MAX as usize / std::mem::size_of::<f64>())
                .ok_or_else(|| Error::InvalidShape(format!("{dims:?} is too large")))?;
        }
        Ok(Self { dims })
    }

    /// Cubical shape `I x I x ... x I` of the given order.
    pub fn cubical(size: usize, order: usize) -> Result<Self> {
        Self::new(vec![size; order])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// Total number of entries, `I_[N]`.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Column-major strides: the stride of mode `k` is the product of the
    /// sizes of all earlier modes.
    pub fn strides(&self) -> Vec<usize> {
        let mut acc = 1;
        self.dims
            .iter()
            .map(|&d| {
                let s = acc;
                acc *= d;
                s
            })
            .collect()
    }

    pub fn linear_index(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.order());
        let mut lin = 0;
        let mut stride = 1;
        for (&i, &d) in index.iter().zip(&self.dims) {
            debug_assert!(i < d);
            lin += i * stride;
            stride *= d;
        }
        lin
    }

    pub fn multi_index(&self, mut linear: usize) -> Vec<usize> {
        self.dims
            .iter()
            .map(|&d| {
                let i = linear % d;
                linear /= d;
                i
            })
            .collect()
    }

    /// The same shape with mode `mode` resized to `size`.
    pub fn with_mode(&self, mode: usize, size: usize) -> Result<Self> {
        self.check_mode(mode)?;
        let mut dims = self.dims.clone();
        dims[mode] = size;
        Self::new(dims)
    }

    pub fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: self.order(),
            });
        }
        Ok(())
    }

    /// Product of the sizes of the given modes.
    pub fn size_of(&self, modes: &[usize]) -> usize {
        modes.iter().map(|&m| self.dims[m]).product()
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = Error;

    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Shape::new(dims)
    }
}

impl From<Shape> for Vec<usize> {
    fn from(s: Shape) -> Self {
        s.dims
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join("x"))
    }
}

/// Row/column mode split of an S-unfolding.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnfoldingSpec {
    subset: Vec<usize>,
    complement: Vec<usize>,
    row_dim: usize,
    col_dim: usize,
}

impl UnfoldingSpec {
    /// Builds the spec for row modes `subset` of `shape`. The subset must be
    /// nonempty, a strict subset of the modes and free of duplicates; it is
    /// stored sorted.
    pub fn new(shape: &Shape, subset: &[usize]) -> Result<Self> {
        let order = shape.order();
        let mut s = subset.to_vec();
        s.sort_unstable();
        if s.is_empty() {
            return Err(Error::InvalidUnfolding("row mode set is empty".into()));
        }
        if s.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidUnfolding(format!(
                "duplicate modes in {subset:?}"
            )));
        }
        if let Some(&m) = s.iter().find(|&&m| m >= order) {
            return Err(Error::ModeOutOfRange { mode: m, order });
        }
        if s.len() == order {
            return Err(Error::InvalidUnfolding(format!(
                "{subset:?} is not a strict subset of the {order} modes"
            )));
        }
        let complement: Vec<usize> = (0..order).filter(|m| !s.contains(m)).collect();
        Ok(Self {
            row_dim: shape.size_of(&s),
            col_dim: shape.size_of(&complement),
            subset: s,
            complement,
        })
    }

    /// The mode-n unfolding expressed as an S-unfolding.
    pub fn mode(shape: &Shape, n: usize) -> Result<Self> {
        Self::new(shape, &[n])
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn complement(&self) -> &[usize] {
        &self.complement
    }

    /// `I_S`
    pub fn row_dim(&self) -> usize {
        self.row_dim
    }

    /// `I_{S^C}`
    pub fn col_dim(&self) -> usize {
        self.col_dim
    }

    fn check(&self, shape: &Shape) -> Result<()> {
        let consistent = self.subset.len() + self.complement.len() == shape.order()
            && self
                .subset
                .iter()
                .chain(&self.complement)
                .all(|&m| m < shape.order())
            && shape.size_of(&self.subset) == self.row_dim
            && shape.size_of(&self.complement) == self.col_dim;
        if consistent {
            Ok(())
        } else {
            Err(Error::InvalidUnfolding(format!(
                "spec {self} does not match shape {shape}"
            )))
        }
    }
}

impl fmt::Display for UnfoldingSpec {
    /// One-based mode set, e.g. `{1,3} (8x15)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let modes: Vec<String> = self.subset.iter().map(|m| (m + 1).to_string()).collect();
        write!(
            f,
            "{{{}}} ({}x{})",
            modes.join(","),
            self.row_dim,
            self.col_dim
        )
    }
}

/// The square set: the strict subset `S` minimizing `|I_S - I_{S^C}|`.
///
/// Ties are broken by the smallest `|S|`, then by the lexicographically
/// smallest sorted mode list.
pub fn square_set(shape: &Shape) -> Result<UnfoldingSpec> {
    let order = shape.order();
    if order < 2 {
        return Err(Error::InvalidUnfolding(
            "an order-1 tensor has no strict nonempty mode subset".into(),
        ));
    }
    if order > 24 {
        return Err(Error::InvalidShape(format!(
            "square set search over order {order} is not supported"
        )));
    }
    let total = shape.len() as u128;
    let mut best: Option<(u128, usize, Vec<usize>)> = None;
    for bits in 1u32..(1u32 << order) - 1 {
        let subset: Vec<usize> = (0..order).filter(|m| bits & (1 << m) != 0).collect();
        let rows = shape.size_of(&subset) as u128;
        let cols = total / rows;
        let key = (rows.abs_diff(cols), subset.len(), subset);
        if best.as_ref().is_none_or(|b| key < *b) {
            best = Some(key);
        }
    }
    let (_, _, subset) = best.expect("order >= 2 has at least one strict subset");
    UnfoldingSpec::new(shape, &subset)
}

/// Dense real tensor in the canonical (mode-1 fastest) linearization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl DenseTensor {
    /// Wraps `data`; rejects a length mismatch or non-finite entries.
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tensor data"));
        }
        Self::new_unchecked_finite(shape, data)
    }

    /// Like [`DenseTensor::new`] but permits non-finite entries.
    pub fn new_unchecked_finite(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::DimensionMismatch {
                context: "tensor data length",
                expected: shape.len(),
                found: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        let data = vec![value; shape.len()];
        Self { shape, data }
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut idx = vec![0usize; shape.order()];
        let mut data = Vec::with_capacity(shape.len());
        for _ in 0..shape.len() {
            data.push(f(&idx));
            for (k, &d) in shape.dims().iter().enumerate() {
                idx[k] += 1;
                if idx[k] < d {
                    break;
                }
                idx[k] = 0;
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn order(&self) -> usize {
        self.shape.order()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.shape.linear_index(index)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Entrywise combination of two tensors of identical shape.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        check_shapes(&self.shape, &other.shape)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|x| c * x)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    /// Entrywise (Hadamard) product.
    pub fn entrywise_product(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    /// Keeps the observed entries and zeroes the rest.
    pub fn masked(&self, mask: &MaskTensor) -> Result<Self> {
        check_shapes(&self.shape, mask.shape())?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(mask.bits())
                .map(|(&x, &b)| if b { x } else { 0.0 })
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Mode-n unfolding, an `I_n x I_(-n)` matrix whose columns are the
    /// mode-n fibers.
    pub fn mode_unfold(&self, n: usize) -> Result<Matrix> {
        self.shape.check_mode(n)?;
        let cols: Vec<usize> = (0..self.order()).filter(|&m| m != n).collect();
        Ok(self.unfold_modes(&[n], &cols))
    }

    /// Inverse of [`DenseTensor::mode_unfold`].
    pub fn fold_mode(matrix: MatRef<'_, f64>, n: usize, shape: &Shape) -> Result<Self> {
        shape.check_mode(n)?;
        let cols: Vec<usize> = (0..shape.order()).filter(|&m| m != n).collect();
        Self::fold_modes(matrix, &[n], &cols, shape)
    }

    /// S-unfolding `reshape(pi_S(X)^(1), I_S, I_{S^C})`.
    pub fn unfold(&self, spec: &UnfoldingSpec) -> Result<Matrix> {
        spec.check(&self.shape)?;
        Ok(self.unfold_modes(spec.subset(), spec.complement()))
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn fold(matrix: MatRef<'_, f64>, spec: &UnfoldingSpec, shape: &Shape) -> Result<Self> {
        spec.check(shape)?;
        Self::fold_modes(matrix, spec.subset(), spec.complement(), shape)
    }

    fn unfold_modes(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        let perm: Vec<usize> = rows.iter().chain(cols).copied().collect();
        let data = self.permuted(&perm);
        let r = self.shape.size_of(rows);
        let c = self.shape.size_of(cols);
        MatRef::from_column_major_slice(&data, r, c).to_owned()
    }

    fn fold_modes(
        matrix: MatRef<'_, f64>,
        rows: &[usize],
        cols: &[usize],
        shape: &Shape,
    ) -> Result<Self> {
        let r = shape.size_of(rows);
        let c = shape.size_of(cols);
        if matrix.nrows() != r {
            return Err(Error::DimensionMismatch {
                context: "fold row count",
                expected: r,
                found: matrix.nrows(),
            });
        }
        if matrix.ncols() != c {
            return Err(Error::DimensionMismatch {
                context: "fold column count",
                expected: c,
                found: matrix.ncols(),
            });
        }
        let mut flat = Vec::with_capacity(r * c);
        for j in 0..c {
            flat.extend((0..r).map(|i| matrix[(i, j)]));
        }
        let perm: Vec<usize> = rows.iter().chain(cols).copied().collect();
        let mut data = vec![0.0; shape.len()];
        walk_permuted(shape, &perm, |pos, offset| data[offset] = flat[pos]);
        Ok(Self {
            shape: shape.clone(),
            data,
        })
    }

    /// Copies the entries in the order of the permuted tensor whose k-th mode
    /// is mode `perm[k]` of `self`.
    fn permuted(&self, perm: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        walk_permuted(&self.shape, perm, |pos, offset| {
            out[pos] = self.data[offset]
        });
        out
    }

    /// Tensor with modes reordered so mode `k` of the result is mode
    /// `perm[k]` of `self`.
    pub fn permute_modes(&self, perm: &[usize]) -> Result<Self> {
        let mut sorted = perm.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.order()).collect::<Vec<_>>() {
            return Err(Error::InvalidParameter(format!(
                "{perm:?} is not a permutation of 0..{}",
                self.order()
            )));
        }
        let dims = perm.iter().map(|&m| self.dims()[m]).collect();
        Ok(Self {
            shape: Shape::new(dims)?,
            data: self.permuted(perm),
        })
    }

    /// n-mode product `X x_n U` with `U` of size `J x I_n`.
    pub fn n_mode_product(&self, u: MatRef<'_, f64>, n: usize) -> Result<Self> {
        self.shape.check_mode(n)?;
        let dims = self.dims();
        if u.ncols() != dims[n] {
            return Err(Error::DimensionMismatch {
                context: "n-mode product factor columns",
                expected: dims[n],
                found: u.ncols(),
            });
        }
        let j = u.nrows();
        if j == 0 {
            return Err(Error::InvalidShape("factor with zero rows".into()));
        }
        let left: usize = dims[..n].iter().product();
        let right: usize = dims[n + 1..].iter().product();
        let in_n = dims[n];
        let shape = self.shape.with_mode(n, j)?;
        let mut out = vec![0.0; shape.len()];
        if left == 1 {
            let x = MatRef::from_column_major_slice(&self.data, in_n, right);
            let dst = MatMut::from_column_major_slice_mut(&mut out, j, right);
            matmul(dst, Accum::Replace, u, x, 1.0, Par::Seq);
        } else {
            let in_block = left * in_n;
            let out_block = left * j;
            for r in 0..right {
                let x = MatRef::from_column_major_slice(
                    &self.data[r * in_block..(r + 1) * in_block],
                    left,
                    in_n,
                );
                let dst = MatMut::from_column_major_slice_mut(
                    &mut out[r * out_block..(r + 1) * out_block],
                    left,
                    j,
                );
                matmul(dst, Accum::Replace, x, u.transpose(), 1.0, Par::Seq);
            }
        }
        Ok(Self { shape, data: out })
    }

    /// Applies `x_n U_n` for every `(n, U_n)` pair in order.
    pub fn multi_mode_product<'a>(
        &self,
        factors: impl IntoIterator<Item = (usize, MatRef<'a, f64>)>,
    ) -> Result<Self> {
        let mut acc = self.clone();
        for (n, u) in factors {
            acc = acc.n_mode_product(u, n)?;
        }
        Ok(acc)
    }
}

/// Walks a tensor of shape `shape` in the linear order of its permutation
/// by `perm`, calling `f(position in permuted order, offset in original)`.
fn walk_permuted(shape: &Shape, perm: &[usize], mut f: impl FnMut(usize, usize)) {
    let dims = shape.dims();
    let strides = shape.strides();
    let pdims: Vec<usize> = perm.iter().map(|&m| dims[m]).collect();
    let pstrides: Vec<usize> = perm.iter().map(|&m| strides[m]).collect();
    let (d0, s0) = (pdims[0], pstrides[0]);
    let outer = shape.len() / d0;
    let mut idx = vec![0usize; perm.len()];
    let mut offset = 0usize;
    let mut pos = 0usize;
    for _ in 0..outer {
        for i in 0..d0 {
            f(pos, offset + i * s0);
            pos += 1;
        }
        for k in 1..perm.len() {
            idx[k] += 1;
            offset += pstrides[k];
            if idx[k] < pdims[k] {
                break;
            }
            offset -= pstrides[k] * pdims[k];
            idx[k] = 0;
        }
    }
}

fn check_shapes(a: &Shape, b: &Shape) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            expected: a.dims().to_vec(),
            found: b.dims().to_vec(),
        });
    }
    Ok(())
}

/// Binary observation pattern, one bit per entry in the canonical order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskTensor {
    shape: Shape,
    bits: Vec<bool>,
}

impl MaskTensor {
    pub fn new(shape: Shape, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != shape.len() {
            return Err(Error::DimensionMismatch {
                context: "mask length",
                expected: shape.len(),
                found: bits.len(),
            });
        }
        Ok(Self { shape, bits })
    }

    pub fn full(shape: Shape, observed: bool) -> Self {
        let bits = vec![observed; shape.len()];
        Self { shape, bits }
    }

    /// Mask from the observed set given as linear indices.
    pub fn from_indices(shape: Shape, observed: &[usize]) -> Result<Self> {
        let mut bits = vec![false; shape.len()];
        for &i in observed {
            *bits.get_mut(i).ok_or_else(|| {
                Error::InvalidParameter(format!("observed index {i} out of range"))
            })? = true;
        }
        Ok(Self { shape, bits })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_observed(&self, linear: usize) -> bool {
        self.bits[linear]
    }

    pub fn observed_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn observation_ratio(&self) -> f64 {
        self.observed_count() as f64 / self.len() as f64
    }

    /// The mask set as sorted linear indices.
    pub fn observed_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    /// The mask as a 0/1 real tensor.
    pub fn to_dense(&self) -> DenseTensor {
        DenseTensor {
            shape: self.shape.clone(),
            data: self
                .bits
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn is_all(&self, observed: bool) -> bool {
        self.bits.iter().all(|&b| b == observed)
    }
}

/// Spectral summaries of a matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixNorms {
    /// Non-increasing.
    pub singular_values: Vec<f64>,
    pub spectral: f64,
    pub nuclear: f64,
    pub frobenius: f64,
}

pub fn matrix_norms(m: MatRef<'_, f64>) -> Result<MatrixNorms> {
    let singular_values = crate::decomposition::singular_values(m)?;
    Ok(MatrixNorms {
        spectral: singular_values.first().copied().unwrap_or(0.0),
        nuclear: singular_values.iter().sum(),
        frobenius: singular_values.iter().map(|s| s * s).sum::<f64>().sqrt(),
        singular_values,
    })
}

/// Column-major copy of a matrix into a flat vector.
pub fn matrix_to_vec(m: MatRef<'_, f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.nrows() * m.ncols());
    for j in 0..m.ncols() {
        v.extend((0..m.nrows()).map(|i| m[(i, j)]));
    }
    v
}
