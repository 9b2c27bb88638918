//! Dense complex kernel over explicitly labelled tensor factorisations.
//!
//! Every matrix carries a [`LabeledSpace`]: an ordered list of `(label, dim)`
//! factors. Flat indices are row-major in factor order, so the first factor
//! is the most significant digit, which is the usual Kronecker convention.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<Complex64>;

/// Relative Hermiticity tolerance applied when a matrix is handed in from outside.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Relative tolerance of the PSD predicate.
pub const PSD_TOL: f64 = 1e-9;

/// Opaque factor label.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(String);

impl Label {
    pub fn new(s: impl Into<String>) -> Self {
        Label(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label(s.to_owned())
    }
}

impl From<String> for Label {
    fn from(s: String) -> Self {
        Label(s)
    }
}

impl From<&String> for Label {
    fn from(s: &String) -> Self {
        Label(s.clone())
    }
}

impl From<&Label> for Label {
    fn from(l: &Label) -> Self {
        l.clone()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct LabeledSpace {
    factors: Vec<(Label, usize)>,
}

impl LabeledSpace {
    pub fn new<L: Into<Label>>(factors: impl IntoIterator<Item = (L, usize)>) -> Result<Self> {
        let factors: Vec<(Label, usize)> = factors.into_iter().map(|(l, d)| (l.into(), d)).collect();
        let mut seen = BTreeSet::new();
        for (l, d) in &factors {
            if *d == 0 {
                return Err(Error::DimMismatch { expected: 1, got: 0 });
            }
            if !seen.insert(l.clone()) {
                return Err(Error::LabelCollision(l.to_string()));
            }
        }
        Ok(LabeledSpace { factors })
    }

    /// The trivial space with no factors (total dimension 1).
    pub fn scalar() -> Self {
        LabeledSpace::default()
    }

    pub fn factors(&self) -> &[(Label, usize)] {
        &self.factors
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.factors.iter().map(|(l, _)| l)
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|(_, d)| *d).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.factors.iter().map(|(_, d)| *d).product()
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn position(&self, label: &Label) -> Option<usize> {
        self.factors.iter().position(|(l, _)| l == label)
    }

    pub fn dim_of(&self, label: &Label) -> Option<usize> {
        self.position(label).map(|p| self.factors[p].1)
    }

    pub fn contains(&self, label: &Label) -> bool {
        self.position(label).is_some()
    }

    /// Concatenation of the factor lists; labels must stay distinct.
    pub fn concat(&self, other: &LabeledSpace) -> Result<LabeledSpace> {
        LabeledSpace::new(self.factors.iter().chain(other.factors.iter()).cloned())
    }
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// Hermitian operator on a labelled space.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseHermitian {
    space: LabeledSpace,
    mat: CMatrix,
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

fn symmetrize(m: CMatrix) -> CMatrix {
    let adj = m.adjoint();
    (m + adj).unscale(2.0)
}

impl DenseHermitian {
    /// Checks shape and Hermiticity, then symmetrises.
    pub fn new(space: LabeledSpace, mat: CMatrix) -> Result<Self> {
        let n = space.total_dim();
        if mat.nrows() != n || mat.ncols() != n {
            return Err(Error::DimMismatch { expected: n, got: mat.nrows().max(mat.ncols()) });
        }
        let dev = hermitian_deviation(&mat);
        if dev > HERMITIAN_TOL * (1.0 + max_abs(&mat)) {
            return Err(Error::NotHermitian { deviation: dev });
        }
        Ok(DenseHermitian { space, mat: symmetrize(mat) })
    }

    /// For results of operations that preserve Hermiticity analytically;
    /// only roundoff is removed.
    pub(crate) fn from_raw(space: LabeledSpace, mat: CMatrix) -> Self {
        debug_assert_eq!(mat.nrows(), space.total_dim());
        DenseHermitian { space, mat: symmetrize(mat) }
    }

    pub fn identity(space: LabeledSpace) -> Self {
        let n = space.total_dim();
        DenseHermitian { space, mat: CMatrix::identity(n, n) }
    }

    pub fn zeros(space: LabeledSpace) -> Self {
        let n = space.total_dim();
        DenseHermitian { space, mat: CMatrix::zeros(n, n) }
    }

    pub fn scalar(x: f64) -> Self {
        DenseHermitian { space: LabeledSpace::scalar(), mat: CMatrix::from_element(1, 1, C64::new(x, 0.0)) }
    }

    /// `|v⟩⟨v|` (not normalised).
    pub fn projector(space: LabeledSpace, v: &[C64]) -> Result<Self> {
        let n = space.total_dim();
        if v.len() != n {
            return Err(Error::DimMismatch { expected: n, got: v.len() });
        }
        let mat = CMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj());
        Ok(DenseHermitian { space, mat })
    }

    pub fn space(&self) -> &LabeledSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.mat)
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    /// Value of a 1×1 operator, with its imaginary residue.
    pub fn scalar_value(&self) -> (f64, f64) {
        let z = self.mat.trace();
        (z.re, z.im)
    }

    pub fn scale(&self, k: f64) -> Self {
        DenseHermitian { space: self.space.clone(), mat: self.mat.scale(k) }
    }

    pub fn add(&self, other: &DenseHermitian) -> Result<Self> {
        self.check_same_space(other)?;
        Ok(DenseHermitian { space: self.space.clone(), mat: &self.mat + &other.mat })
    }

    pub fn sub(&self, other: &DenseHermitian) -> Result<Self> {
        self.check_same_space(other)?;
        Ok(DenseHermitian { space: self.space.clone(), mat: &self.mat - &other.mat })
    }

    fn check_same_space(&self, other: &DenseHermitian) -> Result<()> {
        if self.space.dims() != other.space.dims() {
            return Err(Error::DimMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(())
    }

    /// Hilbert–Schmidt inner product `Tr(self · other)`; real for Hermitian pairs.
    pub fn hs_inner(&self, other: &DenseHermitian) -> f64 {
        self.mat.iter().zip(other.mat.transpose().iter()).map(|(a, b)| (a * b).re).sum()
    }

    /// Renames factors; labels not in `map` are kept.
    pub fn relabel(&self, map: &HashMap<Label, Label>) -> Result<Self> {
        let space = LabeledSpace::new(
            self.space.factors.iter().map(|(l, d)| (map.get(l).cloned().unwrap_or_else(|| l.clone()), *d)),
        )?;
        Ok(DenseHermitian { space, mat: self.mat.clone() })
    }

    /// Replaces the space wholesale; dims must agree factor by factor.
    pub fn with_space(&self, space: LabeledSpace) -> Result<Self> {
        if space.dims() != self.space.dims() {
            return Err(Error::DimMismatch { expected: self.dim(), got: space.total_dim() });
        }
        Ok(DenseHermitian { space, mat: self.mat.clone() })
    }

    pub fn max_deviation(&self, other: &DenseHermitian) -> f64 {
        if self.mat.shape() != other.mat.shape() {
            return f64::INFINITY;
        }
        max_abs(&(&self.mat - &other.mat))
    }
}

pub fn kron(a: &DenseHermitian, b: &DenseHermitian) -> Result<DenseHermitian> {
    let space = a.space.concat(&b.space)?;
    Ok(DenseHermitian { space, mat: a.mat.kronecker(&b.mat) })
}

/// Index map for a reordering of factors: `map[new_flat] = old_flat`.
fn permutation_map(dims: &[usize], order: &[usize]) -> Vec<usize> {
    let old_strides = strides(dims);
    let new_dims: Vec<usize> = order.iter().map(|&p| dims[p]).collect();
    let total: usize = dims.iter().product();
    let mut map = Vec::with_capacity(total);
    let mut digits = vec![0usize; new_dims.len()];
    for _ in 0..total {
        map.push(digits.iter().zip(order).map(|(d, &p)| d * old_strides[p]).sum());
        for k in (0..digits.len()).rev() {
            digits[k] += 1;
            if digits[k] < new_dims[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    map
}

/// Reorders a general (not necessarily Hermitian) matrix whose rows and
/// columns are both indexed by `dims`.
pub(crate) fn permute_matrix(m: &CMatrix, dims: &[usize], order: &[usize]) -> CMatrix {
    let map = permutation_map(dims, order);
    let n = map.len();
    CMatrix::from_fn(n, n, |i, j| m[(map[i], map[j])])
}

fn positions(space: &LabeledSpace, labels: &[Label]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|l| space.position(l).ok_or_else(|| Error::UnknownLabel(l.to_string())))
        .collect()
}

pub fn permute_factors(m: &DenseHermitian, new_order: &[Label]) -> Result<DenseHermitian> {
    if new_order.len() != m.space.len() {
        return Err(Error::NotAPermutation);
    }
    let order = positions(&m.space, new_order).map_err(|_| Error::NotAPermutation)?;
    let distinct: BTreeSet<_> = order.iter().collect();
    if distinct.len() != order.len() {
        return Err(Error::NotAPermutation);
    }
    let space = LabeledSpace { factors: order.iter().map(|&p| m.space.factors[p].clone()).collect() };
    Ok(DenseHermitian { space, mat: permute_matrix(&m.mat, &m.space.dims(), &order) })
}

/// Traces out `labels`; tracing everything leaves a 1×1 matrix.
pub fn partial_trace(m: &DenseHermitian, labels: &[Label]) -> Result<DenseHermitian> {
    let traced = positions(&m.space, labels)?;
    let traced: BTreeSet<usize> = traced.into_iter().collect();
    let kept: Vec<usize> = (0..m.space.len()).filter(|p| !traced.contains(p)).collect();
    let order: Vec<usize> = kept.iter().chain(traced.iter()).copied().collect();
    let dims = m.space.dims();
    let permuted = permute_matrix(&m.mat, &dims, &order);
    let dk: usize = kept.iter().map(|&p| dims[p]).product();
    let dt: usize = traced.iter().map(|&p| dims[p]).product();
    let mat = CMatrix::from_fn(dk, dk, |i, j| (0..dt).map(|t| permuted[(i * dt + t, j * dt + t)]).sum());
    let space = LabeledSpace { factors: kept.iter().map(|&p| m.space.factors[p].clone()).collect() };
    Ok(DenseHermitian { space, mat })
}

/// Transposes the factors in `labels`. A label listed in `bases` is
/// transposed relative to the orthonormal columns of its basis matrix;
/// others use the computational basis.
pub fn partial_transpose(m: &DenseHermitian, labels: &[Label], bases: &[(Label, CMatrix)]) -> Result<DenseHermitian> {
    let pos = positions(&m.space, labels)?;
    let mut change: Option<CMatrix> = None;
    if !bases.is_empty() {
        let mut w = CMatrix::identity(1, 1);
        for (l, d) in &m.space.factors {
            let factor = match bases.iter().find(|(bl, _)| bl == l) {
                Some((_, u)) if labels.contains(l) => {
                    if u.nrows() != *d || u.ncols() != *d {
                        return Err(Error::BasisDimensionMismatch { label: l.to_string(), expected: *d, got: u.nrows() });
                    }
                    if max_abs(&(u.adjoint() * u - CMatrix::identity(*d, *d))) > 1e-10 {
                        return Err(Error::NotOrthonormal);
                    }
                    u.clone()
                }
                Some(_) => CMatrix::identity(*d, *d),
                None => CMatrix::identity(*d, *d),
            };
            w = w.kronecker(&factor);
        }
        change = Some(w);
    }
    let source = match &change {
        Some(w) => w.adjoint() * &m.mat * w,
        None => m.mat.clone(),
    };
    let transposed = transpose_positions(&source, &m.space.dims(), &pos);
    let mat = match &change {
        Some(w) => w * transposed * w.adjoint(),
        None => transposed,
    };
    Ok(DenseHermitian::from_raw(m.space.clone(), mat))
}

/// Partial transpose of a general matrix in the computational basis.
pub(crate) fn transpose_positions(m: &CMatrix, dims: &[usize], pos: &[usize]) -> CMatrix {
    let st = strides(dims);
    let n = m.nrows();
    // part[x] = contribution of the transposed factors to flat index x
    let part: Vec<usize> = (0..n)
        .map(|x| pos.iter().map(|&p| ((x / st[p]) % dims[p]) * st[p]).sum())
        .collect();
    CMatrix::from_fn(n, n, |r, c| {
        let r2 = r - part[r] + part[c];
        let c2 = c - part[c] + part[r];
        m[(r2, c2)]
    })
}

/// Eigenvalues (ascending) and eigenvectors as columns.
pub fn eigh(m: &DenseHermitian) -> Result<(Vec<f64>, CMatrix)> {
    eigh_matrix(&m.mat)
}

pub(crate) fn eigh_matrix(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((vec![], CMatrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(m.clone(), 1e-15, 10_000).ok_or(Error::ConvergenceFailure)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    Ok((values, vectors))
}

pub fn min_eigenvalue(m: &DenseHermitian) -> Result<f64> {
    let (values, _) = eigh(m)?;
    Ok(values.first().copied().unwrap_or(0.0))
}

pub fn max_eigenvalue(m: &DenseHermitian) -> Result<f64> {
    let (values, _) = eigh(m)?;
    Ok(values.last().copied().unwrap_or(0.0))
}

/// Absolute tolerance of the PSD predicate for `m`.
pub fn psd_tolerance(m: &DenseHermitian) -> f64 {
    PSD_TOL * (1.0 + m.max_abs())
}

pub fn is_psd(m: &DenseHermitian) -> Result<bool> {
    Ok(min_eigenvalue(m)? >= -psd_tolerance(m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn space(f: &[(&str, usize)]) -> LabeledSpace {
        LabeledSpace::new(f.iter().map(|(l, d)| (*l, *d))).unwrap()
    }

    fn herm(f: &[(&str, usize)], m: CMatrix) -> DenseHermitian {
        DenseHermitian::new(space(f), m).unwrap()
    }

    fn sigma_x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    fn phi_plus() -> DenseHermitian {
        let s = 0.5f64.sqrt();
        DenseHermitian::projector(space(&[("a", 2), ("b", 2)]), &[c(s, 0.), c(0., 0.), c(0., 0.), c(s, 0.)]).unwrap()
    }

    #[test]
    fn kron_identities() {
        let a = DenseHermitian::identity(space(&[("a", 2)]));
        let b = DenseHermitian::identity(space(&[("b", 3)]));
        let k = kron(&a, &b).unwrap();
        assert_eq!(k.matrix(), &CMatrix::identity(6, 6));
        assert_eq!(k.space().dims(), vec![2, 3]);
    }

    #[test]
    fn kron_sigma_x_block_structure() {
        let x = herm(&[("a", 2)], sigma_x());
        let i = DenseHermitian::identity(space(&[("b", 2)]));
        let k = kron(&x, &i).unwrap();
        let mut expected = CMatrix::zeros(4, 4);
        expected[(0, 2)] = c(1., 0.);
        expected[(1, 3)] = c(1., 0.);
        expected[(2, 0)] = c(1., 0.);
        expected[(3, 1)] = c(1., 0.);
        assert_eq!(k.matrix(), &expected);
    }

    #[test]
    fn kron_rejects_label_collision() {
        let a = DenseHermitian::identity(space(&[("a", 2)]));
        assert!(matches!(kron(&a, &a), Err(Error::LabelCollision(_))));
    }

    #[test]
    fn non_hermitian_is_rejected() {
        let m = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]);
        assert!(matches!(DenseHermitian::new(space(&[("a", 2)]), m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn partial_trace_of_bell_state_is_maximally_mixed() {
        let r = partial_trace(&phi_plus(), &["b".into()]).unwrap();
        let expected = CMatrix::identity(2, 2).scale(0.5);
        assert!(max_abs(&(r.matrix() - expected)) < 1e-15);
        assert_eq!(r.space().labels().map(|l| l.as_str()).collect::<Vec<_>>(), vec!["a"]);
    }

    #[test]
    fn partial_trace_of_identity_over_qutrit() {
        let m = DenseHermitian::identity(space(&[("a", 2), ("b", 3)]));
        let r = partial_trace(&m, &["b".into()]).unwrap();
        assert_eq!(r.matrix(), &CMatrix::identity(2, 2).scale(3.0));
    }

    #[test]
    fn partial_trace_everything_is_scalar() {
        let r = partial_trace(&phi_plus(), &["a".into(), "b".into()]).unwrap();
        assert_eq!(r.dim(), 1);
        assert!((r.scalar_value().0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn partial_trace_unknown_label() {
        assert!(matches!(partial_trace(&phi_plus(), &["z".into()]), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn partial_transpose_of_identity_and_involution() {
        let id = DenseHermitian::identity(space(&[("a", 2), ("b", 3)]));
        assert_eq!(partial_transpose(&id, &["b".into()], &[]).unwrap(), id);
        let p = phi_plus();
        let once = partial_transpose(&p, &["a".into()], &[]).unwrap();
        let twice = partial_transpose(&once, &["a".into()], &[]).unwrap();
        assert!(twice.max_deviation(&p) < 1e-14);
    }

    #[test]
    fn partial_transpose_of_bell_state_has_negative_half() {
        let pt = partial_transpose(&phi_plus(), &["b".into()], &[]).unwrap();
        // Φ⁺^{T_b} = SWAP/2, eigenvalues {1/2, 1/2, 1/2, -1/2}
        assert!((min_eigenvalue(&pt).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn partial_transpose_basis_dimension_checked() {
        let u = CMatrix::identity(3, 3);
        let r = partial_transpose(&phi_plus(), &["a".into()], &[("a".into(), u)]);
        assert!(matches!(r, Err(Error::BasisDimensionMismatch { .. })));
    }

    #[test]
    fn partial_transpose_in_other_basis_keeps_spectrum_of_bell_state() {
        let s = 0.5f64.sqrt();
        let hadamard = CMatrix::from_row_slice(2, 2, &[c(s, 0.), c(s, 0.), c(s, 0.), c(-s, 0.)]);
        let pt = partial_transpose(&phi_plus(), &["b".into()], &[("b".into(), hadamard)]).unwrap();
        assert!((min_eigenvalue(&pt).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn min_eigenvalue_simple_cases() {
        assert!((min_eigenvalue(&DenseHermitian::identity(space(&[("a", 4)]))).unwrap() - 1.0).abs() < 1e-14);
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1., 0.), c(-2., 0.)]));
        assert!((min_eigenvalue(&herm(&[("a", 2)], d)).unwrap() + 2.0).abs() < 1e-14);
    }

    #[test]
    fn permute_swaps_kron_order() {
        let x = herm(&[("a", 2)], sigma_x());
        let y = DenseHermitian::identity(space(&[("b", 3)]));
        let ab = kron(&x, &y).unwrap();
        let ba = kron(&y, &x).unwrap();
        let p = permute_factors(&ab, &["b".into(), "a".into()]).unwrap();
        assert_eq!(p, ba);
        assert_eq!(permute_factors(&ab, &["a".into(), "b".into()]).unwrap(), ab);
        assert!(matches!(permute_factors(&ab, &["a".into(), "a".into()]), Err(Error::NotAPermutation)));
        assert!(matches!(permute_factors(&ab, &["a".into()]), Err(Error::NotAPermutation)));
    }
}
