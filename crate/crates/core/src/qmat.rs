//! Dense complex linear algebra and multipartite bookkeeping.
//!
//! Composite bases are row-major over the tensor factors with factor 0 the
//! slowest-varying digit. Every Hermitian eigendecomposition symmetrizes its
//! input first.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-9;
pub const RANK_TOL: f64 = 1e-9;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

// ---------------------------------------------------------------------------
// Matrix-level helpers. These work on raw matrices (Hermitian or not) so the
// SDP builders can push matrix units through the same maps.
// ---------------------------------------------------------------------------

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Largest entry modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermitian_deviation(m: &CMat) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigendecomposition of the Hermitian part of `m`; eigenvalues ascending.
pub fn eigh(m: &CMat) -> (DVector<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

pub fn eigvalsh(m: &CMat) -> DVector<f64> {
    eigh(m).0
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    let v = eigvalsh(m);
    if v.is_empty() {
        0.0
    } else {
        v[0]
    }
}

pub fn max_eigenvalue(m: &CMat) -> f64 {
    let v = eigvalsh(m);
    if v.is_empty() {
        0.0
    } else {
        v[v.len() - 1]
    }
}

/// Applies `f` to the spectrum of the Hermitian part of `m`.
pub fn hermitian_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(m);
    let n = vals.len();
    let mut scaled = vecs.clone();
    for j in 0..n {
        let fj = cr(f(vals[j]));
        for i in 0..n {
            scaled[(i, j)] *= fj;
        }
    }
    scaled * vecs.adjoint()
}

pub fn psd_sqrt(m: &CMat) -> CMat {
    hermitian_fn(m, |x| x.max(0.0).sqrt())
}

pub fn trace_re(m: &CMat) -> f64 {
    m.trace().re
}

/// `Re Tr(a b)`.
pub fn inner_re(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            let x = a[(i, k)];
            let y = b[(k, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

pub fn singular_values(m: &CMat) -> DVector<f64> {
    m.clone().singular_values()
}

pub fn product(dims: &[usize]) -> usize {
    dims.iter().product()
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// Per-factor digits of every composite index.
fn digit_table(dims: &[usize]) -> Vec<Vec<usize>> {
    let total = product(dims);
    let st = strides(dims);
    (0..total)
        .map(|idx| dims.iter().zip(&st).map(|(&d, &s)| (idx / s) % d).collect())
        .collect()
}

fn check_factors(indices: &[usize], n: usize) -> Result<()> {
    for &i in indices {
        if i >= n {
            return Err(Error::FactorOutOfRange { index: i, factors: n });
        }
    }
    Ok(())
}

fn check_side(dims: &[usize], m: &CMat) -> Result<()> {
    let side = product(dims);
    if m.nrows() != side || m.ncols() != side || dims.contains(&0) {
        return Err(Error::DimensionMismatch { dims: dims.to_vec(), side: m.nrows() });
    }
    Ok(())
}

/// Partial trace keeping the listed factors (in ascending order).
pub fn partial_trace_matrix(m: &CMat, dims: &[usize], keep: &[usize]) -> Result<(CMat, Vec<usize>)> {
    check_side(dims, m)?;
    check_factors(keep, dims.len())?;
    let keep: BTreeSet<usize> = keep.iter().copied().collect();
    let kept_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let ks = strides(&kept_dims);
    let ts = strides(&traced_dims);
    let table = digit_table(dims);
    let mut kidx = Vec::with_capacity(table.len());
    let mut tidx = Vec::with_capacity(table.len());
    for digits in &table {
        kidx.push(keep.iter().zip(&ks).map(|(&k, &s)| digits[k] * s).sum::<usize>());
        tidx.push(traced.iter().zip(&ts).map(|(&k, &s)| digits[k] * s).sum::<usize>());
    }
    let out_side = product(&kept_dims);
    let mut out = CMat::zeros(out_side, out_side);
    for r in 0..m.nrows() {
        for col in 0..m.ncols() {
            if tidx[r] == tidx[col] {
                out[(kidx[r], kidx[col])] += m[(r, col)];
            }
        }
    }
    Ok((out, kept_dims))
}

/// Transposes the listed factors.
pub fn partial_transpose_matrix(m: &CMat, dims: &[usize], flip: &[usize]) -> Result<CMat> {
    check_side(dims, m)?;
    check_factors(flip, dims.len())?;
    let st = strides(dims);
    let table = digit_table(dims);
    let n = m.nrows();
    let mut out = CMat::zeros(n, n);
    for r in 0..n {
        for col in 0..n {
            let mut r2 = r;
            let mut c2 = col;
            for &k in flip {
                let (dr, dc) = (table[r][k], table[col][k]);
                if dr != dc {
                    r2 = r2 - dr * st[k] + dc * st[k];
                    c2 = c2 - dc * st[k] + dr * st[k];
                }
            }
            out[(r2, c2)] = m[(r, col)];
        }
    }
    Ok(out)
}

/// Elementwise dephasing mask: zeroes entries whose basis strings differ on
/// any classical factor.
pub fn dephase_matrix(m: &CMat, dims: &[usize], classical: &[usize]) -> Result<CMat> {
    check_side(dims, m)?;
    check_factors(classical, dims.len())?;
    let keys = classical_keys(dims, classical);
    let mut out = m.clone();
    for r in 0..m.nrows() {
        for col in 0..m.ncols() {
            if keys[r] != keys[col] {
                out[(r, col)] = Complex64::new(0.0, 0.0);
            }
        }
    }
    Ok(out)
}

/// Index of the classical sub-string of every composite index.
pub(crate) fn classical_keys(dims: &[usize], classical: &[usize]) -> Vec<usize> {
    let mut sorted: Vec<usize> = classical.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let cd: Vec<usize> = sorted.iter().map(|&k| dims[k]).collect();
    let cs = strides(&cd);
    digit_table(dims)
        .iter()
        .map(|digits| sorted.iter().zip(&cs).map(|(&k, &s)| digits[k] * s).sum())
        .collect()
}

/// Splits the composite index set into blocks sharing a classical string.
/// Returns, for each classical string in lexicographic order, the composite
/// indices (ascending) of its block.
pub(crate) fn classical_blocks(dims: &[usize], classical: &[usize]) -> Vec<Vec<usize>> {
    let keys = classical_keys(dims, classical);
    let mut set: BTreeSet<usize> = BTreeSet::new();
    for &k in classical {
        set.insert(k);
    }
    let n_blocks: usize = set.iter().map(|&k| dims[k]).product();
    let mut blocks = vec![Vec::new(); n_blocks];
    for (idx, &key) in keys.iter().enumerate() {
        blocks[key].push(idx);
    }
    blocks
}

/// New factor `k` is old factor `perm[k]`.
pub fn permute_matrix(m: &CMat, dims: &[usize], perm: &[usize]) -> Result<(CMat, Vec<usize>)> {
    check_side(dims, m)?;
    check_permutation(perm, dims.len())?;
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let ns = strides(&new_dims);
    let map: Vec<usize> = digit_table(dims)
        .iter()
        .map(|digits| perm.iter().zip(&ns).map(|(&p, &s)| digits[p] * s).sum())
        .collect();
    let n = m.nrows();
    let mut out = CMat::zeros(n, n);
    for r in 0..n {
        for col in 0..n {
            out[(map[r], map[col])] = m[(r, col)];
        }
    }
    Ok((out, new_dims))
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::InvalidPermutation(perm.to_vec()));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidPermutation(perm.to_vec()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Embeds `k` acting on the listed factors as `k ⊗ 𝟙` and returns the
/// operator on the full space along with the permutation used. Only square
/// `k` are handled here.
fn embed_square(k: &CMat, dims: &[usize], acting_on: &[usize]) -> Result<CMat> {
    let n = dims.len();
    let mut perm: Vec<usize> = acting_on.to_vec();
    perm.extend((0..n).filter(|i| !acting_on.contains(i)));
    let rest: usize = perm[acting_on.len()..].iter().map(|&p| dims[p]).product();
    let full = k.kronecker(&identity(rest));
    let permuted_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let mut inv = vec![0; n];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    Ok(permute_matrix(&full, &permuted_dims, &inv)?.0)
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// A Hermitian matrix tagged with its tensor-factor dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct MultipartiteOperator {
    dims: Vec<usize>,
    matrix: CMat,
    hermitian_tol: f64,
}

impl MultipartiteOperator {
    pub fn new(dims: Vec<usize>, matrix: CMat) -> Result<Self> {
        Self::with_tolerance(dims, matrix, HERMITIAN_TOL)
    }

    pub fn with_tolerance(dims: Vec<usize>, matrix: CMat, hermitian_tol: f64) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument("dims must be nonempty".into()));
        }
        check_side(&dims, &matrix)?;
        let deviation = hermitian_deviation(&matrix);
        if deviation > hermitian_tol {
            return Err(Error::NotHermitian { deviation, tol: hermitian_tol });
        }
        Ok(Self { dims, matrix, hermitian_tol })
    }

    /// Skips the Hermiticity check; callers guarantee it by construction.
    pub(crate) fn from_parts(dims: Vec<usize>, matrix: CMat) -> Self {
        debug_assert_eq!(product(&dims), matrix.nrows());
        Self { dims, matrix, hermitian_tol: HERMITIAN_TOL }
    }

    pub fn identity(dims: &[usize]) -> Self {
        Self::from_parts(dims.to_vec(), identity(product(dims)))
    }

    /// `|ψ⟩⟨ψ|` for an unnormalized amplitude vector.
    pub fn projector(dims: &[usize], amplitudes: &[Complex64]) -> Result<Self> {
        let v = DVector::from_column_slice(amplitudes);
        if v.len() != product(dims) {
            return Err(Error::Shape(format!("vector of length {} for dims {dims:?}", v.len())));
        }
        let m = &v * v.adjoint();
        Ok(Self::from_parts(dims.to_vec(), m))
    }

    pub fn diagonal(dims: &[usize], diag: &[f64]) -> Result<Self> {
        if diag.len() != product(dims) {
            return Err(Error::Shape(format!("{} diagonal entries for dims {dims:?}", diag.len())));
        }
        let m = CMat::from_diagonal(&DVector::from_iterator(diag.len(), diag.iter().map(|&x| cr(x))));
        Ok(Self::from_parts(dims.to_vec(), m))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn side(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn factors(&self) -> usize {
        self.dims.len()
    }

    pub fn hermitian_tol(&self) -> f64 {
        self.hermitian_tol
    }

    pub fn trace(&self) -> f64 {
        trace_re(&self.matrix)
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        eigvalsh(&self.matrix)
    }

    pub fn eigh(&self) -> (DVector<f64>, CMat) {
        eigh(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        max_eigenvalue(&self.matrix)
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_parts(self.dims.clone(), self.matrix.scale(s))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self::from_parts(self.dims.clone(), &self.matrix + &other.matrix))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self::from_parts(self.dims.clone(), &self.matrix - &other.matrix))
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!("dims {:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(())
    }

    /// Kronecker product; dims concatenate.
    pub fn tensor(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self::from_parts(dims, self.matrix.kronecker(&other.matrix))
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::InvalidArgument("partial trace must keep at least one factor".into()));
        }
        let (m, dims) = partial_trace_matrix(&self.matrix, &self.dims, keep)?;
        Ok(Self::from_parts(dims, m))
    }

    pub fn partial_transpose(&self, flip: &[usize]) -> Result<Self> {
        let m = partial_transpose_matrix(&self.matrix, &self.dims, flip)?;
        Ok(Self::from_parts(self.dims.clone(), m))
    }

    pub fn dephase(&self, pattern: &DephasingPattern) -> Result<Self> {
        pattern.check(self.factors())?;
        let classical: Vec<usize> = pattern.indices().collect();
        let m = dephase_matrix(&self.matrix, &self.dims, &classical)?;
        Ok(Self::from_parts(self.dims.clone(), m))
    }

    /// Projector onto the span of eigenvectors with eigenvalue above `rank_tol`.
    pub fn support_projector(&self, rank_tol: f64) -> Result<Self> {
        let (vals, vecs) = self.eigh();
        if !vals.is_empty() && vals[0] < -PSD_TOL.max(rank_tol) {
            return Err(Error::NotPsd { min_eigenvalue: vals[0] });
        }
        let n = vals.len();
        let mut p = CMat::zeros(n, n);
        for j in 0..n {
            if vals[j] > rank_tol {
                let v = vecs.column(j);
                p += v * v.adjoint();
            }
        }
        Ok(Self::from_parts(self.dims.clone(), p))
    }

    pub fn rank(&self, rank_tol: f64) -> usize {
        self.eigenvalues().iter().filter(|&&v| v > rank_tol).count()
    }

    /// Sum of singular values.
    pub fn trace_norm(&self) -> f64 {
        self.eigenvalues().iter().map(|v| v.abs()).sum()
    }

    pub fn apply_kraus(&self, ch: &KrausChannel, acting_on: &[usize]) -> Result<Self> {
        ch.apply(self, acting_on)
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let (m, dims) = permute_matrix(&self.matrix, &self.dims, perm)?;
        Ok(Self::from_parts(dims, m))
    }

    /// Reorders factors so each group is contiguous (groups in the given
    /// order) and merges every group into a single factor.
    pub fn regroup(&self, groups: &[Vec<usize>]) -> Result<Self> {
        let perm: Vec<usize> = groups.iter().flatten().copied().collect();
        let permuted = self.permute(&perm)?;
        let dims = groups.iter().map(|g| g.iter().map(|&k| self.dims[k]).product()).collect();
        Ok(Self::from_parts(dims, permuted.matrix))
    }

    /// Same matrix under a different (compatible) factorization.
    pub fn with_dims(&self, dims: Vec<usize>) -> Result<Self> {
        check_side(&dims, &self.matrix)?;
        Ok(Self::from_parts(dims, self.matrix.clone()))
    }

    /// Conjugation `K ρ K†` by an operator on the full space.
    pub fn conjugate(&self, k: &CMat) -> Result<Self> {
        if k.ncols() != self.side() || k.nrows() != self.side() {
            return Err(Error::Shape("conjugating operator must be square on the full space".into()));
        }
        Ok(Self::from_parts(self.dims.clone(), hermitian_part(&(k * &self.matrix * k.adjoint()))))
    }
}

impl fmt::Display for MultipartiteOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dims {:?}", self.dims)?;
        for i in 0..self.side() {
            for j in 0..self.side() {
                let z = self.matrix[(i, j)];
                write!(f, " {:+.4}{:+.4}i", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// A density operator: PSD and unit trace within tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    op: MultipartiteOperator,
    psd_tol: f64,
    trace_tol: f64,
}

impl DensityMatrix {
    pub fn new(op: MultipartiteOperator) -> Result<Self> {
        Self::with_tolerances(op, PSD_TOL, TRACE_TOL)
    }

    pub fn with_tolerances(op: MultipartiteOperator, psd_tol: f64, trace_tol: f64) -> Result<Self> {
        let tr = op.trace();
        if (tr - 1.0).abs() > trace_tol {
            return Err(Error::BadTrace { trace: tr, tol: trace_tol });
        }
        let min = op.min_eigenvalue();
        if min < -psd_tol {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        Ok(Self { op, psd_tol, trace_tol })
    }

    pub fn from_matrix(dims: Vec<usize>, m: CMat) -> Result<Self> {
        Self::new(MultipartiteOperator::new(dims, m)?)
    }

    /// Normalizes a PSD operator by its trace.
    pub fn normalized(op: &MultipartiteOperator) -> Result<Self> {
        let tr = op.trace();
        if tr <= 0.0 {
            return Err(Error::BadTrace { trace: tr, tol: 0.0 });
        }
        Self::new(op.scale(1.0 / tr))
    }

    pub fn pure(dims: &[usize], amplitudes: &[Complex64]) -> Result<Self> {
        let norm2: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if norm2 <= 0.0 {
            return Err(Error::InvalidArgument("zero vector".into()));
        }
        let s = 1.0 / norm2.sqrt();
        let scaled: Vec<Complex64> = amplitudes.iter().map(|a| a * s).collect();
        Self::new(MultipartiteOperator::projector(dims, &scaled)?)
    }

    pub fn maximally_mixed(dims: &[usize]) -> Self {
        let d = product(dims) as f64;
        Self::new(MultipartiteOperator::identity(dims).scale(1.0 / d)).expect("valid by construction")
    }

    pub fn basis_state(dims: &[usize], index: usize) -> Result<Self> {
        let n = product(dims);
        if index >= n {
            return Err(Error::InvalidArgument(format!("basis index {index} >= {n}")));
        }
        let mut amps = vec![cr(0.0); n];
        amps[index] = cr(1.0);
        Self::pure(dims, &amps)
    }

    pub(crate) fn from_op_unchecked(op: MultipartiteOperator) -> Self {
        Self { op, psd_tol: PSD_TOL, trace_tol: TRACE_TOL }
    }

    pub fn op(&self) -> &MultipartiteOperator {
        &self.op
    }

    pub fn into_op(self) -> MultipartiteOperator {
        self.op
    }

    pub fn dims(&self) -> &[usize] {
        self.op.dims()
    }

    pub fn matrix(&self) -> &CMat {
        self.op.matrix()
    }

    pub fn side(&self) -> usize {
        self.op.side()
    }

    pub fn factors(&self) -> usize {
        self.op.factors()
    }

    pub fn psd_tol(&self) -> f64 {
        self.psd_tol
    }

    pub fn trace_tol(&self) -> f64 {
        self.trace_tol
    }

    pub fn reduced(&self, keep: &[usize]) -> Result<Self> {
        Ok(Self::from_op_unchecked(self.op.partial_trace(keep)?))
    }

    pub fn dephased(&self, pattern: &DephasingPattern) -> Result<Self> {
        Ok(Self::from_op_unchecked(self.op.dephase(pattern)?))
    }

    pub fn tensor(&self, other: &Self) -> Self {
        Self::from_op_unchecked(self.op.tensor(&other.op))
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        Ok(Self::from_op_unchecked(self.op.permute(perm)?))
    }

    pub fn regroup(&self, groups: &[Vec<usize>]) -> Result<Self> {
        Ok(Self::from_op_unchecked(self.op.regroup(groups)?))
    }

    pub fn with_dims(&self, dims: Vec<usize>) -> Result<Self> {
        Ok(Self::from_op_unchecked(self.op.with_dims(dims)?))
    }

    /// Convex combination; weights must be nonnegative and sum to one.
    pub fn mixture(weights: &[f64], states: &[DensityMatrix]) -> Result<Self> {
        if weights.len() != states.len() || states.is_empty() {
            return Err(Error::InvalidArgument("weights and states must be nonempty and equal length".into()));
        }
        let dims = states[0].dims().to_vec();
        let mut m = CMat::zeros(states[0].side(), states[0].side());
        for (w, s) in weights.iter().zip(states) {
            if s.dims() != dims.as_slice() || *w < 0.0 {
                return Err(Error::InvalidArgument("incompatible mixture component".into()));
            }
            m += s.matrix().scale(*w);
        }
        Self::new(MultipartiteOperator::from_parts(dims, m))
    }

    pub fn purity(&self) -> f64 {
        inner_re(self.matrix(), self.matrix())
    }
}

/// Subset of tensor factors treated as classical.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DephasingPattern {
    classical: BTreeSet<usize>,
}

impl DephasingPattern {
    pub fn new(indices: &[usize], factors: usize) -> Result<Self> {
        let mut classical = BTreeSet::new();
        for &i in indices {
            if i >= factors {
                return Err(Error::FactorOutOfRange { index: i, factors });
            }
            if !classical.insert(i) {
                return Err(Error::InvalidArgument(format!("repeated factor index {i}")));
            }
        }
        Ok(Self { classical })
    }

    /// Every factor classical: the fully incoherent set.
    pub fn full(factors: usize) -> Self {
        Self { classical: (0..factors).collect() }
    }

    pub fn single(index: usize) -> Self {
        Self { classical: std::iter::once(index).collect() }
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.classical.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.indices().collect()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.classical.contains(&i)
    }

    pub fn is_empty(&self) -> bool {
        self.classical.is_empty()
    }

    pub fn len(&self) -> usize {
        self.classical.len()
    }

    pub(crate) fn check(&self, factors: usize) -> Result<()> {
        match self.classical.iter().find(|&&i| i >= factors) {
            Some(&index) => Err(Error::FactorOutOfRange { index, factors }),
            None => Ok(()),
        }
    }

    /// Dimension of the classical register and of the quantum remainder.
    pub fn split_dims(&self, dims: &[usize]) -> (usize, usize) {
        let classical: usize = self.indices().map(|k| dims[k]).product();
        (classical, product(dims) / classical)
    }
}

impl fmt::Display for DephasingPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.indices().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Completely positive trace non-increasing map in Kraus form.
#[derive(Clone, Debug)]
pub struct KrausChannel {
    kraus: Vec<CMat>,
    completeness_tol: f64,
}

impl KrausChannel {
    pub fn new(kraus: Vec<CMat>) -> Result<Self> {
        Self::with_tolerance(kraus, 1e-10)
    }

    pub fn with_tolerance(kraus: Vec<CMat>, completeness_tol: f64) -> Result<Self> {
        let first = kraus.first().ok_or_else(|| Error::InvalidArgument("empty Kraus list".into()))?;
        let (dout, din) = first.shape();
        if kraus.iter().any(|k| k.shape() != (dout, din)) {
            return Err(Error::Shape("Kraus operators must share input/output dimensions".into()));
        }
        let ch = Self { kraus, completeness_tol };
        let top = max_eigenvalue(&ch.completeness_operator());
        if top > 1.0 + completeness_tol {
            return Err(Error::Completeness(top));
        }
        Ok(ch)
    }

    pub fn identity(d: usize) -> Self {
        Self { kraus: vec![identity(d)], completeness_tol: 1e-10 }
    }

    /// Full dephasing `{|i⟩⟨i|}` on a `d`-level system.
    pub fn dephasing(d: usize) -> Self {
        let kraus = (0..d)
            .map(|i| {
                let mut k = CMat::zeros(d, d);
                k[(i, i)] = cr(1.0);
                k
            })
            .collect();
        Self { kraus, completeness_tol: 1e-10 }
    }

    /// Qubit depolarizing channel with error probability `p`.
    pub fn depolarizing_qubit(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument("depolarizing probability outside [0,1]".into()));
        }
        let x = CMat::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)]);
        let y = CMat::from_row_slice(2, 2, &[cr(0.0), c(0.0, -1.0), c(0.0, 1.0), cr(0.0)]);
        let z = CMat::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(-1.0)]);
        let a = (1.0 - 3.0 * p / 4.0).sqrt();
        let b = (p / 4.0).sqrt();
        Self::new(vec![identity(2).scale(a), x.scale(b), y.scale(b), z.scale(b)])
    }

    pub fn kraus(&self) -> &[CMat] {
        &self.kraus
    }

    pub fn input_dim(&self) -> usize {
        self.kraus[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.kraus[0].nrows()
    }

    pub fn completeness_tol(&self) -> f64 {
        self.completeness_tol
    }

    /// `Σ_k K_k† K_k`.
    pub fn completeness_operator(&self) -> CMat {
        let d = self.input_dim();
        self.kraus.iter().fold(CMat::zeros(d, d), |acc, k| acc + k.adjoint() * k)
    }

    pub fn is_trace_preserving(&self) -> bool {
        let diff = self.completeness_operator() - identity(self.input_dim());
        diff.iter().all(|z| z.norm() <= self.completeness_tol.max(1e-12))
    }

    /// At most one nonzero entry per column in every Kraus operator.
    pub fn is_structurally_incoherent(&self, tol: f64) -> bool {
        self.kraus.iter().all(|k| {
            (0..k.ncols()).all(|j| (0..k.nrows()).filter(|&i| k[(i, j)].norm() > tol).count() <= 1)
        })
    }

    /// `Σ_k (K_k ⊗ 𝟙) ρ (K_k ⊗ 𝟙)†` with the channel acting on `acting_on`.
    /// When the output dimension differs, the acting factors are merged into
    /// one output factor placed at the position of the smallest index.
    pub fn apply(&self, rho: &MultipartiteOperator, acting_on: &[usize]) -> Result<MultipartiteOperator> {
        let dims = rho.dims();
        check_factors(acting_on, dims.len())?;
        let mut acting: Vec<usize> = acting_on.to_vec();
        acting.sort_unstable();
        acting.dedup();
        if acting.len() != acting_on.len() || acting.is_empty() {
            return Err(Error::InvalidArgument("acting_on must list distinct factors".into()));
        }
        let din: usize = acting.iter().map(|&k| dims[k]).product();
        if din != self.input_dim() {
            return Err(Error::Shape(format!(
                "channel input dimension {} but factors {acting:?} have dimension {din}",
                self.input_dim()
            )));
        }
        // Bring acting factors to the front (in ascending order), rest after.
        let n = dims.len();
        let mut perm = acting.clone();
        perm.extend((0..n).filter(|i| !acting.contains(i)));
        let front = rho.permute(&perm)?;
        let rest: usize = perm[acting.len()..].iter().map(|&p| dims[p]).product();
        let id_rest = identity(rest);
        let dout = self.output_dim();
        let mut out = CMat::zeros(dout * rest, dout * rest);
        for k in &self.kraus {
            let big = k.kronecker(&id_rest);
            out += &big * front.matrix() * big.adjoint();
        }
        let out = hermitian_part(&out);
        if dout == din {
            let front_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
            let mut inv = vec![0; n];
            for (i, &p) in perm.iter().enumerate() {
                inv[p] = i;
            }
            let (m, d) = permute_matrix(&out, &front_dims, &inv)?;
            return Ok(MultipartiteOperator::from_parts(d, m));
        }
        // Merged output factor goes to the slot of the smallest acting index.
        let others: Vec<usize> = (0..n).filter(|i| !acting.contains(i)).collect();
        let mut front_dims = vec![dout];
        front_dims.extend(others.iter().map(|&k| dims[k]));
        let slot = acting[0];
        let pos = others.iter().filter(|&&k| k < slot).count();
        // Current order: [merged, others...]; target: others with merged at `pos`.
        let mut order: Vec<usize> = (1..front_dims.len()).collect();
        order.insert(pos, 0);
        let (m, d) = permute_matrix(&out, &front_dims, &order)?;
        Ok(MultipartiteOperator::from_parts(d, m))
    }

    /// Embeds a square channel into operators on the full space.
    pub fn embedded_kraus(&self, dims: &[usize], acting_on: &[usize]) -> Result<Vec<CMat>> {
        if self.input_dim() != self.output_dim() {
            return Err(Error::Shape("embedding requires a square channel".into()));
        }
        self.kraus.iter().map(|k| embed_square(k, dims, acting_on)).collect()
    }
}

/// Positive operator-valued measure.
#[derive(Clone, Debug)]
pub struct Povm {
    elements: Vec<MultipartiteOperator>,
}

impl Povm {
    pub fn new(elements: Vec<MultipartiteOperator>, tol: f64) -> Result<Self> {
        let first = elements.first().ok_or_else(|| Error::InvalidPovm("no elements".into()))?;
        let dims = first.dims().to_vec();
        let mut sum = CMat::zeros(first.side(), first.side());
        for (k, e) in elements.iter().enumerate() {
            if e.dims() != dims.as_slice() {
                return Err(Error::InvalidPovm(format!("element {k} has dims {:?}", e.dims())));
            }
            let min = e.min_eigenvalue();
            if min < -tol {
                return Err(Error::InvalidPovm(format!("element {k} has eigenvalue {min:e}")));
            }
            sum += e.matrix();
        }
        let dev = (sum - identity(first.side())).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if dev > tol {
            return Err(Error::InvalidPovm(format!("elements sum to identity only within {dev:e}")));
        }
        Ok(Self { elements })
    }

    /// `n` copies of `𝟙/n`.
    pub fn uniform(dims: &[usize], n: usize) -> Self {
        let e = MultipartiteOperator::identity(dims).scale(1.0 / n as f64);
        Self { elements: vec![e; n] }
    }

    pub fn elements(&self) -> &[MultipartiteOperator] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Largest deviation of `Σ M_k` from the identity, entrywise.
    pub fn completeness_error(&self) -> f64 {
        let n = self.elements[0].side();
        let sum = self.elements.iter().fold(CMat::zeros(n, n), |acc, e| acc + e.matrix());
        (sum - identity(n)).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}
