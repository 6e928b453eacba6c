//! Dense primal-dual interior-point solver for small semidefinite programs
//! over Hermitian block variables.
//!
//! A problem has PSD Hermitian block variables `X_b`, a real-linear objective
//! `Σ_b Re Tr(C_b X_b)`, scalar equalities `Σ_b Re Tr(A_b X_b) = rhs`, and
//! matrix inequalities `Σ_t L_t(X_{b_t}) + F ⪰ 0` where each `L_t` is a
//! Hermiticity-preserving linear map given by its sparse superoperator
//! entries.
//!
//! Internally every matrix inequality receives a slack block and is expanded
//! into one real equality per Hermitian degree of freedom, giving the
//! standard form
//!
//! ```text
//! min ⟨C, X⟩  s.t.  ⟨A_i, X⟩ = b_i,  X ⪰ 0
//! max bᵀy     s.t.  Σ y_i A_i + Z = C,  Z ⪰ 0
//! ```
//!
//! which is solved by an infeasible path-following method with
//! Nesterov–Todd scaling and a Mehrotra predictor-corrector. Hermitian
//! matrices are handled natively; the Schur complement is real because
//! `Re Tr(A_i W A_j W)` is the real inner product under the isometry
//! `H_n ≅ ℝ^{n²}`.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmat::{self, cr, CMat};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Hermitian coefficient matrix listing every nonzero entry (both triangles).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseHermitian {
    pub dim: usize,
    pub entries: Vec<(usize, usize, Complex64)>,
}

impl SparseHermitian {
    /// Sums duplicate positions and drops zeros.
    pub fn new(dim: usize, entries: impl IntoIterator<Item = (usize, usize, Complex64)>) -> Self {
        let mut acc: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
        for (r, c, v) in entries {
            *acc.entry((r, c)).or_insert(ZERO) += v;
        }
        let entries = acc.into_iter().filter(|(_, v)| v.norm() > 0.0).map(|((r, c), v)| (r, c, v)).collect();
        Self { dim, entries }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        Self::new(dim, (0..dim).map(|i| (i, i, cr(s))))
    }

    pub fn from_dense(m: &CMat) -> Self {
        let mut entries = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)].norm() > 0.0 {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::new(m.nrows(), entries)
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    /// `Re Tr(A X)`.
    pub fn inner(&self, x: &CMat) -> f64 {
        self.entries.iter().map(|&(p, q, a)| (a * x[(q, p)]).re).sum()
    }

    fn frobenius(&self) -> f64 {
        self.entries.iter().map(|e| e.2.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Superoperator entries `(out_row, out_col, in_row, in_col, coeff)`:
/// `image[out] += coeff · X[in]` for block `block`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearTerm {
    pub block: usize,
    pub entries: Vec<(usize, usize, usize, usize, Complex64)>,
}

impl LinearTerm {
    /// Tabulates a complex-linear map by pushing every matrix unit through it.
    pub fn from_fn(block: usize, in_dim: usize, f: impl Fn(&CMat) -> CMat) -> Self {
        let mut entries = Vec::new();
        let mut unit = CMat::zeros(in_dim, in_dim);
        for p in 0..in_dim {
            for q in 0..in_dim {
                unit[(p, q)] = cr(1.0);
                let img = f(&unit);
                unit[(p, q)] = ZERO;
                for r in 0..img.nrows() {
                    for c in 0..img.ncols() {
                        let v = img[(r, c)];
                        if v.norm() > 0.0 {
                            entries.push((r, c, p, q, v));
                        }
                    }
                }
            }
        }
        Self { block, entries }
    }

    pub fn identity(block: usize, dim: usize) -> Self {
        let entries = (0..dim).flat_map(|r| (0..dim).map(move |c| (r, c, r, c, cr(1.0)))).collect();
        Self { block, entries }
    }

    /// Scalar map `X ↦ s · Tr X` into a 1×1 output.
    pub fn trace(block: usize, dim: usize, s: f64) -> Self {
        Self { block, entries: (0..dim).map(|i| (0, 0, i, i, cr(s))).collect() }
    }

    /// Scalar map `X ↦ s · Re Tr(M X)` into a 1×1 output, for Hermitian `M`.
    pub fn functional(block: usize, m: &CMat, s: f64) -> Self {
        let mut entries = Vec::new();
        for p in 0..m.nrows() {
            for q in 0..m.ncols() {
                let v = m[(q, p)] * s;
                if v.norm() > 0.0 {
                    entries.push((0, 0, p, q, v));
                }
            }
        }
        Self { block, entries }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for e in &mut self.entries {
            e.4 *= s;
        }
        self
    }

    pub fn apply_into(&self, x: &CMat, out: &mut CMat) {
        for &(r, c, p, q, v) in &self.entries {
            out[(r, c)] += v * x[(p, q)];
        }
    }

    /// Adds `L*(Y)` so that `Re Tr(Y L(X)) = Re Tr(L*(Y) X)`.
    pub fn adjoint_into(&self, y: &CMat, out: &mut CMat) {
        for &(r, c, p, q, v) in &self.entries {
            out[(q, p)] += v * y[(c, r)];
        }
    }
}

/// `Σ_t L_t(X_{b_t}) + offset ⪰ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdConstraint {
    pub dim: usize,
    pub terms: Vec<LinearTerm>,
    #[serde(default, with = "crate::io::opt_cmat")]
    pub offset: Option<CMat>,
}

impl PsdConstraint {
    pub fn image(&self, blocks: &[CMat]) -> CMat {
        let mut out = self.offset.clone().unwrap_or_else(|| CMat::zeros(self.dim, self.dim));
        for t in &self.terms {
            t.apply_into(&blocks[t.block], &mut out);
        }
        qmat::hermitian_part(&out)
    }
}

/// `Σ_b Re Tr(A_b X_b) = rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EqConstraint {
    pub coeffs: Vec<(usize, SparseHermitian)>,
    pub rhs: f64,
}

impl EqConstraint {
    pub fn value(&self, blocks: &[CMat]) -> f64 {
        self.coeffs.iter().map(|(b, a)| a.inner(&blocks[*b])).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    #[serde(alias = "minimize")]
    Min,
    #[serde(alias = "maximize")]
    Max,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub sense: Sense,
    pub blocks: Vec<usize>,
    #[serde(default)]
    pub objective: Vec<(usize, SparseHermitian)>,
    #[serde(default)]
    pub eq_constraints: Vec<EqConstraint>,
    #[serde(default)]
    pub psd_constraints: Vec<PsdConstraint>,
    /// Optional interior starting point for the block variables.
    #[serde(skip)]
    pub start: Option<Vec<CMat>>,
}

impl SdpProblem {
    pub fn new(sense: Sense) -> Self {
        Self { sense, blocks: Vec::new(), objective: Vec::new(), eq_constraints: Vec::new(), psd_constraints: Vec::new(), start: None }
    }

    pub fn add_block(&mut self, dim: usize) -> usize {
        self.blocks.push(dim);
        self.blocks.len() - 1
    }

    pub fn add_objective(&mut self, block: usize, coeff: SparseHermitian) {
        self.objective.push((block, coeff));
    }

    pub fn add_eq(&mut self, coeffs: Vec<(usize, SparseHermitian)>, rhs: f64) {
        self.eq_constraints.push(EqConstraint { coeffs, rhs });
    }

    pub fn add_psd(&mut self, dim: usize, terms: Vec<LinearTerm>, offset: Option<CMat>) {
        self.psd_constraints.push(PsdConstraint { dim, terms, offset });
    }

    /// `Σ_t L_t(X) = rhs` as one real equality per Hermitian degree of
    /// freedom of the `dim × dim` image.
    pub fn add_matrix_eq(&mut self, dim: usize, terms: &[LinearTerm], rhs: &CMat) {
        for (r, c) in upper_positions(dim) {
            for imag in [false, true] {
                if imag && r == c {
                    continue;
                }
                let mut per_block: BTreeMap<usize, Vec<(usize, usize, Complex64)>> = BTreeMap::new();
                for t in terms {
                    for &(orow, ocol, p, q, v) in &t.entries {
                        if (orow, ocol) == (r, c) {
                            per_block.entry(t.block).or_default().extend(real_part_coeff(p, q, v, imag));
                        }
                    }
                }
                let coeffs = per_block
                    .into_iter()
                    .map(|(b, e)| (b, SparseHermitian::new(self.blocks[b], e)))
                    .filter(|(_, a)| !a.entries.is_empty())
                    .collect::<Vec<_>>();
                let target = if imag { rhs[(r, c)].im } else { rhs[(r, c)].re };
                if coeffs.is_empty() {
                    continue;
                }
                self.add_eq(coeffs, target);
            }
        }
    }

    pub fn with_start(mut self, blocks: Vec<CMat>) -> Self {
        self.start = Some(blocks);
        self
    }

    pub fn objective_value(&self, blocks: &[CMat]) -> f64 {
        self.objective.iter().map(|(b, c)| c.inner(&blocks[*b])).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProblem(msg));
        if self.blocks.is_empty() {
            return bad("at least one block is required".into());
        }
        if self.blocks.contains(&0) {
            return bad("blocks must have positive size".into());
        }
        let check_sparse = |b: usize, a: &SparseHermitian, what: &str| -> Result<()> {
            if b >= self.blocks.len() {
                return Err(Error::InvalidProblem(format!("{what}: block {b} out of range")));
            }
            if a.dim != self.blocks[b] || a.entries.iter().any(|&(r, c, _)| r >= a.dim || c >= a.dim) {
                return Err(Error::InvalidProblem(format!("{what}: coefficient does not fit block {b}")));
            }
            let dense = a.to_dense();
            let dev = qmat::hermitian_deviation(&dense);
            if dev > 1e-12 * (1.0 + a.frobenius()) {
                return Err(Error::InvalidProblem(format!("{what}: coefficient not Hermitian ({dev:e})")));
            }
            Ok(())
        };
        for (b, a) in &self.objective {
            check_sparse(*b, a, "objective")?;
        }
        for (i, eq) in self.eq_constraints.iter().enumerate() {
            if eq.coeffs.is_empty() {
                return bad(format!("equality {i} has no coefficients"));
            }
            for (b, a) in &eq.coeffs {
                check_sparse(*b, a, &format!("equality {i}"))?;
            }
        }
        for (k, pc) in self.psd_constraints.iter().enumerate() {
            if pc.dim == 0 {
                return bad(format!("psd constraint {k} has zero size"));
            }
            if let Some(off) = &pc.offset {
                if off.shape() != (pc.dim, pc.dim) || qmat::hermitian_deviation(off) > 1e-12 * (1.0 + off.norm()) {
                    return bad(format!("psd constraint {k}: offset must be Hermitian {0}x{0}", pc.dim));
                }
            }
            let mut sums: HashMap<(usize, usize, usize, usize, usize), Complex64> = HashMap::new();
            for t in &pc.terms {
                if t.block >= self.blocks.len() {
                    return bad(format!("psd constraint {k}: block {} out of range", t.block));
                }
                let n = self.blocks[t.block];
                for &(r, c, p, q, v) in &t.entries {
                    if r >= pc.dim || c >= pc.dim || p >= n || q >= n {
                        return bad(format!("psd constraint {k}: entry out of range"));
                    }
                    *sums.entry((t.block, r, c, p, q)).or_insert(ZERO) += v;
                }
            }
            for (&(b, r, c, p, q), &v) in &sums {
                let partner = sums.get(&(b, c, r, q, p)).copied().unwrap_or(ZERO);
                if (partner - v.conj()).norm() > 1e-12 * (1.0 + v.norm()) {
                    return bad(format!("psd constraint {k}: map is not Hermiticity-preserving"));
                }
            }
        }
        if let Some(start) = &self.start {
            if start.len() != self.blocks.len() || start.iter().zip(&self.blocks).any(|(m, &d)| m.shape() != (d, d)) {
                return bad("start point does not match blocks".into());
            }
        }
        Ok(())
    }
}

fn upper_positions(dim: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..dim).flat_map(move |r| (r..dim).map(move |c| (r, c)))
}

/// Hermitian `A` with `Re Tr(A X) = Re(v · X[p,q])` (or `Im` when `imag`).
fn real_part_coeff(p: usize, q: usize, v: Complex64, imag: bool) -> [(usize, usize, Complex64); 2] {
    let v = if imag { v * Complex64::new(0.0, -1.0) } else { v };
    [(q, p, v * 0.5), (p, q, v.conj() * 0.5)]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    NumericalFailure,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iters: usize,
    /// Objective magnitude past which the run is declared infeasible.
    pub divergence_bound: f64,
    /// Print one line per iteration to stderr.
    #[serde(default)]
    pub verbose: bool,
}

/// Setting this environment variable turns on `verbose` in the defaults.
pub const TRACE_ENV: &str = "COHERENCE_LAB_SDP_TRACE";

impl Default for SolveOptions {
    fn default() -> Self {
        let verbose = std::env::var_os(TRACE_ENV).is_some();
        Self { gap_tol: 1e-8, feas_tol: 1e-8, max_iters: 200, divergence_bound: 1e8, verbose }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DualMultipliers {
    /// One multiplier per equality constraint.
    pub eq: Vec<f64>,
    /// One PSD matrix per matrix inequality.
    #[serde(with = "crate::io::vec_cmat")]
    pub psd: Vec<CMat>,
    /// Dual slack for every block variable.
    #[serde(with = "crate::io::vec_cmat")]
    pub block_slacks: Vec<CMat>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub sense: Sense,
    pub primal_value: f64,
    pub dual_value: f64,
    #[serde(with = "crate::io::vec_cmat")]
    pub primal_blocks: Vec<CMat>,
    pub dual: DualMultipliers,
    pub iterations: usize,
    pub max_residual: f64,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn gap(&self) -> f64 {
        (self.primal_value - self.dual_value).abs()
    }

    /// Errors unless the status is optimal.
    pub fn require_optimal(self) -> Result<Self> {
        if self.is_optimal() {
            Ok(self)
        } else {
            Err(Error::Solver { status: self.status })
        }
    }
}

// ---------------------------------------------------------------------------
// Standard form
// ---------------------------------------------------------------------------

type Part = (usize, Vec<(usize, usize, Complex64)>);

struct StdForm {
    dims: Vec<usize>,
    n_user_blocks: usize,
    c: Vec<CMat>,
    cons: Vec<Vec<Part>>,
    b: DVector<f64>,
    /// For each block, `(constraint, part)` pairs touching it.
    by_block: Vec<Vec<(usize, usize)>>,
    n_user_eq: usize,
}

impl StdForm {
    fn build(p: &SdpProblem) -> Self {
        let sign = match p.sense {
            Sense::Min => 1.0,
            Sense::Max => -1.0,
        };
        let mut dims = p.blocks.clone();
        dims.extend(p.psd_constraints.iter().map(|pc| pc.dim));
        let mut c: Vec<CMat> = dims.iter().map(|&d| CMat::zeros(d, d)).collect();
        for (b, a) in &p.objective {
            for &(r, col, v) in &a.entries {
                c[*b][(r, col)] += v * sign;
            }
        }
        let mut cons: Vec<Vec<Part>> = Vec::new();
        let mut b = Vec::new();
        for eq in &p.eq_constraints {
            let mut merged: BTreeMap<usize, Vec<(usize, usize, Complex64)>> = BTreeMap::new();
            for (blk, a) in &eq.coeffs {
                merged.entry(*blk).or_default().extend(a.entries.iter().copied());
            }
            cons.push(merge_parts(&dims, merged));
            b.push(eq.rhs);
        }
        let n_user_eq = cons.len();
        for (k, pc) in p.psd_constraints.iter().enumerate() {
            let slack = p.blocks.len() + k;
            let mut by_out: HashMap<(usize, usize), Vec<(usize, usize, usize, Complex64)>> = HashMap::new();
            for t in &pc.terms {
                for &(r, col, pp, q, v) in &t.entries {
                    if r <= col {
                        by_out.entry((r, col)).or_default().push((t.block, pp, q, v));
                    }
                }
            }
            let off = pc.offset.clone().unwrap_or_else(|| CMat::zeros(pc.dim, pc.dim));
            for (r, col) in upper_positions(pc.dim) {
                for imag in [false, true] {
                    if imag && r == col {
                        continue;
                    }
                    let mut merged: BTreeMap<usize, Vec<(usize, usize, Complex64)>> = BTreeMap::new();
                    if let Some(list) = by_out.get(&(r, col)) {
                        for &(blk, pp, q, v) in list {
                            merged.entry(blk).or_default().extend(real_part_coeff(pp, q, v, imag));
                        }
                    }
                    merged.entry(slack).or_default().extend(real_part_coeff(r, col, cr(-1.0), imag));
                    cons.push(merge_parts(&dims, merged));
                    let f = off[(r, col)];
                    b.push(if imag { -f.im } else { -f.re });
                }
            }
        }
        let mut by_block = vec![Vec::new(); dims.len()];
        for (i, parts) in cons.iter().enumerate() {
            for (j, (blk, _)) in parts.iter().enumerate() {
                by_block[*blk].push((i, j));
            }
        }
        Self { n_user_blocks: p.blocks.len(), dims, c, cons, b: DVector::from_vec(b), by_block, n_user_eq }
    }

    fn m(&self) -> usize {
        self.cons.len()
    }

    fn apply_a(&self, x: &[CMat]) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.cons.iter().map(|parts| {
                parts
                    .iter()
                    .map(|(blk, e)| e.iter().map(|&(pp, q, a)| (a * x[*blk][(q, pp)]).re).sum::<f64>())
                    .sum()
            }),
        )
    }

    fn apply_at(&self, y: &DVector<f64>) -> Vec<CMat> {
        let mut out: Vec<CMat> = self.dims.iter().map(|&d| CMat::zeros(d, d)).collect();
        for (i, parts) in self.cons.iter().enumerate() {
            let yi = y[i];
            if yi == 0.0 {
                continue;
            }
            for (blk, e) in parts {
                for &(pp, q, a) in e {
                    out[*blk][(pp, q)] += a * yi;
                }
            }
        }
        out
    }

    /// `M_ij = Σ_b Re Tr(A_i W_b A_j W_b)`.
    fn schur(&self, w: &[CMat]) -> DMatrix<f64> {
        let m = self.m();
        let mut out = DMatrix::<f64>::zeros(m, m);
        for (blk, list) in self.by_block.iter().enumerate() {
            let wb = &w[blk];
            for (x, &(i, pi)) in list.iter().enumerate() {
                let ai = &self.cons[i][pi].1;
                for &(j, pj) in &list[x..] {
                    let aj = &self.cons[j][pj].1;
                    let mut acc = 0.0;
                    for &(pp, q, a) in ai {
                        for &(r, s, cc) in aj {
                            acc += (a * cc * wb[(q, r)] * wb[(s, pp)]).re;
                        }
                    }
                    out[(i, j)] += acc;
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                out[(i, j)] = out[(j, i)];
            }
        }
        out
    }
}

fn merge_parts(dims: &[usize], merged: BTreeMap<usize, Vec<(usize, usize, Complex64)>>) -> Vec<Part> {
    merged
        .into_iter()
        .map(|(blk, e)| (blk, SparseHermitian::new(dims[blk], e).entries))
        .filter(|(_, e)| !e.is_empty())
        .collect()
}

// ---------------------------------------------------------------------------
// Interior-point iteration
// ---------------------------------------------------------------------------

struct Scaling {
    g: CMat,
    g_inv: CMat,
    w: CMat,
    v: DVector<f64>,
}

fn nt_scaling(x: &CMat, z: &CMat) -> Option<Scaling> {
    let lx = Cholesky::new(qmat::hermitian_part(x))?.l();
    let lz = Cholesky::new(qmat::hermitian_part(z))?.l();
    let k = lz.adjoint() * &lx;
    let svd = k.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let s = svd.singular_values;
    if s.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return None;
    }
    let n = s.len();
    let mut g = &lx * v_t.adjoint();
    let mut g_inv_adj = &lz * &u;
    for j in 0..n {
        let inv_sqrt = 1.0 / s[j].sqrt();
        for i in 0..n {
            g[(i, j)] *= inv_sqrt;
            g_inv_adj[(i, j)] *= inv_sqrt;
        }
    }
    let w = qmat::hermitian_part(&(&g * g.adjoint()));
    Some(Scaling { g_inv: g_inv_adj.adjoint(), g, w, v: s })
}

fn dot_blocks(a: &[CMat], b: &[CMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| qmat::inner_re(x, y)).sum()
}

fn max_abs_blocks(a: &[CMat]) -> f64 {
    a.iter().flat_map(|m| m.iter()).map(|z| z.norm()).fold(0.0, f64::max)
}

fn factor(m: &DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(ch) = Cholesky::new(m.clone()) {
        return Some(ch);
    }
    let scale = (0..m.nrows()).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    for reg in [1e-14, 1e-12, 1e-10] {
        let mut r = m.clone();
        for i in 0..r.nrows() {
            r[(i, i)] += reg * scale;
        }
        if let Some(ch) = Cholesky::new(r) {
            return Some(ch);
        }
    }
    None
}

struct Iterate {
    x: Vec<CMat>,
    y: DVector<f64>,
    z: Vec<CMat>,
}

fn initial_point(sf: &StdForm, p: &SdpProblem) -> Iterate {
    let m = sf.m();
    let mut x = Vec::with_capacity(sf.dims.len());
    let mut z = Vec::with_capacity(sf.dims.len());
    for (blk, &n) in sf.dims.iter().enumerate() {
        let nf = n as f64;
        let mut xi: f64 = 10f64.max(nf.sqrt());
        let mut eta: f64 = 10f64.max(nf.sqrt());
        let cn = sf.c[blk].norm();
        eta = eta.max(cn);
        for &(i, pi) in &sf.by_block[blk] {
            let an = sf.cons[i][pi].1.iter().map(|e| e.2.norm_sqr()).sum::<f64>().sqrt();
            xi = xi.max(nf.sqrt() * (1.0 + sf.b[i].abs()) / (1.0 + an));
            eta = eta.max(an);
        }
        x.push(CMat::identity(n, n).scale(xi));
        z.push(CMat::identity(n, n).scale(eta));
    }
    if let Some(start) = &p.start {
        for (blk, s) in start.iter().enumerate() {
            let lmin = qmat::min_eigenvalue(s);
            let shift = if lmin > 1e-6 { 0.0 } else { 1e-3 - lmin.min(0.0) + 1e-6 };
            x[blk] = qmat::hermitian_part(s) + CMat::identity(s.nrows(), s.nrows()).scale(shift);
        }
        for (k, pc) in p.psd_constraints.iter().enumerate() {
            let img = pc.image(&x[..sf.n_user_blocks]);
            if qmat::min_eigenvalue(&img) > 1e-6 {
                x[sf.n_user_blocks + k] = img;
            }
        }
    }
    Iterate { x, y: DVector::zeros(m), z }
}

struct Direction {
    dx: Vec<CMat>,
    dy: DVector<f64>,
    dz: Vec<CMat>,
}

fn solve_direction(
    sf: &StdForm,
    schur: &DMatrix<f64>,
    chol: &Cholesky<f64, nalgebra::Dyn>,
    scal: &[Scaling],
    rp: &DVector<f64>,
    rd: &[CMat],
    rc: &[CMat],
) -> Direction {
    let nb = sf.dims.len();
    let tmp: Vec<CMat> = (0..nb).map(|b| &rc[b] - &scal[b].w * &rd[b] * &scal[b].w).collect();
    let rhs = rp - sf.apply_a(&tmp);
    let mut dy = chol.solve(&rhs);
    // Two refinement sweeps recover accuracy lost to ill-conditioning near the optimum.
    for _ in 0..2 {
        let r = &rhs - schur * &dy;
        dy += chol.solve(&r);
    }
    let aty = sf.apply_at(&dy);
    let dz: Vec<CMat> = (0..nb).map(|b| qmat::hermitian_part(&(&rd[b] - &aty[b]))).collect();
    let dx: Vec<CMat> = (0..nb).map(|b| qmat::hermitian_part(&(&rc[b] - &scal[b].w * &dz[b] * &scal[b].w))).collect();
    Direction { dx, dy, dz }
}

/// Largest step `α` with `X + α ΔX ⪰ 0`, measured through the Cholesky
/// factor of `X` itself. Doing this in the scaled frame loses accuracy when
/// `X` is ill-conditioned and lets iterates leave the cone.
fn cone_step(x: &CMat, dx: &CMat) -> f64 {
    let Some(ch) = Cholesky::new(qmat::hermitian_part(x)) else {
        return 0.0;
    };
    let l = ch.l();
    let Some(a) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(m) = l.solve_lower_triangular(&a.adjoint()) else {
        return 0.0;
    };
    let lmin = qmat::min_eigenvalue(&qmat::hermitian_part(&m));
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn step_lengths(it: &Iterate, dir: &Direction) -> (f64, f64) {
    let mut ap = f64::INFINITY;
    let mut ad = f64::INFINITY;
    for b in 0..it.x.len() {
        ap = ap.min(cone_step(&it.x[b], &dir.dx[b]));
        ad = ad.min(cone_step(&it.z[b], &dir.dz[b]));
    }
    (ap, ad)
}

fn positive_definite(blocks: &[CMat]) -> bool {
    blocks.iter().all(|m| Cholesky::new(m.clone()).is_some())
}

/// Step fraction `τ` and centering floor tried in turn. Degenerate problems
/// (no strict complementarity) can stall near the optimum with aggressive
/// steps; more centering or shorter steps usually get through.
const STRATEGIES: [(f64, f64); 7] = [(0.98, 0.0), (0.98, 0.3), (0.9, 0.3), (0.95, 0.5), (0.7, 0.5), (0.6, 0.5), (0.8, 0.0)];

/// Solves the problem. Structural problems in the input are returned as
/// errors; solver outcomes are reported through [`SdpSolution::status`].
/// A numerical failure triggers restarts with more conservative steps; if
/// all fail, the best iterate seen is returned.
pub fn solve(p: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution> {
    p.validate()?;
    let sf = StdForm::build(p);
    let mut best: Option<(f64, SdpSolution)> = None;
    for &(tau, sigma_floor) in &STRATEGIES {
        if opts.verbose {
            eprintln!("attempt tau {tau} sigma floor {sigma_floor}");
        }
        let (merit, sol) = attempt(p, &sf, opts, tau, sigma_floor);
        if sol.status != SolveStatus::NumericalFailure {
            return Ok(sol);
        }
        if best.as_ref().is_none_or(|(m, _)| merit < *m) {
            best = Some((merit, sol));
        }
    }
    Ok(best.expect("at least one strategy").1)
}

fn attempt(p: &SdpProblem, sf: &StdForm, opts: &SolveOptions, tau: f64, sigma_floor: f64) -> (f64, SdpSolution) {
    let nb = sf.dims.len();
    let n_total: usize = sf.dims.iter().sum();
    let mut it = initial_point(sf, p);
    let mut status = SolveStatus::NumericalFailure;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut best: Option<(f64, Iterate, f64)> = None;

    for iter in 0..=opts.max_iters {
        iterations = iter;
        let rp = &sf.b - sf.apply_a(&it.x);
        let aty = sf.apply_at(&it.y);
        let rd: Vec<CMat> = (0..nb).map(|b| &sf.c[b] - &aty[b] - &it.z[b]).collect();
        let pobj = dot_blocks(&sf.c, &it.x);
        let dobj = sf.b.dot(&it.y);
        let rp_inf = rp.amax();
        let rd_inf = max_abs_blocks(&rd);
        let gap = (pobj - dobj).abs();
        residual = rp_inf.max(rd_inf);
        if opts.verbose {
            eprintln!("iter {iter:3} pobj {pobj:+.12e} dobj {dobj:+.12e} rp {rp_inf:.2e} rd {rd_inf:.2e}");
        }
        let merit = (gap / opts.gap_tol).max(residual / opts.feas_tol);
        if best.as_ref().is_none_or(|(m, _, _)| merit < *m) {
            best = Some((merit, Iterate { x: it.x.clone(), y: it.y.clone(), z: it.z.clone() }, residual));
        }
        if gap <= opts.gap_tol && residual <= opts.feas_tol {
            status = SolveStatus::Optimal;
            break;
        }
        if dobj > opts.divergence_bound && rd_inf <= opts.feas_tol.sqrt() {
            status = SolveStatus::PrimalInfeasible;
            break;
        }
        if pobj < -opts.divergence_bound && rp_inf <= opts.feas_tol.sqrt() {
            status = SolveStatus::DualInfeasible;
            break;
        }
        if !pobj.is_finite() || !dobj.is_finite() || dobj.abs() > opts.divergence_bound * 1e4 {
            status = if dobj > 0.0 { SolveStatus::PrimalInfeasible } else { SolveStatus::NumericalFailure };
            break;
        }
        if iter == opts.max_iters {
            break;
        }

        let Some(scal) = it.x.iter().zip(&it.z).map(|(x, z)| nt_scaling(x, z)).collect::<Option<Vec<_>>>() else {
            break;
        };
        let w: Vec<CMat> = scal.iter().map(|s| s.w.clone()).collect();
        let schur = sf.schur(&w);
        let Some(chol) = factor(&schur) else {
            break;
        };
        let mu = dot_blocks(&it.x, &it.z) / n_total as f64;

        // Predictor.
        let rc: Vec<CMat> = it.x.iter().map(|x| -x).collect();
        let pred = solve_direction(sf, &schur, &chol, &scal, &rp, &rd, &rc);
        let (ap, ad) = step_lengths(&it, &pred);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let x_aff: Vec<CMat> = (0..nb).map(|b| &it.x[b] + pred.dx[b].scale(ap)).collect();
        let z_aff: Vec<CMat> = (0..nb).map(|b| &it.z[b] + pred.dz[b].scale(ad)).collect();
        let mu_aff = dot_blocks(&x_aff, &z_aff) / n_total as f64;
        let sigma = if mu > 0.0 { (mu_aff / mu).max(0.0).powi(3).clamp(sigma_floor, 1.0) } else { 0.0 };

        // Corrector in the scaled space where X and Z coincide with diag(v).
        let rc: Vec<CMat> = (0..nb)
            .map(|b| {
                let s = &scal[b];
                let n = s.v.len();
                let dxs = &s.g_inv * &pred.dx[b] * s.g_inv.adjoint();
                let dzs = s.g.adjoint() * &pred.dz[b] * &s.g;
                let cross = (&dxs * &dzs + &dzs * &dxs).scale(0.5);
                let mut d = CMat::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let mut rsc = -cross[(i, j)];
                        if i == j {
                            rsc += cr(sigma * mu - s.v[i] * s.v[i]);
                        }
                        d[(i, j)] = rsc * (2.0 / (s.v[i] + s.v[j]));
                    }
                }
                &s.g * d * s.g.adjoint()
            })
            .collect();
        let dir = solve_direction(sf, &schur, &chol, &scal, &rp, &rd, &rc);
        let (ap, ad) = step_lengths(&it, &dir);
        let mut ap = (tau * ap).min(1.0);
        let mut ad = (tau * ad).min(1.0);
        if opts.verbose {
            eprintln!("         mu {mu:.2e} sigma {sigma:.2e} ap {ap:.3} ad {ad:.3}");
        }
        if !(ap > 1e-12 && ad > 1e-12) {
            break;
        }
        // Backtrack if rounding still pushed an update out of the cone.
        let mut x_new: Vec<CMat> = Vec::new();
        let mut z_new: Vec<CMat> = Vec::new();
        for _ in 0..30 {
            x_new = (0..nb).map(|b| qmat::hermitian_part(&(&it.x[b] + dir.dx[b].scale(ap)))).collect();
            z_new = (0..nb).map(|b| qmat::hermitian_part(&(&it.z[b] + dir.dz[b].scale(ad)))).collect();
            let (okx, okz) = (positive_definite(&x_new), positive_definite(&z_new));
            if okx && okz {
                break;
            }
            if !okx {
                ap *= 0.8;
            }
            if !okz {
                ad *= 0.8;
            }
        }
        if !(positive_definite(&x_new) && positive_definite(&z_new)) {
            break;
        }
        it.x = x_new;
        it.z = z_new;
        it.y += dir.dy.scale(ad);
    }

    let mut merit = 0.0;
    if status == SolveStatus::NumericalFailure {
        if let Some((m, b, r)) = best {
            it = b;
            residual = r;
            merit = m;
        } else {
            merit = f64::INFINITY;
        }
    }
    (merit, assemble(p, sf, it, status, iterations, residual))
}

fn assemble(p: &SdpProblem, sf: &StdForm, it: Iterate, status: SolveStatus, iterations: usize, residual: f64) -> SdpSolution {
    let nu = sf.n_user_blocks;
    let sign = match p.sense {
        Sense::Min => 1.0,
        Sense::Max => -1.0,
    };
    let eq: Vec<f64> = it.y.iter().take(sf.n_user_eq).map(|&v| v * sign).collect();
    let psd: Vec<CMat> = it.z[nu..].to_vec();
    let block_slacks: Vec<CMat> = it.z[..nu].to_vec();
    let primal_blocks: Vec<CMat> = it.x[..nu].to_vec();
    let primal_value = p.objective_value(&primal_blocks);
    let dual_value = sign * sf.b.dot(&it.y);
    SdpSolution {
        status,
        sense: p.sense,
        primal_value,
        dual_value,
        primal_blocks,
        dual: DualMultipliers { eq, psd, block_slacks },
        iterations,
        max_residual: residual,
    }
}

// ---------------------------------------------------------------------------
// Certificate checking
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: String,
    pub index: usize,
    pub amount: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub ok: bool,
    pub primal_value: f64,
    pub dual_value: f64,
    pub violations: Vec<Violation>,
}

/// Recomputes every primal/dual residual of `s` from the problem data alone.
pub fn verify_solution(p: &SdpProblem, s: &SdpSolution, tol: f64) -> Verification {
    let mut violations = Vec::new();
    let mut flag = |kind: &str, index: usize, amount: f64| {
        if !(amount <= tol) {
            violations.push(Violation { kind: kind.to_string(), index, amount });
        }
    };
    let shape_ok = s.primal_blocks.len() == p.blocks.len()
        && s.primal_blocks.iter().zip(&p.blocks).all(|(m, &d)| m.shape() == (d, d))
        && s.dual.eq.len() == p.eq_constraints.len()
        && s.dual.psd.len() == p.psd_constraints.len()
        && s.dual.psd.iter().zip(&p.psd_constraints).all(|(m, pc)| m.shape() == (pc.dim, pc.dim));
    if !shape_ok {
        flag("shape", 0, f64::INFINITY);
        return Verification { ok: false, primal_value: f64::NAN, dual_value: f64::NAN, violations };
    }
    let x = &s.primal_blocks;
    let sign = match p.sense {
        Sense::Min => 1.0,
        Sense::Max => -1.0,
    };
    for (b, xb) in x.iter().enumerate() {
        flag("primal_block_psd", b, -qmat::min_eigenvalue(xb));
    }
    for (i, eq) in p.eq_constraints.iter().enumerate() {
        flag("equality_residual", i, (eq.value(x) - eq.rhs).abs());
    }
    let images: Vec<CMat> = p.psd_constraints.iter().map(|pc| pc.image(x)).collect();
    for (k, img) in images.iter().enumerate() {
        flag("psd_constraint", k, -qmat::min_eigenvalue(img));
    }
    for (k, y) in s.dual.psd.iter().enumerate() {
        flag("dual_psd_multiplier", k, -qmat::min_eigenvalue(y));
    }
    // Dual slack: sign·C − Σ y_i A_i − Σ L*(Y) (min) or its mirror (max).
    let mut zs: Vec<CMat> = p.blocks.iter().map(|&d| CMat::zeros(d, d)).collect();
    for (b, a) in &p.objective {
        for &(r, c, v) in &a.entries {
            zs[*b][(r, c)] += v * sign;
        }
    }
    for (eq, &y) in p.eq_constraints.iter().zip(&s.dual.eq) {
        for (b, a) in &eq.coeffs {
            for &(r, c, v) in &a.entries {
                zs[*b][(r, c)] -= v * (y * sign);
            }
        }
    }
    for (pc, y) in p.psd_constraints.iter().zip(&s.dual.psd) {
        for t in &pc.terms {
            let mut adj = CMat::zeros(p.blocks[t.block], p.blocks[t.block]);
            t.adjoint_into(y, &mut adj);
            zs[t.block] -= adj;
        }
    }
    for (b, z) in zs.iter().enumerate() {
        flag("dual_slack_psd", b, -qmat::min_eigenvalue(z));
        flag("complementarity_block", b, qmat::inner_re(&x[b], z).abs());
    }
    for (k, (img, y)) in images.iter().zip(&s.dual.psd).enumerate() {
        flag("complementarity_constraint", k, qmat::inner_re(img, y).abs());
    }
    let primal_value = p.objective_value(x);
    let mut dual_value: f64 = p.eq_constraints.iter().zip(&s.dual.eq).map(|(eq, y)| eq.rhs * y).sum();
    for (pc, y) in p.psd_constraints.iter().zip(&s.dual.psd) {
        if let Some(off) = &pc.offset {
            dual_value -= sign * qmat::inner_re(off, y);
        }
    }
    flag("duality_gap", 0, (primal_value - dual_value).abs());
    Verification { ok: violations.is_empty(), primal_value, dual_value, violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::{c, dephase_matrix, DensityMatrix};

    fn plus() -> CMat {
        CMat::from_element(2, 2, cr(0.5))
    }

    /// min Tr X s.t. X − ρ ⪰ 0.
    fn enlargement(rho: &CMat) -> SdpProblem {
        let n = rho.nrows();
        let mut p = SdpProblem::new(Sense::Min);
        let x = p.add_block(n);
        p.add_objective(x, SparseHermitian::identity(n));
        p.add_psd(n, vec![LinearTerm::identity(x, n)], Some(-rho));
        p
    }

    /// min Tr σ s.t. Δ(σ) ⪰ ρ on a single qubit.
    fn c_max_program_qubit(rho: &CMat) -> SdpProblem {
        let mut p = SdpProblem::new(Sense::Min);
        let s = p.add_block(2);
        p.add_objective(s, SparseHermitian::identity(2));
        let deph = LinearTerm::from_fn(s, 2, |m| dephase_matrix(m, &[2], &[0]).unwrap());
        p.add_psd(2, vec![deph], Some(-rho));
        p
    }

    #[test]
    fn minimal_enlargement() {
        let rho = CMat::from_row_slice(2, 2, &[cr(0.7), c(0.1, 0.2), c(0.1, -0.2), cr(0.3)]);
        let p = enlargement(&rho);
        let s = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.primal_value - 1.0).abs() < 1e-7);
        assert!((&s.primal_blocks[0] - &rho).norm() < 1e-6);
        assert!(verify_solution(&p, &s, 1e-7).ok);
    }

    #[test]
    fn scalar_lower_bound() {
        let mut p = SdpProblem::new(Sense::Min);
        let x = p.add_block(1);
        p.add_objective(x, SparseHermitian::identity(1));
        p.add_psd(1, vec![LinearTerm::identity(x, 1)], Some(CMat::from_element(1, 1, cr(-3.0))));
        let s = solve(&p, &SolveOptions::default()).unwrap();
        assert!(s.is_optimal());
        assert!((s.primal_value - 3.0).abs() < 1e-7);
    }

    #[test]
    fn c_max_program_plus_state_closed_form() {
        // diag(d1,d2) ⪰ |+⟩⟨+| iff d1,d2 ≥ 1/2 and (d1−½)(d2−½) ≥ ¼: optimum 2.
        let p = c_max_program_qubit(&plus());
        let s = solve(&p, &SolveOptions::default()).unwrap();
        assert!(s.is_optimal());
        assert!((s.primal_value - 2.0).abs() < 1e-7);
        let v = verify_solution(&p, &s, 1e-7);
        assert!(v.ok, "{:?}", v.violations);
        // Dual witness τ = all-ones has Δ(τ) = 𝟙 and Tr(ρτ) = 2.
        let tau = CMat::from_element(2, 2, cr(1.0));
        assert!((qmat::inner_re(&plus(), &tau) - 2.0).abs() < 1e-15);
        assert!((s.dual_value - 2.0).abs() < 1e-7);
    }

    #[test]
    fn seeded_start_reaches_same_optimum() {
        let rho = plus();
        let lmax = qmat::max_eigenvalue(&rho);
        let p = c_max_program_qubit(&rho).with_start(vec![CMat::identity(2, 2).scale(2.0 * lmax)]);
        let s = solve(&p, &SolveOptions::default()).unwrap();
        assert!(s.is_optimal());
        assert!((s.primal_value - 2.0).abs() < 1e-7);
    }

    #[test]
    fn perturbed_solution_is_rejected() {
        let rho = CMat::from_row_slice(2, 2, &[cr(0.7), c(0.1, 0.2), c(0.1, -0.2), cr(0.3)]);
        let p = c_max_program_qubit(&rho);
        let mut s = solve(&p, &SolveOptions::default()).unwrap();
        let tol = 1e-7;
        assert!(verify_solution(&p, &s, tol).ok);
        let (vals, vecs) = qmat::eigh(&s.primal_blocks[0]);
        let v0 = vecs.column(0).into_owned();
        let shift = vals[0] + 2.0 * tol;
        s.primal_blocks[0] -= (&v0 * v0.adjoint()).scale(shift);
        let v = verify_solution(&p, &s, tol);
        assert!(!v.ok);
        assert!(v.violations.iter().any(|x| x.kind == "primal_block_psd"));
    }

    #[test]
    fn maximize_with_equalities() {
        // max Tr(ρτ) s.t. Δ(τ) = 𝟙, τ ⪰ 0: the dual form, value 2 for |+⟩.
        let mut p = SdpProblem::new(Sense::Max);
        let t = p.add_block(2);
        p.add_objective(t, SparseHermitian::from_dense(&plus()));
        let deph = LinearTerm::from_fn(t, 2, |m| dephase_matrix(m, &[2], &[0]).unwrap());
        p.add_matrix_eq(2, &[deph], &CMat::identity(2, 2));
        let s = solve(&p, &SolveOptions::default()).unwrap();
        assert!(s.is_optimal());
        assert!((s.primal_value - 2.0).abs() < 1e-7);
        let v = verify_solution(&p, &s, 1e-7);
        assert!(v.ok, "{:?}", v.violations);
    }

    #[test]
    fn detects_primal_infeasibility() {
        let mut p = SdpProblem::new(Sense::Min);
        let x = p.add_block(1);
        p.add_objective(x, SparseHermitian::identity(1));
        p.add_psd(1, vec![LinearTerm::identity(x, 1)], Some(CMat::from_element(1, 1, cr(-3.0))));
        p.add_psd(1, vec![LinearTerm::identity(x, 1).scaled(-1.0)], Some(CMat::from_element(1, 1, cr(1.0))));
        let s = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::PrimalInfeasible);
    }

    #[test]
    fn rejects_malformed_problems() {
        let mut p = SdpProblem::new(Sense::Min);
        assert!(solve(&p, &SolveOptions::default()).is_err());
        let x = p.add_block(2);
        let bad = SparseHermitian::new(2, [(0, 1, cr(1.0))]);
        p.add_objective(x, bad);
        assert!(matches!(p.validate(), Err(Error::InvalidProblem(_))));

        let mut q = SdpProblem::new(Sense::Min);
        let x = q.add_block(2);
        // X ↦ X[0,1] placed on the diagonal is not Hermiticity-preserving.
        q.add_psd(1, vec![LinearTerm { block: x, entries: vec![(0, 0, 0, 1, cr(1.0))] }], None);
        assert!(q.validate().is_err());
    }

    #[test]
    fn objective_scaling_scales_optimum() {
        let rho = DensityMatrix::pure(&[2], &[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let base = solve(&c_max_program_qubit(rho.matrix()), &SolveOptions::default()).unwrap();
        let mut scaled = c_max_program_qubit(rho.matrix());
        scaled.objective[0].1 = SparseHermitian::scaled_identity(2, 3.5);
        let s = solve(&scaled, &SolveOptions::default()).unwrap();
        assert!((s.primal_value - 3.5 * base.primal_value).abs() < 1e-7);
    }

    #[test]
    fn problem_round_trips_through_json() {
        let p = c_max_program_qubit(&plus());
        let text = serde_json::to_string(&p).unwrap();
        let back: SdpProblem = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }
}
