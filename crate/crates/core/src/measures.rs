//! Entropies, divergences and the coherence/entanglement measures.
//!
//! All logarithms are base 2. Coherence measures are parameterized by a
//! [`DephasingPattern`]: the full pattern gives the plain measures, a single
//! factor `{A}` of a bipartite state gives the incoherent-quantum (`A|B`)
//! variants. Entanglement measures optimize over the cone of operators that
//! stay positive under partial transposition across every cut, which agrees
//! with the separable cone for `2⊗2` and `2⊗3` and is an outer
//! approximation otherwise.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmat::{self, cr, CMat, DensityMatrix, DephasingPattern, RANK_TOL};
use crate::sampler::SeededRng;
use crate::sdp::{self, LinearTerm, Sense, SdpProblem, SdpSolution, SolveOptions, SparseHermitian};

/// Value of a divergence that may be infinite when supports do not nest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Divergence {
    Finite(f64),
    SupportInfinite,
}

impl Divergence {
    pub fn is_finite(&self) -> bool {
        matches!(self, Divergence::Finite(_))
    }

    /// The finite value, or `+∞` for display and comparisons.
    pub fn value(&self) -> f64 {
        match self {
            Divergence::Finite(v) => *v,
            Divergence::SupportInfinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Divergence::Finite(v) => write!(f, "{v}"),
            Divergence::SupportInfinite => write!(f, "+inf (support)"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Sdp,
    Relaxation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    PptRelaxed,
    SupportInfinite,
    /// Part of the value comes from a local search, so it is one-sided.
    Heuristic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedMatrix {
    pub name: String,
    #[serde(with = "crate::io::cmat")]
    pub matrix: CMat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureResult {
    pub value: f64,
    pub method: Method,
    /// Primal-dual gap of the underlying optimization (0 for closed forms).
    pub gap: f64,
    pub flags: BTreeSet<Flag>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub certificate: Vec<NamedMatrix>,
}

impl MeasureResult {
    fn closed_form(value: f64) -> Self {
        Self { value, method: Method::ClosedForm, gap: 0.0, flags: BTreeSet::new(), certificate: Vec::new() }
    }

    fn sdp(value: f64, gap: f64) -> Self {
        Self { value, method: Method::Sdp, gap, flags: BTreeSet::new(), certificate: Vec::new() }
    }

    fn with(mut self, name: &str, matrix: CMat) -> Self {
        self.certificate.push(NamedMatrix { name: name.to_string(), matrix });
        self
    }

    pub fn certificate(&self, name: &str) -> Option<&CMat> {
        self.certificate.iter().find(|c| c.name == name).map(|c| &c.matrix)
    }

    pub fn has_flag(&self, flag: Flag) -> bool {
        self.flags.contains(&flag)
    }

    /// Drops certificate matrices (for compact output).
    pub fn without_certificate(mut self) -> Self {
        self.certificate.clear();
        self
    }
}

/// Smoothing radius. The derived radii are always recomputed from `eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothParams {
    eps: f64,
}

impl SmoothParams {
    pub fn new(eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::InvalidArgument(format!("smoothing eps {eps} outside [0,1)")));
        }
        Ok(Self { eps })
    }

    pub fn zero() -> Self {
        Self { eps: 0.0 }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `ε + 2√ε`.
    pub fn eps_prime(&self) -> f64 {
        self.eps + 2.0 * self.eps.sqrt()
    }

    /// `ε + 2√(2ε)`.
    pub fn eps_double_prime(&self) -> f64 {
        self.eps + 2.0 * (2.0 * self.eps).sqrt()
    }

    pub fn prime(&self) -> Result<Self> {
        Self::new(self.eps_prime())
    }

    pub fn double_prime(&self) -> Result<Self> {
        Self::new(self.eps_double_prime())
    }
}

// ---------------------------------------------------------------------------
// Entropies and divergences
// ---------------------------------------------------------------------------

pub(crate) fn entropy_of_matrix(m: &CMat) -> f64 {
    qmat::eigvalsh(m).iter().filter(|&&l| l > 0.0).map(|&l| -l * l.log2()).sum()
}

pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    entropy_of_matrix(rho.matrix())
}

/// Entropy of the marginal on `keep`; the empty marginal has entropy 0.
pub fn marginal_entropy(rho: &DensityMatrix, keep: &[usize]) -> Result<f64> {
    if keep.is_empty() {
        return Ok(0.0);
    }
    Ok(von_neumann_entropy(&rho.reduced(keep)?))
}

/// Weight of `rho` outside the support of `sigma`.
fn weight_outside_support(rho: &CMat, sigma: &CMat) -> f64 {
    let (vals, vecs) = qmat::eigh(sigma);
    let mut outside = 0.0;
    for j in 0..vals.len() {
        if vals[j] <= RANK_TOL {
            let v = vecs.column(j);
            outside += (v.adjoint() * rho * v)[(0, 0)].re;
        }
    }
    outside
}

fn check_same_dims(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<()> {
    if rho.side() != sigma.side() {
        return Err(Error::Shape(format!("states of side {} and {}", rho.side(), sigma.side())));
    }
    Ok(())
}

/// `S(ρ‖σ) = Tr ρ (log ρ − log σ)`.
pub fn relative_entropy(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<Divergence> {
    check_same_dims(rho, sigma)?;
    if weight_outside_support(rho.matrix(), sigma.matrix()) > RANK_TOL {
        return Ok(Divergence::SupportInfinite);
    }
    let log_sigma = qmat::hermitian_fn(sigma.matrix(), |x| if x > RANK_TOL { x.log2() } else { 0.0 });
    Ok(Divergence::Finite(-von_neumann_entropy(rho) - qmat::inner_re(rho.matrix(), &log_sigma)))
}

/// `log λ_max(σ^{-1/2} ρ σ^{-1/2})` on the support of `σ`.
pub fn d_max(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<Divergence> {
    check_same_dims(rho, sigma)?;
    if weight_outside_support(rho.matrix(), sigma.matrix()) > RANK_TOL {
        return Ok(Divergence::SupportInfinite);
    }
    let inv_sqrt = qmat::hermitian_fn(sigma.matrix(), |x| if x > RANK_TOL { 1.0 / x.sqrt() } else { 0.0 });
    let m = &inv_sqrt * rho.matrix() * &inv_sqrt;
    Ok(Divergence::Finite(qmat::max_eigenvalue(&m).log2()))
}

/// `−log Tr(Π_ρ σ)`.
pub fn d_min(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<Divergence> {
    check_same_dims(rho, sigma)?;
    let pi = rho.op().support_projector(RANK_TOL)?;
    let overlap = qmat::inner_re(pi.matrix(), sigma.matrix());
    if overlap <= RANK_TOL {
        return Ok(Divergence::SupportInfinite);
    }
    Ok(Divergence::Finite(-overlap.log2()))
}

// ---------------------------------------------------------------------------
// Coherence measures
// ---------------------------------------------------------------------------

fn solve_default(p: &SdpProblem) -> Result<SdpSolution> {
    sdp::solve(p, &SolveOptions::default())?.require_optimal()
}

/// `S(Δ(ρ)) − S(ρ)`.
pub fn c_r(rho: &DensityMatrix, pattern: &DephasingPattern) -> Result<MeasureResult> {
    let deph = rho.dephased(pattern)?;
    let value = von_neumann_entropy(&deph) - von_neumann_entropy(rho);
    Ok(MeasureResult::closed_form(value).with("sigma", deph.into_op().into_matrix()))
}

fn dephasing_term(block: usize, rho: &DensityMatrix, pattern: &DephasingPattern) -> LinearTerm {
    let dims = rho.dims().to_vec();
    let classical = pattern.to_vec();
    LinearTerm::from_fn(block, rho.side(), |m| qmat::dephase_matrix(m, &dims, &classical).expect("dims checked"))
}

/// `min Tr σ  s.t.  σ ⪰ 0, Δ(σ) ⪰ ρ`, started from the interior point
/// `σ = 2 λ_max(ρ) 𝟙`.
pub fn lemma1_primal(rho: &DensityMatrix, pattern: &DephasingPattern) -> Result<SdpProblem> {
    pattern.check(rho.factors())?;
    let n = rho.side();
    let mut p = SdpProblem::new(Sense::Min);
    let s = p.add_block(n);
    p.add_objective(s, SparseHermitian::identity(n));
    p.add_psd(n, vec![dephasing_term(s, rho, pattern)], Some(-rho.matrix()));
    let lmax = qmat::max_eigenvalue(rho.matrix());
    Ok(p.with_start(vec![qmat::identity(n).scale(2.0 * lmax)]))
}

/// `max Tr(ρ τ)  s.t.  τ ⪰ 0, Δ(τ) = 𝟙`.
pub fn lemma1_dual(rho: &DensityMatrix, pattern: &DephasingPattern) -> Result<SdpProblem> {
    pattern.check(rho.factors())?;
    let n = rho.side();
    let mut p = SdpProblem::new(Sense::Max);
    let t = p.add_block(n);
    p.add_objective(t, SparseHermitian::from_dense(rho.matrix()));
    p.add_matrix_eq(n, &[dephasing_term(t, rho, pattern)], &qmat::identity(n));
    Ok(p)
}

/// Adds `ρ' = ρ + P − Q` with `P, Q ⪰ 0`, `Tr(P − Q) ≤ 0`, `Tr(P + Q) ≤ ε`
/// and returns the blocks of `P` and `Q`. Together these describe the
/// trace-norm ball of subnormalized states around `ρ`.
fn add_smoothing_ball(p: &mut SdpProblem, rho: &CMat, eps: f64) -> (usize, usize) {
    let n = rho.nrows();
    let bp = p.add_block(n);
    let bq = p.add_block(n);
    p.add_psd(n, vec![LinearTerm::identity(bp, n), LinearTerm::identity(bq, n).scaled(-1.0)], Some(rho.clone()));
    p.add_psd(1, vec![LinearTerm::trace(bp, n, -1.0), LinearTerm::trace(bq, n, 1.0)], None);
    p.add_psd(
        1,
        vec![LinearTerm::trace(bp, n, -1.0), LinearTerm::trace(bq, n, -1.0)],
        Some(CMat::from_element(1, 1, cr(eps))),
    );
    (bp, bq)
}

fn smoothed_state(sol: &SdpSolution, rho: &CMat, bp: usize, bq: usize) -> CMat {
    rho + &sol.primal_blocks[bp] - &sol.primal_blocks[bq]
}

/// Max-relative entropy of coherence with respect to the pattern's free set.
///
/// At `ε = 0` the certificate holds the primal optimizer `sigma` and a dual
/// witness `tau` with `Δ(τ) = 𝟙` exactly. For `ε > 0` the optimization also
/// ranges over the trace-norm ball around `ρ` and `rho_smoothed` is returned.
/// Smoothed values may be negative (down to `log(1 − ε)`) because the ball
/// contains subnormalized operators.
pub fn c_max(rho: &DensityMatrix, pattern: &DephasingPattern, smooth: SmoothParams) -> Result<MeasureResult> {
    let mut p = lemma1_primal(rho, pattern)?;
    if smooth.eps() == 0.0 {
        let sol = solve_default(&p)?;
        let y = &sol.dual.psd[0];
        let deph_y = qmat::dephase_matrix(y, rho.dims(), &pattern.to_vec())?;
        let tau = qmat::hermitian_part(&(y + qmat::identity(rho.side()) - deph_y));
        return Ok(MeasureResult::sdp(sol.primal_value.log2(), sol.gap())
            .with("sigma", sol.primal_blocks[0].clone())
            .with("tau", tau));
    }
    p.psd_constraints.clear();
    let s = 0;
    let n = rho.side();
    let (bp, bq) = add_smoothing_ball(&mut p, rho.matrix(), smooth.eps());
    p.add_psd(
        n,
        vec![dephasing_term(s, rho, pattern), LinearTerm::identity(bp, n).scaled(-1.0), LinearTerm::identity(bq, n)],
        Some(-rho.matrix()),
    );
    p.start = None;
    let sol = solve_default(&p)?;
    let smoothed = smoothed_state(&sol, rho.matrix(), bp, bq);
    Ok(MeasureResult::sdp(sol.primal_value.log2(), sol.gap())
        .with("sigma", sol.primal_blocks[s].clone())
        .with("rho_smoothed", smoothed))
}

/// Value of the dual program [`lemma1_dual`], `log max Tr(ρτ)` over `Δ(τ) = 𝟙`.
pub fn c_max_dual(rho: &DensityMatrix, pattern: &DephasingPattern) -> Result<MeasureResult> {
    let sol = solve_default(&lemma1_dual(rho, pattern)?)?;
    Ok(MeasureResult::sdp(sol.primal_value.log2(), sol.gap()).with("tau", sol.primal_blocks[0].clone()))
}

/// Min-relative entropy of coherence. At `ε = 0` this is the closed form
/// `−log max_i λ_max(⟨i|Π_ρ|i⟩)` over classical strings `i`; for `ε > 0` it
/// is the hypothesis-testing program of [`c_min_sdp`].
pub fn c_min(rho: &DensityMatrix, pattern: &DephasingPattern, smooth: SmoothParams) -> Result<MeasureResult> {
    pattern.check(rho.factors())?;
    if smooth.eps() > 0.0 {
        return c_min_sdp(rho, pattern, smooth);
    }
    let pi = rho.op().support_projector(RANK_TOL)?.into_matrix();
    let mut best = 0.0f64;
    for block in qmat::classical_blocks(rho.dims(), &pattern.to_vec()) {
        let sub = CMat::from_fn(block.len(), block.len(), |a, b| pi[(block[a], block[b])]);
        best = best.max(qmat::max_eigenvalue(&sub));
    }
    Ok(MeasureResult::closed_form(-best.log2()).with("support_projector", pi))
}

fn embed_block_term(block: usize, idx: &[usize], sign: f64) -> LinearTerm {
    let entries = (0..idx.len())
        .flat_map(|a| (0..idx.len()).map(move |b| (a, b)))
        .map(|(a, b)| (idx[a], idx[b], a, b, cr(sign)))
        .collect();
    LinearTerm { block, entries }
}

fn scalar_identity_term(block: usize, dim: usize) -> LinearTerm {
    LinearTerm { block, entries: (0..dim).map(|a| (a, a, 0, 0, cr(1.0))).collect() }
}

/// `min t  s.t.  0 ⪯ O ⪯ 𝟙, Tr(Oρ) ≥ 1 − ε, ⟨i|O|i⟩ ⪯ t 𝟙` for every
/// classical string `i`; returns `−log t` with the optimal test `O`.
///
/// At `ε = 0` the acceptance constraint has no interior and its multiplier
/// is unbounded, so it is eliminated instead: `Tr(Oρ) = 1` with `O ⪯ 𝟙`
/// forces `O = Π_ρ + V K V†` where `V` spans the kernel of `ρ` and
/// `0 ⪯ K ⪯ 𝟙` is the only remaining variable.
pub fn c_min_sdp(rho: &DensityMatrix, pattern: &DephasingPattern, smooth: SmoothParams) -> Result<MeasureResult> {
    pattern.check(rho.factors())?;
    if smooth.eps() == 0.0 {
        return c_min_sdp_exact(rho, pattern);
    }
    let n = rho.side();
    let mut p = SdpProblem::new(Sense::Min);
    let o = p.add_block(n);
    let t = p.add_block(1);
    p.add_objective(t, SparseHermitian::identity(1));
    add_test_constraints(&mut p, o, rho.matrix(), smooth.eps());
    for block in qmat::classical_blocks(rho.dims(), &pattern.to_vec()) {
        let q = block.len();
        // t 𝟙 − ⟨i|O|i⟩ ⪰ 0, with the block of O read back as a q × q matrix.
        let read = LinearTerm {
            block: o,
            entries: (0..q).flat_map(|a| (0..q).map(move |b| (a, b))).map(|(a, b)| (a, b, block[a], block[b], cr(-1.0))).collect(),
        };
        p.add_psd(q, vec![scalar_identity_term(t, q), read], None);
    }
    let sol = solve_default(&p)?;
    Ok(MeasureResult::sdp(-sol.primal_value.log2(), sol.gap()).with("test", sol.primal_blocks[o].clone()))
}

fn c_min_sdp_exact(rho: &DensityMatrix, pattern: &DephasingPattern) -> Result<MeasureResult> {
    let n = rho.side();
    let (vals, vecs) = qmat::eigh(rho.matrix());
    let kernel: Vec<usize> = (0..n).filter(|&j| vals[j] <= RANK_TOL).collect();
    let k = kernel.len();
    let v = CMat::from_fn(n, k, |r, c| vecs[(r, kernel[c])]);
    let pi = rho.op().support_projector(RANK_TOL)?.into_matrix();
    let mut p = SdpProblem::new(Sense::Min);
    let t = p.add_block(1);
    p.add_objective(t, SparseHermitian::identity(1));
    let kb = if k > 0 {
        let kb = p.add_block(k);
        p.add_psd(k, vec![LinearTerm::identity(kb, k).scaled(-1.0)], Some(qmat::identity(k)));
        Some(kb)
    } else {
        None
    };
    for block in qmat::classical_blocks(rho.dims(), &pattern.to_vec()) {
        let q = block.len();
        let pick = |m: &CMat| CMat::from_fn(q, q, |a, b| m[(block[a], block[b])]);
        let mut terms = vec![scalar_identity_term(t, q)];
        if let Some(kb) = kb {
            terms.push(LinearTerm::from_fn(kb, k, |x| pick(&(&v * x * v.adjoint()))).scaled(-1.0));
        }
        p.add_psd(q, terms, Some(-pick(&pi)));
    }
    let sol = solve_default(&p)?;
    let test = match kb {
        Some(kb) => &pi + &v * &sol.primal_blocks[kb] * v.adjoint(),
        None => pi,
    };
    Ok(MeasureResult::sdp(-sol.primal_value.log2(), sol.gap()).with("test", qmat::hermitian_part(&test)))
}

/// `0 ⪯ O ⪯ 𝟙` (the lower bound is the block cone) and `Tr(Oρ) ≥ 1 − ε`.
fn add_test_constraints(p: &mut SdpProblem, o: usize, rho: &CMat, eps: f64) {
    let n = rho.nrows();
    p.add_psd(n, vec![LinearTerm::identity(o, n).scaled(-1.0)], Some(qmat::identity(n)));
    p.add_psd(1, vec![LinearTerm::functional(o, rho, 1.0)], Some(CMat::from_element(1, 1, cr(-(1.0 - eps)))));
}

/// The smooth min-relative entropy of coherence with the optimizations in
/// the other order: `min_σ D^ε_min(ρ‖σ)` over the pattern's free states,
/// i.e. `−log max_σ min_O Tr(Oσ)`. The inner hypothesis test is dualized
/// so the whole problem is one maximization. By the minimax theorem this
/// coincides with [`c_min`]; it is kept as an independent cross-check.
pub fn c_min_minimax(rho: &DensityMatrix, pattern: &DephasingPattern, smooth: SmoothParams) -> Result<MeasureResult> {
    pattern.check(rho.factors())?;
    let n = rho.side();
    let mut p = SdpProblem::new(Sense::Max);
    let blocks = qmat::classical_blocks(rho.dims(), &pattern.to_vec());
    let taus: Vec<usize> = blocks.iter().map(|b| p.add_block(b.len())).collect();
    let s = p.add_block(1);
    let y = p.add_block(n);
    p.add_objective(s, SparseHermitian::scaled_identity(1, 1.0 - smooth.eps()));
    p.add_objective(y, SparseHermitian::scaled_identity(n, -1.0));
    // Σ_i |i⟩⟨i| ⊗ τ_i − s ρ + Y ⪰ 0.
    let mut terms: Vec<LinearTerm> = taus.iter().zip(&blocks).map(|(&tb, idx)| embed_block_term(tb, idx, 1.0)).collect();
    let rho_m = rho.matrix();
    let s_entries = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).map(|(a, b)| (a, b, 0, 0, -rho_m[(a, b)])).filter(|e| e.4.norm() > 0.0).collect();
    terms.push(LinearTerm { block: s, entries: s_entries });
    terms.push(LinearTerm::identity(y, n));
    p.add_psd(n, terms, None);
    let trace_all = taus.iter().zip(&blocks).map(|(&tb, idx)| (tb, SparseHermitian::identity(idx.len()))).collect();
    p.add_eq(trace_all, 1.0);
    let sol = solve_default(&p)?;
    let mut sigma = CMat::zeros(n, n);
    for (&tb, idx) in taus.iter().zip(&blocks) {
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                sigma[(ia, ib)] = sol.primal_blocks[tb][(a, b)];
            }
        }
    }
    Ok(MeasureResult::sdp(-sol.primal_value.log2(), sol.gap()).with("sigma", sigma))
}

// ---------------------------------------------------------------------------
// Entanglement measures over the PPT cone
// ---------------------------------------------------------------------------

fn check_partition(rho: &DensityMatrix, partition: &[Vec<usize>]) -> Result<()> {
    if partition.len() < 2 {
        return Err(Error::InvalidArgument("a partition needs at least two groups".into()));
    }
    let mut seen = vec![false; rho.factors()];
    for g in partition {
        if g.is_empty() {
            return Err(Error::InvalidArgument("empty partition group".into()));
        }
        for &k in g {
            if k >= rho.factors() {
                return Err(Error::FactorOutOfRange { index: k, factors: rho.factors() });
            }
            if std::mem::replace(&mut seen[k], true) {
                return Err(Error::InvalidArgument(format!("factor {k} appears in two groups")));
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidArgument("partition must cover every factor".into()));
    }
    Ok(())
}

/// Regrouped state (one factor per group) and the PPT-relaxation flag.
fn grouped(rho: &DensityMatrix, partition: &[Vec<usize>]) -> Result<(DensityMatrix, bool)> {
    check_partition(rho, partition)?;
    let g = rho.regroup(partition)?;
    let dims = g.dims();
    let exact = dims.len() == 2 && dims.iter().product::<usize>() <= 6;
    Ok((g, !exact))
}

/// Every nonempty set of groups not containing the last one; transposing
/// these covers every bipartite cut once.
fn cuts(groups: usize) -> Vec<Vec<usize>> {
    (1..(1usize << (groups - 1))).map(|mask| (0..groups - 1).filter(|k| mask >> k & 1 == 1).collect()).collect()
}

fn transpose_term(block: usize, dims: &[usize], flip: &[usize], sign: f64) -> LinearTerm {
    let n = qmat::product(dims);
    LinearTerm::from_fn(block, n, |m| qmat::partial_transpose_matrix(m, dims, flip).expect("dims checked")).scaled(sign)
}

fn add_ppt_constraints(p: &mut SdpProblem, block: usize, dims: &[usize]) {
    let n = qmat::product(dims);
    for cut in cuts(dims.len()) {
        p.add_psd(n, vec![transpose_term(block, dims, &cut, 1.0)], None);
    }
}

fn flagged(mut r: MeasureResult, relaxed: bool) -> MeasureResult {
    if relaxed {
        r.flags.insert(Flag::PptRelaxed);
    }
    r
}

/// Max-relative entropy of entanglement across `partition`:
/// `log min Tr ω  s.t.  ω ⪰ ρ, Γ_S(ω) ⪰ 0` for every cut `S`.
pub fn e_max(rho: &DensityMatrix, partition: &[Vec<usize>], smooth: SmoothParams) -> Result<MeasureResult> {
    let (g, relaxed) = grouped(rho, partition)?;
    let n = g.side();
    let dims = g.dims().to_vec();
    let mut p = SdpProblem::new(Sense::Min);
    let w = p.add_block(n);
    p.add_objective(w, SparseHermitian::identity(n));
    add_ppt_constraints(&mut p, w, &dims);
    let ball = if smooth.eps() > 0.0 { Some(add_smoothing_ball(&mut p, g.matrix(), smooth.eps())) } else { None };
    let mut terms = vec![LinearTerm::identity(w, n)];
    if let Some((bp, bq)) = ball {
        terms.push(LinearTerm::identity(bp, n).scaled(-1.0));
        terms.push(LinearTerm::identity(bq, n));
    }
    p.add_psd(n, terms, Some(-g.matrix()));
    let sol = solve_default(&p)?;
    let mut r = MeasureResult::sdp(sol.primal_value.log2(), sol.gap()).with("omega", sol.primal_blocks[w].clone());
    if let Some((bp, bq)) = ball {
        r = r.with("rho_smoothed", smoothed_state(&sol, g.matrix(), bp, bq));
    }
    Ok(flagged(r, relaxed))
}

/// Min-relative entropy of entanglement across `partition`. At `ε = 0`:
/// `−log max Tr(Π_ρ ω)` over PPT states `ω`. For `ε > 0`, the inner
/// maximization over PPT states is dualized, giving
/// `min t  s.t.  0 ⪯ O ⪯ 𝟙, Tr(Oρ) ≥ 1 − ε, t𝟙 − O − Σ_S Γ_S(Y_S) ⪰ 0,
/// Y_S ⪰ 0`.
pub fn e_min(rho: &DensityMatrix, partition: &[Vec<usize>], smooth: SmoothParams) -> Result<MeasureResult> {
    let (g, relaxed) = grouped(rho, partition)?;
    let n = g.side();
    let dims = g.dims().to_vec();
    if smooth.eps() == 0.0 {
        let pi = g.op().support_projector(RANK_TOL)?.into_matrix();
        let mut p = SdpProblem::new(Sense::Max);
        let w = p.add_block(n);
        p.add_objective(w, SparseHermitian::from_dense(&pi));
        p.add_eq(vec![(w, SparseHermitian::identity(n))], 1.0);
        add_ppt_constraints(&mut p, w, &dims);
        let sol = solve_default(&p)?;
        let r = MeasureResult::sdp(-sol.primal_value.log2(), sol.gap()).with("omega", sol.primal_blocks[w].clone());
        return Ok(flagged(r, relaxed));
    }
    let mut p = SdpProblem::new(Sense::Min);
    let o = p.add_block(n);
    let t = p.add_block(1);
    p.add_objective(t, SparseHermitian::identity(1));
    add_test_constraints(&mut p, o, g.matrix(), smooth.eps());
    let mut terms = vec![scalar_identity_term(t, n), LinearTerm::identity(o, n).scaled(-1.0)];
    for cut in cuts(dims.len()) {
        let y = p.add_block(n);
        terms.push(transpose_term(y, &dims, &cut, -1.0));
    }
    p.add_psd(n, terms, None);
    let sol = solve_default(&p)?;
    let r = MeasureResult::sdp(-sol.primal_value.log2(), sol.gap()).with("test", sol.primal_blocks[o].clone());
    Ok(flagged(r, relaxed))
}

// ---------------------------------------------------------------------------
// Discord and correlation quantities
// ---------------------------------------------------------------------------

/// Moves `measured` to the front and returns the state as `d_A × d_B`.
fn measured_first(rho: &DensityMatrix, measured: usize) -> Result<(CMat, usize, usize)> {
    if measured >= rho.factors() {
        return Err(Error::FactorOutOfRange { index: measured, factors: rho.factors() });
    }
    let mut perm = vec![measured];
    perm.extend((0..rho.factors()).filter(|&k| k != measured));
    let m = rho.permute(&perm)?.into_op().into_matrix();
    let da = rho.dims()[measured];
    Ok((m, da, rho.side() / da))
}

/// `Σ_i p_i S(ρ_{B|i})` for the basis measurement on the first factor.
fn conditional_term(m: &CMat, da: usize, db: usize) -> f64 {
    (0..da)
        .map(|i| {
            let block = m.view((i * db, i * db), (db, db)).into_owned();
            let p = qmat::trace_re(&block);
            if p > 1e-14 {
                p * entropy_of_matrix(&block.unscale(p))
            } else {
                0.0
            }
        })
        .sum()
}

/// `S(ρ_A) − S(ρ_AB) + Σ_i p_i S(ρ_{B|i})` with the incoherent basis
/// measured on `measured` (all other factors form `B`).
pub fn basis_discord(rho: &DensityMatrix, measured: usize) -> Result<f64> {
    let (m, da, db) = measured_first(rho, measured)?;
    let s_a = marginal_entropy(rho, &[measured])?;
    Ok(s_a - von_neumann_entropy(rho) + conditional_term(&m, da, db))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscordOptions {
    /// Number of starting points, the identity measurement included.
    pub starts: usize,
    pub max_evaluations: usize,
    pub initial_step: f64,
    pub min_step: f64,
    pub seed: u64,
}

impl Default for DiscordOptions {
    fn default() -> Self {
        Self { starts: 6, max_evaluations: 4000, initial_step: 0.6, min_step: 1e-7, seed: 0 }
    }
}

fn unitary_from_params(x: &[f64], d: usize) -> CMat {
    let mut h = CMat::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        h[(i, i)] = cr(x[k]);
        k += 1;
        for j in i + 1..d {
            h[(i, j)] = qmat::c(x[k], x[k + 1]);
            h[(j, i)] = qmat::c(x[k], -x[k + 1]);
            k += 2;
        }
    }
    let (vals, vecs) = qmat::eigh(&h);
    let phases = nalgebra::DVector::from_iterator(d, vals.iter().map(|&v| num_complex::Complex64::from_polar(1.0, v)));
    &vecs * CMat::from_diagonal(&phases) * vecs.adjoint()
}

/// Quantum discord with the measurement on `measured`, minimized over
/// rank-one projective measurements `{U|i⟩}` by multi-start compass search
/// over `U = exp(iH)`. The identity start makes the result never exceed
/// [`basis_discord`]; for `d_A > 2` it is an upper estimate.
pub fn discord(rho: &DensityMatrix, measured: usize, opts: &DiscordOptions) -> Result<MeasureResult> {
    let (m, da, db) = measured_first(rho, measured)?;
    let s_a = marginal_entropy(rho, &[measured])?;
    let base = s_a - von_neumann_entropy(rho);
    let id_b = qmat::identity(db);
    let objective = |x: &[f64]| {
        let u = unitary_from_params(x, da).kronecker(&id_b);
        conditional_term(&(u.adjoint() * &m * &u), da, db)
    };
    let dim = da * da;
    let mut rng = SeededRng::new(opts.seed, 0);
    let mut best_x = vec![0.0; dim];
    let mut best_f = objective(&best_x);
    for start in 0..opts.starts.max(1) {
        let mut x: Vec<f64> = if start == 0 { vec![0.0; dim] } else { (0..dim).map(|_| std::f64::consts::PI * (2.0 * rng.uniform() - 1.0)).collect() };
        let mut f = objective(&x);
        let mut step = opts.initial_step;
        let mut evals = 0;
        while step > opts.min_step && evals < opts.max_evaluations {
            let mut improved = false;
            for k in 0..dim {
                for dir in [1.0, -1.0] {
                    let mut trial = x.clone();
                    trial[k] += dir * step;
                    let ft = objective(&trial);
                    evals += 1;
                    if ft < f - 1e-15 {
                        x = trial;
                        f = ft;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if f < best_f {
            best_f = f;
            best_x = x;
        }
    }
    let r = MeasureResult {
        value: base + best_f,
        method: Method::Relaxation,
        gap: 0.0,
        flags: BTreeSet::new(),
        certificate: Vec::new(),
    };
    Ok(r.with("measurement_basis", unitary_from_params(&best_x, da)))
}

fn union(groups: &[&[usize]]) -> Vec<usize> {
    let mut v: Vec<usize> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    v.sort_unstable();
    v
}

/// `I(A:B|C) = S(AC) + S(BC) − S(C) − S(ABC)`; groups must be disjoint and
/// `A`, `B` nonempty. Factors outside all groups are traced out.
pub fn conditional_mutual_information(rho: &DensityMatrix, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
    let all = union(&[a, b, c]);
    if a.is_empty() || b.is_empty() || all.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("groups must be disjoint with A and B nonempty".into()));
    }
    Ok(marginal_entropy(rho, &union(&[a, c]))? + marginal_entropy(rho, &union(&[b, c]))?
        - marginal_entropy(rho, c)?
        - marginal_entropy(rho, &all)?)
}

/// Relative entropy of coherence of the marginal on `keep`, with the listed
/// `classical` factors (original indices, all inside `keep`) dephased.
pub fn c_r_marginal(rho: &DensityMatrix, keep: &[usize], classical: &[usize]) -> Result<f64> {
    let keep = union(&[keep]);
    let positions: Vec<usize> = classical
        .iter()
        .map(|k| keep.iter().position(|x| x == k).ok_or_else(|| Error::InvalidArgument(format!("factor {k} not kept"))))
        .collect::<Result<_>>()?;
    let marginal = if keep.len() == rho.factors() { rho.clone() } else { rho.reduced(&keep)? };
    let pattern = DephasingPattern::new(&positions, marginal.factors())?;
    Ok(c_r(&marginal, &pattern)?.value)
}

/// `M = Σ_k C_r(A_k|B) − C_r(A_1…A_N|B)`, each term on the marginal of the
/// factors it involves.
pub fn monogamy_score(rho: &DensityMatrix, parts: &[usize], memory: &[usize]) -> Result<f64> {
    if parts.len() < 2 {
        return Err(Error::InvalidArgument("monogamy needs at least two parts".into()));
    }
    let mut sum = 0.0;
    for &a in parts {
        sum += c_r_marginal(rho, &union(&[&[a], memory]), &[a])?;
    }
    Ok(sum - c_r_marginal(rho, &union(&[parts, memory]), parts)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::c;

    fn plus() -> DensityMatrix {
        DensityMatrix::pure(&[2], &[cr(1.0), cr(1.0)]).unwrap()
    }

    fn phi_plus() -> DensityMatrix {
        DensityMatrix::pure(&[2, 2], &[cr(1.0), cr(0.0), cr(0.0), cr(1.0)]).unwrap()
    }

    fn ghz3() -> DensityMatrix {
        let mut a = vec![cr(0.0); 8];
        a[0] = cr(1.0);
        a[7] = cr(1.0);
        DensityMatrix::pure(&[2, 2, 2], &a).unwrap()
    }

    fn diag(dims: &[usize], d: &[f64]) -> DensityMatrix {
        DensityMatrix::new(qmat::MultipartiteOperator::diagonal(dims, d).unwrap()).unwrap()
    }

    const A: fn() -> DephasingPattern = || DephasingPattern::single(0);

    #[test]
    fn entropy_examples() {
        assert!(von_neumann_entropy(&plus()).abs() < 1e-12);
        assert!((von_neumann_entropy(&DensityMatrix::maximally_mixed(&[2])) - 1.0).abs() < 1e-12);
        let h = -0.75f64 * 0.75f64.log2() - 0.25 * 0.25f64.log2();
        assert!((von_neumann_entropy(&diag(&[2], &[0.75, 0.25])) - h).abs() < 1e-12);
        assert!((h - 0.811_278_124_459_132_8).abs() < 1e-15);
    }

    #[test]
    fn relative_entropy_examples() {
        let r = plus();
        assert!(relative_entropy(&r, &r).unwrap().value().abs() < 1e-9);
        let mixed = DensityMatrix::maximally_mixed(&[2]);
        assert!((relative_entropy(&r, &mixed).unwrap().value() - 1.0).abs() < 1e-12);
        let zero = DensityMatrix::basis_state(&[2], 0).unwrap();
        let one = DensityMatrix::basis_state(&[2], 1).unwrap();
        assert_eq!(relative_entropy(&zero, &one).unwrap(), Divergence::SupportInfinite);
    }

    #[test]
    fn d_max_examples() {
        let r = plus();
        assert!(d_max(&r, &r).unwrap().value().abs() < 1e-9);
        assert!((d_max(&r, &DensityMatrix::maximally_mixed(&[2])).unwrap().value() - 1.0).abs() < 1e-12);
        let zero = DensityMatrix::basis_state(&[2], 0).unwrap();
        assert!((d_max(&zero, &diag(&[2], &[0.25, 0.75])).unwrap().value() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn d_min_examples() {
        let full = diag(&[2], &[0.3, 0.7]);
        assert!(d_min(&full, &full).unwrap().value().abs() < 1e-12);
        assert!((d_min(&plus(), &DensityMatrix::maximally_mixed(&[2])).unwrap().value() - 1.0).abs() < 1e-12);
        let zero = DensityMatrix::basis_state(&[2], 0).unwrap();
        let one = DensityMatrix::basis_state(&[2], 1).unwrap();
        assert_eq!(d_min(&zero, &one).unwrap(), Divergence::SupportInfinite);
    }

    #[test]
    fn c_r_examples() {
        assert!((c_r(&plus(), &A()).unwrap().value - 1.0).abs() < 1e-12);
        assert!((c_r(&phi_plus(), &A()).unwrap().value - 1.0).abs() < 1e-12);
        let d = diag(&[2, 2], &[0.1, 0.2, 0.3, 0.4]);
        assert!(c_r(&d, &DephasingPattern::full(2)).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn c_max_examples() {
        let r = c_max(&plus(), &A(), SmoothParams::zero()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-7);
        let tau = r.certificate("tau").unwrap();
        assert!((qmat::inner_re(plus().matrix(), tau) - 2.0).abs() < 1e-7);

        let r = c_max(&phi_plus(), &A(), SmoothParams::zero()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-7);
        let tau = r.certificate("tau").unwrap();
        let deph = qmat::dephase_matrix(tau, &[2, 2], &[0]).unwrap();
        assert!(qmat::max_abs(&(deph - qmat::identity(4))) < 1e-12);

        let d = diag(&[2, 2], &[0.1, 0.2, 0.3, 0.4]);
        assert!(c_max(&d, &DephasingPattern::full(2), SmoothParams::zero()).unwrap().value.abs() < 1e-7);
    }

    #[test]
    fn lemma1_dual_matches_primal_on_phi_plus() {
        let r = c_max_dual(&phi_plus(), &A()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-7);
        // The closed-form dual witness 2Φ⁺ + |01⟩⟨01| + |10⟩⟨10| attains Tr(ρτ) = 2.
        let mut tau = phi_plus().matrix().scale(2.0);
        tau[(1, 1)] += cr(1.0);
        tau[(2, 2)] += cr(1.0);
        assert!(qmat::max_abs(&(qmat::dephase_matrix(&tau, &[2, 2], &[0]).unwrap() - qmat::identity(4))) < 1e-15);
        assert!((qmat::inner_re(phi_plus().matrix(), &tau) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn c_min_examples() {
        assert!((c_min(&plus(), &A(), SmoothParams::zero()).unwrap().value - 1.0).abs() < 1e-12);
        assert!((c_min(&phi_plus(), &A(), SmoothParams::zero()).unwrap().value - 1.0).abs() < 1e-12);
        let rho = DensityMatrix::pure(&[2, 2], &[c(0.5, 0.1), cr(0.3), c(0.0, 0.6), cr(0.4)]).unwrap();
        let closed = c_min(&rho, &A(), SmoothParams::zero()).unwrap().value;
        let via_sdp = c_min_sdp(&rho, &A(), SmoothParams::zero()).unwrap().value;
        assert!((closed - via_sdp).abs() < 1e-7, "{closed} vs {via_sdp}");
    }

    #[test]
    fn smoothing_lowers_c_max() {
        let r0 = c_max(&plus(), &A(), SmoothParams::zero()).unwrap().value;
        let r1 = c_max(&plus(), &A(), SmoothParams::new(0.05).unwrap()).unwrap().value;
        assert!(r1 <= r0 + 1e-7);
        assert!(SmoothParams::new(1.0).is_err());
        let s = SmoothParams::new(0.01).unwrap();
        assert!((s.eps_prime() - 0.21).abs() < 1e-15);
        assert!((s.eps_double_prime() - (0.01 + 2.0 * 0.02f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn entanglement_examples() {
        let ab = vec![vec![0], vec![1]];
        let r = e_max(&phi_plus(), &ab, SmoothParams::zero()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6);
        assert!(!r.has_flag(Flag::PptRelaxed));
        assert!((e_min(&phi_plus(), &ab, SmoothParams::zero()).unwrap().value - 1.0).abs() < 1e-6);
        let prod = diag(&[2], &[0.3, 0.7]).tensor(&plus());
        assert!(e_max(&prod, &ab, SmoothParams::zero()).unwrap().value.abs() < 1e-6);
        assert!(e_min(&prod, &ab, SmoothParams::zero()).unwrap().value.abs() < 1e-6);
        let r = e_max(&ghz3(), &[vec![0], vec![1], vec![2]], SmoothParams::zero()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6);
        assert!(r.has_flag(Flag::PptRelaxed));
    }

    #[test]
    fn discord_examples() {
        assert!((basis_discord(&phi_plus(), 0).unwrap() - 1.0).abs() < 1e-12);
        let cc = diag(&[2, 2], &[0.5, 0.0, 0.0, 0.5]);
        assert!(basis_discord(&cc, 0).unwrap().abs() < 1e-12);
        assert!(discord(&cc, 0, &DiscordOptions::default()).unwrap().value.abs() < 1e-9);
        let prod = diag(&[2], &[0.3, 0.7]).tensor(&plus());
        assert!(basis_discord(&prod, 0).unwrap().abs() < 1e-12);
        assert!((discord(&phi_plus(), 0, &DiscordOptions::default()).unwrap().value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cmi_and_monogamy_examples() {
        assert!((conditional_mutual_information(&ghz3(), &[0], &[1], &[2]).unwrap() - 1.0).abs() < 1e-12);
        assert!((monogamy_score(&ghz3(), &[0, 1], &[2]).unwrap() + 1.0).abs() < 1e-12);
        let prod = diag(&[2, 2, 2], &[0.1, 0.2, 0.05, 0.15, 0.1, 0.1, 0.2, 0.1]);
        assert!(monogamy_score(&prod, &[0, 1], &[2]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn basis_identity_holds() {
        let rho = DensityMatrix::pure(&[2, 2], &[c(0.5, 0.1), cr(0.3), c(0.0, 0.6), cr(0.4)]).unwrap();
        let lhs = c_r(&rho, &A()).unwrap().value;
        let rhs = c_r(&rho.reduced(&[0]).unwrap(), &DephasingPattern::full(1)).unwrap().value + basis_discord(&rho, 0).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
