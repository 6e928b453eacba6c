//! Subchannel discrimination: instruments acting on the first factor,
//! optimal and incoherent-quantum success probabilities, and the canonical
//! construction that attains the ratio `2^{C_max(A|B)}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{self, SmoothParams};
use crate::qmat::{self, cr, CMat, DensityMatrix, DephasingPattern, KrausChannel, MultipartiteOperator, Povm};
use crate::sampler::{self, SeededRng};
use crate::sdp::{self, LinearTerm, Sense, SdpProblem, SolveOptions, SparseHermitian};

/// Tolerance for POVMs reconstructed from solver output.
const POVM_TOL: f64 = 1e-7;

/// Ordered subchannels that sum to a channel.
#[derive(Clone, Debug)]
pub struct Instrument {
    subchannels: Vec<KrausChannel>,
    completeness_tol: f64,
    incoherent: bool,
    canonical: bool,
}

impl Instrument {
    /// Checks total trace preservation, and the one-nonzero-per-column form
    /// of every Kraus operator when `incoherent` is asserted.
    pub fn new(subchannels: Vec<KrausChannel>, incoherent: bool) -> Result<Self> {
        Self::with_tolerance(subchannels, incoherent, 1e-10)
    }

    pub fn with_tolerance(subchannels: Vec<KrausChannel>, incoherent: bool, completeness_tol: f64) -> Result<Self> {
        let first = subchannels.first().ok_or_else(|| Error::InvalidArgument("instrument needs a subchannel".into()))?;
        let (din, dout) = (first.input_dim(), first.output_dim());
        if subchannels.iter().any(|s| s.input_dim() != din || s.output_dim() != dout) {
            return Err(Error::Shape("subchannels must share input and output dimensions".into()));
        }
        let total = subchannels.iter().fold(CMat::zeros(din, din), |acc, s| acc + s.completeness_operator());
        let dev = (total - qmat::identity(din)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if dev > completeness_tol {
            return Err(Error::Completeness(dev));
        }
        if incoherent && !subchannels.iter().all(|s| s.is_structurally_incoherent(1e-12)) {
            return Err(Error::InvalidArgument("a Kraus operator has two nonzero entries in one column".into()));
        }
        Ok(Self { subchannels, completeness_tol, incoherent, canonical: false })
    }

    pub fn subchannels(&self) -> &[KrausChannel] {
        &self.subchannels
    }

    pub fn len(&self) -> usize {
        self.subchannels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subchannels.is_empty()
    }

    pub fn is_incoherent(&self) -> bool {
        self.incoherent
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    pub fn completeness_tol(&self) -> f64 {
        self.completeness_tol
    }

    pub fn input_dim(&self) -> usize {
        self.subchannels[0].input_dim()
    }

    /// Output of branch `k` on a state whose first factor is the input.
    pub fn apply_branch(&self, k: usize, rho: &MultipartiteOperator) -> Result<MultipartiteOperator> {
        self.subchannels[k].apply(rho, &[0])
    }
}

/// `U_k = exp(2πi k H / d)` with `H = Σ_j j|j⟩⟨j|`.
pub fn canonical_unitary(d: usize, k: usize) -> CMat {
    let diag = (0..d).map(|j| Complex64::from_polar(1.0, std::f64::consts::TAU * ((k * j) % d) as f64 / d as f64));
    CMat::from_diagonal(&nalgebra::DVector::from_iterator(d, diag))
}

/// `d` subchannels with single Kraus operators `U_k / √d`.
pub fn canonical_instrument(d: usize) -> Result<Instrument> {
    if d < 2 {
        return Err(Error::InvalidArgument("canonical instrument needs d >= 2".into()));
    }
    let w = 1.0 / (d as f64).sqrt();
    let subs = (0..d).map(|k| KrausChannel::new(vec![canonical_unitary(d, k).scale(w)])).collect::<Result<Vec<_>>>()?;
    let mut inst = Instrument::new(subs, true)?;
    inst.canonical = true;
    Ok(inst)
}

fn check_game(inst: &Instrument, rho: &MultipartiteOperator) -> Result<()> {
    if rho.dims().first() != Some(&inst.input_dim()) {
        return Err(Error::Shape(format!("instrument acts on dimension {} but the first factor has dims {:?}", inst.input_dim(), rho.dims())));
    }
    Ok(())
}

/// `Σ_k Tr(ℰ_k(ρ) M_k)`.
pub fn p_succ_given(inst: &Instrument, povm: &Povm, rho: &DensityMatrix) -> Result<f64> {
    check_game(inst, rho.op())?;
    if povm.len() != inst.len() {
        return Err(Error::Shape(format!("{} POVM elements for {} subchannels", povm.len(), inst.len())));
    }
    let mut total = 0.0;
    for (k, m) in povm.elements().iter().enumerate() {
        let out = inst.apply_branch(k, rho.op())?;
        if out.side() != m.side() {
            return Err(Error::Shape("POVM element does not match the branch output".into()));
        }
        total += qmat::inner_re(out.matrix(), m.matrix());
    }
    Ok(total)
}

fn discrimination(outputs: &[MultipartiteOperator]) -> Result<(f64, Povm)> {
    let n = outputs[0].side();
    let mut p = SdpProblem::new(Sense::Max);
    let blocks: Vec<usize> = outputs.iter().map(|_| p.add_block(n)).collect();
    for (&b, out) in blocks.iter().zip(outputs) {
        p.add_objective(b, SparseHermitian::from_dense(out.matrix()));
    }
    let terms: Vec<LinearTerm> = blocks.iter().map(|&b| LinearTerm::identity(b, n)).collect();
    p.add_matrix_eq(n, &terms, &qmat::identity(n));
    let sol = sdp::solve(&p, &SolveOptions::default())?.require_optimal()?;
    let dims = outputs[0].dims().to_vec();
    let elements = sol
        .primal_blocks
        .iter()
        .map(|m| MultipartiteOperator::new(dims.clone(), qmat::hermitian_part(m)))
        .collect::<Result<Vec<_>>>()?;
    Ok((sol.primal_value, Povm::new(elements, POVM_TOL)?))
}

/// Optimal discrimination of the branch outputs over joint POVMs.
pub fn p_succ_optimal(inst: &Instrument, rho: &DensityMatrix) -> Result<(f64, Povm)> {
    check_game(inst, rho.op())?;
    let outputs = (0..inst.len()).map(|k| inst.apply_branch(k, rho.op())).collect::<Result<Vec<_>>>()?;
    discrimination(&outputs)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeeSawOptions {
    pub starts: usize,
    pub alternations: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for SeeSawOptions {
    fn default() -> Self {
        Self { starts: 8, alternations: 50, tol: 1e-9, seed: 0 }
    }
}

fn product_input(dims: &[usize], i: usize, phi: &CMat) -> Result<DensityMatrix> {
    let da = dims[0];
    let mut amps = vec![cr(0.0); qmat::product(dims)];
    let db = amps.len() / da;
    for b in 0..db {
        amps[i * db + b] = phi[(b, 0)];
    }
    DensityMatrix::pure(dims, &amps)
}

/// Best success probability over incoherent-quantum inputs
/// `|i⟩⟨i| ⊗ |φ⟩⟨φ|`. The canonical instrument returns the exact `1/d_A`;
/// otherwise every basis index `i` is tried with a multi-start see-saw
/// between the optimal POVM and the leading eigenvector of the effective
/// operator on `B`, so the value is a lower bound in general.
pub fn p_succ_iq(inst: &Instrument, dims: &[usize], opts: &SeeSawOptions) -> Result<(f64, DensityMatrix)> {
    if dims.first() != Some(&inst.input_dim()) {
        return Err(Error::Shape("first factor must match the instrument input".into()));
    }
    let da = dims[0];
    let db = qmat::product(dims) / da;
    let mut e0 = CMat::zeros(db, 1);
    e0[(0, 0)] = cr(1.0);
    if inst.is_canonical() {
        return Ok((1.0 / da as f64, product_input(dims, 0, &e0)?));
    }
    let mut rng = SeededRng::new(opts.seed, 0);
    let mut best = (f64::NEG_INFINITY, product_input(dims, 0, &e0)?);
    for i in 0..da {
        let starts = if db == 1 { 1 } else { opts.starts.max(1) };
        for _ in 0..starts {
            let mut phi = if db == 1 { e0.clone() } else { sampler::ginibre_matrix(db, 1, &mut rng) };
            phi.unscale_mut(phi.norm());
            let mut value = f64::NEG_INFINITY;
            for _ in 0..opts.alternations.max(1) {
                let sigma = product_input(dims, i, &phi)?;
                let (p, povm) = p_succ_optimal(inst, &sigma)?;
                let improved = p > value + opts.tol;
                value = value.max(p);
                if value > best.0 {
                    best = (value, sigma);
                }
                if db == 1 || !improved {
                    break;
                }
                phi = leading_b_vector(inst, dims, i, &povm)?;
            }
        }
    }
    Ok(best)
}

/// Top eigenvector of `F = Σ_k Tr_A[(ℰ_k(|i⟩⟨i|) ⊗ 𝟙) M_k]`.
fn leading_b_vector(inst: &Instrument, dims: &[usize], i: usize, povm: &Povm) -> Result<CMat> {
    let da = dims[0];
    let db = qmat::product(dims) / da;
    let ket = MultipartiteOperator::diagonal(&[da], &(0..da).map(|j| if j == i { 1.0 } else { 0.0 }).collect::<Vec<_>>())?;
    let mut f = CMat::zeros(db, db);
    for (k, m) in povm.elements().iter().enumerate() {
        let out_a = inst.apply_branch(k, &ket)?.into_matrix();
        let dout = out_a.nrows();
        let big = out_a.kronecker(&qmat::identity(db)) * m.matrix();
        let (reduced, _) = qmat::partial_trace_matrix(&big, &[dout, db], &[1])?;
        f += reduced;
    }
    let (_, vecs) = qmat::eigh(&qmat::hermitian_part(&f));
    Ok(CMat::from_column_slice(db, 1, vecs.column(db - 1).as_slice()))
}

/// `N_k = U_k τ U_k† / d_A` from an optimizer `τ` of [`crate::measures::lemma1_dual`]; branch `k`
/// outputs `U_k ρ U_k† / d_A`, so the success probability is `Tr(ρτ) / d_A`.
pub fn povm_from_dual(rho: &DensityMatrix, tau: &MultipartiteOperator, d_a: usize) -> Result<Povm> {
    if tau.dims() != rho.dims() || rho.dims().first() != Some(&d_a) {
        return Err(Error::Shape("tau must share the state's dims, with d_A first".into()));
    }
    let min = tau.min_eigenvalue();
    if min < -POVM_TOL {
        return Err(Error::InfeasibleCertificate(format!("tau has eigenvalue {min:e}")));
    }
    let deph = tau.dephase(&DephasingPattern::single(0))?;
    let dev = qmat::max_abs(&(deph.matrix() - qmat::identity(tau.side())));
    if dev > POVM_TOL {
        return Err(Error::InfeasibleCertificate(format!("dephased tau differs from identity by {dev:e}")));
    }
    let db = tau.side() / d_a;
    let elements = (0..d_a)
        .map(|k| {
            let u = canonical_unitary(d_a, k).kronecker(&qmat::identity(db));
            let n = (&u * tau.matrix() * u.adjoint()).unscale(d_a as f64);
            MultipartiteOperator::new(tau.dims().to_vec(), qmat::hermitian_part(&n))
        })
        .collect::<Result<Vec<_>>>()?;
    Povm::new(elements, POVM_TOL)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RandomInstrumentTrial {
    pub branches: usize,
    pub p_succ: f64,
    pub p_succ_iq: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GameResult {
    pub d_a: usize,
    pub c_max: f64,
    /// `2^{C_max(A|B)}`.
    pub bound: f64,
    /// Canonical instrument with the dual-certificate POVM.
    pub p_succ: f64,
    pub p_succ_iq: f64,
    pub ratio: f64,
    pub ratio_error: f64,
    /// Canonical instrument with the optimal POVM from the discrimination SDP.
    pub p_succ_optimal: f64,
    #[serde(with = "crate::io::vec_cmat")]
    pub povm: Vec<CMat>,
    #[serde(with = "crate::io::opt_cmat")]
    pub witness_state: Option<CMat>,
    pub random_instruments: Vec<RandomInstrumentTrial>,
    /// `max(ratio − bound)` over the random instruments (≤ 0 expected).
    pub max_random_excess: f64,
    pub notes: Vec<String>,
}

/// Merges every factor after the first into one `B` factor.
pub fn as_bipartite(rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.factors() < 2 {
        return Err(Error::InvalidArgument("state must have at least two factors".into()));
    }
    let da = rho.dims()[0];
    rho.with_dims(vec![da, rho.side() / da])
}

/// Runs the constructive proof: `C_max(A|B)` with its dual witness, the
/// canonical instrument and POVM, the resulting ratio, and the one-sided
/// bound for `k_random` random incoherent instruments.
pub fn verify_theorem1(rho: &DensityMatrix, k_random: usize, seed: u64) -> Result<GameResult> {
    let rho = as_bipartite(rho)?;
    let da = rho.dims()[0];
    let cm = measures::c_max(&rho, &DephasingPattern::single(0), SmoothParams::zero())?;
    let tau = cm.certificate("tau").cloned().ok_or_else(|| Error::InfeasibleCertificate("missing tau".into()))?;
    let tau = MultipartiteOperator::new(rho.dims().to_vec(), tau)?;
    let bound = cm.value.exp2();
    let inst = canonical_instrument(da)?;
    let povm = povm_from_dual(&rho, &tau, da)?;
    let p_succ = p_succ_given(&inst, &povm, &rho)?;
    let (p_iq, witness) = p_succ_iq(&inst, rho.dims(), &SeeSawOptions::default())?;
    let (p_opt, _) = p_succ_optimal(&inst, &rho)?;
    let ratio = p_succ / p_iq;

    let mut rng = SeededRng::new(seed, 0);
    let see_saw = SeeSawOptions { seed, ..SeeSawOptions::default() };
    let mut trials = Vec::with_capacity(k_random);
    let mut max_excess = f64::NEG_INFINITY;
    for _ in 0..k_random {
        let branches = 2 + rng.below(2);
        let random = sampler::random_incoherent_channel(da, branches, &mut rng)?;
        let (p, _) = p_succ_optimal(&random, &rho)?;
        let (q, _) = p_succ_iq(&random, rho.dims(), &see_saw)?;
        let r = p / q;
        max_excess = max_excess.max(r - bound);
        trials.push(RandomInstrumentTrial { branches, p_succ: p, p_succ_iq: q, ratio: r });
    }
    let notes = vec![
        "canonical instrument: p_succ_iq is the exact value 1/d_A".to_string(),
        "random instruments: p_succ_iq from the see-saw (a lower bound)".to_string(),
    ];
    Ok(GameResult {
        d_a: da,
        c_max: cm.value,
        bound,
        p_succ,
        p_succ_iq: p_iq,
        ratio,
        ratio_error: (ratio - bound).abs(),
        p_succ_optimal: p_opt,
        povm: povm.elements().iter().map(|e| e.matrix().clone()).collect(),
        witness_state: Some(witness.into_op().into_matrix()),
        random_instruments: trials,
        max_random_excess: if k_random == 0 { 0.0 } else { max_excess },
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phi_plus() -> DensityMatrix {
        DensityMatrix::pure(&[2, 2], &[cr(1.0), cr(0.0), cr(0.0), cr(1.0)]).unwrap()
    }

    #[test]
    fn canonical_instrument_examples() {
        let inst = canonical_instrument(2).unwrap();
        let k1 = &inst.subchannels()[1].kraus()[0];
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((k1[(0, 0)] - cr(h)).norm() < 1e-15 && (k1[(1, 1)] - cr(-h)).norm() < 1e-15);
        let u = canonical_unitary(3, 1);
        let w = Complex64::from_polar(1.0, std::f64::consts::TAU / 3.0);
        assert!((u[(1, 1)] - w).norm() < 1e-15 && (u[(2, 2)] - w * w).norm() < 1e-15);
        let inst3 = canonical_instrument(3).unwrap();
        let total = inst3.subchannels().iter().fold(CMat::zeros(3, 3), |a, s| a + s.completeness_operator());
        assert!(qmat::max_abs(&(total - qmat::identity(3))) < 1e-15);
        assert!(canonical_instrument(1).is_err());
    }

    #[test]
    fn trivial_success_probabilities() {
        let id = Instrument::new(vec![KrausChannel::identity(2)], true).unwrap();
        let rho = phi_plus();
        let one = Povm::new(vec![MultipartiteOperator::identity(&[2, 2])], 1e-12).unwrap();
        assert!((p_succ_given(&id, &one, &rho).unwrap() - 1.0).abs() < 1e-12);
        let inst = canonical_instrument(3).unwrap();
        let rho3 = DensityMatrix::maximally_mixed(&[3, 2]);
        let uniform = Povm::uniform(&[3, 2], 3);
        assert!((p_succ_given(&inst, &uniform, &rho3).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfectly_distinguishable_branches() {
        let inst = Instrument::new(KrausChannel::dephasing(2).kraus().iter().map(|k| KrausChannel::new(vec![k.clone()]).unwrap()).collect(), true).unwrap();
        let rho = DensityMatrix::maximally_mixed(&[2, 1]);
        let (p, _) = p_succ_optimal(&inst, &rho).unwrap();
        assert!((p - 1.0).abs() < 1e-7);
    }

    #[test]
    fn canonical_values() {
        let inst = canonical_instrument(2).unwrap();
        let iq = DensityMatrix::new(MultipartiteOperator::diagonal(&[2, 2], &[0.5, 0.0, 0.0, 0.5]).unwrap()).unwrap();
        assert!((p_succ_optimal(&inst, &iq).unwrap().0 - 0.5).abs() < 1e-7);
        assert!((p_succ_optimal(&inst, &phi_plus()).unwrap().0 - 1.0).abs() < 1e-7);
        assert_eq!(p_succ_iq(&inst, &[2, 2], &SeeSawOptions::default()).unwrap().0, 0.5);
        let inst3 = canonical_instrument(3).unwrap();
        assert!((p_succ_iq(&inst3, &[3, 2], &SeeSawOptions::default()).unwrap().0 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn see_saw_on_z_twirl() {
        // Branches ½(·) and ½Z(·)Z coincide on diagonal inputs.
        let z = CMat::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(-1.0)]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let subs = vec![KrausChannel::new(vec![qmat::identity(2).scale(h)]).unwrap(), KrausChannel::new(vec![z.scale(h)]).unwrap()];
        let inst = Instrument::new(subs, true).unwrap();
        let (p, _) = p_succ_iq(&inst, &[2, 1], &SeeSawOptions::default()).unwrap();
        assert!((p - 0.5).abs() < 1e-7);
        // Same value on the canonical instrument through the see-saw path.
        let mut plain = canonical_instrument(2).unwrap();
        plain.canonical = false;
        let (p, _) = p_succ_iq(&plain, &[2, 2], &SeeSawOptions::default()).unwrap();
        assert!((p - 0.5).abs() < 1e-7);
    }

    #[test]
    fn povm_from_dual_examples() {
        let rho = phi_plus();
        let mut tau = rho.matrix().scale(2.0);
        tau[(1, 1)] += cr(1.0);
        tau[(2, 2)] += cr(1.0);
        let tau = MultipartiteOperator::new(vec![2, 2], tau).unwrap();
        let povm = povm_from_dual(&rho, &tau, 2).unwrap();
        assert!(povm.completeness_error() < 1e-12);
        let inst = canonical_instrument(2).unwrap();
        assert!((p_succ_given(&inst, &povm, &rho).unwrap() - 1.0).abs() < 1e-12);

        let id = MultipartiteOperator::identity(&[2, 2]);
        let uniform = povm_from_dual(&rho, &id, 2).unwrap();
        for e in uniform.elements() {
            assert!(qmat::max_abs(&(e.matrix() - qmat::identity(4).scale(0.5))) < 1e-15);
        }
        let bad = MultipartiteOperator::identity(&[2, 2]).scale(2.0);
        assert!(matches!(povm_from_dual(&rho, &bad, 2), Err(Error::InfeasibleCertificate(_))));
    }

    #[test]
    fn game_ratio_on_phi_plus_and_iq_state() {
        let g = verify_theorem1(&phi_plus(), 3, 1).unwrap();
        assert!((g.ratio - 2.0).abs() < 1e-6 && g.ratio_error < 1e-6);
        assert!(g.max_random_excess <= 1e-6);
        let iq = DensityMatrix::new(MultipartiteOperator::diagonal(&[2, 2], &[0.25, 0.25, 0.5, 0.0]).unwrap()).unwrap();
        let g = verify_theorem1(&iq, 0, 1).unwrap();
        assert!((g.ratio - 1.0).abs() < 1e-6);
    }

    #[test]
    fn game_ratio_with_a_qutrit() {
        let mut amps = vec![cr(0.0); 9];
        for j in 0..3 {
            amps[4 * j] = cr(1.0);
        }
        let g = verify_theorem1(&DensityMatrix::pure(&[3, 3], &amps).unwrap(), 0, 0).unwrap();
        assert!((g.bound - 3.0).abs() < 1e-6 && (g.ratio - 3.0).abs() < 1e-6);
        let mut rng = SeededRng::new(1, 0);
        let rho = sampler::suite_state(&[3, 2], &mut rng).unwrap();
        let g = verify_theorem1(&rho, 0, 0).unwrap();
        assert!((g.ratio - g.bound).abs() < 1e-6, "{} vs {}", g.ratio, g.bound);
        assert!((g.p_succ - g.p_succ_optimal).abs() < 1e-6);
    }

    #[test]
    fn rejects_coherent_kraus_when_flagged() {
        let h = CMat::from_row_slice(2, 2, &[cr(1.0), cr(1.0), cr(1.0), cr(-1.0)]).scale(std::f64::consts::FRAC_1_SQRT_2);
        let ch = KrausChannel::new(vec![h]).unwrap();
        assert!(Instrument::new(vec![ch.clone()], true).is_err());
        assert!(Instrument::new(vec![ch], false).is_ok());
        let half = KrausChannel::new(vec![qmat::identity(2).scale(0.5)]).unwrap();
        assert!(matches!(Instrument::new(vec![half], true), Err(Error::Completeness(_))));
    }
}
