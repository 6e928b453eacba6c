//! Seeded random states, unitaries, incoherent-quantum states and channels.
//!
//! Every draw comes from a ChaCha8 stream selected by `(seed, stream)`, so a
//! master seed fans out to independent, reproducible per-trial streams.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::discgame::Instrument;
use crate::error::{Error, Result};
use crate::qmat::{self, c, cr, CMat, DensityMatrix, DephasingPattern, KrausChannel, MultipartiteOperator};

/// Probability that a suite draw is rank deficient.
pub const RANK_DEFICIENT_FRACTION: f64 = 0.25;

#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Fresh generator on another stream of the same seed.
    pub fn fork(&self, stream: u64) -> Self {
        Self::new(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random::<u64>()
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Standard complex normal with `E|z|² = 1`.
    pub fn complex_normal(&mut self) -> Complex64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        c(self.normal() * s, self.normal() * s)
    }

    pub fn phase(&mut self) -> Complex64 {
        Complex64::from_polar(1.0, std::f64::consts::TAU * self.uniform())
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut self.rng);
        p
    }

    /// Probability vector with i.i.d. exponential weights (flat Dirichlet).
    pub fn simplex(&mut self, n: usize) -> Vec<f64> {
        let w: Vec<f64> = (0..n).map(|_| -(1.0 - self.uniform()).ln() + 1e-300).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    }
}

pub fn ginibre_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> CMat {
    CMat::from_fn(rows, cols, |_, _| rng.complex_normal())
}

/// `G G† / Tr(G G†)` for a `d × rank` complex Gaussian `G`.
pub fn ginibre_state(dims: &[usize], rank: usize, rng: &mut SeededRng) -> Result<DensityMatrix> {
    let d = qmat::product(dims);
    if rank == 0 || rank > d {
        return Err(Error::InvalidArgument(format!("rank {rank} outside 1..={d}")));
    }
    let g = ginibre_matrix(d, rank, rng);
    let m = qmat::hermitian_part(&(&g * g.adjoint()));
    let tr = qmat::trace_re(&m);
    DensityMatrix::from_matrix(dims.to_vec(), m.unscale(tr))
}

/// Full rank with probability 3/4, otherwise a uniformly chosen smaller rank.
pub fn suite_state(dims: &[usize], rng: &mut SeededRng) -> Result<DensityMatrix> {
    let d = qmat::product(dims);
    let rank = if d > 1 && rng.uniform() < RANK_DEFICIENT_FRACTION { 1 + rng.below(d - 1) } else { d };
    ginibre_state(dims, rank, rng)
}

pub fn pure_state(dims: &[usize], rng: &mut SeededRng) -> Result<DensityMatrix> {
    ginibre_state(dims, 1, rng)
}

/// Haar unitary from the QR decomposition of a Ginibre matrix, with the
/// phases of `R`'s diagonal absorbed into `Q`.
pub fn haar_unitary(d: usize, rng: &mut SeededRng) -> CMat {
    let qr = ginibre_matrix(d, d, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        let rjj = r[(j, j)];
        let ph = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { cr(1.0) };
        for i in 0..d {
            q[(i, j)] *= ph;
        }
    }
    q
}

pub fn random_hermitian(d: usize, rng: &mut SeededRng) -> CMat {
    qmat::hermitian_part(&ginibre_matrix(d, d, rng))
}

/// Random effect `0 ⪯ M ⪯ 𝟙`: a Haar eigenbasis with uniform eigenvalues.
pub fn random_effect(d: usize, rng: &mut SeededRng) -> CMat {
    let u = haar_unitary(d, rng);
    let vals = DVector::from_fn(d, |_, _| cr(rng.uniform()));
    qmat::hermitian_part(&(&u * CMat::from_diagonal(&vals) * u.adjoint()))
}

/// `Σ_k p_k (diagonal state on the classical factors) ⊗ (Ginibre state on
/// the rest)`, reordered back to the original factor order.
pub fn random_iq_state(dims: &[usize], pattern: &DephasingPattern, terms: usize, rng: &mut SeededRng) -> Result<DensityMatrix> {
    if terms == 0 {
        return Err(Error::InvalidArgument("terms must be at least 1".into()));
    }
    pattern.check(dims.len())?;
    let classical: Vec<usize> = pattern.to_vec();
    let quantum: Vec<usize> = (0..dims.len()).filter(|k| !pattern.contains(*k)).collect();
    let cdims: Vec<usize> = classical.iter().map(|&k| dims[k]).collect();
    let qdims: Vec<usize> = quantum.iter().map(|&k| dims[k]).collect();
    let dc = qmat::product(&cdims);
    let dq = qmat::product(&qdims);
    let weights = rng.simplex(terms);
    let mut m = CMat::zeros(dc * dq, dc * dq);
    for w in weights {
        let diag = rng.simplex(dc);
        let cpart = CMat::from_diagonal(&DVector::from_iterator(dc, diag.into_iter().map(cr)));
        let rank = 1 + rng.below(dq);
        let qpart = ginibre_state(&[dq], rank, rng)?.matrix().clone();
        m += cpart.kronecker(&qpart).scale(w);
    }
    let mut order_dims = cdims;
    order_dims.extend(&qdims);
    let order: Vec<usize> = classical.iter().chain(&quantum).copied().collect();
    let mut inverse = vec![0; dims.len()];
    for (pos, &k) in order.iter().enumerate() {
        inverse[k] = pos;
    }
    let (back, _) = qmat::permute_matrix(&m, &order_dims, &inverse)?;
    DensityMatrix::from_matrix(dims.to_vec(), back)
}

/// Random incoherent instrument on a `d`-level system. Every branch holds a
/// single Kraus operator `Σ_j c_bj |π_b(j)⟩⟨j|` with a random permutation
/// `π_b` and random phases; the moduli `|c_bj|²` split each column's unit
/// weight across branches, some of them zero.
pub fn random_incoherent_channel(d: usize, branches: usize, rng: &mut SeededRng) -> Result<Instrument> {
    if branches == 0 || d == 0 {
        return Err(Error::InvalidArgument("need at least one branch and a positive dimension".into()));
    }
    let mut weights = vec![vec![0.0; d]; branches];
    for j in 0..d {
        let mut w: Vec<f64> = (0..branches).map(|_| if rng.uniform() < 0.3 { 0.0 } else { rng.uniform() }).collect();
        if w.iter().all(|&x| x == 0.0) {
            w[rng.below(branches)] = 1.0;
        }
        let s: f64 = w.iter().sum();
        for b in 0..branches {
            weights[b][j] = w[b] / s;
        }
    }
    let mut subchannels = Vec::with_capacity(branches);
    for row in weights {
        let perm = rng.permutation(d);
        let mut k = CMat::zeros(d, d);
        for j in 0..d {
            k[(perm[j], j)] = rng.phase() * row[j].sqrt();
        }
        subchannels.push(KrausChannel::new(vec![k])?);
    }
    Instrument::new(subchannels, true)
}

/// Random CPTP map `d_in → d_out` with `n_kraus` Kraus operators, obtained
/// by slicing a random isometry.
pub fn random_channel(d_in: usize, d_out: usize, n_kraus: usize, rng: &mut SeededRng) -> Result<KrausChannel> {
    if n_kraus == 0 || d_in == 0 || d_out == 0 {
        return Err(Error::InvalidArgument("channel sizes must be positive".into()));
    }
    let g = ginibre_matrix(n_kraus * d_out, d_in, rng);
    let gram = qmat::hermitian_part(&(g.adjoint() * &g));
    let inv_sqrt = qmat::hermitian_fn(&gram, |x| 1.0 / x.max(1e-300).sqrt());
    let v = g * inv_sqrt;
    let kraus = (0..n_kraus).map(|k| v.rows(k * d_out, d_out).into_owned()).collect();
    KrausChannel::new(kraus)
}

/// Random full-rank operator with the given dims, wrapped for convenience.
pub fn random_psd(dims: &[usize], rng: &mut SeededRng) -> MultipartiteOperator {
    let d = qmat::product(dims);
    let g = ginibre_matrix(d, d, rng);
    MultipartiteOperator::new(dims.to_vec(), qmat::hermitian_part(&(&g * g.adjoint()))).expect("Hermitian by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ginibre_draws_are_states() {
        let mut rng = SeededRng::new(7, 0);
        for rank in 1..=4 {
            let rho = ginibre_state(&[2, 2], rank, &mut rng).unwrap();
            assert!((rho.op().trace() - 1.0).abs() < 1e-12);
            assert!(rho.op().min_eigenvalue() >= -1e-12);
            if rank == 1 {
                assert!((rho.purity() - 1.0).abs() < 1e-10);
            }
        }
        assert!(ginibre_state(&[2], 3, &mut rng).is_err());
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let a = ginibre_state(&[2, 2], 4, &mut SeededRng::new(42, 0)).unwrap();
        let b = ginibre_state(&[2, 2], 4, &mut SeededRng::new(42, 0)).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        let other = ginibre_state(&[2, 2], 4, &mut SeededRng::new(42, 1)).unwrap();
        assert_ne!(a.matrix(), other.matrix());
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = SeededRng::new(3, 0);
        for d in 1..=5 {
            let u = haar_unitary(d, &mut rng);
            assert!(qmat::max_abs(&(&u * u.adjoint() - CMat::identity(d, d))) < 1e-12);
            assert!((u.determinant().norm() - 1.0).abs() < 1e-10);
            for j in 0..d {
                assert!((u.column(j).norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn iq_states_are_fixed_by_dephasing() {
        let mut rng = SeededRng::new(11, 0);
        for pattern in [vec![0], vec![1], vec![0, 2]] {
            let p = DephasingPattern::new(&pattern, 3).unwrap();
            let s = random_iq_state(&[2, 3, 2], &p, 3, &mut rng).unwrap();
            assert_eq!(s.dephased(&p).unwrap().matrix(), s.matrix());
        }
        let full = DephasingPattern::full(2);
        let s = random_iq_state(&[2, 2], &full, 2, &mut rng).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(s.matrix()[(i, j)], cr(0.0));
                }
            }
        }
    }

    #[test]
    fn incoherent_channels_keep_diagonals() {
        let mut rng = SeededRng::new(5, 0);
        let inst = random_incoherent_channel(3, 3, &mut rng).unwrap();
        let total: CMat = inst
            .subchannels()
            .iter()
            .map(|s| s.completeness_operator())
            .fold(CMat::zeros(3, 3), |a, b| a + b);
        assert!(qmat::max_abs(&(total - CMat::identity(3, 3))) < 1e-10);
        let diag = MultipartiteOperator::diagonal(&[3], &[0.5, 0.3, 0.2]).unwrap();
        for sub in inst.subchannels() {
            let out = sub.apply(&diag, &[0]).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        assert!(out.matrix()[(i, j)].norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn random_channels_are_trace_preserving() {
        let mut rng = SeededRng::new(9, 0);
        let ch = random_channel(2, 3, 2, &mut rng).unwrap();
        assert!(ch.is_trace_preserving());
        let m = random_effect(4, &mut rng);
        assert!(qmat::min_eigenvalue(&m) >= -1e-12 && qmat::max_eigenvalue(&m) <= 1.0 + 1e-12);
    }
}
