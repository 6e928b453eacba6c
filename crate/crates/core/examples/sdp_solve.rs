//! The embedded SDP solver on a small problem: the smallest eigenvalue of a
//! Hermitian matrix as min Tr(C X) over density matrices X.
use coherence_lab::qmat::{c, cr, CMat};
use coherence_lab::sdp::{self, Sense, SdpProblem, SolveOptions, SparseHermitian};

fn main() -> coherence_lab::error::Result<()> {
    let cm = CMat::from_row_slice(2, 2, &[cr(1.0), c(0.5, -0.5), c(0.5, 0.5), cr(-1.0)]);
    let mut p = SdpProblem::new(Sense::Min);
    let x = p.add_block(2);
    p.add_objective(x, SparseHermitian::from_dense(&cm));
    p.add_eq(vec![(x, SparseHermitian::identity(2))], 1.0);

    let sol = sdp::solve(&p, &SolveOptions::default())?;
    println!("status: {:?}", sol.status);
    println!("primal {:.10}, dual {:.10}, gap {:.1e}", sol.primal_value, sol.dual_value, sol.gap());
    println!("exact λ_min: {:.10}", coherence_lab::qmat::min_eigenvalue(&cm));

    let check = sdp::verify_solution(&p, &sol, 1e-6);
    println!("certificate check passed: {}", check.ok);
    Ok(())
}
