//! Density matrices on tensor products: partial traces, dephasing and
//! partial transposes of a Bell state.
use coherence_lab::qmat::{cr, DensityMatrix, DephasingPattern};

fn main() -> coherence_lab::error::Result<()> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let phi = DensityMatrix::pure(&[2, 2], &[cr(h), cr(0.0), cr(0.0), cr(h)])?;
    println!("purity of Φ+: {:.6}", phi.purity());

    let rho_a = phi.reduced(&[0])?;
    println!("ρ_A = Tr_B Φ+:\n{:.4}", rho_a.matrix());

    let deph = phi.dephased(&DephasingPattern::single(0))?;
    println!("Δ_A(Φ+):\n{:.4}", deph.matrix());

    let pt = phi.op().partial_transpose(&[1])?;
    println!("smallest eigenvalue of Φ+^T_B: {:.6} (negative: entangled)", pt.min_eigenvalue());
    Ok(())
}
