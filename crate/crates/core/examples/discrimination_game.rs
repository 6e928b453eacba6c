//! Subchannel discrimination: the canonical instrument with the POVM built
//! from the C_max dual certificate reaches the ratio 2^{C_max(A|B)}.
use coherence_lab::discgame;
use coherence_lab::qmat::cr;
use coherence_lab::qmat::DensityMatrix;

fn main() -> coherence_lab::error::Result<()> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let phi = DensityMatrix::pure(&[2, 2], &[cr(h), cr(0.0), cr(0.0), cr(h)])?;
    let g = discgame::verify_theorem1(&phi, 2, 5)?;
    println!("C_max(A|B) = {:.8}, bound 2^C_max = {:.8}", g.c_max, g.bound);
    println!("p_succ = {:.8}, p_succ_iq = {:.8}, ratio = {:.8}", g.p_succ, g.p_succ_iq, g.ratio);
    println!("optimal p_succ over all POVMs = {:.8}", g.p_succ_optimal);
    for t in &g.random_instruments {
        println!("random instrument with {} branches: ratio {:.6}", t.branches, t.ratio);
    }
    Ok(())
}
