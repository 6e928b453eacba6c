//! Relative-entropy, max- and min-coherence, the ordering
//! C_min ≤ C_r ≤ C_max, and the primal and dual SDPs behind C_max.
use coherence_lab::measures::{self, SmoothParams};
use coherence_lab::qmat::DephasingPattern;
use coherence_lab::sampler::{ginibre_state, SeededRng};
use coherence_lab::sdp::{self, SolveOptions};

fn main() -> coherence_lab::error::Result<()> {
    let mut rng = SeededRng::new(7, 0);
    let rho = ginibre_state(&[2, 3], 6, &mut rng)?;
    let a = DephasingPattern::single(0);

    let cr = measures::c_r(&rho, &a)?;
    let cmax = measures::c_max(&rho, &a, SmoothParams::zero())?;
    let cmin = measures::c_min(&rho, &a, SmoothParams::zero())?;
    println!("C_min(A|B) = {:.8}", cmin.value);
    println!("C_r(A|B)   = {:.8}", cr.value);
    println!("C_max(A|B) = {:.8} (gap {:.1e})", cmax.value, cmax.gap);

    let primal = sdp::solve(&measures::lemma1_primal(&rho, &a)?, &SolveOptions::default())?;
    let dual = sdp::solve(&measures::lemma1_dual(&rho, &a)?, &SolveOptions::default())?;
    println!("2^C_max from the primal SDP {:.10}, from the dual SDP {:.10}", primal.primal_value, dual.primal_value);

    let full = DephasingPattern::full(2);
    println!("C_r(AB) = {:.8}", measures::c_r(&rho, &full)?.value);
    Ok(())
}
