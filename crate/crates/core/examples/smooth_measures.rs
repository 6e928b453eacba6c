//! Smooth max- and min-coherence over the trace-distance ball, on the
//! default ε grid and the derived radii ε′ = ε + 2√ε.
use coherence_lab::measures::{self, SmoothParams};
use coherence_lab::qmat::DephasingPattern;
use coherence_lab::sampler::{suite_state, SeededRng};

fn main() -> coherence_lab::error::Result<()> {
    let mut rng = SeededRng::new(3, 1);
    let rho = suite_state(&[2, 2], &mut rng)?;
    let a = DephasingPattern::single(0);
    for eps in [0.0, 0.01, 0.05, 0.1] {
        let s = SmoothParams::new(eps)?;
        let cmax = measures::c_max(&rho, &a, s)?;
        let cmin = measures::c_min(&rho, &a, s)?;
        println!(
            "ε = {eps:<4}  ε′ = {:.4}  C^ε_max = {:+.8}  C^ε_min = {:+.8}",
            s.eps_prime(),
            cmax.value,
            cmin.value
        );
    }
    Ok(())
}
