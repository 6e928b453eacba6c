//! Max- and min-relative entropy of entanglement through the PPT relaxation,
//! exact for 2⊗2 and 2⊗3 and flagged otherwise.
use coherence_lab::measures::{self, Flag, SmoothParams};
use coherence_lab::qmat::{cr, DensityMatrix};

fn main() -> coherence_lab::error::Result<()> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let phi = DensityMatrix::pure(&[2, 2], &[cr(h), cr(0.0), cr(0.0), cr(h)])?;
    let parts = [vec![0], vec![1]];
    let emax = measures::e_max(&phi, &parts, SmoothParams::zero())?;
    let emin = measures::e_min(&phi, &parts, SmoothParams::zero())?;
    println!("E_max(Φ+) = {:.8}, E_min(Φ+) = {:.8}", emax.value, emin.value);

    let g = 0.5f64.sqrt();
    let mut amps = vec![cr(0.0); 8];
    amps[0] = cr(g);
    amps[7] = cr(g);
    let ghz = DensityMatrix::pure(&[2, 2, 2], &amps)?;
    let e = measures::e_max(&ghz, &[vec![0], vec![1], vec![2]], SmoothParams::zero())?;
    println!("E_max(A:B:C) of GHZ = {:.8}, relaxed: {}", e.value, e.has_flag(Flag::PptRelaxed));
    Ok(())
}
