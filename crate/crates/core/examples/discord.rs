//! Quantum discord by local search over projective measurements, against
//! the basis discord and the identity C_r(A|B) = C_r(A) + basis discord.
use coherence_lab::measures::{self, DiscordOptions};
use coherence_lab::qmat::DephasingPattern;
use coherence_lab::sampler::{ginibre_state, SeededRng};

fn main() -> coherence_lab::error::Result<()> {
    let mut rng = SeededRng::new(11, 0);
    let rho = ginibre_state(&[2, 2], 4, &mut rng)?;
    let d = measures::discord(&rho, 0, &DiscordOptions::default())?;
    let basis = measures::basis_discord(&rho, 0)?;
    println!("discord {:.8} ≤ basis discord {:.8}", d.value, basis);

    let lhs = measures::c_r(&rho, &DephasingPattern::single(0))?.value;
    let rhs = measures::c_r(&rho.reduced(&[0])?, &DephasingPattern::single(0))?.value + basis;
    println!("C_r(A|B) = {lhs:.10}, C_r(ρ_A) + basis discord = {rhs:.10}");
    Ok(())
}
