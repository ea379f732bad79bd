// Negatively correlated draws: admissible correlations, sampling, and the
// closed-form cross moment of two correlated features.

use derf::features::DEParams;
use derf::qmc::{qmc_cross_moment, sample_qmc, validate_qmc, QmcCorrelation};
use derf::rng::Stream;

pub fn run_example() -> derf::Result<()> {
    for psi in [-0.25, -0.3] {
        println!("M=5 psi={psi}: valid = {}", validate_qmc(&[psi], 5).valid);
    }

    let corr = QmcCorrelation::antithetic(2, 4)?;
    let draws = sample_qmc(&corr, 2, &mut Stream::new(1))?;
    println!("draws:\n{}", draws.omegas);

    let pos = DEParams::symmetric(nalgebra::DVector::zeros(2), nalgebra::DMatrix::identity(2, 2))?;
    let m = qmc_cross_moment(&pos, &corr, &[0.2, 0.1], &[-0.3, 0.4])?;
    println!("E[Z1 Z2] at psi={:.3}: {m:.6}", corr.psi_qmc[0]);
    Ok(())
}

#[allow(dead_code)]
fn main() -> derf::Result<()> {
    run_example()
}
