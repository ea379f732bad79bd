// Estimate the softmax kernel on a handful of points with positive random
// features and compare against the exact matrix.

use derf::features::{approx_kernel, build_features, Family, Mechanism};
use derf::kernel::{kernel_matrix, KernelSpec, PointSet};
use derf::linalg::{frobenius, sample_gaussian};
use derf::rng::Stream;

pub fn run_example() -> derf::Result<()> {
    let mut rng = Stream::new(7);
    let xs = PointSet::new(sample_gaussian(6, 4, &mut rng)?.omegas * 0.3)?;
    let ys = PointSet::new(sample_gaussian(6, 4, &mut rng)?.omegas * 0.3)?;
    let exact = kernel_matrix(&xs, &ys, KernelSpec::SOFTMAX)?;

    let mech = Mechanism::iid(Family::Pos);
    for m in [16, 256, 4096] {
        let draws = mech.sample_draws(m, 4, &mut rng)?;
        let approx = approx_kernel(&build_features(&mech, &draws, &xs, &ys)?)?;
        let rel = frobenius(&(&approx - &exact)) / frobenius(&exact);
        println!("M={m:5}  relative error {rel:.4}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> derf::Result<()> {
    run_example()
}
