// Softmax attention with random features against the exact quadratic form.

use derf::attention::{attention_error, exact_attention, rf_attention, AttentionBatch};
use derf::experiments::MechanismKind;
use derf::features::Scheme;
use derf::kernel::moment_stats;
use derf::linalg::sample_gaussian;
use derf::rng::Stream;

pub fn run_example() -> derf::Result<()> {
    let mut rng = Stream::new(5);
    let (l, d) = (128, 8);
    let q = sample_gaussian(l, d, &mut rng)?.omegas;
    let k = sample_gaussian(l, d, &mut rng)?.omegas;
    let v = sample_gaussian(l, d, &mut rng)?.omegas;
    let batch = AttentionBatch::new(q, k, v)?;
    let exact = exact_attention(&batch)?;

    let (xs, ys) = batch.scaled_sets()?;
    let stats = moment_stats(&xs, &ys)?;
    for kind in [MechanismKind::Pos, MechanismKind::Gerf, MechanismKind::Sderf] {
        let (mech, _) = kind.fit(&stats, Scheme::Iid, false)?;
        for m in [8, 128] {
            let (approx, diag) = rf_attention(&batch, &mech, m, &mut rng)?;
            println!(
                "{kind:6} M={m:4}  error {:.4}  min denominator {:.3e}",
                attention_error(&exact, &approx)?,
                diag.min_denominator
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> derf::Result<()> {
    run_example()
}
