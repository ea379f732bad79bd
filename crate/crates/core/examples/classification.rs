// Nadaraya–Watson classification of two Gaussian blobs with the exact
// Gaussian kernel and with SDERF features.

use derf::dataio::{split_905_5, synth_blobs};
use derf::experiments::{nadaraya_watson_exact, nadaraya_watson_rf};
use derf::experiments::MechanismKind;
use derf::features::Scheme;
use derf::kernel::moment_stats;
use derf::rng::Stream;

pub fn run_example() -> derf::Result<()> {
    let mut rng = Stream::new(2);
    let data = synth_blobs(600, 2, 5.0, &mut rng)?;
    let (train, _val, test) = split_905_5(&data, &mut rng)?;
    let sigma = 0.5;

    let exact = nadaraya_watson_exact(&train, &test.points, sigma)?;
    println!("exact accuracy {:.3}", exact.accuracy(&test.labels));

    let stats = moment_stats(&test.points.scaled(sigma), &train.points.scaled(sigma))?;
    let (mech, _) = MechanismKind::Sderf.fit(&stats, Scheme::Iid, false)?;
    let draws = mech.sample_draws(128, 2, &mut rng)?;
    let rf = nadaraya_watson_rf(&train, &test.points, sigma, &mech, &draws)?;
    println!("sderf accuracy {:.3} ({} degenerate)", rf.accuracy(&test.labels), rf.degenerate);
    Ok(())
}

#[allow(dead_code)]
fn main() -> derf::Result<()> {
    run_example()
}
