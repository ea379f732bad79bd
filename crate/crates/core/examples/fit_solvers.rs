// Fit every closed-form mechanism on one dataset and compare the shifted
// log-variance objective each one reaches.

use derf::analytics::shifted_logvar_objective;
use derf::dataio::{synth_regime, Regime, RegimeSpec};
use derf::features::{Family, Mechanism};
use derf::kernel::moment_stats;
use derf::rng::Stream;
use derf::solvers::{fit_aderf, fit_gerf, fit_saderf, fit_sderf};

pub fn run_example() -> derf::Result<()> {
    let mut rng = Stream::new(3);
    let spec = RegimeSpec::new(Regime::Heterogen, 0.5, 32, 4)?;
    let (xs, ys) = synth_regime(&spec, &mut rng)?;
    let stats = moment_stats(&xs, &ys)?;

    let (ge, _) = fit_gerf(&stats, 4)?;
    let (sade, _) = fit_saderf(&stats)?;
    let (ade, _) = fit_aderf(&stats, false)?;
    let (sde, _) = fit_sderf(&stats)?;
    let fitted = [
        ("pos", Family::Pos),
        ("gerf", Family::Ge(ge)),
        ("saderf", Family::Sade(sade)),
        ("sderf", Family::De(sde)),
        ("aderf", Family::De(ade)),
    ];
    for (name, family) in fitted {
        let obj = shifted_logvar_objective(&Mechanism::iid(family), &xs, &ys)?;
        println!("{name:7} objective {obj:.5}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> derf::Result<()> {
    run_example()
}
