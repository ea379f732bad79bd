// Closed-form variance of a GERF estimate against a Monte Carlo estimate.

use derf::analytics::{empirical_variance, ge_variance};
use derf::features::{Family, GEParams, Mechanism};
use derf::rng::Stream;

pub fn run_example() -> derf::Result<()> {
    let x = [0.4, -0.2, 0.1];
    let y = [0.3, 0.5, -0.4];
    for a in [0.0, -0.1, -0.3] {
        let mech = Mechanism::iid(Family::Ge(GEParams::new(a, 3)?));
        let rep = empirical_variance(&mech, &x, &y, 200_000, &Stream::new(11))?;
        println!(
            "A={a:5.2}  analytic {:.5}  empirical {:.5} ± {:.5}",
            ge_variance(a, &x, &y)?,
            rep.empirical_var.unwrap_or(f64::NAN),
            rep.empirical_se.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> derf::Result<()> {
    run_example()
}
