// Run the fit-dump experiment programmatically and read the parameters
// back from its JSON.

use derf::experiments::cmd_fit_dump;
use derf::experiments::{ExperimentConfig, MechanismKind};

pub fn run_example() -> derf::Result<()> {
    let cfg = ExperimentConfig {
        d: 3,
        l: vec![16],
        mechs: vec![MechanismKind::Gerf, MechanismKind::Sderf],
        seeds: 1,
        ..ExperimentConfig::default()
    };
    let result = cmd_fit_dump(&cfg)?;
    for r in result.values("sderf", "objective") {
        println!("sderf objective {:?}", r.value);
    }
    let json = result.to_json();
    println!("{} bytes of JSON", json.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> derf::Result<()> {
    run_example()
}
