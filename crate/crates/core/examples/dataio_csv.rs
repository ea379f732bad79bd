// Load a labelled CSV file and split it 90/5/5.

use std::io::Write;

use derf::dataio::{load_labeled, split_905_5};
use derf::rng::Stream;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut file = tempfile::NamedTempFile::new()?;
    writeln!(file, "x,y,class")?;
    for i in 0..40 {
        let t = i as f64 / 40.0;
        writeln!(file, "{t},{},{}", 1.0 - t, if i % 2 == 0 { "a" } else { "b" })?;
    }
    file.flush()?;

    let data = load_labeled(file.path(), "class")?;
    println!("{} rows, classes {:?}", data.len(), data.class_names);
    let (train, val, test) = split_905_5(&data, &mut Stream::new(0))?;
    println!("train {} / val {} / test {}", train.len(), val.len(), test.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
